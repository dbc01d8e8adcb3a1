#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

#include "freqguide/errors.hpp"
#include "freqguide/evaluation.hpp"

namespace freqguide::app {

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed and count fields share one alternative");
using Member = std::variant<std::size_t RunConfig::*, double RunConfig::*, std::string RunConfig::*, bool RunConfig::*>;

struct Entry {
    const char* key;
    Member member;
    const char* help;
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table{
        {"seed", &RunConfig::seed, "root seed; every random stream is derived from it"},
        {"data_dir", &RunConfig::data_dir, "dataset directory"},
        {"base_checkpoint", &RunConfig::base_checkpoint, "base model checkpoint path"},
        {"out", &RunConfig::out, "output path (file or directory, per command)"},
        {"n_subjects", &RunConfig::n_subjects, "subject vocabulary size"},
        {"n_actions", &RunConfig::n_actions, "action vocabulary size"},
        {"schedule", &RunConfig::schedule, "noise schedule: linear or cosine"},
        {"train_steps", &RunConfig::train_steps, "diffusion training timesteps"},
        {"image_size", &RunConfig::image_size, "image height and width"},
        {"base_width", &RunConfig::base_width, "U-Net base channel count"},
        {"time_dim", &RunConfig::time_dim, "sinusoidal timestep feature size"},
        {"emb_dim", &RunConfig::emb_dim, "timestep/condition embedding size"},
        {"groups", &RunConfig::groups, "GroupNorm groups"},
        {"mid_blocks", &RunConfig::mid_blocks, "ResBlocks at the lowest resolution"},
        {"epochs", &RunConfig::epochs, "base training epochs"},
        {"batch_size", &RunConfig::batch_size, "base training batch size"},
        {"lr", &RunConfig::lr, "base training learning rate"},
        {"cond_dropout", &RunConfig::cond_dropout, "condition dropout probability in base training"},
        {"resume", &RunConfig::resume, "continue base training from an existing checkpoint"},
        {"adapter_rank", &RunConfig::adapter_rank, "low-rank adapter rank"},
        {"adapter_targets", &RunConfig::adapter_targets, "comma-separated adapter layers (empty: default set)"},
        {"n_tr", &RunConfig::n_tr, "pair finetuning iterations"},
        {"finetune_lr", &RunConfig::finetune_lr, "pair finetuning learning rate"},
        {"s_a", &RunConfig::s_a, "amplitude guidance scale"},
        {"s_p", &RunConfig::s_p, "phase guidance scale"},
        {"k", &RunConfig::k, "leading sampling steps conditioned on the driving code"},
        {"t_steps", &RunConfig::t_steps, "sampling steps"},
        {"cfg_scale", &RunConfig::cfg_scale, "classifier-free guidance scale"},
        {"sampler", &RunConfig::sampler, "ddim or ddpm"},
        {"eta", &RunConfig::eta, "DDIM eta (0 = deterministic)"},
        {"pair_id", &RunConfig::pair_id, "benchmark pair for transfer"},
        {"sample", &RunConfig::sample, "sample index for transfer (selects the sampling seed)"},
        {"eval_pairs", &RunConfig::eval_pairs, "number of benchmark pairs in evaluate"},
        {"eval_seeds", &RunConfig::eval_seeds, "samples per pair and config in evaluate"},
        {"configs", &RunConfig::configs, "comma-separated ablation configs for evaluate"},
        {"score_only", &RunConfig::score_only, "evaluate: score existing samples instead of generating"},
    };
    return table;
}

const Entry& find(const std::string& key) {
    std::string k = key;
    std::replace(k.begin(), k.end(), '-', '_');
    for (const auto& e : entries())
        if (k == e.key) return e;
    throw ConfigError("unknown config key '" + key + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return value;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& e : entries()) out.emplace_back(e.key);
        return out;
    }();
    return k;
}

std::string RunConfig::help(const std::string& key) { return find(key).help; }

void RunConfig::set(const std::string& key, const std::string& raw) {
    const auto& e = find(key);
    const std::string value = trim(raw);
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                this->*member = value;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1" || value == "yes") {
                    this->*member = true;
                } else if (value == "false" || value == "0" || value == "no") {
                    this->*member = false;
                } else {
                    throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
                }
            } else {
                this->*member = parse_number<T>(key, value);
            }
        },
        e.member);
}

std::string RunConfig::get(const std::string& key) const {
    const auto& e = find(key);
    return std::visit(
        [&](auto member) -> std::string {
            using T = std::remove_cvref_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return this->*member;
            } else if constexpr (std::is_same_v<T, bool>) {
                return this->*member ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(this->*member);
            } else {
                return std::to_string(this->*member);
            }
        },
        e.member);
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& err) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
}

void RunConfig::apply_environment() {
    for (const auto& key : keys()) {
        if (const char* v = std::getenv(env_name(key).c_str())) {
            try {
                set(key, v);
            } catch (const ConfigError& err) {
                throw ConfigError(env_name(key) + ": " + err.what());
            }
        }
    }
}

void RunConfig::validate() const {
    arch().validate();
    (void)diffusion::parse_schedule_kind(schedule);
    (void)guidance::parse_sampler_kind(sampler);
    if (train_steps < 10) throw ConfigError("train_steps must be >= 10");
    if (n_subjects == 0 || n_actions < 2) throw ConfigError("need at least one subject and two actions");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0) || !(finetune_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (cond_dropout < 0.0 || cond_dropout > 1.0) throw ConfigError("cond_dropout must be in [0, 1]");
    if (adapter_rank == 0) throw ConfigError("adapter_rank must be >= 1");
    if (t_steps == 0) throw ConfigError("t_steps must be >= 1");
    if (k > t_steps) throw ConfigError("k must not exceed t_steps");
    if (!(s_a >= 0.0) || !(s_p >= 0.0)) throw ConfigError("s_a and s_p must be >= 0");
    if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
    if (eval_seeds == 0) throw ConfigError("eval_seeds must be >= 1");
    const auto known = metrics::standard_ablations(guidance::GuidanceConfig{});
    for (const auto& name : config_names()) {
        if (std::none_of(known.begin(), known.end(), [&](const auto& c) { return c.name == name; }))
            throw ConfigError("unknown ablation config '" + name + "'");
    }
}

denoiser::ArchConfig RunConfig::arch() const {
    denoiser::ArchConfig a;
    a.image_size = image_size;
    a.base_width = base_width;
    a.time_dim = time_dim;
    a.emb_dim = emb_dim;
    a.groups = groups;
    a.mid_blocks = mid_blocks;
    a.n_subjects = n_subjects;
    a.n_actions = n_actions;
    return a;
}

diffusion::NoiseSchedule RunConfig::noise_schedule() const {
    return diffusion::make_schedule(train_steps, diffusion::parse_schedule_kind(schedule));
}

training::BaseTrainingOptions RunConfig::training_options() const {
    training::BaseTrainingOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.lr = lr;
    o.cond_dropout = cond_dropout;
    o.seed = derive_seed(seed, {label_hash("train_base")});
    return o;
}

finetune::PairAdaptation RunConfig::adaptation() const {
    return {adapter_rank, split_list(adapter_targets), n_tr, finetune_lr};
}

guidance::GuidanceConfig RunConfig::guidance() const {
    guidance::GuidanceConfig g;
    g.s_a = s_a;
    g.s_p = s_p;
    g.k = k;
    g.T = t_steps;
    g.cfg_scale = cfg_scale;
    g.sampler = guidance::parse_sampler_kind(sampler);
    g.eta = eta;
    return g;
}

std::vector<std::string> RunConfig::config_names() const { return split_list(configs); }

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& key : keys()) out[key] = get(key);
    return out;
}

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

std::string env_name(const std::string& key) {
    std::string e = "FREQGUIDE_";
    for (char c : key) e += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return e;
}

}  // namespace freqguide::app

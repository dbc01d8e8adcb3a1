#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "freqguide/checkpoint.hpp"
#include "freqguide/errors.hpp"
#include "freqguide/evaluation.hpp"
#include "freqguide/finetune.hpp"
#include "freqguide/image_io.hpp"
#include "freqguide/metrics.hpp"
#include "freqguide/training.hpp"

namespace freqguide::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

json config_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.to_map()) j[k] = v;
    return j;
}

std::string pair_stem(std::size_t pair_id) {
    std::ostringstream s;
    s << "pair_";
    s.width(3);
    s.fill('0');
    s << pair_id;
    return s.str();
}

fs::path require_dataset_file(const fs::path& data_dir, const char* name) {
    const auto path = data_dir / name;
    if (!fs::exists(path))
        throw IoError("dataset file " + path.string() + " not found; run gen-dataset first");
    return path;
}

denoiser::DenoiserModel<float> load_base_model(const RunConfig& cfg) {
    const fs::path path = cfg.base_checkpoint;
    if (!fs::exists(path)) throw IoError("base checkpoint " + path.string() + " not found; run train-base first");
    auto loaded = checkpoint::load_base(path);
    if (loaded.model.arch() != cfg.arch())
        throw ConfigError("base checkpoint " + path.string() + " has a different architecture than the config");
    return std::move(loaded.model);
}

json metrics_json(const metrics::EvalRecord& r) {
    return {{"phase_score_driving", r.phase_score_driving},
            {"subject_fidelity", r.subject_fidelity},
            {"oracle_psnr", r.oracle_psnr}};
}

/// Finetuned model for a pair, reusing adapters cached at `cache` when they
/// were produced by the same base, seed and adaptation settings.
denoiser::DenoiserModel<float> pair_model(const denoiser::DenoiserModel<float>& base, const RunConfig& cfg,
                                          const sprites::RenderedTriple& triple, const fs::path& cache,
                                          const diffusion::NoiseSchedule& sched, std::ostream& log) {
    const auto adaptation = cfg.adaptation();
    json key{{"base_checksum", base.base_checksum()},
             {"seed", adaptation_seed(cfg.seed, triple.pair_id)},
             {"rank", adaptation.rank},
             {"targets", adaptation.targets},
             {"n_tr", adaptation.n_tr},
             {"finetune_lr", adaptation.lr},
             {"schedule", cfg.schedule},
             {"train_steps", cfg.train_steps}};
    auto sidecar = cache;
    sidecar += ".json";
    if (fs::exists(cache) && fs::exists(sidecar) && read_text(sidecar) == key.dump(2) + "\n") {
        auto model = base;
        checkpoint::load_adapters(cache, model);
        log << "pair " << triple.pair_id << ": reusing adapters " << cache.string() << "\n";
        return model;
    }
    const auto start = std::chrono::steady_clock::now();
    auto model = finetune::adapt_to_pair(base, finetune::pair_spec(triple), adaptation, sched,
                                         adaptation_seed(cfg.seed, triple.pair_id));
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    if (cache.has_parent_path()) fs::create_directories(cache.parent_path());
    checkpoint::save_adapters(cache, model);
    write_text(sidecar, key.dump(2) + "\n");
    log << "pair " << triple.pair_id << ": finetuned " << adaptation.n_tr << " iterations in " << took.count()
        << " s\n";
    return model;
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t root, std::size_t sample) {
    return derive_seed(root, {label_hash("sample"), sample});
}

std::uint64_t adaptation_seed(std::uint64_t root, std::size_t pair_id) {
    return derive_seed(root, {label_hash("pair_adapt"), pair_id});
}

std::uint64_t model_init_seed(std::uint64_t root) { return derive_seed(root, {label_hash("model_init")}); }

std::vector<std::size_t> evaluation_pairs(std::size_t total, std::size_t count) {
    if (count == 0 || count > total)
        throw ConfigError("eval_pairs must be between 1 and the dataset size (" + std::to_string(total) + ")");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(i * total / count);
    return out;
}

fs::path cmd_gen_dataset(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const fs::path dir = cfg.data_dir;
    fs::create_directories(dir / "pairs");
    fs::create_directories(dir / "vocabulary");

    std::string manifest;
    const auto triples = sprites::make_benchmark(cfg.n_subjects, cfg.n_actions, cfg.seed);
    for (const auto& t : triples) {
        const auto stem = pair_stem(t.pair_id);
        const std::string src = "pairs/" + stem + "_source.png";
        const std::string drv = "pairs/" + stem + "_driving.png";
        const std::string tgt = "pairs/" + stem + "_target.png";
        io::write_png(dir / src, t.source_img);
        io::write_png(dir / drv, t.driving_img);
        io::write_png(dir / tgt, t.target_img);
        const json rec{{"pair_id", t.pair_id},
                       {"source_path", src},
                       {"driving_path", drv},
                       {"target_path", tgt},
                       {"source_subject_id", t.codes.source.subject},
                       {"source_action_id", t.codes.source.action},
                       {"driving_subject_id", t.codes.driving.subject},
                       {"driving_action_id", t.codes.driving.action},
                       {"target_subject_id", t.codes.target().subject},
                       {"target_action_id", t.codes.target().action},
                       {"source_jitter_seed", t.source_jitter_seed},
                       {"driving_jitter_seed", t.driving_jitter_seed}};
        manifest += rec.dump() + "\n";
    }
    const auto manifest_path = dir / "manifest.jsonl";
    write_text(manifest_path, manifest);

    std::string vocabulary;
    for (const auto& item : training::vocabulary_renders(cfg.n_subjects, cfg.n_actions)) {
        const std::string path = "vocabulary/s" + std::to_string(item.code.subject) + "_a" +
                                 std::to_string(item.code.action) + ".png";
        io::write_png(dir / path, item.image);
        vocabulary += json{{"subject_id", item.code.subject}, {"action_id", item.code.action}, {"path", path}}.dump() +
                      "\n";
    }
    write_text(dir / "vocabulary.jsonl", vocabulary);
    write_text(dir / "dataset.json",
               json{{"command", "gen-dataset"}, {"pairs", triples.size()}, {"config", config_json(cfg)}}.dump(2) + "\n");
    log << "wrote " << triples.size() << " triples to " << manifest_path.string() << "\n";
    return manifest_path;
}

std::size_t dataset_pair_count(const fs::path& data_dir) {
    return read_jsonl(require_dataset_file(data_dir, "manifest.jsonl")).size();
}

sprites::RenderedTriple load_triple(const fs::path& data_dir, std::size_t pair_id) {
    const auto records = read_jsonl(require_dataset_file(data_dir, "manifest.jsonl"));
    for (const auto& r : records) {
        if (r.at("pair_id").get<std::size_t>() != pair_id) continue;
        sprites::RenderedTriple t;
        t.pair_id = pair_id;
        t.source_img = io::read_png(data_dir / r.at("source_path").get<std::string>());
        t.driving_img = io::read_png(data_dir / r.at("driving_path").get<std::string>());
        t.target_img = io::read_png(data_dir / r.at("target_path").get<std::string>());
        t.codes.source = {r.at("source_subject_id").get<int>(), r.at("source_action_id").get<int>()};
        t.codes.driving = {r.at("driving_subject_id").get<int>(), r.at("driving_action_id").get<int>()};
        t.source_jitter_seed = r.at("source_jitter_seed").get<std::uint64_t>();
        t.driving_jitter_seed = r.at("driving_jitter_seed").get<std::uint64_t>();
        return t;
    }
    throw ConfigError("unknown pair_id " + std::to_string(pair_id) + " (dataset " + data_dir.string() + " has " +
                      std::to_string(records.size()) + " pairs)");
}

fs::path cmd_train_base(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const fs::path data_dir = cfg.data_dir;
    std::vector<training::LabeledImage> data;
    for (const auto& r : read_jsonl(require_dataset_file(data_dir, "vocabulary.jsonl"))) {
        data.push_back({io::read_png(data_dir / r.at("path").get<std::string>()),
                        ConditionCode{r.at("subject_id").get<int>(), r.at("action_id").get<int>()}});
    }

    const fs::path ckpt = cfg.base_checkpoint;
    auto loss_log = ckpt;
    loss_log += ".loss.jsonl";
    auto sidecar = ckpt;
    sidecar += ".json";

    denoiser::DenoiserModel<float> model(cfg.arch(), model_init_seed(cfg.seed));
    checkpoint::TrainingState state;
    if (cfg.resume && fs::exists(ckpt)) {
        auto loaded = checkpoint::load_base(ckpt);
        if (loaded.model.arch() != cfg.arch())
            throw ConfigError("cannot resume: " + ckpt.string() + " has a different architecture");
        if (!loaded.state) throw ConfigError("cannot resume: " + ckpt.string() + " has no training state");
        model = std::move(loaded.model);
        state = std::move(*loaded.state);
        log << "resuming " << ckpt.string() << " at epoch " << state.epoch << "\n";
    }
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());

    auto write_loss_log = [&](const checkpoint::TrainingState& st) {
        std::string text;
        for (std::size_t e = 0; e < st.epoch_losses.size(); ++e)
            text += json{{"epoch", e + 1}, {"loss", st.epoch_losses[e]}}.dump() + "\n";
        write_text(loss_log, text);
    };
    const auto sched = cfg.noise_schedule();
    const auto start = std::chrono::steady_clock::now();
    training::train_base(model, data, sched, cfg.training_options(), state,
                         [&](const checkpoint::TrainingState& st, const denoiser::DenoiserModel<float>& m) {
                             checkpoint::save_base(ckpt, m, &st);
                             write_loss_log(st);
                             const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
                             log << "epoch " << st.epoch << "/" << cfg.epochs << " loss " << st.epoch_losses.back()
                                 << " (" << el.count() << " s)" << std::endl;
                         });
    if (state.epoch_losses.empty()) throw ConfigError("train-base: epochs must be >= 1");
    checkpoint::save_base(ckpt, model, &state);
    write_loss_log(state);
    write_text(sidecar, json{{"command", "train-base"},
                             {"epochs_completed", state.epoch},
                             {"initial_loss", state.epoch_losses.front()},
                             {"final_loss", state.epoch_losses.back()},
                             {"base_checksum", model.base_checksum()},
                             {"config", config_json(cfg)}}
                                .dump(2) +
                            "\n");
    return ckpt;
}

fs::path cmd_transfer(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto triple = load_triple(cfg.data_dir, cfg.pair_id);
    const auto base = load_base_model(cfg);
    const auto sched = cfg.noise_schedule();
    const fs::path out = cfg.out.empty() ? fs::path("transfer_" + pair_stem(cfg.pair_id) + "_sample" +
                                                    std::to_string(cfg.sample) + ".png")
                                         : fs::path(cfg.out);
    auto adapters = out;
    adapters += ".adapters.bin";
    auto sidecar = out;
    sidecar += ".json";
    if (out.has_parent_path()) fs::create_directories(out.parent_path());

    const auto start = std::chrono::steady_clock::now();
    const auto adaptation = cfg.adaptation();
    const auto model = finetune::adapt_to_pair(base, finetune::pair_spec(triple), adaptation, sched,
                                               adaptation_seed(cfg.seed, cfg.pair_id));
    checkpoint::save_adapters(adapters, model);
    auto g = cfg.guidance();
    guidance::set_references(g, triple.source_img, triple.driving_img);
    const auto seed = sample_seed(cfg.seed, cfg.sample);
    const auto image = guidance::stepwise_sample(model, triple.codes, g, sched, seed);
    io::write_png(out, image);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;

    const auto rec = metrics::score("transfer", triple, seed, image);
    write_text(sidecar, json{{"command", "transfer"},
                             {"pair_id", cfg.pair_id},
                             {"source_code", to_string(triple.codes.source)},
                             {"driving_code", to_string(triple.codes.driving)},
                             {"target_code", to_string(triple.codes.target())},
                             {"sample", cfg.sample},
                             {"sample_seed", seed},
                             {"adaptation_seed", adaptation_seed(cfg.seed, cfg.pair_id)},
                             {"base_checksum", base.base_checksum()},
                             {"adapters", adapters.filename().string()},
                             {"metrics", metrics_json(rec)},
                             {"config", config_json(cfg)}}
                                .dump(2) +
                            "\n");
    log << "pair " << cfg.pair_id << " -> " << out.string() << " in " << took.count() << " s (oracle PSNR "
        << rec.oracle_psnr << " dB)\n";
    return out;
}

fs::path cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const fs::path out = cfg.out.empty() ? fs::path("eval") : fs::path(cfg.out);
    const auto pair_ids = evaluation_pairs(dataset_pair_count(cfg.data_dir), cfg.eval_pairs);
    std::vector<sprites::RenderedTriple> bench;
    for (const auto id : pair_ids) bench.push_back(load_triple(cfg.data_dir, id));
    std::vector<std::uint64_t> seeds;
    for (std::size_t j = 0; j < cfg.eval_seeds; ++j) seeds.push_back(sample_seed(cfg.seed, j));

    std::vector<metrics::AblationConfig> configs;
    for (const auto& name : cfg.config_names()) {
        for (const auto& c : metrics::standard_ablations(cfg.guidance()))
            if (c.name == name) configs.push_back(c);
    }
    auto sample_path = [&](const std::string& config, std::size_t pair_id, std::uint64_t seed) {
        const auto j = static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
        return out / "samples" / config / (pair_stem(pair_id) + "_s" + std::to_string(j) + ".png");
    };

    metrics::EvalReport report;
    if (cfg.score_only) {
        std::vector<std::string> missing;
        for (const auto& t : bench)
            for (const auto& c : configs)
                for (const auto s : seeds)
                    if (!fs::exists(sample_path(c.name, t.pair_id, s)))
                        missing.push_back(sample_path(c.name, t.pair_id, s).string());
        if (!missing.empty()) {
            std::string msg = std::to_string(missing.size()) + " generated sample(s) missing:";
            for (const auto& m : missing) msg += "\n  " + m;
            throw IoError(msg);
        }
        for (const auto& t : bench)
            for (const auto& c : configs)
                for (const auto s : seeds)
                    report.records.push_back(metrics::score(c.name, t, s, io::read_png(sample_path(c.name, t.pair_id, s))));
        report.aggregates = metrics::aggregate(report.records);
    } else {
        const auto base = load_base_model(cfg);
        const auto sched = cfg.noise_schedule();
        report = metrics::run_ablation_grid(
            bench,
            [&](const sprites::RenderedTriple& t) {
                return pair_model(base, cfg, t, out / "adapters" / (pair_stem(t.pair_id) + ".bin"), sched, log);
            },
            configs, seeds, sched,
            [&](const metrics::EvalRecord& r, const ImageTensor& img) {
                const auto path = sample_path(r.config, r.pair_id, r.seed);
                fs::create_directories(path.parent_path());
                io::write_png(path, img);
            });
    }

    const auto report_path = out / "report.jsonl";
    write_text(report_path, metrics::to_jsonl(report));
    const auto table = metrics::render_table(report);
    write_text(out / "report.txt", table);
    write_text(out / "report.json",
               json{{"command", "evaluate"}, {"pair_ids", pair_ids}, {"sample_seeds", seeds}, {"config", config_json(cfg)}}
                       .dump(2) +
                   "\n");
    log << table;
    return report_path;
}

}  // namespace freqguide::app

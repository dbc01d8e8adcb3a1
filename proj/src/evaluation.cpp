#include "freqguide/evaluation.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "freqguide/errors.hpp"
#include "freqguide/fourier.hpp"
#include "freqguide/metrics.hpp"

namespace freqguide::metrics {

namespace {

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return out;
    double sum = 0.0;
    for (double x : v) sum += x;
    out.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double sq = 0.0;
        for (double x : v) sq += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
    }
    return out;
}

nlohmann::json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
MeanStd mean_std_from_json(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

std::vector<Aggregate> aggregate(const std::vector<EvalRecord>& records) {
    std::vector<std::string> order;
    std::map<std::string, std::array<std::vector<double>, 3>> values;
    for (const auto& r : records) {
        auto [it, fresh] = values.try_emplace(r.config);
        if (fresh) order.push_back(r.config);
        it->second[0].push_back(r.phase_score_driving);
        it->second[1].push_back(r.subject_fidelity);
        it->second[2].push_back(r.oracle_psnr);
    }
    std::vector<Aggregate> out;
    for (const auto& name : order) {
        const auto& v = values.at(name);
        out.push_back({name, v[0].size(), mean_std(v[0]), mean_std(v[1]), mean_std(v[2])});
    }
    return out;
}

EvalRecord score(const std::string& config, const sprites::RenderedTriple& triple, std::uint64_t seed,
                 const ImageTensor& generated) {
    return {config,
            triple.pair_id,
            seed,
            fourier::phase_score(generated, triple.driving_img),
            subject_fidelity(generated, triple.source_img),
            oracle_target_error(generated, triple.target_img)};
}

std::string to_jsonl(const EvalReport& report) {
    std::string out;
    for (const auto& r : report.records) {
        const nlohmann::json j{{"kind", "record"},
                               {"config", r.config},
                               {"pair_id", r.pair_id},
                               {"seed", r.seed},
                               {"phase_score_driving", r.phase_score_driving},
                               {"subject_fidelity", r.subject_fidelity},
                               {"oracle_psnr", r.oracle_psnr}};
        out += j.dump() + "\n";
    }
    for (const auto& a : report.aggregates) {
        const nlohmann::json j{{"kind", "aggregate"},
                               {"config", a.config},
                               {"count", a.count},
                               {"phase_score_driving", to_json(a.phase_score_driving)},
                               {"subject_fidelity", to_json(a.subject_fidelity)},
                               {"oracle_psnr", to_json(a.oracle_psnr)}};
        out += j.dump() + "\n";
    }
    return out;
}

EvalReport from_jsonl(const std::string& text) {
    EvalReport report;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "record") {
                report.records.push_back({j.at("config").get<std::string>(), j.at("pair_id").get<std::size_t>(),
                                          j.at("seed").get<std::uint64_t>(), j.at("phase_score_driving").get<double>(),
                                          j.at("subject_fidelity").get<double>(), j.at("oracle_psnr").get<double>()});
            } else if (kind == "aggregate") {
                report.aggregates.push_back({j.at("config").get<std::string>(), j.at("count").get<std::size_t>(),
                                             mean_std_from_json(j.at("phase_score_driving")),
                                             mean_std_from_json(j.at("subject_fidelity")),
                                             mean_std_from_json(j.at("oracle_psnr"))});
            } else {
                throw IoError("unknown kind '" + kind + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw IoError("report line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return report;
}

std::string render_table(const EvalReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "config" << std::right << std::setw(6) << "n" << std::setw(22)
        << "phase_score_driving" << std::setw(22) << "subject_fidelity" << std::setw(22) << "oracle_psnr_db" << "\n";
    out << std::string(86, '-') << "\n";
    auto cell = [&](const MeanStd& m, int precision) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(precision) << m.mean << " +- " << m.std;
        out << std::setw(22) << c.str();
    };
    for (const auto& a : report.aggregates) {
        out << std::left << std::setw(14) << a.config << std::right << std::setw(6) << a.count;
        cell(a.phase_score_driving, 4);
        cell(a.subject_fidelity, 4);
        cell(a.oracle_psnr, 2);
        out << "\n";
    }
    return out.str();
}

std::vector<AblationConfig> standard_ablations(const guidance::GuidanceConfig& base) {
    std::vector<AblationConfig> out;
    out.push_back({"full", base});
    auto k0 = base;
    k0.k = 0;
    out.push_back({"k0", k0});
    auto none = base;
    none.s_a = 0.0;
    none.s_p = 0.0;
    out.push_back({"no_guidance", none});
    auto no_phase = base;
    no_phase.s_p = 0.0;
    out.push_back({"no_phase", no_phase});
    auto no_amp = base;
    no_amp.s_a = 0.0;
    out.push_back({"no_amp", no_amp});
    return out;
}

EvalReport run_ablation_grid(const std::vector<sprites::RenderedTriple>& benchmark, const ModelFactory& model_factory,
                             const std::vector<AblationConfig>& configs, const std::vector<std::uint64_t>& seeds,
                             const diffusion::NoiseSchedule& sched, const SampleSink& sink) {
    EvalReport report;
    for (const auto& triple : benchmark) {
        const auto model = model_factory(triple);
        for (const auto& config : configs) {
            auto cfg = config.guidance;
            guidance::set_references(cfg, triple.source_img, triple.driving_img);
            for (const auto seed : seeds) {
                const auto image = guidance::stepwise_sample(model, triple.codes, cfg, sched, seed);
                report.records.push_back(score(config.name, triple, seed, image));
                if (sink) sink(report.records.back(), image);
            }
        }
    }
    report.aggregates = aggregate(report.records);
    return report;
}

void MetricRegistry::register_metric(const std::string& name, ExternalMetric metric) {
    if (!metric) throw ConfigError("register_metric: empty scorer for '" + name + "'");
    const std::lock_guard lock(mutex_);
    metrics_[name] = std::move(metric);
}

bool MetricRegistry::contains(const std::string& name) const {
    const std::lock_guard lock(mutex_);
    return metrics_.contains(name);
}

ExternalMetric MetricRegistry::lookup(const std::string& name) const {
    const std::lock_guard lock(mutex_);
    const auto it = metrics_.find(name);
    if (it == metrics_.end())
        throw NotAvailableError("metric '" + name + "' is not available: no external scorer has been registered");
    return it->second;
}

std::vector<std::string> MetricRegistry::names() const {
    const std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, metric] : metrics_) out.push_back(name);
    return out;
}

MetricRegistry& default_registry() {
    static MetricRegistry registry;
    return registry;
}

ExternalMetric external_metric_plugin(const std::string& name) { return default_registry().lookup(name); }

}  // namespace freqguide::metrics

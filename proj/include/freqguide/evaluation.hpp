#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "freqguide/denoiser.hpp"
#include "freqguide/diffusion.hpp"
#include "freqguide/guidance.hpp"
#include "freqguide/sprites.hpp"

namespace freqguide::metrics {

struct EvalRecord {
    std::string config;
    std::size_t pair_id = 0;
    std::uint64_t seed = 0;
    double phase_score_driving = 0.0;
    double subject_fidelity = 0.0;
    double oracle_psnr = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    /// Sample standard deviation (n - 1 denominator); 0 for a single record.
    double std = 0.0;
};

struct Aggregate {
    std::string config;
    std::size_t count = 0;
    MeanStd phase_score_driving;
    MeanStd subject_fidelity;
    MeanStd oracle_psnr;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    /// One entry per configuration, in order of first appearance.
    std::vector<Aggregate> aggregates;
};

[[nodiscard]] std::vector<Aggregate> aggregate(const std::vector<EvalRecord>& records);

/// Scores one generated image against its triple.
[[nodiscard]] EvalRecord score(const std::string& config, const sprites::RenderedTriple& triple, std::uint64_t seed,
                               const ImageTensor& generated);

/// One JSON object per line: records first ("kind": "record"), then
/// aggregates ("kind": "aggregate").
[[nodiscard]] std::string to_jsonl(const EvalReport& report);
[[nodiscard]] EvalReport from_jsonl(const std::string& text);
/// Plain-text table with one row per configuration.
[[nodiscard]] std::string render_table(const EvalReport& report);

/// A named sampler configuration of the ablation grid.
struct AblationConfig {
    std::string name;
    guidance::GuidanceConfig guidance;
};

/// The full method and its four ablations, derived from `base`:
/// full, k0 (k = 0), no_guidance (s_a = s_p = 0), no_phase (s_p = 0),
/// no_amp (s_a = 0).
[[nodiscard]] std::vector<AblationConfig> standard_ablations(const guidance::GuidanceConfig& base);

/// Builds the pair-adapted model for one triple (finetuning, cache lookup).
using ModelFactory = std::function<denoiser::DenoiserModel<float>(const sprites::RenderedTriple&)>;
/// Receives every generated image, e.g. to write it to disk.
using SampleSink = std::function<void(const EvalRecord&, const ImageTensor&)>;

/// For each triple: one model from the factory, then one stepwise sample
/// per (config, seed), scored against the triple. The sampling seed is used
/// as given for every config, so configurations are compared on the same
/// starting noise.
[[nodiscard]] EvalReport run_ablation_grid(const std::vector<sprites::RenderedTriple>& benchmark,
                                           const ModelFactory& model_factory,
                                           const std::vector<AblationConfig>& configs,
                                           const std::vector<std::uint64_t>& seeds,
                                           const diffusion::NoiseSchedule& sched, const SampleSink& sink = {});

/// Scorer supplied from outside (e.g. a CLIP or DINO similarity):
/// (generated, reference, text) -> value.
using ExternalMetric = std::function<double(const ImageTensor&, const ImageTensor&, const std::string&)>;

/// Registry of external scorers. None are shipped; lookups of unregistered
/// names throw NotAvailableError.
class MetricRegistry {
public:
    void register_metric(const std::string& name, ExternalMetric metric);
    [[nodiscard]] bool contains(const std::string& name) const;
    [[nodiscard]] ExternalMetric lookup(const std::string& name) const;
    [[nodiscard]] std::vector<std::string> names() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, ExternalMetric> metrics_;
};

/// Process-wide registry.
[[nodiscard]] MetricRegistry& default_registry();
/// default_registry().lookup(name).
[[nodiscard]] ExternalMetric external_metric_plugin(const std::string& name);

}  // namespace freqguide::metrics

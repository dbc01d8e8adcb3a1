#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "freqguide/sprites.hpp"
#include "run_config.hpp"

namespace freqguide::app {

/// Dataset layout written by gen-dataset:
///   manifest.jsonl     one record per triple (paths relative to the dataset)
///   pairs/             pair_NNN_{source,driving,target}.png
///   vocabulary.jsonl   one record per subject x action render
///   vocabulary/        sS_aA.png, zero jitter (base training set)
///   dataset.json       config that produced the dataset
std::filesystem::path cmd_gen_dataset(const RunConfig& cfg, std::ostream& log);

/// Trains (or resumes) the base model. Writes the checkpoint, a per-epoch
/// loss log (<checkpoint>.loss.jsonl) and a config sidecar (<checkpoint>.json).
std::filesystem::path cmd_train_base(const RunConfig& cfg, std::ostream& log);

/// Pair finetuning plus guided sampling for cfg.pair_id. Writes the PNG, its
/// adapters (<out>.adapters.bin) and a sidecar record (<out>.json).
std::filesystem::path cmd_transfer(const RunConfig& cfg, std::ostream& log);

/// Ablation grid over cfg.eval_pairs pairs and cfg.eval_seeds samples.
/// Writes samples/, adapters/, report.jsonl, report.txt and report.json
/// under cfg.out; returns the report.jsonl path.
std::filesystem::path cmd_evaluate(const RunConfig& cfg, std::ostream& log);

/// Loads one triple of a generated dataset.
[[nodiscard]] sprites::RenderedTriple load_triple(const std::filesystem::path& data_dir, std::size_t pair_id);
[[nodiscard]] std::size_t dataset_pair_count(const std::filesystem::path& data_dir);
/// Pair ids used by evaluate: `count` ids spread evenly over the dataset.
[[nodiscard]] std::vector<std::size_t> evaluation_pairs(std::size_t total, std::size_t count);

[[nodiscard]] std::uint64_t sample_seed(std::uint64_t root, std::size_t sample);
[[nodiscard]] std::uint64_t adaptation_seed(std::uint64_t root, std::size_t pair_id);
[[nodiscard]] std::uint64_t model_init_seed(std::uint64_t root);

}  // namespace freqguide::app

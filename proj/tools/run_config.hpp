#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "freqguide/denoiser.hpp"
#include "freqguide/diffusion.hpp"
#include "freqguide/finetune.hpp"
#include "freqguide/guidance.hpp"
#include "freqguide/training.hpp"

namespace freqguide::app {

/// Every tunable of the command-line tool. Keys are the field names; on the
/// command line they appear with dashes (--s-a, --t-steps, ...), in config
/// files as `key = value`, and in the environment as FREQGUIDE_<KEY>.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string data_dir = "data";
    std::string base_checkpoint = "base.bin";
    std::string out;

    std::size_t n_subjects = 8;
    std::size_t n_actions = 15;

    std::string schedule = "linear";
    std::size_t train_steps = 1000;

    std::size_t image_size = 64;
    std::size_t base_width = 32;
    std::size_t time_dim = 64;
    std::size_t emb_dim = 128;
    std::size_t groups = 8;
    std::size_t mid_blocks = 3;

    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double cond_dropout = 0.1;
    bool resume = true;

    std::size_t adapter_rank = 4;
    std::string adapter_targets;  // comma separated; empty = defaults
    std::size_t n_tr = 500;
    double finetune_lr = 1e-4;

    double s_a = 1e-6;
    double s_p = 1e-3;
    std::size_t k = 5;
    std::size_t t_steps = 50;
    double cfg_scale = 3.0;
    std::string sampler = "ddim";
    double eta = 0.0;

    std::size_t pair_id = 0;
    std::size_t sample = 0;
    std::size_t eval_pairs = 10;
    std::size_t eval_seeds = 5;
    std::string configs = "full,k0,no_guidance,no_phase,no_amp";
    bool score_only = false;

    /// All keys in declaration order.
    [[nodiscard]] static const std::vector<std::string>& keys();
    [[nodiscard]] static std::string help(const std::string& key);
    /// Throws ConfigError for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    [[nodiscard]] std::string get(const std::string& key) const;

    /// Applies `key = value` lines; '#' starts a comment.
    void apply_file(const std::filesystem::path& path);
    /// Applies FREQGUIDE_<KEY> variables that are set.
    void apply_environment();

    /// Throws ConfigError when values are inconsistent.
    void validate() const;

    [[nodiscard]] denoiser::ArchConfig arch() const;
    [[nodiscard]] diffusion::NoiseSchedule noise_schedule() const;
    [[nodiscard]] training::BaseTrainingOptions training_options() const;
    [[nodiscard]] finetune::PairAdaptation adaptation() const;
    /// Guidance without references.
    [[nodiscard]] guidance::GuidanceConfig guidance() const;
    [[nodiscard]] std::vector<std::string> config_names() const;

    /// Every key with its current value as text, sorted by key.
    [[nodiscard]] std::map<std::string, std::string> to_map() const;
};

/// Converts between a key (s_a) and its flag spelling (s-a).
[[nodiscard]] std::string flag_name(const std::string& key);
[[nodiscard]] std::string env_name(const std::string& key);

}  // namespace freqguide::app

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freqguide/condition.hpp"
#include "freqguide/diffusion.hpp"
#include "freqguide/nn/layers.hpp"
#include "freqguide/tensor.hpp"

namespace freqguide::denoiser {

/// Layer sizes. Stage widths are base_width, 2 base_width, 2 base_width;
/// the two downsampling stages need image_size divisible by 4.
struct ArchConfig {
    std::size_t image_channels = 3;
    std::size_t image_size = 64;
    std::size_t base_width = 32;
    std::size_t time_dim = 64;
    std::size_t emb_dim = 128;
    std::size_t groups = 8;
    /// ResBlocks at the lowest resolution; each one widens the receptive
    /// field by 16 px, which the sprites need for coherent global shape.
    std::size_t mid_blocks = 3;
    std::size_t n_subjects = 8;
    std::size_t n_actions = 15;
    /// Two extra input channels holding normalized x and y coordinates.
    bool coord_channels = true;
    /// Adds x_t to the network output, so the net learns eps - x_t. At large
    /// t eps is almost x_t, and the skip keeps the implied x0 estimate from
    /// amplifying small output errors by 1/sqrt(alpha_bar).
    bool input_skip = true;

    void validate() const;
    [[nodiscard]] Shape image_shape() const { return {image_channels, image_size, image_size}; }
    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Learned condition vectors: subject half, action half, and a null vector.
template <typename T>
struct ConditionTable {
    nn::Param<T> subject;  // n_subjects x emb_dim/2
    nn::Param<T> action;   // n_actions x emb_dim/2
    nn::Param<T> null;     // emb_dim
};

struct TrainingExample {
    ImageTensor x0;  // model space, values in [-1, 1]
    std::optional<ConditionCode> code;
};

/// Which parameters receive gradients.
enum class TrainTarget { base, adapters };

namespace detail {

template <typename T>
struct ResBlockCache {
    nn::Tensor4<T> x, n1, s1, h, n2, s2;
    nn::GroupStats<T> g1, g2;
};

/// GN, SiLU, conv, + projected embedding, GN, SiLU, conv, plus a skip
/// (1x1 conv when the width changes).
template <typename T>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(std::size_t cin, std::size_t cout, std::size_t emb_dim, std::size_t groups, Rng& rng);

    [[nodiscard]] nn::Tensor4<T> forward(const nn::Tensor4<T>& x, const nn::Vec<T>& emb_act,
                                         ResBlockCache<T>* cache) const;
    nn::Tensor4<T> backward(const ResBlockCache<T>& cache, const nn::Tensor4<T>& dout, const nn::Vec<T>& emb_act,
                            nn::Vec<T>& d_emb_act, bool train_base);
    void collect(const std::string& prefix, std::vector<nn::NamedParam<T>>& out);
    void collect_dense(const std::string& prefix, std::vector<std::pair<std::string, nn::DenseBase<T>*>>& out);

    nn::GroupNorm<T> norm1, norm2;
    nn::Conv2d<T> conv1, conv2;
    nn::Linear<T> emb_proj;
    std::optional<nn::Conv2d<T>> skip;
};

template <typename T>
struct ForwardCache {
    nn::Vec<T> tsin, t1, t1s, emb, emb_act;
    nn::Tensor4<T> xin, h0, d0, p0, d1, p1, m, u1in, u1, u0in, u0, no, so;
    nn::GroupStats<T> out_stats;
    ResBlockCache<T> down0, down1, mid, up1, up0;
    std::vector<ResBlockCache<T>> mid_extra;
};

}  // namespace detail

template <typename T>
class DenoiserModel final : public diffusion::NoisePredictor {
public:
    DenoiserModel(const ArchConfig& arch, std::uint64_t init_seed);

    [[nodiscard]] const ArchConfig& arch() const { return arch_; }

    /// Subject embedding followed by action embedding; nullopt gives the
    /// null vector. Unknown ids throw VocabularyError.
    [[nodiscard]] ConditionEmbedding embed(std::optional<ConditionCode> code) const;

    /// Shape and finiteness are checked; timesteps are training indices.
    [[nodiscard]] ImageTensor predict_noise(const ImageTensor& x_t, std::size_t t,
                                            const ConditionEmbedding& cond) const override;
    /// Per-sample results equal predict_noise on each element.
    [[nodiscard]] std::vector<ImageTensor> predict_noise_batch(std::span<const ImageTensor> x_t,
                                                               std::span<const std::size_t> t,
                                                               std::span<const ConditionEmbedding> cond) const;

    /// Conv and linear layers in network order.
    [[nodiscard]] std::vector<std::string> adaptable_layers() const;
    /// Every adaptable layer whose smaller side is at least 2 rank.
    [[nodiscard]] std::vector<std::string> default_adapter_targets(std::size_t rank) const;
    void attach_adapters(std::size_t rank, const std::vector<std::string>& targets, std::uint64_t seed);
    void merge_adapters();
    void detach_adapters();
    [[nodiscard]] bool has_adapters() const;
    [[nodiscard]] std::vector<std::string> adapter_targets() const;
    [[nodiscard]] std::size_t adapter_rank() const;
    [[nodiscard]] std::size_t adapter_parameter_count() const;
    /// Dense shape (out, in) of an adaptable layer.
    [[nodiscard]] std::pair<std::size_t, std::size_t> layer_shape(const std::string& name) const;

    /// Base parameters in a fixed order, then adapter factors.
    [[nodiscard]] std::vector<nn::NamedParam<T>> parameters();
    [[nodiscard]] std::vector<nn::NamedParam<T>> parameters(nn::ParamRole role);
    [[nodiscard]] std::size_t parameter_count(nn::ParamRole role) const;
    void zero_grad();

    /// One minibatch: draws (t, noise) per example in order from `rng`,
    /// accumulates gradients of the mean per-example noise MSE and returns
    /// that loss. Gradients go only to the parameters selected by `target`.
    double accumulate_gradients(std::span<const TrainingExample> batch, const diffusion::NoiseSchedule& sched,
                                Rng& rng, TrainTarget target);

    /// FNV-1a over the bytes of every base parameter.
    [[nodiscard]] std::uint64_t base_checksum() const;

    /// Same weights at another precision.
    template <typename U>
    [[nodiscard]] DenoiserModel<U> cast() const;

private:
    template <typename U>
    friend class DenoiserModel;

    struct Inputs {
        nn::Tensor4<T> x;
        nn::Vec<T> timesteps;
        nn::Vec<T> cond;
    };

    [[nodiscard]] Inputs pack(std::span<const ImageTensor> x_t, std::span<const std::size_t> t,
                              std::span<const ConditionEmbedding> cond) const;
    [[nodiscard]] nn::Tensor4<T> forward(const Inputs& in, detail::ForwardCache<T>* cache) const;
    /// Returns dL/d(condition vector) per sample.
    nn::Vec<T> backward(const detail::ForwardCache<T>& cache, const nn::Tensor4<T>& dout, std::size_t batch,
                            bool train_base);
    [[nodiscard]] std::vector<std::pair<std::string, nn::DenseBase<T>*>> dense_layers();
    [[nodiscard]] std::vector<std::pair<std::string, const nn::DenseBase<T>*>> dense_layers() const;

    ArchConfig arch_;
    ConditionTable<T> table_;
    nn::Linear<T> time1_, time2_;
    nn::Conv2d<T> conv_in_;
    detail::ResBlock<T> down0_, down1_, mid_, up1_, up0_;
    std::vector<detail::ResBlock<T>> mid_extra_;  // named mid1, mid2, ...
    nn::Conv2d<T> ds0_, ds1_;
    nn::GroupNorm<T> norm_out_;
    nn::Conv2d<T> conv_out_;
};

extern template class DenoiserModel<float>;
extern template class DenoiserModel<double>;

template <typename T>
template <typename U>
DenoiserModel<U> DenoiserModel<T>::cast() const {
    DenoiserModel<U> out(arch_, 0);
    if (has_adapters()) out.attach_adapters(adapter_rank(), adapter_targets(), 0);
    auto& self = const_cast<DenoiserModel<T>&>(*this);
    const auto src = self.parameters();
    const auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i].param->value.assign(src[i].param->value.begin(), src[i].param->value.end());
    }
    return out;
}

/// Free-function forms of the model operations.
template <typename T>
[[nodiscard]] ConditionEmbedding embed_condition(const DenoiserModel<T>& model, std::optional<ConditionCode> code) {
    return model.embed(code);
}

template <typename T>
[[nodiscard]] DenoiserModel<T> attach_adapters(DenoiserModel<T> model, std::size_t rank,
                                               const std::vector<std::string>& targets, std::uint64_t seed) {
    model.attach_adapters(rank, targets, seed);
    return model;
}

template <typename T>
[[nodiscard]] DenoiserModel<T> merge_adapters(DenoiserModel<T> model) {
    model.merge_adapters();
    return model;
}

/// Sinusoidal timestep features: sin(t f_i) then cos(t f_i),
/// f_i = 10000^(-i / (dim/2)).
[[nodiscard]] std::vector<double> timestep_features(double t, std::size_t dim);

}  // namespace freqguide::denoiser

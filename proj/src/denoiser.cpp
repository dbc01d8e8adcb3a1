#include "freqguide/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

#include <malloc.h>

#include "freqguide/errors.hpp"

namespace freqguide::denoiser {

using nn::Tensor4;

void ArchConfig::validate() const {
    if (image_channels == 0) throw ConfigError("arch: image_channels must be positive");
    if (image_size < 4 || image_size % 4 != 0) throw ConfigError("arch: image_size must be a positive multiple of 4");
    if (base_width == 0 || base_width % groups != 0) throw ConfigError("arch: base_width must be a multiple of groups");
    if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("arch: time_dim must be even");
    if (emb_dim < 2 || emb_dim % 2 != 0) throw ConfigError("arch: emb_dim must be even");
    if (mid_blocks == 0) throw ConfigError("arch: mid_blocks must be positive");
    if (n_subjects == 0 || n_actions == 0) throw ConfigError("arch: vocabulary sizes must be positive");
}

std::vector<double> timestep_features(double t, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<double> out(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(t * f);
        out[half + i] = std::cos(t * f);
    }
    return out;
}

namespace detail {

template <typename T>
ResBlock<T>::ResBlock(std::size_t cin, std::size_t cout, std::size_t emb_dim, std::size_t groups, Rng& rng)
    : norm1(cin, groups),
      norm2(cout, groups),
      conv1(cin, cout, 3, 1, rng),
      conv2(cout, cout, 3, 1, rng),
      emb_proj(emb_dim, cout, rng) {
    if (cin != cout) skip.emplace(cin, cout, 1, 1, rng);
}

template <typename T>
Tensor4<T> ResBlock<T>::forward(const Tensor4<T>& x, const nn::Vec<T>& emb_act, ResBlockCache<T>* cache) const {
    ResBlockCache<T> local;
    ResBlockCache<T>& c = cache ? *cache : local;
    c.x = x;
    c.n1 = norm1.forward(x, &c.g1);
    c.s1 = nn::silu(c.n1);
    c.h = conv1.forward(c.s1);
    const auto e = emb_proj.forward(emb_act, x.n);
    const auto cout = c.h.c;
    for (std::size_t i = 0; i < x.n; ++i) {
        T* dst = c.h.sample(i);
        for (std::size_t ch = 0; ch < cout; ++ch) {
            const T add = e[i * cout + ch];
            for (std::size_t j = 0; j < c.h.plane(); ++j) dst[ch * c.h.plane() + j] += add;
        }
    }
    c.n2 = norm2.forward(c.h, &c.g2);
    c.s2 = nn::silu(c.n2);
    Tensor4<T> out = conv2.forward(c.s2);
    if (skip) {
        nn::add_inplace(out, skip->forward(x));
    } else {
        nn::add_inplace(out, x);
    }
    return out;
}

template <typename T>
Tensor4<T> ResBlock<T>::backward(const ResBlockCache<T>& c, const Tensor4<T>& dout, const nn::Vec<T>& emb_act,
                                 nn::Vec<T>& d_emb_act, bool train_base) {
    Tensor4<T> ds2 = conv2.backward(c.s2, dout, train_base);
    nn::silu_backward_inplace(c.n2.data, ds2.data);
    Tensor4<T> dh = norm2.backward(c.h, c.g2, ds2, train_base);

    const auto cout = dh.c;
    nn::Vec<T> de(dh.n * cout, T(0));
    for (std::size_t i = 0; i < dh.n; ++i) {
        const T* src = dh.sample(i);
        for (std::size_t ch = 0; ch < cout; ++ch) {
            T acc = T(0);
            for (std::size_t j = 0; j < dh.plane(); ++j) acc += src[ch * dh.plane() + j];
            de[i * cout + ch] = acc;
        }
    }
    const auto d_emb = emb_proj.backward(emb_act, de, dh.n, train_base);
    for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb_act[i] += d_emb[i];

    Tensor4<T> ds1 = conv1.backward(c.s1, dh, train_base);
    nn::silu_backward_inplace(c.n1.data, ds1.data);
    Tensor4<T> dx = norm1.backward(c.x, c.g1, ds1, train_base);
    if (skip) {
        nn::add_inplace(dx, skip->backward(c.x, dout, train_base));
    } else {
        nn::add_inplace(dx, dout);
    }
    return dx;
}

template <typename T>
void ResBlock<T>::collect(const std::string& prefix, std::vector<nn::NamedParam<T>>& out) {
    norm1.collect(prefix + ".norm1", out);
    conv1.collect(prefix + ".conv1", out);
    emb_proj.collect(prefix + ".emb_proj", out);
    norm2.collect(prefix + ".norm2", out);
    conv2.collect(prefix + ".conv2", out);
    if (skip) skip->collect(prefix + ".skip", out);
}

template <typename T>
void ResBlock<T>::collect_dense(const std::string& prefix,
                                std::vector<std::pair<std::string, nn::DenseBase<T>*>>& out) {
    out.emplace_back(prefix + ".conv1", &conv1);
    out.emplace_back(prefix + ".emb_proj", &emb_proj);
    out.emplace_back(prefix + ".conv2", &conv2);
    if (skip) out.emplace_back(prefix + ".skip", &*skip);
}

template class ResBlock<float>;
template class ResBlock<double>;

}  // namespace detail

namespace {

// Each forward pass allocates tens of megabytes of activations. With glibc's
// defaults those come from fresh mmaps that are page-faulted in on every call;
// keeping freed memory in the heap instead saves about 15% of training time.
void keep_activation_memory() {
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 512 << 20);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    });
}

}  // namespace

template <typename T>
DenoiserModel<T>::DenoiserModel(const ArchConfig& arch, std::uint64_t init_seed) : arch_(arch) {
    keep_activation_memory();
    arch_.validate();
    Rng rng(derive_seed(init_seed, {label_hash("denoiser_init")}));
    const auto w = arch_.base_width;
    const auto e = arch_.emb_dim;
    const auto g = arch_.groups;
    const auto half = e / 2;

    table_.subject.resize(arch_.n_subjects * half);
    table_.action.resize(arch_.n_actions * half);
    table_.null.resize(e);
    for (auto* p : {&table_.subject, &table_.action, &table_.null})
        for (auto& v : p->value) v = static_cast<T>(rng.normal());

    time1_ = nn::Linear<T>(arch_.time_dim, e, rng);
    time2_ = nn::Linear<T>(e, e, rng);
    conv_in_ = nn::Conv2d<T>(arch_.image_channels + (arch_.coord_channels ? 2 : 0), w, 3, 1, rng);
    down0_ = detail::ResBlock<T>(w, w, e, g, rng);
    ds0_ = nn::Conv2d<T>(w, 2 * w, 3, 2, rng);
    down1_ = detail::ResBlock<T>(2 * w, 2 * w, e, g, rng);
    ds1_ = nn::Conv2d<T>(2 * w, 2 * w, 3, 2, rng);
    mid_ = detail::ResBlock<T>(2 * w, 2 * w, e, g, rng);
    up1_ = detail::ResBlock<T>(4 * w, 2 * w, e, g, rng);
    up0_ = detail::ResBlock<T>(3 * w, w, e, g, rng);
    norm_out_ = nn::GroupNorm<T>(w, g);
    conv_out_ = nn::Conv2d<T>(w, arch_.image_channels, 3, 1, rng);
    for (std::size_t k = 1; k < arch_.mid_blocks; ++k) mid_extra_.emplace_back(2 * w, 2 * w, e, g, rng);
}

template <typename T>
ConditionEmbedding DenoiserModel<T>::embed(std::optional<ConditionCode> code) const {
    ConditionEmbedding out;
    out.code = code;
    const auto e = arch_.emb_dim;
    const auto half = e / 2;
    out.vector.resize(e);
    if (!code) {
        for (std::size_t i = 0; i < e; ++i) out.vector[i] = static_cast<float>(table_.null.value[i]);
        return out;
    }
    if (code->subject < 0 || static_cast<std::size_t>(code->subject) >= arch_.n_subjects) {
        throw VocabularyError("unknown subject id " + std::to_string(code->subject));
    }
    if (code->action < 0 || static_cast<std::size_t>(code->action) >= arch_.n_actions) {
        throw VocabularyError("unknown action id " + std::to_string(code->action));
    }
    const auto s = static_cast<std::size_t>(code->subject);
    const auto a = static_cast<std::size_t>(code->action);
    for (std::size_t i = 0; i < half; ++i) {
        out.vector[i] = static_cast<float>(table_.subject.value[s * half + i]);
        out.vector[half + i] = static_cast<float>(table_.action.value[a * half + i]);
    }
    return out;
}

template <typename T>
typename DenoiserModel<T>::Inputs DenoiserModel<T>::pack(std::span<const ImageTensor> x_t,
                                                         std::span<const std::size_t> t,
                                                         std::span<const ConditionEmbedding> cond) const {
    const auto n = x_t.size();
    if (t.size() != n || cond.size() != n) throw ShapeError("denoiser: batch components differ in length");
    const Shape shape = arch_.image_shape();
    const auto s = arch_.image_size;
    const auto extra = arch_.coord_channels ? 2 : 0;
    Inputs in;
    in.x = Tensor4<T>(n, arch_.image_channels + extra, s, s);
    in.timesteps.resize(n);
    in.cond.resize(n * arch_.emb_dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (x_t[i].shape() != shape) {
            throw ShapeError("denoiser expects " + shape.str() + ", got " + x_t[i].shape().str());
        }
        if (cond[i].vector.size() != arch_.emb_dim) throw ShapeError("condition vector has the wrong dimension");
        T* dst = in.x.sample(i);
        for (std::size_t j = 0; j < shape.size(); ++j) dst[j] = static_cast<T>(x_t[i][j]);
        if (extra) {
            T* cx = dst + shape.size();
            T* cy = cx + s * s;
            for (std::size_t y = 0; y < s; ++y) {
                for (std::size_t x = 0; x < s; ++x) {
                    cx[y * s + x] = static_cast<T>(2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(s) - 1.0);
                    cy[y * s + x] = static_cast<T>(2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(s) - 1.0);
                }
            }
        }
        in.timesteps[i] = static_cast<T>(t[i]);
        for (std::size_t j = 0; j < arch_.emb_dim; ++j) {
            const float v = cond[i].vector[j];
            if (!std::isfinite(v)) throw std::invalid_argument("condition vector is not finite");
            in.cond[i * arch_.emb_dim + j] = static_cast<T>(v);
        }
    }
    return in;
}

template <typename T>
Tensor4<T> DenoiserModel<T>::forward(const Inputs& in, detail::ForwardCache<T>* cache) const {
    detail::ForwardCache<T> local;
    auto& c = cache ? *cache : local;
    const auto n = in.x.n;
    const auto e = arch_.emb_dim;

    c.tsin.resize(n * arch_.time_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = timestep_features(static_cast<double>(in.timesteps[i]), arch_.time_dim);
        for (std::size_t j = 0; j < f.size(); ++j) c.tsin[i * arch_.time_dim + j] = static_cast<T>(f[j]);
    }
    c.t1 = time1_.forward(c.tsin, n);
    c.t1s = nn::silu(c.t1);
    c.emb = time2_.forward(c.t1s, n);
    for (std::size_t i = 0; i < n * e; ++i) c.emb[i] += in.cond[i];
    c.emb_act = nn::silu(c.emb);

    c.xin = in.x;
    c.h0 = conv_in_.forward(c.xin);
    c.d0 = down0_.forward(c.h0, c.emb_act, &c.down0);
    c.p0 = ds0_.forward(c.d0);
    c.d1 = down1_.forward(c.p0, c.emb_act, &c.down1);
    c.p1 = ds1_.forward(c.d1);
    c.m = mid_.forward(c.p1, c.emb_act, &c.mid);
    c.mid_extra.resize(mid_extra_.size());
    for (std::size_t k = 0; k < mid_extra_.size(); ++k) c.m = mid_extra_[k].forward(c.m, c.emb_act, &c.mid_extra[k]);
    c.u1in = nn::concat_channels(nn::upsample2(c.m), c.d1);
    c.u1 = up1_.forward(c.u1in, c.emb_act, &c.up1);
    c.u0in = nn::concat_channels(nn::upsample2(c.u1), c.d0);
    c.u0 = up0_.forward(c.u0in, c.emb_act, &c.up0);
    c.no = norm_out_.forward(c.u0, &c.out_stats);
    c.so = nn::silu(c.no);
    Tensor4<T> out = conv_out_.forward(c.so);
    if (arch_.input_skip) {
        const auto per = arch_.image_shape().size();
        for (std::size_t i = 0; i < n; ++i) {
            const T* x = in.x.sample(i);
            T* o = out.sample(i);
            for (std::size_t j = 0; j < per; ++j) o[j] += x[j];
        }
    }
    return out;
}

template <typename T>
nn::Vec<T> DenoiserModel<T>::backward(const detail::ForwardCache<T>& c, const Tensor4<T>& dout, std::size_t batch,
                                          bool train_base) {
    nn::Vec<T> d_emb_act(batch * arch_.emb_dim, T(0));

    Tensor4<T> g = conv_out_.backward(c.so, dout, train_base);
    nn::silu_backward_inplace(c.no.data, g.data);
    g = norm_out_.backward(c.u0, c.out_stats, g, train_base);

    g = up0_.backward(c.up0, g, c.emb_act, d_emb_act, train_base);
    auto [g_up1, g_d0_skip] = nn::split_channels(g, c.u1.c);
    g = nn::upsample2_backward(g_up1);

    g = up1_.backward(c.up1, g, c.emb_act, d_emb_act, train_base);
    auto [g_mid, g_d1_skip] = nn::split_channels(g, c.m.c);
    g = nn::upsample2_backward(g_mid);

    for (std::size_t k = mid_extra_.size(); k-- > 0;)
        g = mid_extra_[k].backward(c.mid_extra[k], g, c.emb_act, d_emb_act, train_base);
    g = mid_.backward(c.mid, g, c.emb_act, d_emb_act, train_base);
    g = ds1_.backward(c.d1, g, train_base);
    nn::add_inplace(g, g_d1_skip);
    g = down1_.backward(c.down1, g, c.emb_act, d_emb_act, train_base);
    g = ds0_.backward(c.d0, g, train_base);
    nn::add_inplace(g, g_d0_skip);
    g = down0_.backward(c.down0, g, c.emb_act, d_emb_act, train_base);
    conv_in_.backward(c.xin, g, train_base, false);

    nn::Vec<T> d_emb = std::move(d_emb_act);
    nn::silu_backward_inplace(c.emb, d_emb);
    auto d_t1s = time2_.backward(c.t1s, d_emb, batch, train_base);
    nn::silu_backward_inplace(c.t1, d_t1s);
    time1_.backward(c.tsin, d_t1s, batch, train_base);
    return d_emb;
}

template <typename T>
ImageTensor DenoiserModel<T>::predict_noise(const ImageTensor& x_t, std::size_t t,
                                            const ConditionEmbedding& cond) const {
    return predict_noise_batch(std::span(&x_t, 1), std::span(&t, 1), std::span(&cond, 1)).front();
}

template <typename T>
std::vector<ImageTensor> DenoiserModel<T>::predict_noise_batch(std::span<const ImageTensor> x_t,
                                                               std::span<const std::size_t> t,
                                                               std::span<const ConditionEmbedding> cond) const {
    const Inputs in = pack(x_t, t, cond);
    const Tensor4<T> out = forward(in, nullptr);
    const Shape shape = arch_.image_shape();
    std::vector<ImageTensor> result;
    result.reserve(out.n);
    for (std::size_t i = 0; i < out.n; ++i) {
        const T* src = out.sample(i);
        result.emplace_back(shape, std::vector<double>(src, src + shape.size()));
    }
    return result;
}

template <typename T>
std::vector<std::pair<std::string, nn::DenseBase<T>*>> DenoiserModel<T>::dense_layers() {
    std::vector<std::pair<std::string, nn::DenseBase<T>*>> out;
    out.emplace_back("time.lin1", &time1_);
    out.emplace_back("time.lin2", &time2_);
    out.emplace_back("conv_in", &conv_in_);
    down0_.collect_dense("down0", out);
    out.emplace_back("ds0", &ds0_);
    down1_.collect_dense("down1", out);
    out.emplace_back("ds1", &ds1_);
    mid_.collect_dense("mid", out);
    for (std::size_t k = 0; k < mid_extra_.size(); ++k) mid_extra_[k].collect_dense("mid" + std::to_string(k + 1), out);
    up1_.collect_dense("up1", out);
    up0_.collect_dense("up0", out);
    out.emplace_back("conv_out", &conv_out_);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const nn::DenseBase<T>*>> DenoiserModel<T>::dense_layers() const {
    auto mut = const_cast<DenoiserModel<T>*>(this)->dense_layers();
    return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<std::string> DenoiserModel<T>::adaptable_layers() const {
    std::vector<std::string> names;
    for (const auto& [name, layer] : dense_layers()) names.push_back(name);
    return names;
}

template <typename T>
std::vector<std::string> DenoiserModel<T>::default_adapter_targets(std::size_t rank) const {
    std::vector<std::string> names;
    for (const auto& [name, layer] : dense_layers()) {
        if (2 * rank <= std::min(layer->in_features(), layer->out_features())) names.push_back(name);
    }
    return names;
}

template <typename T>
std::pair<std::size_t, std::size_t> DenoiserModel<T>::layer_shape(const std::string& name) const {
    for (const auto& [n, layer] : dense_layers())
        if (n == name) return {layer->out_features(), layer->in_features()};
    throw ConfigError("unknown layer '" + name + "'");
}

template <typename T>
void DenoiserModel<T>::attach_adapters(std::size_t rank, const std::vector<std::string>& targets,
                                       std::uint64_t seed) {
    if (has_adapters()) throw ConfigError("adapters are already attached");
    if (targets.empty()) throw ConfigError("no adapter target layers given");
    auto layers = dense_layers();
    std::vector<nn::DenseBase<T>*> chosen;
    for (const auto& name : targets) {
        auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& p) { return p.first == name; });
        if (it == layers.end()) throw ConfigError("unknown adapter target layer '" + name + "'");
        if (std::find(chosen.begin(), chosen.end(), it->second) != chosen.end()) {
            throw ConfigError("adapter target '" + name + "' listed twice");
        }
        chosen.push_back(it->second);
    }
    // Validate every rank before mutating anything.
    for (const auto& name : targets) {
        const auto [out, in] = layer_shape(name);
        if (rank < 1 || 2 * rank > std::min(out, in)) {
            throw ConfigError("adapter rank " + std::to_string(rank) + " too large for layer '" + name + "' (" +
                              std::to_string(out) + "x" + std::to_string(in) + ")");
        }
    }
    // One stream per layer name keeps factor init independent of the target order.
    for (std::size_t i = 0; i < targets.size(); ++i) {
        Rng rng(derive_seed(seed, {label_hash("adapter"), label_hash(targets[i])}));
        chosen[i]->attach_adapter(rank, rng);
    }
}

template <typename T>
void DenoiserModel<T>::merge_adapters() {
    if (!has_adapters()) throw ConfigError("no adapters to merge");
    for (auto& [name, layer] : dense_layers()) layer->merge_adapter();
}

template <typename T>
void DenoiserModel<T>::detach_adapters() {
    for (auto& [name, layer] : dense_layers()) layer->detach_adapter();
}

template <typename T>
bool DenoiserModel<T>::has_adapters() const {
    for (const auto& [name, layer] : dense_layers())
        if (layer->has_adapter()) return true;
    return false;
}

template <typename T>
std::vector<std::string> DenoiserModel<T>::adapter_targets() const {
    std::vector<std::string> names;
    for (const auto& [name, layer] : dense_layers())
        if (layer->has_adapter()) names.push_back(name);
    return names;
}

template <typename T>
std::size_t DenoiserModel<T>::adapter_rank() const {
    for (const auto& [name, layer] : dense_layers())
        if (layer->has_adapter()) return layer->adapter_rank();
    return 0;
}

template <typename T>
std::size_t DenoiserModel<T>::adapter_parameter_count() const {
    return parameter_count(nn::ParamRole::adapter);
}

template <typename T>
std::vector<nn::NamedParam<T>> DenoiserModel<T>::parameters() {
    std::vector<nn::NamedParam<T>> out;
    out.push_back({"cond.subject", &table_.subject, nn::ParamRole::base});
    out.push_back({"cond.action", &table_.action, nn::ParamRole::base});
    out.push_back({"cond.null", &table_.null, nn::ParamRole::base});
    time1_.collect("time.lin1", out);
    time2_.collect("time.lin2", out);
    conv_in_.collect("conv_in", out);
    down0_.collect("down0", out);
    ds0_.collect("ds0", out);
    down1_.collect("down1", out);
    ds1_.collect("ds1", out);
    mid_.collect("mid", out);
    for (std::size_t k = 0; k < mid_extra_.size(); ++k) mid_extra_[k].collect("mid" + std::to_string(k + 1), out);
    up1_.collect("up1", out);
    up0_.collect("up0", out);
    norm_out_.collect("norm_out", out);
    conv_out_.collect("conv_out", out);
    std::stable_partition(out.begin(), out.end(), [](const auto& p) { return p.role == nn::ParamRole::base; });
    return out;
}

template <typename T>
std::vector<nn::NamedParam<T>> DenoiserModel<T>::parameters(nn::ParamRole role) {
    auto all = parameters();
    std::erase_if(all, [&](const auto& p) { return p.role != role; });
    return all;
}

template <typename T>
std::size_t DenoiserModel<T>::parameter_count(nn::ParamRole role) const {
    std::size_t total = 0;
    for (const auto& p : const_cast<DenoiserModel<T>*>(this)->parameters(role)) total += p.param->size();
    return total;
}

template <typename T>
void DenoiserModel<T>::zero_grad() {
    for (auto& p : parameters()) p.param->zero_grad();
}

template <typename T>
double DenoiserModel<T>::accumulate_gradients(std::span<const TrainingExample> batch,
                                              const diffusion::NoiseSchedule& sched, Rng& rng, TrainTarget target) {
    if (batch.empty()) throw std::invalid_argument("accumulate_gradients: empty batch");
    if (target == TrainTarget::adapters && !has_adapters()) {
        throw ConfigError("adapter training requested but no adapters are attached");
    }
    const bool train_base = target == TrainTarget::base;
    const Shape shape = arch_.image_shape();
    const auto n = batch.size();

    std::vector<ImageTensor> x_t;
    std::vector<ImageTensor> noise;
    std::vector<std::size_t> ts;
    std::vector<ConditionEmbedding> conds;
    for (const auto& ex : batch) {
        if (ex.x0.shape() != shape) throw ShapeError("training example has shape " + ex.x0.shape().str());
        auto draw = diffusion::draw_training_example(shape, sched, rng);
        x_t.push_back(diffusion::q_sample(ex.x0, draw.t, draw.noise, sched));
        ts.push_back(draw.t);
        noise.push_back(std::move(draw.noise));
        conds.push_back(embed(ex.code));
    }

    const Inputs in = pack(x_t, ts, conds);
    detail::ForwardCache<T> cache;
    const Tensor4<T> out = forward(in, &cache);

    const auto per = shape.size();
    const double scale = 2.0 / static_cast<double>(per * n);
    Tensor4<T> dout(out.n, out.c, out.h, out.w);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const T* pred = out.sample(i);
        T* d = dout.sample(i);
        double sample_loss = 0.0;
        for (std::size_t j = 0; j < per; ++j) {
            const double diff = static_cast<double>(pred[j]) - noise[i][j];
            sample_loss += diff * diff;
            d[j] = static_cast<T>(scale * diff);
        }
        loss += sample_loss / static_cast<double>(per);
    }

    const auto d_cond = backward(cache, dout, n, train_base);
    if (train_base) {
        const auto e = arch_.emb_dim;
        const auto half = e / 2;
        for (std::size_t i = 0; i < n; ++i) {
            const T* g = d_cond.data() + i * e;
            const auto& code = batch[i].code;
            if (!code) {
                for (std::size_t j = 0; j < e; ++j) table_.null.grad[j] += g[j];
                continue;
            }
            const auto s = static_cast<std::size_t>(code->subject);
            const auto a = static_cast<std::size_t>(code->action);
            for (std::size_t j = 0; j < half; ++j) {
                table_.subject.grad[s * half + j] += g[j];
                table_.action.grad[a * half + j] += g[half + j];
            }
        }
    }
    return loss / static_cast<double>(n);
}

template <typename T>
std::uint64_t DenoiserModel<T>::base_checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : const_cast<DenoiserModel<T>*>(this)->parameters(nn::ParamRole::base)) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.param->value.data());
        for (std::size_t i = 0; i < p.param->value.size() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

template class DenoiserModel<float>;
template class DenoiserModel<double>;

}  // namespace freqguide::denoiser

#pragma once

// Building blocks for the denoiser: NCHW activations, parameters with
// gradient buffers, and conv / linear / group-norm layers with hand-written
// backward passes. Conv and linear layers can carry a low-rank adapter whose
// effective weight is W + B A.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <new>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "freqguide/errors.hpp"
#include "freqguide/rng.hpp"

namespace freqguide::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// 64-byte aligned storage. Eigen picks its vectorized reduction path from the
/// runtime address, so aligning every numeric buffer keeps results
/// bit-reproducible across copies of a model.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}  // NOLINT
    [[nodiscard]] T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

template <typename T>
using Vec = std::vector<T, AlignedAllocator<T>>;

/// Allocator that leaves trivially constructible elements uninitialized on
/// resize; activations are always fully written before being read.
template <typename T>
struct DefaultInitAllocator : AlignedAllocator<T> {
    template <typename U>
    struct rebind {
        using other = DefaultInitAllocator<U>;
    };
    DefaultInitAllocator() = default;
    template <typename U>
    DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}  // NOLINT
    template <typename U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

template <typename T>
using Buffer = std::vector<T, DefaultInitAllocator<T>>;

template <typename T>
struct Tensor4 {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    Buffer<T> data;

    Tensor4() = default;
    /// Zero-filled.
    Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
        : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, T(0)) {}
    /// Contents unspecified; for outputs that are overwritten in full.
    static Tensor4 uninitialized(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_) {
        Tensor4 t;
        t.n = n_;
        t.c = c_;
        t.h = h_;
        t.w = w_;
        t.data.resize(n_ * c_ * h_ * w_);
        return t;
    }

    [[nodiscard]] std::size_t plane() const { return h * w; }
    [[nodiscard]] std::size_t sample_size() const { return c * h * w; }
    [[nodiscard]] T* sample(std::size_t i) { return data.data() + i * sample_size(); }
    [[nodiscard]] const T* sample(std::size_t i) const { return data.data() + i * sample_size(); }
    [[nodiscard]] bool same_dims(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

template <typename T>
struct Param {
    Vec<T> value;
    Vec<T> grad;

    void resize(std::size_t count) {
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
    [[nodiscard]] std::size_t size() const { return value.size(); }
};

enum class ParamRole { base, adapter };

template <typename T>
struct NamedParam {
    std::string name;
    Param<T>* param = nullptr;
    ParamRole role = ParamRole::base;
};

/// Rank-r factors: A is rank x in, B is out x rank. B starts at zero.
template <typename T>
struct LowRank {
    std::size_t rank = 0;
    Param<T> A;
    Param<T> B;
};

template <typename T>
void init_uniform(Param<T>& p, double bound, Rng& rng) {
    for (auto& v : p.value) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
void silu_into(const T* x, std::size_t count, T* y) {
    const auto n = static_cast<Eigen::Index>(count);
    ConstArrayMap<T> xs(x, n);
    ArrayMap<T>(y, n) = xs / (T(1) + (-xs).exp());
}

template <typename T, typename A>
std::vector<T, A> silu(const std::vector<T, A>& x) {
    std::vector<T, A> y(x.size());
    silu_into(x.data(), x.size(), y.data());
    return y;
}

/// dy * silu'(x), in place on dy.
template <typename T, typename A1, typename A2>
void silu_backward_inplace(const std::vector<T, A1>& x, std::vector<T, A2>& dy) {
    const auto n = static_cast<Eigen::Index>(x.size());
    ConstArrayMap<T> xs(x.data(), n);
    const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-xs).exp());
    ArrayMap<T>(dy.data(), n) *= s * (T(1) + xs * (T(1) - s));
}

template <typename T>
Tensor4<T> silu(const Tensor4<T>& x) {
    auto y = Tensor4<T>::uninitialized(x.n, x.c, x.h, x.w);
    silu_into(x.data.data(), x.data.size(), y.data.data());
    return y;
}

/// Shared low-rank plumbing for dense maps W (out x in).
template <typename T>
class DenseBase {
public:
    [[nodiscard]] std::size_t in_features() const { return in_; }
    [[nodiscard]] std::size_t out_features() const { return out_; }
    [[nodiscard]] bool has_adapter() const { return lora_.has_value(); }
    [[nodiscard]] std::size_t adapter_rank() const { return lora_ ? lora_->rank : 0; }

    void attach_adapter(std::size_t rank, Rng& rng) {
        if (lora_) throw ConfigError("adapter already attached");
        if (rank < 1 || 2 * rank > std::min(in_, out_)) {
            throw ConfigError("adapter rank " + std::to_string(rank) + " too large for a " + std::to_string(out_) +
                              "x" + std::to_string(in_) + " map");
        }
        LowRank<T> l;
        l.rank = rank;
        l.A.resize(rank * in_);
        l.B.resize(out_ * rank);
        init_uniform(l.A, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
        lora_ = std::move(l);
    }

    void detach_adapter() { lora_.reset(); }

    /// W += B A, then drop the factors.
    void merge_adapter() {
        if (!lora_) return;
        MatMap<T>(weight.value.data(), out_, in_) += effective_delta();
        lora_.reset();
    }

    [[nodiscard]] LowRank<T>* adapter() { return lora_ ? &*lora_ : nullptr; }
    [[nodiscard]] const LowRank<T>* adapter() const { return lora_ ? &*lora_ : nullptr; }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
        out.push_back({prefix + ".weight", &weight, ParamRole::base});
        out.push_back({prefix + ".bias", &bias, ParamRole::base});
        if (lora_) {
            out.push_back({prefix + ".lora_A", &lora_->A, ParamRole::adapter});
            out.push_back({prefix + ".lora_B", &lora_->B, ParamRole::adapter});
        }
    }

    Param<T> weight;
    Param<T> bias;

protected:
    void init_base(std::size_t in, std::size_t out, Rng& rng) {
        in_ = in;
        out_ = out;
        weight.resize(out * in);
        bias.resize(out);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        init_uniform(weight, bound, rng);
        init_uniform(bias, bound, rng);
    }

    [[nodiscard]] RowMat<T> effective_delta() const {
        return ConstMatMap<T>(lora_->B.value.data(), out_, lora_->rank) *
               ConstMatMap<T>(lora_->A.value.data(), lora_->rank, in_);
    }

    /// W, or W + B A when an adapter is attached.
    [[nodiscard]] RowMat<T> effective_weight() const {
        RowMat<T> w = ConstMatMap<T>(weight.value.data(), out_, in_);
        if (lora_) w += effective_delta();
        return w;
    }

    /// Routes dL/dW_eff into the base weight and/or the factors.
    void distribute_weight_grad(const RowMat<T>& d_weff, bool train_base) {
        if (train_base) MatMap<T>(weight.grad.data(), out_, in_) += d_weff;
        if (lora_) {
            const auto r = lora_->rank;
            MatMap<T>(lora_->B.grad.data(), out_, r) +=
                d_weff * ConstMatMap<T>(lora_->A.value.data(), r, in_).transpose();
            MatMap<T>(lora_->A.grad.data(), r, in_) +=
                ConstMatMap<T>(lora_->B.value.data(), out_, r).transpose() * d_weff;
        }
    }

    std::size_t in_ = 0;
    std::size_t out_ = 0;
    std::optional<LowRank<T>> lora_;
};

/// y = W x + b applied row by row to a (batch x in) matrix.
template <typename T>
class Linear : public DenseBase<T> {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng) { this->init_base(in, out, rng); }

    [[nodiscard]] Vec<T> forward(const Vec<T>& x, std::size_t batch) const {
        const RowMat<T> w = this->effective_weight();
        Vec<T> y(batch * this->out_);
        for (std::size_t i = 0; i < batch; ++i) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yi(y.data() + i * this->out_, this->out_);
            yi.noalias() = w * Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(x.data() + i * this->in_, this->in_);
            for (std::size_t o = 0; o < this->out_; ++o) yi[o] += this->bias.value[o];
        }
        return y;
    }

    /// Accumulates parameter gradients and returns dL/dx.
    Vec<T> backward(const Vec<T>& x, const Vec<T>& dy, std::size_t batch, bool train_base) {
        const auto in = this->in_;
        const auto out = this->out_;
        ConstMatMap<T> X(x.data(), batch, in);
        ConstMatMap<T> DY(dy.data(), batch, out);
        const RowMat<T> d_weff = DY.transpose() * X;
        this->distribute_weight_grad(d_weff, train_base);
        if (train_base) {
            for (std::size_t i = 0; i < batch; ++i)
                for (std::size_t o = 0; o < out; ++o) this->bias.grad[o] += dy[i * out + o];
        }
        Vec<T> dx(batch * in);
        MatMap<T>(dx.data(), batch, in).noalias() = DY * this->effective_weight();
        return dx;
    }
};

/// Columns for output rows [oy0, oy1); each column block is (oy1 - oy0) ow wide.
template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t oy0, std::size_t oy1, std::size_t ow, T* cols) {
    const std::size_t rows = oy1 - oy0;
    const auto ih = static_cast<std::ptrdiff_t>(h);
    const auto iw = static_cast<std::ptrdiff_t>(w);
    const auto sp = static_cast<std::ptrdiff_t>(stride);
    const auto owp = static_cast<std::ptrdiff_t>(ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* dst = cols + ((ci * k + ky) * k + kx) * rows * ow;
                const auto off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
                // Output columns whose source column lies inside the image.
                std::ptrdiff_t lo = 0;
                while (lo < owp && lo * sp + off < 0) ++lo;
                std::ptrdiff_t hi = owp;
                while (hi > lo && (hi - 1) * sp + off >= iw) --hi;
                for (std::size_t oy = oy0; oy < oy1; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    T* row = dst + (oy - oy0) * ow;
                    if (iy < 0 || iy >= ih) {
                        std::fill(row, row + ow, T(0));
                        continue;
                    }
                    const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    std::fill(row, row + lo, T(0));
                    if (stride == 1) {
                        std::copy(src + lo + off, src + hi + off, row + lo);
                    } else {
                        for (std::ptrdiff_t ox = lo; ox < hi; ++ox) row[ox] = src[ox * sp + off];
                    }
                    std::fill(row + hi, row + ow, T(0));
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-and-adds columns back into dx.
template <typename T>
void col2im(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t oh, std::size_t ow, T* dx) {
    const auto ih = static_cast<std::ptrdiff_t>(h);
    const auto iw = static_cast<std::ptrdiff_t>(w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* src = cols + ((ci * k + ky) * k + kx) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= ih) continue;
                    T* dst = dx + (ci * h + static_cast<std::size_t>(iy)) * w;
                    const T* row = src + oy * ow;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        if (ix >= 0 && ix < iw) dst[ix] += row[ox];
                    }
                }
            }
        }
    }
}

/// Square-kernel convolution with padding k/2. The dense map is
/// cout x (cin k k), so an adapter sees in = cin k k.
template <typename T>
class Conv2d : public DenseBase<T> {
public:
    Conv2d() = default;
    Conv2d(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Rng& rng)
        : cin_(cin), k_(k), stride_(stride) {
        this->init_base(cin * k * k, cout, rng);
    }

    [[nodiscard]] std::size_t out_size(std::size_t in) const { return (in + 2 * pad() - k_) / stride_ + 1; }

    [[nodiscard]] Tensor4<T> forward(const Tensor4<T>& x) const {
        check_input(x);
        const auto oh = out_size(x.h);
        const auto ow = out_size(x.w);
        const auto p = oh * ow;
        const auto kdim = this->in_;
        const auto cout = this->out_;
        auto y = Tensor4<T>::uninitialized(x.n, cout, oh, ow);
        const RowMat<T> w = this->effective_weight();
        const auto band = band_rows(kdim, oh, ow);
        Buffer<T>& cols = scratch(0, direct() ? 0 : kdim * band * ow);
        for (std::size_t i = 0; i < x.n; ++i) {
            if (direct()) {
                MatMap<T>(y.sample(i), cout, p).noalias() = w * ConstMatMap<T>(x.sample(i), kdim, p);
            } else {
                for (std::size_t oy0 = 0; oy0 < oh; oy0 += band) {
                    const auto oy1 = std::min(oh, oy0 + band);
                    const auto len = (oy1 - oy0) * ow;
                    im2col(x.sample(i), cin_, x.h, x.w, k_, stride_, pad(), oy0, oy1, ow, cols.data());
                    StridedMap(y.sample(i) + oy0 * ow, cout, len, Eigen::OuterStride<>(static_cast<Eigen::Index>(p)))
                        .noalias() = w * ConstMatMap<T>(cols.data(), kdim, len);
                }
            }
            MatMap<T> out(y.sample(i), cout, p);
            for (std::size_t o = 0; o < cout; ++o) out.row(static_cast<Eigen::Index>(o)).array() += this->bias.value[o];
        }
        return y;
    }

    /// Accumulates parameter gradients; returns dL/dx (empty when need_dx is false).
    Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& dy, bool train_base, bool need_dx = true) {
        check_input(x);
        const auto oh = out_size(x.h);
        const auto ow = out_size(x.w);
        const auto p = oh * ow;
        const auto kdim = this->in_;
        const auto cout = this->out_;
        RowMat<T> d_weff = RowMat<T>::Zero(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kdim));
        const RowMat<T> w = need_dx ? this->effective_weight() : RowMat<T>();
        // Stride-1 kernels: dx is a convolution of dy with the flipped,
        // transposed kernel, which avoids a (cin k k) x P intermediate.
        const bool flipped = need_dx && stride_ == 1 && k_ > 1;
        const RowMat<T> w_flip = flipped ? flip_kernel(w) : RowMat<T>();
        Tensor4<T> dx;
        if (need_dx) dx = Tensor4<T>(x.n, x.c, x.h, x.w);
        const auto band = band_rows(kdim, oh, ow);
        const auto dband = band_rows(cout * k_ * k_, x.h, x.w);
        Buffer<T>& cols = scratch(0, direct() ? 0 : kdim * band * ow);
        Buffer<T>& dcols =
            scratch(1, direct() || !need_dx ? 0 : (flipped ? cout * k_ * k_ * dband * x.w : kdim * p));
        for (std::size_t i = 0; i < x.n; ++i) {
            ConstMatMap<T> g(dy.sample(i), cout, p);
            if (direct()) {
                d_weff.noalias() += g * ConstMatMap<T>(x.sample(i), kdim, p).transpose();
            } else {
                for (std::size_t oy0 = 0; oy0 < oh; oy0 += band) {
                    const auto oy1 = std::min(oh, oy0 + band);
                    const auto len = (oy1 - oy0) * ow;
                    im2col(x.sample(i), cin_, x.h, x.w, k_, stride_, pad(), oy0, oy1, ow, cols.data());
                    d_weff.noalias() += ConstStridedMap(dy.sample(i) + oy0 * ow, cout, len,
                                                        Eigen::OuterStride<>(static_cast<Eigen::Index>(p))) *
                                        ConstMatMap<T>(cols.data(), kdim, len).transpose();
                }
            }
            if (train_base) {
                for (std::size_t o = 0; o < cout; ++o) this->bias.grad[o] += g.row(static_cast<Eigen::Index>(o)).sum();
            }
            if (!need_dx) continue;
            if (direct()) {
                MatMap<T>(dx.sample(i), kdim, p).noalias() = w.transpose() * g;
            } else if (flipped) {
                const auto kd = cout * k_ * k_;
                for (std::size_t y0 = 0; y0 < x.h; y0 += dband) {
                    const auto y1 = std::min(x.h, y0 + dband);
                    const auto len = (y1 - y0) * x.w;
                    im2col(dy.sample(i), cout, oh, ow, k_, 1, pad(), y0, y1, x.w, dcols.data());
                    StridedMap(dx.sample(i) + y0 * x.w, cin_, len,
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(x.plane())))
                        .noalias() = w_flip * ConstMatMap<T>(dcols.data(), kd, len);
                }
            } else {
                MatMap<T>(dcols.data(), kdim, p).noalias() = w.transpose() * g;
                col2im(dcols.data(), cin_, x.h, x.w, k_, stride_, pad(), oh, ow, dx.sample(i));
            }
        }
        this->distribute_weight_grad(d_weff, train_base);
        return dx;
    }

private:
    using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
    using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

    /// Output rows per im2col band, sized so one band of columns stays
    /// around 1 MB.
    static std::size_t band_rows(std::size_t kdim, std::size_t oh, std::size_t ow) {
        const std::size_t budget = (std::size_t{1} << 20) / sizeof(T);
        return std::clamp<std::size_t>(budget / std::max<std::size_t>(1, kdim * ow), 1, oh);
    }

    /// Per-thread column buffers reused across calls; fresh multi-megabyte
    /// allocations per call cost more than the GEMMs.
    static Buffer<T>& scratch(std::size_t slot, std::size_t size) {
        thread_local Buffer<T> buffers[2];
        if (buffers[slot].size() < size) buffers[slot].resize(size);
        return buffers[slot];
    }

    /// w_flip[ci, (co k + a) k + b] = w[co, (ci k + k-1-a) k + k-1-b].
    [[nodiscard]] RowMat<T> flip_kernel(const RowMat<T>& w) const {
        const auto cout = this->out_;
        RowMat<T> f(static_cast<Eigen::Index>(cin_), static_cast<Eigen::Index>(cout * k_ * k_));
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin_; ++ci)
                for (std::size_t a = 0; a < k_; ++a)
                    for (std::size_t b = 0; b < k_; ++b)
                        f(static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>((co * k_ + a) * k_ + b)) =
                            w(static_cast<Eigen::Index>(co),
                              static_cast<Eigen::Index>((ci * k_ + (k_ - 1 - a)) * k_ + (k_ - 1 - b)));
        return f;
    }

    [[nodiscard]] std::size_t pad() const { return k_ / 2; }
    [[nodiscard]] bool direct() const { return k_ == 1 && stride_ == 1; }
    void check_input(const Tensor4<T>& x) const {
        if (x.c != cin_) {
            throw ShapeError("conv expects " + std::to_string(cin_) + " channels, got " + std::to_string(x.c));
        }
    }

    std::size_t cin_ = 0;
    std::size_t k_ = 1;
    std::size_t stride_ = 1;
};

template <typename T>
struct GroupStats {
    Vec<T> mean;
    Vec<T> rstd;
};

template <typename T>
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(std::size_t channels, std::size_t groups) : channels_(channels), groups_(groups) {
        if (groups == 0 || channels % groups != 0) {
            throw ConfigError("group norm: " + std::to_string(channels) + " channels not divisible into " +
                              std::to_string(groups) + " groups");
        }
        gamma.resize(channels);
        beta.resize(channels);
        std::fill(gamma.value.begin(), gamma.value.end(), T(1));
    }

    [[nodiscard]] Tensor4<T> forward(const Tensor4<T>& x, GroupStats<T>* stats) const {
        if (x.c != channels_) throw ShapeError("group norm channel mismatch");
        const auto cg = channels_ / groups_;
        const auto pl = static_cast<Eigen::Index>(x.plane());
        const auto m = cg * x.plane();
        auto y = Tensor4<T>::uninitialized(x.n, x.c, x.h, x.w);
        if (stats) {
            stats->mean.assign(x.n * groups_, T(0));
            stats->rstd.assign(x.n * groups_, T(0));
        }
        for (std::size_t i = 0; i < x.n; ++i) {
            for (std::size_t g = 0; g < groups_; ++g) {
                ConstArrayMap<T> src(x.sample(i) + g * m, static_cast<Eigen::Index>(m));
                const double mean = static_cast<double>(src.sum()) / static_cast<double>(m);
                const auto mu = static_cast<T>(mean);
                const double var = static_cast<double>((src - mu).square().sum()) / static_cast<double>(m);
                const auto rstd = static_cast<T>(1.0 / std::sqrt(var + kEps));
                if (stats) {
                    stats->mean[i * groups_ + g] = mu;
                    stats->rstd[i * groups_ + g] = rstd;
                }
                for (std::size_t cc = 0; cc < cg; ++cc) {
                    const auto ch = g * cg + cc;
                    const T scale = gamma.value[ch] * rstd;
                    const T shift = beta.value[ch] - mu * scale;
                    const auto off = g * m + cc * x.plane();
                    ArrayMap<T>(y.sample(i) + off, pl) = ConstArrayMap<T>(x.sample(i) + off, pl) * scale + shift;
                }
            }
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& x, const GroupStats<T>& stats, const Tensor4<T>& dy, bool train_base) {
        const auto cg = channels_ / groups_;
        const auto pl = static_cast<Eigen::Index>(x.plane());
        const auto m = cg * x.plane();
        auto dx = Tensor4<T>::uninitialized(x.n, x.c, x.h, x.w);
        Eigen::Array<T, Eigen::Dynamic, 1> xhat(pl);
        for (std::size_t i = 0; i < x.n; ++i) {
            for (std::size_t g = 0; g < groups_; ++g) {
                const T mu = stats.mean[i * groups_ + g];
                const T rstd = stats.rstd[i * groups_ + g];
                double sum_d = 0.0;
                double sum_dx = 0.0;
                for (std::size_t cc = 0; cc < cg; ++cc) {
                    const auto ch = g * cg + cc;
                    const auto off = g * m + cc * x.plane();
                    ConstArrayMap<T> gy(dy.sample(i) + off, pl);
                    xhat = (ConstArrayMap<T>(x.sample(i) + off, pl) - mu) * rstd;
                    const double dgamma = static_cast<double>((gy * xhat).sum());
                    const double dbeta = static_cast<double>(gy.sum());
                    sum_d += dbeta * gamma.value[ch];
                    sum_dx += dgamma * gamma.value[ch];
                    if (train_base) {
                        gamma.grad[ch] += static_cast<T>(dgamma);
                        beta.grad[ch] += static_cast<T>(dbeta);
                    }
                }
                const auto mean_d = static_cast<T>(sum_d / static_cast<double>(m));
                const auto mean_dx = static_cast<T>(sum_dx / static_cast<double>(m));
                for (std::size_t cc = 0; cc < cg; ++cc) {
                    const auto ch = g * cg + cc;
                    const auto off = g * m + cc * x.plane();
                    xhat = (ConstArrayMap<T>(x.sample(i) + off, pl) - mu) * rstd;
                    ArrayMap<T>(dx.sample(i) + off, pl) =
                        rstd * (ConstArrayMap<T>(dy.sample(i) + off, pl) * gamma.value[ch] - mean_d - xhat * mean_dx);
                }
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma, ParamRole::base});
        out.push_back({prefix + ".beta", &beta, ParamRole::base});
    }

    Param<T> gamma;
    Param<T> beta;

private:
    static constexpr double kEps = 1e-5;
    std::size_t channels_ = 0;
    std::size_t groups_ = 1;
};

/// Nearest-neighbour 2x upsampling and its adjoint (2x2 sum).
template <typename T>
Tensor4<T> upsample2(const Tensor4<T>& x) {
    auto y = Tensor4<T>::uninitialized(x.n, x.c, x.h * 2, x.w * 2);
    for (std::size_t i = 0; i < x.n * x.c; ++i) {
        const T* src = x.data.data() + i * x.plane();
        T* dst = y.data.data() + i * y.plane();
        for (std::size_t yy = 0; yy < y.h; ++yy)
            for (std::size_t xx = 0; xx < y.w; ++xx) dst[yy * y.w + xx] = src[(yy / 2) * x.w + xx / 2];
    }
    return y;
}

template <typename T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (std::size_t i = 0; i < dy.n * dy.c; ++i) {
        const T* src = dy.data.data() + i * dy.plane();
        T* dst = dx.data.data() + i * dx.plane();
        for (std::size_t yy = 0; yy < dy.h; ++yy)
            for (std::size_t xx = 0; xx < dy.w; ++xx) dst[(yy / 2) * dx.w + xx / 2] += src[yy * dy.w + xx];
    }
    return dx;
}

/// Channel concatenation [a, b] and its split.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw ShapeError("concat: spatial mismatch");
    auto y = Tensor4<T>::uninitialized(a.n, a.c + b.c, a.h, a.w);
    for (std::size_t i = 0; i < a.n; ++i) {
        std::copy(a.sample(i), a.sample(i) + a.sample_size(), y.sample(i));
        std::copy(b.sample(i), b.sample(i) + b.sample_size(), y.sample(i) + a.sample_size());
    }
    return y;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& y, std::size_t first) {
    auto a = Tensor4<T>::uninitialized(y.n, first, y.h, y.w);
    auto b = Tensor4<T>::uninitialized(y.n, y.c - first, y.h, y.w);
    for (std::size_t i = 0; i < y.n; ++i) {
        std::copy(y.sample(i), y.sample(i) + a.sample_size(), a.sample(i));
        std::copy(y.sample(i) + a.sample_size(), y.sample(i) + y.sample_size(), b.sample(i));
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b) {
    if (!a.same_dims(b)) throw ShapeError("tensor add: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace freqguide::nn

#pragma once

// Neural-network primitives over the autodiff tensors.
//
// Feature maps use a channel-major layout [C, N, T, V] (channels, batch,
// frames, joints): every per-channel slice is one contiguous row, which turns
// the convolutions, the adjacency contraction and batch norm into single
// large matrix products. Single-sample call sites pass [C, 1, T, V].

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "effgcn/gemm.hpp"
#include "effgcn/profile.hpp"
#include "effgcn/rng.hpp"
#include "effgcn/tensor.hpp"
#include "effgcn/threads.hpp"

namespace effgcn {

enum class Act { swish, hardswish, sigmoid, relu };
enum class Mode { train, eval };

inline Act act_from_string(const std::string& name) {
    if (name == "swish") return Act::swish;
    if (name == "hardswish") return Act::hardswish;
    if (name == "sigmoid") return Act::sigmoid;
    if (name == "relu") return Act::relu;
    throw std::invalid_argument("unknown activation kind: " + name);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> activation(const Tensor<S>& x, Act kind) {
    prof::Scope prof_scope_("act.fwd");
    const auto n = x.numel();
    Array<S> y = Array<S>::uninit(x.shape());
    const S* xp = x.value().ptr();
    S* yp = y.ptr();
    using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

    // Sigmoid values are cached for the swish/sigmoid backward so the exp is
    // evaluated once.
    auto sig = std::make_shared<Array<S>>();
    switch (kind) {
        case Act::sigmoid:
            EArr(yp, n) = S(1) / (S(1) + (-CEArr(xp, n)).exp());
            break;
        case Act::swish: {
            *sig = Array<S>::uninit({n});
            EArr(sig->ptr(), n) = S(1) / (S(1) + (-CEArr(xp, n)).exp());
            EArr(yp, n) = CEArr(xp, n) * CEArr(sig->ptr(), n);
            break;
        }
        case Act::hardswish:
            for (std::int64_t i = 0; i < n; ++i) {
                const S v = xp[i];
                yp[i] = v * std::clamp(v + S(3), S(0), S(6)) / S(6);
            }
            break;
        case Act::relu:
            for (std::int64_t i = 0; i < n; ++i) yp[i] = std::max(S(0), xp[i]);
            break;
    }

    return Tensor<S>::from_op(std::move(y), {x}, [x, kind, sig](TensorNode<S>& out) {
        prof::Scope prof_scope_("act.bwd");
        auto& gx = x.grad();
        const S* xp = x.value().ptr();
        const S* gy = out.grad.ptr();
        S* gp = gx.ptr();
        const auto n = out.grad.numel();
        switch (kind) {
            case Act::sigmoid: {
                using EA = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
                using CEA = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
                CEA yv(out.value.ptr(), n);
                EA(gp, n) += CEA(gy, n) * yv * (S(1) - yv);
                break;
            }
            case Act::swish: {
                using EA = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
                using CEA = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
                CEA sv(sig->ptr(), n);
                EA(gp, n) += CEA(gy, n) * sv * (S(1) + CEA(xp, n) * (S(1) - sv));
                break;
            }
            case Act::hardswish:
                for (std::int64_t i = 0; i < n; ++i) {
                    const S v = xp[i];
                    const S d = v <= S(-3) ? S(0) : (v >= S(3) ? S(1) : (S(2) * v + S(3)) / S(6));
                    gp[i] += gy[i] * d;
                }
                break;
            case Act::relu:
                for (std::int64_t i = 0; i < n; ++i)
                    gp[i] += xp[i] > S(0) ? gy[i] : S(0);
                break;
        }
    });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    prof::Scope prof_scope_("add.fwd");
    require(a.shape() == b.shape(), "add needs equal shapes, got " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    Array<S> y = Array<S>::uninit(a.shape());
    EArr(y.ptr(), y.numel()) =
        CEArr(a.value().ptr(), y.numel()) + CEArr(b.value().ptr(), y.numel());
    return Tensor<S>::from_op(std::move(y), {a, b}, [a, b](TensorNode<S>& out) {
        const auto n = out.grad.numel();
        CEArr gy(out.grad.ptr(), n);
        if (a.requires_grad()) EArr(a.grad().ptr(), n) += gy;
        if (b.requires_grad()) EArr(b.grad().ptr(), n) += gy;
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    require(a.shape() == b.shape(), "mul needs equal shapes");
    using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    Array<S> y = Array<S>::uninit(a.shape());
    EArr(y.ptr(), y.numel()) =
        CEArr(a.value().ptr(), y.numel()) * CEArr(b.value().ptr(), y.numel());
    return Tensor<S>::from_op(std::move(y), {a, b}, [a, b](TensorNode<S>& out) {
        const auto n = out.grad.numel();
        CEArr gy(out.grad.ptr(), n);
        if (a.requires_grad())
            EArr(a.grad().ptr(), n) += gy * CEArr(b.value().ptr(), n);
        if (b.requires_grad())
            EArr(b.grad().ptr(), n) += gy * CEArr(a.value().ptr(), n);
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
    Array<S> y = x.value();
    for (auto& v : y.data) v *= factor;
    return Tensor<S>::from_op(std::move(y), {x}, [x, factor](TensorNode<S>& out) {
        S* gx = x.grad().ptr();
        const S* gy = out.grad.ptr();
        for (std::int64_t i = 0; i < out.grad.numel(); ++i) gx[i] += factor * gy[i];
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S total = 0;
    for (const S v : x.value().data) total += v;
    return Tensor<S>::from_op(Array<S>({}, {total}), {x}, [x](TensorNode<S>& out) {
        const S g = out.grad.data[0];
        S* gx = x.grad().ptr();
        for (std::int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
}

// ---------------------------------------------------------------------------
// channel-linear kernels (pointwise conv, fully connected)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tensor<S> channel_linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                         Shape out_shape) {
    prof::Scope prof_scope_("linear.fwd");
    const std::int64_t ci = x.shape().empty() ? 0 : x.shape()[0];
    const std::int64_t p = x.numel() / std::max<std::int64_t>(ci, 1);
    require(w.shape().size() == 2 && w.shape()[1] == ci,
            "weight must be [out_channels, " + std::to_string(ci) + "], got " +
                shape_str(w.shape()));
    const std::int64_t co = w.shape()[0];
    if (b.defined())
        require(b.shape() == Shape{co}, "bias must have one entry per output channel");

    Array<S> y = Array<S>::uninit(std::move(out_shape));
    if (b.defined()) {
        const S* bp = b.value().ptr();
        S* yp = y.ptr();
        for (std::int64_t c = 0; c < co; ++c)
            std::fill(yp + c * p, yp + (c + 1) * p, bp[c]);
    } else {
        std::fill(y.data.begin(), y.data.end(), S(0));
    }
    detail::gemm_acc(y.ptr(), w.value().ptr(), x.value().ptr(), co, ci, p);

    std::vector<Tensor<S>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return Tensor<S>::from_op(std::move(y), std::move(parents),
                              [x, w, b, ci, co, p](TensorNode<S>& out) {
        prof::Scope prof_scope_("linear.bwd");
        const S* gy = out.grad.ptr();
        if (x.requires_grad())
            detail::gemm_at_b_acc(x.grad().ptr(), w.value().ptr(), gy, ci, co, p);
        if (w.requires_grad())
            detail::gemm_a_bt_acc(w.grad().ptr(), gy, x.value().ptr(), co, p, ci);
        if (b.defined() && b.requires_grad()) {
            S* gb = b.grad().ptr();
            using CEA = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
            for (std::int64_t c = 0; c < co; ++c) gb[c] += CEA(gy + c * p, p).sum();
        }
    });
}

}  // namespace detail

/// 1x1 convolution over the channel axis of [C, ...].
template <typename S>
Tensor<S> pointwise_conv(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b = {}) {
    require(x.shape().size() >= 2, "pointwise_conv input needs a channel axis plus data axes");
    Shape out = x.shape();
    out[0] = w.shape().empty() ? 0 : w.shape()[0];
    return detail::channel_linear(x, w, b, std::move(out));
}

/// weight [Q, C] * input [C] (+ bias [Q]); batched form takes [C, N].
template <typename S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b = {}) {
    const auto rank = x.shape().size();
    require(rank == 1 || rank == 2, "fully_connected expects [C] or [C, N]");
    Shape out = x.shape();
    out[0] = w.shape().empty() ? 0 : w.shape()[0];
    return detail::channel_linear(x, w, b, std::move(out));
}

// ---------------------------------------------------------------------------
// temporal convolution (Lx1 kernel along the frame axis)
// ---------------------------------------------------------------------------

namespace detail {

// col[(c*L + l), ((n*To + to)*V + v)] = x[ci0 + c, n, to*stride + l - pad, v]
template <typename S>
void im2col_time(const S* x, S* col, std::int64_t cg, std::int64_t n, std::int64_t t,
                 std::int64_t v, std::int64_t l_len, std::int64_t stride, std::int64_t to_len,
                 std::int64_t ci0, std::int64_t n_total_channels) {
    (void)n_total_channels;
    const std::int64_t pad = (l_len - 1) / 2;
    const std::int64_t p = n * to_len * v;
    parallel_for(cg * l_len, [&](std::int64_t r) {
        const std::int64_t c = r / l_len;
        const std::int64_t l = r % l_len;
        S* dst = col + r * p;
        const S* src_chan = x + (ci0 + c) * (n * t * v);
        for (std::int64_t bi = 0; bi < n; ++bi) {
            for (std::int64_t to = 0; to < to_len; ++to) {
                const std::int64_t ti = to * stride + l - pad;
                if (ti >= 0 && ti < t)
                    std::memcpy(dst, src_chan + (bi * t + ti) * v, sizeof(S) * v);
                else
                    std::fill(dst, dst + v, S(0));
                dst += v;
            }
        }
    });
}

// dx[ci0 + c, n, to*stride + l - pad, v] += dcol[...]
template <typename S>
void col2im_time_acc(S* dx, const S* dcol, std::int64_t cg, std::int64_t n, std::int64_t t,
                     std::int64_t v, std::int64_t l_len, std::int64_t stride,
                     std::int64_t to_len, std::int64_t ci0) {
    const std::int64_t pad = (l_len - 1) / 2;
    const std::int64_t p = n * to_len * v;
    parallel_for(cg, [&](std::int64_t c) {
        S* dst_chan = dx + (ci0 + c) * (n * t * v);
        for (std::int64_t l = 0; l < l_len; ++l) {
            const S* src = dcol + (c * l_len + l) * p;
            for (std::int64_t bi = 0; bi < n; ++bi) {
                for (std::int64_t to = 0; to < to_len; ++to) {
                    const std::int64_t ti = to * stride + l - pad;
                    if (ti >= 0 && ti < t) {
                        S* dst = dst_chan + (bi * t + ti) * v;
                        const S* s = src + (bi * to_len + to) * v;
                        for (std::int64_t j = 0; j < v; ++j) dst[j] += s[j];
                    }
                }
            }
        }
    });
}

}  // namespace detail

/// Convolution with an L x 1 kernel on [C, N, T, V]; frames are zero-padded
/// by (L-1)/2 so T maps to ceil(T / stride) and V is untouched. Weight is
/// [C_out, C_in/groups, L]; groups == C_in with C_out == C_in is depth-wise.
template <typename S>
Tensor<S> temporal_conv(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                        std::int64_t stride, std::int64_t groups) {
    prof::Scope prof_scope_("tconv.fwd");
    require(x.shape().size() == 4, "temporal_conv input must be [C, N, T, V]");
    require(w.shape().size() == 3, "temporal_conv weight must be [C_out, C_in/groups, L]");
    const std::int64_t ci = x.shape()[0], n = x.shape()[1], t = x.shape()[2], v = x.shape()[3];
    const std::int64_t co = w.shape()[0], cig = w.shape()[1], l = w.shape()[2];
    require(l % 2 == 1, "temporal kernel length must be odd");
    require(stride >= 1, "stride must be >= 1");
    require(groups >= 1 && ci % groups == 0 && co % groups == 0,
            "channels must divide evenly into groups");
    require(cig == ci / groups, "weight inner channels disagree with groups");
    if (b.defined()) require(b.shape() == Shape{co}, "bias must be [C_out]");

    const std::int64_t to_len = (t - 1) / stride + 1;
    const std::int64_t p = n * to_len * v;
    Array<S> y = Array<S>::uninit({co, n, to_len, v});
    {
        // Bias (or zero) is the accumulation base for every path.
        S* yp = y.ptr();
        const S* bp = b.defined() ? b.value().ptr() : nullptr;
        for (std::int64_t c = 0; c < co; ++c)
            std::fill(yp + c * p, yp + (c + 1) * p, bp ? bp[c] : S(0));
    }

    const bool depthwise = (groups == ci && cig == 1);
    const bool shifted = !depthwise && groups == 1 && stride == 1;
    const std::int64_t pad = (l - 1) / 2;

    if (shifted) {
        // Full stride-1 conv as L shifted channel mixes; no column buffer.
        const std::int64_t row = n * t * v;
        for (std::int64_t li = 0; li < l; ++li) {
            const std::int64_t shift = li - pad;
            const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
            const std::int64_t t1 = t - std::max<std::int64_t>(0, shift);
            if (t1 <= t0) continue;
            parallel_for(n, [&](std::int64_t bi) {
                detail::gemm_view_acc(y.ptr() + (bi * t + t0) * v, p,
                                      w.value().ptr() + li, ci * l, l,
                                      x.value().ptr() + (bi * t + t0 + shift) * v, row, co, ci,
                                      (t1 - t0) * v);
            });
        }
    } else if (depthwise) {
        const S* xp = x.value().ptr();
        const S* wp = w.value().ptr();
        S* yp = y.ptr();
        const std::int64_t cog = co / groups;  // weights per input channel
        parallel_for(co, [&](std::int64_t c) {
            const std::int64_t cin = c / cog;
            const S* src_chan = xp + cin * (n * t * v);
            S* dst_chan = yp + c * p;
            for (std::int64_t li = 0; li < l; ++li) {
                const S wv = wp[c * l + li];
                if (wv == S(0)) continue;
                for (std::int64_t bi = 0; bi < n; ++bi) {
                    for (std::int64_t to = 0; to < to_len; ++to) {
                        const std::int64_t ti = to * stride + li - pad;
                        if (ti < 0 || ti >= t) continue;
                        S* dst = dst_chan + (bi * to_len + to) * v;
                        const S* s = src_chan + (bi * t + ti) * v;
                        for (std::int64_t j = 0; j < v; ++j) dst[j] += wv * s[j];
                    }
                }
            }
        });
    } else {
        const std::int64_t cog = co / groups;
        std::vector<S> col(static_cast<std::size_t>(cig * l * p));
        for (std::int64_t g = 0; g < groups; ++g) {
            detail::im2col_time(x.value().ptr(), col.data(), cig, n, t, v, l, stride, to_len,
                                g * cig, ci);
            detail::gemm_acc(y.ptr() + g * cog * p, w.value().ptr() + g * cog * cig * l,
                             col.data(), cog, cig * l, p);
        }
    }

    std::vector<Tensor<S>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return Tensor<S>::from_op(
        std::move(y), std::move(parents),
        [x, w, b, stride, groups, depthwise, shifted, n, t, v, l, to_len, p,
         pad](TensorNode<S>& out) {
        prof::Scope prof_scope_("tconv.bwd");
            const std::int64_t ci = x.shape()[0];
            const std::int64_t co = w.shape()[0];
            const std::int64_t cig = ci / groups;
            const std::int64_t cog = co / groups;
            const S* gy = out.grad.ptr();

            if (b.defined() && b.requires_grad()) {
                S* gb = b.grad().ptr();
                using CEA = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
                for (std::int64_t c = 0; c < co; ++c) gb[c] += CEA(gy + c * p, p).sum();
            }

            if (shifted) {
                const std::int64_t row = n * t * v;
                if (w.requires_grad()) {
                    S* gw = w.grad().ptr();
                    parallel_for(l, [&](std::int64_t li) {
                        const std::int64_t shift = li - pad;
                        const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
                        const std::int64_t t1 = t - std::max<std::int64_t>(0, shift);
                        if (t1 <= t0) return;
                        Array<S> wtmp = Array<S>::zeros({co, ci});
                        for (std::int64_t bi = 0; bi < n; ++bi)
                            detail::gemm_view_a_bt_acc(
                                wtmp.ptr(), ci, gy + (bi * t + t0) * v, p,
                                x.value().ptr() + (bi * t + t0 + shift) * v, row, co,
                                (t1 - t0) * v, ci);
                        for (std::int64_t c = 0; c < co; ++c)
                            for (std::int64_t k = 0; k < ci; ++k)
                                gw[(c * ci + k) * l + li] += wtmp.data[static_cast<std::size_t>(c * ci + k)];
                    });
                }
                if (x.requires_grad()) {
                    S* gx = x.grad().ptr();
                    for (std::int64_t li = 0; li < l; ++li) {
                        const std::int64_t shift = li - pad;
                        const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
                        const std::int64_t t1 = t - std::max<std::int64_t>(0, shift);
                        if (t1 <= t0) continue;
                        parallel_for(n, [&](std::int64_t bi) {
                            detail::gemm_view_at_b_acc(gx + (bi * t + t0 + shift) * v, row,
                                                       w.value().ptr() + li, ci * l, l,
                                                       gy + (bi * t + t0) * v, p, ci, co,
                                                       (t1 - t0) * v);
                        });
                    }
                }
            } else if (depthwise) {
                const S* xp = x.value().ptr();
                const S* wp = w.value().ptr();
                if (w.requires_grad()) {
                    S* gw = w.grad().ptr();
                    parallel_for(co, [&](std::int64_t c) {
                        const std::int64_t cin = c / cog;
                        const S* src_chan = xp + cin * (n * t * v);
                        const S* gy_chan = gy + c * p;
                        for (std::int64_t li = 0; li < l; ++li) {
                            S acc = 0;
                            for (std::int64_t bi = 0; bi < n; ++bi) {
                                for (std::int64_t to = 0; to < to_len; ++to) {
                                    const std::int64_t ti = to * stride + li - pad;
                                    if (ti < 0 || ti >= t) continue;
                                    const S* g_row = gy_chan + (bi * to_len + to) * v;
                                    const S* x_row = src_chan + (bi * t + ti) * v;
                                    for (std::int64_t j = 0; j < v; ++j) acc += g_row[j] * x_row[j];
                                }
                            }
                            gw[c * l + li] += acc;
                        }
                    });
                }
                if (x.requires_grad()) {
                    S* gx = x.grad().ptr();
                    // Parallel over input channels: all writers of one dx row
                    // live in the same iteration.
                    parallel_for(ci, [&](std::int64_t cin) {
                        S* gx_chan = gx + cin * (n * t * v);
                        for (std::int64_t k = 0; k < cog; ++k) {
                            const std::int64_t c = cin * cog + k;
                            const S* gy_chan = gy + c * p;
                            for (std::int64_t li = 0; li < l; ++li) {
                                const S wv = wp[c * l + li];
                                if (wv == S(0)) continue;
                                for (std::int64_t bi = 0; bi < n; ++bi) {
                                    for (std::int64_t to = 0; to < to_len; ++to) {
                                        const std::int64_t ti = to * stride + li - pad;
                                        if (ti < 0 || ti >= t) continue;
                                        S* dst = gx_chan + (bi * t + ti) * v;
                                        const S* s = gy_chan + (bi * to_len + to) * v;
                                        for (std::int64_t j = 0; j < v; ++j) dst[j] += wv * s[j];
                                    }
                                }
                            }
                        }
                    });
                }
            } else {
                std::vector<S> col(static_cast<std::size_t>(cig * l * p));
                std::vector<S> dcol;
                if (x.requires_grad()) dcol.resize(col.size());
                for (std::int64_t g = 0; g < groups; ++g) {
                    if (w.requires_grad()) {
                        detail::im2col_time(x.value().ptr(), col.data(), cig, n, t, v, l, stride,
                                            to_len, g * cig, ci);
                        detail::gemm_a_bt_acc(w.grad().ptr() + g * cog * cig * l,
                                              gy + g * cog * p, col.data(), cog, p, cig * l);
                    }
                    if (x.requires_grad()) {
                        std::fill(dcol.begin(), dcol.end(), S(0));
                        detail::gemm_at_b_acc(dcol.data(), w.value().ptr() + g * cog * cig * l,
                                              gy + g * cog * p, cig * l, cog, p);
                        detail::col2im_time_acc(x.grad().ptr(), dcol.data(), cig, n, t, v, l,
                                                stride, to_len, g * cig);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename S>
struct BnStats {
    Array<S> mean;
    Array<S> var;

    static BnStats fresh(std::int64_t channels) {
        return {Array<S>::zeros({channels}), Array<S>::full({channels}, S(1))};
    }
};

/// Per-channel normalization over everything but the leading axis.
/// Training uses batch statistics and folds them into `stats` with the given
/// momentum (new = (1-m)*old + m*batch); eval reads `stats`.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BnStats<S>& stats, Mode mode, double eps = 1e-5, double momentum = 0.1) {
    prof::Scope prof_scope_("bn.fwd");
    require(x.shape().size() >= 1, "batch_norm input needs a channel axis");
    const std::int64_t c = x.shape()[0];
    const std::int64_t p = x.numel() / std::max<std::int64_t>(c, 1);
    require(p >= 1 && x.numel() > 0, "batch_norm got an empty batch");
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
            "gamma/beta must have one entry per channel");
    require(stats.mean.shape == Shape{c} && stats.var.shape == Shape{c},
            "running stats sized for a different channel count");

    auto mean = std::make_shared<std::vector<S>>(static_cast<std::size_t>(c));
    auto invstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(c));

    Array<S> y = Array<S>::uninit(x.shape());
    const S* xp = x.value().ptr();
    const S* gp = gamma.value().ptr();
    const S* bp = beta.value().ptr();
    S* yp = y.ptr();

    using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    if (mode == Mode::train) {
        S* rm = stats.mean.ptr();
        S* rv = stats.var.ptr();
        parallel_for(c, [&](std::int64_t ch) {
            CEArr row(xp + ch * p, p);
            const S m = row.sum() / static_cast<S>(p);
            const S var = (row - m).square().sum() / static_cast<S>(p);
            const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
            (*mean)[ch] = m;
            (*invstd)[ch] = inv;
            const S unbiased = p > 1 ? var * static_cast<S>(p) / static_cast<S>(p - 1) : var;
            rm[ch] = static_cast<S>(1.0 - momentum) * rm[ch] + static_cast<S>(momentum) * m;
            rv[ch] = static_cast<S>(1.0 - momentum) * rv[ch] + static_cast<S>(momentum) * unbiased;
            EArr(yp + ch * p, p) = (row - m) * (gp[ch] * inv) + bp[ch];
        });
    } else {
        const S* rm = stats.mean.ptr();
        const S* rv = stats.var.ptr();
        parallel_for(c, [&](std::int64_t ch) {
            const S m = rm[ch];
            const S inv = S(1) / std::sqrt(rv[ch] + static_cast<S>(eps));
            (*mean)[ch] = m;
            (*invstd)[ch] = inv;
            EArr(yp + ch * p, p) = (CEArr(xp + ch * p, p) - m) * (gp[ch] * inv) + bp[ch];
        });
    }

    return Tensor<S>::from_op(
        std::move(y), {x, gamma, beta},
        [x, gamma, beta, mean, invstd, mode, c, p](TensorNode<S>& out) {
        prof::Scope prof_scope_("bn.bwd");
            const S* gy = out.grad.ptr();
            const S* xp = x.value().ptr();
            const S* gp = gamma.value().ptr();
            S* gx = x.requires_grad() ? x.grad().ptr() : nullptr;
            S* gg = gamma.requires_grad() ? gamma.grad().ptr() : nullptr;
            S* gb = beta.requires_grad() ? beta.grad().ptr() : nullptr;
            using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
            using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
            parallel_for(c, [&](std::int64_t ch) {
                const S m = (*mean)[ch];
                const S inv = (*invstd)[ch];
                CEArr x_row(xp + ch * p, p);
                CEArr g_row(gy + ch * p, p);
                const S sum_g = g_row.sum();
                const S sum_gx = ((x_row - m) * g_row).sum() * inv;
                if (gb) gb[ch] += sum_g;
                if (gg) gg[ch] += sum_gx;
                if (gx) {
                    EArr out_row(gx + ch * p, p);
                    const S g = gp[ch];
                    if (mode == Mode::train) {
                        const S mg = sum_g / static_cast<S>(p);
                        const S mgx = sum_gx / static_cast<S>(p);
                        out_row += ((g_row - mg) - (x_row - m) * (inv * mgx)) * (g * inv);
                    } else {
                        out_row += g_row * (g * inv);
                    }
                }
            });
        });
}

// ---------------------------------------------------------------------------
// reductions and structure
// ---------------------------------------------------------------------------

/// Arithmetic mean over the named axes; the axes are removed from the shape.
template <typename S>
Tensor<S> mean_over_axes(const Tensor<S>& x, std::vector<int> axes) {
    prof::Scope prof_scope_("mean.fwd");
    const auto& shape = x.shape();
    const int rank = static_cast<int>(shape.size());
    std::vector<bool> reduced(rank, false);
    for (int a : axes) {
        require(a >= 0 && a < rank, "axis out of range");
        require(!reduced[a], "repeated axis in mean_over_axes");
        reduced[a] = true;
    }
    Shape out_shape;
    std::int64_t count = 1;
    for (int a = 0; a < rank; ++a) {
        if (reduced[a])
            count *= shape[a];
        else
            out_shape.push_back(shape[a]);
    }

    // Fast paths: a trailing block of axes reduces to row sums; a single
    // interior axis reduces to strided block sums. Anything else falls back
    // to an odometer walk that maps input to output indices without div/mod.
    bool trailing = true;
    for (int a = 0; a < rank; ++a)
        if (reduced[a] != (a >= rank - static_cast<int>(axes.size()))) trailing = false;
    int single_axis = -1;
    if (!trailing && axes.size() == 1) single_axis = axes[0];

    std::vector<std::int64_t> out_stride(rank, 0);
    std::int64_t s = 1;
    for (int a = rank - 1; a >= 0; --a) {
        if (!reduced[a]) {
            out_stride[a] = s;
            s *= shape[a];
        }
    }

    auto walk = [rank, shape = shape, out_stride = std::move(out_stride), trailing, single_axis,
                 count](const S* src, S* dst, bool forward_dir, S factor) {
        using EArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        using CEArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        const std::int64_t n = shape_numel(shape);
        if (trailing) {
            const std::int64_t rows = n / count;
            if (forward_dir) {
                for (std::int64_t r = 0; r < rows; ++r)
                    dst[r] += CEArr(src + r * count, count).sum() * factor;
            } else {
                for (std::int64_t r = 0; r < rows; ++r)
                    EArr(dst + r * count, count) += src[r] * factor;
            }
            return;
        }
        if (single_axis >= 0) {
            std::int64_t block = 1;
            for (int a = single_axis + 1; a < rank; ++a) block *= shape[static_cast<std::size_t>(a)];
            const std::int64_t axis_len = shape[static_cast<std::size_t>(single_axis)];
            const std::int64_t outer = n / (axis_len * block);
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < axis_len; ++i) {
                    const std::int64_t off = (o * axis_len + i) * block;
                    if (forward_dir)
                        EArr(dst + o * block, block) += CEArr(src + off, block) * factor;
                    else
                        EArr(dst + off, block) += CEArr(src + o * block, block) * factor;
                }
            }
            return;
        }
        std::vector<std::int64_t> digit(rank, 0);
        std::int64_t out_idx = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (forward_dir)
                dst[out_idx] += src[i] * factor;
            else
                dst[i] += src[out_idx] * factor;
            for (int a = rank - 1; a >= 0; --a) {
                out_idx += out_stride[a];
                if (++digit[a] < shape[a]) break;
                digit[a] = 0;
                out_idx -= out_stride[a] * shape[a];
            }
        }
    };

    Array<S> y = Array<S>::zeros(out_shape);
    walk(x.value().ptr(), y.ptr(), true, S(1) / static_cast<S>(count));

    return Tensor<S>::from_op(std::move(y), {x}, [x, walk, count](TensorNode<S>& out) {
        prof::Scope prof_scope_("mean.bwd");
        walk(out.grad.ptr(), x.grad().ptr(), false, S(1) / static_cast<S>(count));
    });
}

/// Inverted dropout: train mode zeroes entries with probability p and scales
/// survivors by 1/(1-p); eval mode and p == 0 pass the input through.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Mode mode, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout probability must be in [0, 1)");
    if (mode == Mode::eval || p == 0.0) return x;
    const auto n = x.numel();
    auto mask = std::make_shared<Array<S>>(Array<S>::uninit({n}));
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& m : mask->data) m = rng.uniform() < p ? S(0) : keep_scale;
    Array<S> y = Array<S>::uninit(x.shape());
    S* yp = y.ptr();
    const S* xp = x.value().ptr();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = xp[i] * mask->data[static_cast<std::size_t>(i)];
    return Tensor<S>::from_op(std::move(y), {x}, [x, mask](TensorNode<S>& out) {
        S* gx = x.grad().ptr();
        const S* gy = out.grad.ptr();
        for (std::int64_t i = 0; i < out.grad.numel(); ++i) gx[i] += gy[i] * mask->data[static_cast<std::size_t>(i)];
    });
}

/// Stack along axis 0 (channel concatenation for branch fusion).
template <typename S>
Tensor<S> concat_first(const std::vector<Tensor<S>>& parts) {
    require(!parts.empty(), "concat_first needs at least one input");
    Shape out_shape = parts[0].shape();
    std::int64_t total0 = 0;
    for (const auto& t : parts) {
        require(t.shape().size() == out_shape.size(), "rank mismatch in concat");
        for (std::size_t a = 1; a < out_shape.size(); ++a)
            require(t.shape()[a] == out_shape[a], "non-leading axes must match in concat");
        total0 += t.shape()[0];
    }
    out_shape[0] = total0;
    Array<S> y = Array<S>::uninit(out_shape);
    S* dst = y.ptr();
    for (const auto& t : parts) {
        std::memcpy(dst, t.value().ptr(), sizeof(S) * t.numel());
        dst += t.numel();
    }
    return Tensor<S>::from_op(std::move(y), parts, [parts](TensorNode<S>& out) {
        const S* gy = out.grad.ptr();
        for (const auto& t : parts) {
            if (t.requires_grad()) {
                S* g = t.grad().ptr();
                for (std::int64_t i = 0; i < t.numel(); ++i) g[i] += gy[i];
            }
            gy += t.numel();
        }
    });
}

/// Join two tensors along the trailing axis.
template <typename S>
Tensor<S> concat_last(const Tensor<S>& a, const Tensor<S>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    require(sa.size() == sb.size() && sa.size() >= 1, "concat_last rank mismatch");
    for (std::size_t i = 0; i + 1 < sa.size(); ++i)
        require(sa[i] == sb[i], "leading axes must match in concat_last");
    const std::int64_t la = sa.back(), lb = sb.back();
    Shape out_shape = sa;
    out_shape.back() = la + lb;
    const std::int64_t rows = a.numel() / std::max<std::int64_t>(la, 1);
    Array<S> y = Array<S>::uninit(out_shape);
    const S* pa = a.value().ptr();
    const S* pb = b.value().ptr();
    S* py = y.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
        std::memcpy(py + r * (la + lb), pa + r * la, sizeof(S) * la);
        std::memcpy(py + r * (la + lb) + la, pb + r * lb, sizeof(S) * lb);
    }
    return Tensor<S>::from_op(std::move(y), {a, b}, [a, b, rows, la, lb](TensorNode<S>& out) {
        const S* gy = out.grad.ptr();
        if (a.requires_grad()) {
            S* g = a.grad().ptr();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < la; ++i) g[r * la + i] += gy[r * (la + lb) + i];
        }
        if (b.requires_grad()) {
            S* g = b.grad().ptr();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < lb; ++i) g[r * lb + i] += gy[r * (la + lb) + la + i];
        }
    });
}

/// Contiguous window [start, start+len) of the trailing axis.
template <typename S>
Tensor<S> slice_last(const Tensor<S>& x, std::int64_t start, std::int64_t len) {
    const std::int64_t last = x.shape().back();
    require(start >= 0 && len >= 1 && start + len <= last, "slice window out of range");
    Shape out_shape = x.shape();
    out_shape.back() = len;
    const std::int64_t rows = x.numel() / last;
    Array<S> y = Array<S>::uninit(out_shape);
    const S* px = x.value().ptr();
    S* py = y.ptr();
    for (std::int64_t r = 0; r < rows; ++r)
        std::memcpy(py + r * len, px + r * last + start, sizeof(S) * len);
    return Tensor<S>::from_op(std::move(y), {x}, [x, rows, last, start, len](TensorNode<S>& out) {
        S* g = x.grad().ptr();
        const S* gy = out.grad.ptr();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t i = 0; i < len; ++i) g[r * last + start + i] += gy[r * len + i];
    });
}

/// Contiguous channel block [start, start+len) of axis 0.
template <typename S>
Tensor<S> slice_first(const Tensor<S>& x, std::int64_t start, std::int64_t len) {
    const std::int64_t first = x.shape()[0];
    require(start >= 0 && len >= 1 && start + len <= first, "channel slice out of range");
    Shape out_shape = x.shape();
    out_shape[0] = len;
    const std::int64_t row = x.numel() / first;
    Array<S> y = Array<S>::uninit(out_shape);
    std::memcpy(y.ptr(), x.value().ptr() + start * row, sizeof(S) * static_cast<std::size_t>(len * row));
    return Tensor<S>::from_op(std::move(y), {x}, [x, start, row, len](TensorNode<S>& out) {
        S* g = x.grad().ptr() + start * row;
        const S* gy = out.grad.ptr();
        for (std::int64_t i = 0; i < len * row; ++i) g[i] += gy[i];
    });
}

/// [A, B] -> [B, A]
template <typename S>
Tensor<S> transpose2(const Tensor<S>& x) {
    require(x.shape().size() == 2, "transpose2 expects a matrix");
    const std::int64_t a = x.shape()[0], b = x.shape()[1];
    Array<S> y = Array<S>::uninit({b, a});
    const S* xp = x.value().ptr();
    S* yp = y.ptr();
    for (std::int64_t i = 0; i < a; ++i)
        for (std::int64_t j = 0; j < b; ++j) yp[j * a + i] = xp[i * b + j];
    return Tensor<S>::from_op(std::move(y), {x}, [x, a, b](TensorNode<S>& out) {
        S* g = x.grad().ptr();
        const S* gy = out.grad.ptr();
        for (std::int64_t i = 0; i < a; ++i)
            for (std::int64_t j = 0; j < b; ++j) g[i * b + j] += gy[j * a + i];
    });
}

/// Broadcast multiply by a per-(axis, batch) score: gate is [D, N] where D is
/// the size of the attended axis (0 = channel, 2 = frame, 3 = joint).
template <typename S>
Tensor<S> mul_axis_gate(const Tensor<S>& x, const Tensor<S>& gate, int axis) {
    const auto& s = x.shape();
    require(s.size() == 4, "mul_axis_gate input must be [C, N, T, V]");
    require(axis == 0 || axis == 2 || axis == 3, "gated axis must be 0, 2 or 3");
    require(gate.shape() == Shape({s[static_cast<std::size_t>(axis)], s[1]}),
            "gate must be [axis_size, N]");
    const std::int64_t c = s[0], n = s[1], t = s[2], v = s[3];
    Array<S> y = Array<S>::uninit(s);
    const S* xq = x.value().ptr();
    const S* gp = gate.value().ptr();
    auto gate_at = [&](std::int64_t ci, std::int64_t ni, std::int64_t ti, std::int64_t vi) {
        const std::int64_t d = axis == 0 ? ci : (axis == 2 ? ti : vi);
        return gp[d * n + ni];
    };
    S* yp = y.ptr();
    std::int64_t i = 0;
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t ni = 0; ni < n; ++ni)
            for (std::int64_t ti = 0; ti < t; ++ti)
                for (std::int64_t vi = 0; vi < v; ++vi, ++i)
                    yp[i] = xq[i] * gate_at(ci, ni, ti, vi);
    return Tensor<S>::from_op(std::move(y), {x, gate},
                              [x, gate, axis, c, n, t, v](TensorNode<S>& out) {
        const S* gy = out.grad.ptr();
        const S* gp = gate.value().ptr();
        const S* xp = x.value().ptr();
        S* gx = x.requires_grad() ? x.grad().ptr() : nullptr;
        S* gg = gate.requires_grad() ? gate.grad().ptr() : nullptr;
        std::int64_t i = 0;
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t ni = 0; ni < n; ++ni)
                for (std::int64_t ti = 0; ti < t; ++ti)
                    for (std::int64_t vi = 0; vi < v; ++vi, ++i) {
                        const std::int64_t d = axis == 0 ? ci : (axis == 2 ? ti : vi);
                        if (gx) gx[i] += gy[i] * gp[d * n + ni];
                        if (gg) gg[d * n + ni] += gy[i] * xp[i];
                    }
    });
}

/// y[c,n,t,v] = x[c,n,t,v] * gate[c,n,t]
template <typename S>
Tensor<S> mul_time_gate(const Tensor<S>& x, const Tensor<S>& gate) {
    const auto& s = x.shape();
    require(s.size() == 4, "mul_time_gate input must be [C, N, T, V]");
    require(gate.shape() == Shape({s[0], s[1], s[2]}), "gate must be [C, N, T]");
    const std::int64_t rows = s[0] * s[1] * s[2], v = s[3];
    Array<S> y = Array<S>::uninit(s);
    S* yp = y.ptr();
    const S* xp = x.value().ptr();
    const S* gp = gate.value().ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
        const S g = gp[r];
        for (std::int64_t j = 0; j < v; ++j) yp[r * v + j] = xp[r * v + j] * g;
    }
    return Tensor<S>::from_op(std::move(y), {x, gate}, [x, gate, rows, v](TensorNode<S>& out) {
        const S* gy = out.grad.ptr();
        const S* gp = gate.value().ptr();
        const S* xp = x.value().ptr();
        if (x.requires_grad()) {
            S* gx = x.grad().ptr();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S g = gp[r];
                for (std::int64_t j = 0; j < v; ++j) gx[r * v + j] += gy[r * v + j] * g;
            }
        }
        if (gate.requires_grad()) {
            S* gg = gate.grad().ptr();
            for (std::int64_t r = 0; r < rows; ++r) {
                S acc = 0;
                for (std::int64_t j = 0; j < v; ++j) acc += gy[r * v + j] * xp[r * v + j];
                gg[r] += acc;
            }
        }
    });
}

/// y[c,n,t,v] = x[c,n,t,v] * gate[c,n,v]
template <typename S>
Tensor<S> mul_joint_gate(const Tensor<S>& x, const Tensor<S>& gate) {
    const auto& s = x.shape();
    require(s.size() == 4, "mul_joint_gate input must be [C, N, T, V]");
    require(gate.shape() == Shape({s[0], s[1], s[3]}), "gate must be [C, N, V]");
    const std::int64_t cn = s[0] * s[1], t = s[2], v = s[3];
    Array<S> y = Array<S>::uninit(s);
    S* yp = y.ptr();
    const S* xp = x.value().ptr();
    const S* gp = gate.value().ptr();
    for (std::int64_t r = 0; r < cn; ++r) {
        const S* g_row = gp + r * v;
        for (std::int64_t ti = 0; ti < t; ++ti) {
            const std::int64_t base = (r * t + ti) * v;
            for (std::int64_t j = 0; j < v; ++j) yp[base + j] = xp[base + j] * g_row[j];
        }
    }
    return Tensor<S>::from_op(std::move(y), {x, gate}, [x, gate, cn, t, v](TensorNode<S>& out) {
        const S* gy = out.grad.ptr();
        const S* gp = gate.value().ptr();
        const S* xp = x.value().ptr();
        if (x.requires_grad()) {
            S* gx = x.grad().ptr();
            for (std::int64_t r = 0; r < cn; ++r) {
                const S* g_row = gp + r * v;
                for (std::int64_t ti = 0; ti < t; ++ti) {
                    const std::int64_t base = (r * t + ti) * v;
                    for (std::int64_t j = 0; j < v; ++j) gx[base + j] += gy[base + j] * g_row[j];
                }
            }
        }
        if (gate.requires_grad()) {
            S* gg = gate.grad().ptr();
            for (std::int64_t r = 0; r < cn; ++r) {
                for (std::int64_t ti = 0; ti < t; ++ti) {
                    const std::int64_t base = (r * t + ti) * v;
                    for (std::int64_t j = 0; j < v; ++j)
                        gg[r * v + j] += gy[base + j] * xp[base + j];
                }
            }
        }
    });
}

/// y[(c,n,t), w] = sum_v x[(c,n,t), v] * (base ⊙ edge)[v, w]
///
/// `base` is a fixed normalized adjacency partition; `edge` is the learnable
/// per-edge importance mask.
template <typename S>
Tensor<S> adjacency_mix(const Tensor<S>& x, const Tensor<S>& edge, const Array<S>& base) {
    prof::Scope prof_scope_("adj.fwd");
    const auto& s = x.shape();
    require(s.size() == 4, "adjacency_mix input must be [C, N, T, V]");
    const std::int64_t v = s[3];
    require(edge.shape() == Shape({v, v}), "edge mask must be [V, V]");
    require(base.shape == Shape({v, v}), "adjacency must be [V, V]");
    const std::int64_t rows = s[0] * s[1] * s[2];

    Array<S> mixed = base;  // base ⊙ edge
    {
        const S* ep = edge.value().ptr();
        S* mp = mixed.ptr();
        for (std::int64_t i = 0; i < v * v; ++i) mp[i] *= ep[i];
    }
    Array<S> y = Array<S>::zeros(s);
    detail::gemm_acc(y.ptr(), x.value().ptr(), mixed.ptr(), rows, v, v);

    auto mixed_keep = std::make_shared<Array<S>>(std::move(mixed));
    auto base_keep = std::make_shared<Array<S>>(base);
    return Tensor<S>::from_op(std::move(y), {x, edge},
                              [x, edge, mixed_keep, base_keep, rows, v](TensorNode<S>& out) {
        prof::Scope prof_scope_("adj.bwd");
        const S* gy = out.grad.ptr();
        if (x.requires_grad())
            detail::gemm_a_bt_acc(x.grad().ptr(), gy, mixed_keep->ptr(), rows, v, v);
        if (edge.requires_grad()) {
            Array<S> g = Array<S>::zeros({v, v});
            detail::gemm_at_b_acc(g.ptr(), x.value().ptr(), gy, v, rows, v);
            S* ge = edge.grad().ptr();
            const S* bp = base_keep->ptr();
            for (std::int64_t i = 0; i < v * v; ++i) ge[i] += g.data[i] * bp[i];
        }
    });
}

/// Fused distance-partition combine for the spatial graph convolution:
/// h carries P blocks of c_out channels and the result is
///   y[c,n,t,w] = sum_d sum_v h[d*c_out + c, n, t, v] * (base_d ⊙ edge_d)[v, w]
template <typename S>
Tensor<S> sgc_combine(const Tensor<S>& h, const std::vector<Tensor<S>>& edges,
                      const std::vector<Array<S>>& bases, std::int64_t c_out) {
    prof::Scope prof_scope_("sgc.fwd");
    const auto& s = h.shape();
    require(s.size() == 4, "sgc_combine input must be [(P*C), N, T, V]");
    const std::int64_t parts = static_cast<std::int64_t>(edges.size());
    require(parts >= 1 && parts == static_cast<std::int64_t>(bases.size()),
            "one edge mask per adjacency partition required");
    require(s[0] == parts * c_out, "channel blocks disagree with the partition count");
    const std::int64_t v = s[3];
    const std::int64_t rows = c_out * s[1] * s[2];

    auto mixed = std::make_shared<std::vector<Array<S>>>();
    for (std::int64_t d = 0; d < parts; ++d) {
        require(bases[static_cast<std::size_t>(d)].shape == Shape({v, v}) &&
                    edges[static_cast<std::size_t>(d)].shape() == Shape({v, v}),
                "adjacency and edge masks must be [V, V]");
        Array<S> m = bases[static_cast<std::size_t>(d)];
        const S* ep = edges[static_cast<std::size_t>(d)].value().ptr();
        for (std::int64_t i = 0; i < v * v; ++i) m.data[static_cast<std::size_t>(i)] *= ep[i];
        mixed->push_back(std::move(m));
    }

    Array<S> y = Array<S>::zeros({c_out, s[1], s[2], v});
    for (std::int64_t d = 0; d < parts; ++d)
        detail::gemm_acc(y.ptr(), h.value().ptr() + d * rows * v,
                         (*mixed)[static_cast<std::size_t>(d)].ptr(), rows, v, v);

    auto bases_keep = std::make_shared<std::vector<Array<S>>>(bases);
    std::vector<Tensor<S>> parents{h};
    for (const auto& e : edges) parents.push_back(e);
    return Tensor<S>::from_op(
        std::move(y), std::move(parents),
        [h, edges, mixed, bases_keep, parts, rows, v](TensorNode<S>& out) {
            prof::Scope prof_scope_("sgc.bwd");
            const S* gy = out.grad.ptr();
            if (h.requires_grad()) {
                S* gh = h.grad().ptr();
                for (std::int64_t d = 0; d < parts; ++d)
                    detail::gemm_a_bt_acc(gh + d * rows * v, gy,
                                          (*mixed)[static_cast<std::size_t>(d)].ptr(), rows, v,
                                          v);
            }
            for (std::int64_t d = 0; d < parts; ++d) {
                const auto& e = edges[static_cast<std::size_t>(d)];
                if (!e.requires_grad()) continue;
                Array<S> g = Array<S>::zeros({v, v});
                detail::gemm_at_b_acc(g.ptr(), h.value().ptr() + d * rows * v, gy, v, rows, v);
                S* ge = e.grad().ptr();
                const S* bp = (*bases_keep)[static_cast<std::size_t>(d)].ptr();
                for (std::int64_t i = 0; i < v * v; ++i)
                    ge[i] += g.data[static_cast<std::size_t>(i)] * bp[i];
            }
        });
}

/// Mix-first spatial graph convolution for layers that widen the channels:
/// aggregates each partition at C_in, then applies the per-partition blocks
/// of the combined weight. Mathematically identical to conv-then-aggregate.
///   y = sum_d W_d * (x * (base_d ⊙ edge_d)) + bias
template <typename S>
Tensor<S> sgc_premix(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                     const std::vector<Tensor<S>>& edges, const std::vector<Array<S>>& bases,
                     std::int64_t c_out) {
    prof::Scope prof_scope_("sgc.fwd");
    const auto& s = x.shape();
    require(s.size() == 4, "sgc_premix input must be [C, N, T, V]");
    const std::int64_t parts = static_cast<std::int64_t>(edges.size());
    require(parts >= 1 && parts == static_cast<std::int64_t>(bases.size()),
            "one edge mask per adjacency partition required");
    const std::int64_t ci = s[0], v = s[3];
    require(w.shape() == Shape({parts * c_out, ci}),
            "combined weight must be [(P*C_out), C_in]");
    if (b.defined()) require(b.shape() == Shape({parts * c_out}), "bias must be [(P*C_out)]");
    const std::int64_t rows = ci * s[1] * s[2];
    const std::int64_t cols = s[1] * s[2] * v;

    auto mixed = std::make_shared<std::vector<Array<S>>>();
    auto premixed = std::make_shared<std::vector<Array<S>>>();
    for (std::int64_t d = 0; d < parts; ++d) {
        Array<S> m = bases[static_cast<std::size_t>(d)];
        const S* ep = edges[static_cast<std::size_t>(d)].value().ptr();
        for (std::int64_t i = 0; i < v * v; ++i) m.data[static_cast<std::size_t>(i)] *= ep[i];
        Array<S> pm = Array<S>::zeros(s);
        detail::gemm_acc(pm.ptr(), x.value().ptr(), m.ptr(), rows, v, v);
        mixed->push_back(std::move(m));
        premixed->push_back(std::move(pm));
    }

    Array<S> y = Array<S>::uninit({c_out, s[1], s[2], v});
    {
        S* yp = y.ptr();
        const S* bp = b.defined() ? b.value().ptr() : nullptr;
        for (std::int64_t c = 0; c < c_out; ++c) {
            S base = S(0);
            if (bp)
                for (std::int64_t d = 0; d < parts; ++d) base += bp[d * c_out + c];
            std::fill(yp + c * cols, yp + (c + 1) * cols, base);
        }
    }
    for (std::int64_t d = 0; d < parts; ++d)
        detail::gemm_acc(y.ptr(), w.value().ptr() + d * c_out * ci,
                         (*premixed)[static_cast<std::size_t>(d)].ptr(), c_out, ci, cols);

    auto bases_keep = std::make_shared<std::vector<Array<S>>>(bases);
    std::vector<Tensor<S>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    for (const auto& e : edges) parents.push_back(e);
    return Tensor<S>::from_op(
        std::move(y), std::move(parents),
        [x, w, b, edges, mixed, premixed, bases_keep, parts, ci, v, rows, cols,
         c_out](TensorNode<S>& out) {
            prof::Scope prof_scope_("sgc.bwd");
            const S* gy = out.grad.ptr();
            if (b.defined() && b.requires_grad()) {
                S* gb = b.grad().ptr();
                using CEA = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
                for (std::int64_t c = 0; c < c_out; ++c) {
                    const S g = CEA(gy + c * cols, cols).sum();
                    for (std::int64_t d = 0; d < parts; ++d) gb[d * c_out + c] += g;
                }
            }
            Array<S> dm = Array<S>::uninit({ci, cols / v, v});
            for (std::int64_t d = 0; d < parts; ++d) {
                if (w.requires_grad())
                    detail::gemm_a_bt_acc(w.grad().ptr() + d * c_out * ci, gy,
                                          (*premixed)[static_cast<std::size_t>(d)].ptr(), c_out,
                                          cols, ci);
                const auto& e = edges[static_cast<std::size_t>(d)];
                if (!x.requires_grad() && !e.requires_grad()) continue;
                std::fill(dm.data.begin(), dm.data.end(), S(0));
                detail::gemm_at_b_acc(dm.ptr(), w.value().ptr() + d * c_out * ci, gy, ci, c_out,
                                      cols);
                if (x.requires_grad())
                    detail::gemm_a_bt_acc(x.grad().ptr(), dm.ptr(),
                                          (*mixed)[static_cast<std::size_t>(d)].ptr(), rows, v,
                                          v);
                if (e.requires_grad()) {
                    Array<S> g = Array<S>::zeros({v, v});
                    detail::gemm_at_b_acc(g.ptr(), x.value().ptr(), dm.ptr(), v, rows, v);
                    S* ge = e.grad().ptr();
                    const S* bp = (*bases_keep)[static_cast<std::size_t>(d)].ptr();
                    for (std::int64_t i = 0; i < v * v; ++i)
                        ge[i] += g.data[static_cast<std::size_t>(i)] * bp[i];
                }
            }
        });
}

/// Column-group means of [Q, N]: each group (start, len) averages a run of
/// columns. Used to fold per-body logits into per-sequence logits.
template <typename S>
Tensor<S> group_mean_cols(const Tensor<S>& x,
                          const std::vector<std::pair<std::int64_t, std::int64_t>>& groups) {
    require(x.shape().size() == 2, "group_mean_cols input must be [Q, N]");
    const std::int64_t q = x.shape()[0], n = x.shape()[1];
    const std::int64_t g_count = static_cast<std::int64_t>(groups.size());
    for (const auto& [start, len] : groups)
        require(start >= 0 && len >= 1 && start + len <= n, "column group out of range");
    Array<S> y = Array<S>::zeros({q, g_count});
    const S* xp = x.value().ptr();
    S* yp = y.ptr();
    for (std::int64_t r = 0; r < q; ++r) {
        for (std::int64_t gi = 0; gi < g_count; ++gi) {
            const auto [start, len] = groups[gi];
            S acc = 0;
            for (std::int64_t i = 0; i < len; ++i) acc += xp[r * n + start + i];
            yp[r * g_count + gi] = acc / static_cast<S>(len);
        }
    }
    return Tensor<S>::from_op(std::move(y), {x}, [x, groups, q, n, g_count](TensorNode<S>& out) {
        S* gx = x.grad().ptr();
        const S* gy = out.grad.ptr();
        for (std::int64_t r = 0; r < q; ++r) {
            for (std::int64_t gi = 0; gi < g_count; ++gi) {
                const auto [start, len] = groups[gi];
                const S share = gy[r * g_count + gi] / static_cast<S>(len);
                for (std::int64_t i = 0; i < len; ++i) gx[r * n + start + i] += share;
            }
        }
    });
}

/// Mean softmax cross-entropy over the columns of [Q, N] (or a single [Q]
/// vector) against integer class targets.
template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits, const std::vector<std::int64_t>& targets) {
    const auto rank = logits.shape().size();
    require(rank == 1 || rank == 2, "cross_entropy expects [Q] or [Q, N]");
    const std::int64_t q = logits.shape()[0];
    const std::int64_t n = rank == 1 ? 1 : logits.shape()[1];
    require(static_cast<std::int64_t>(targets.size()) == n, "one target per column required");
    for (auto t : targets)
        require(t >= 0 && t < q, "target class " + std::to_string(t) + " out of range");

    auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(q * n));
    const S* zp = logits.value().ptr();
    S total = 0;
    for (std::int64_t col = 0; col < n; ++col) {
        S zmax = zp[col];
        for (std::int64_t r = 1; r < q; ++r) zmax = std::max(zmax, zp[r * n + col]);
        S denom = 0;
        for (std::int64_t r = 0; r < q; ++r) {
            const S e = std::exp(zp[r * n + col] - zmax);
            (*probs)[static_cast<std::size_t>(r * n + col)] = e;
            denom += e;
        }
        for (std::int64_t r = 0; r < q; ++r)
            (*probs)[static_cast<std::size_t>(r * n + col)] /= denom;
        total -= std::log((*probs)[static_cast<std::size_t>(targets[col] * n + col)]);
    }
    total /= static_cast<S>(n);

    return Tensor<S>::from_op(Array<S>({}, {total}), {logits},
                              [logits, probs, targets, q, n](TensorNode<S>& out) {
        const S g = out.grad.data[0] / static_cast<S>(n);
        S* gz = logits.grad().ptr();
        for (std::int64_t col = 0; col < n; ++col) {
            for (std::int64_t r = 0; r < q; ++r) {
                S p = (*probs)[static_cast<std::size_t>(r * n + col)];
                if (r == targets[col]) p -= S(1);
                gz[r * n + col] += g * p;
            }
        }
    });
}

}  // namespace effgcn

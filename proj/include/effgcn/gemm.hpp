#pragma once

// Dense kernels behind the tensor primitives. Eigen does the heavy lifting;
// parallel splits only ever partition output columns, so every output element
// is produced by exactly one sequential dot product regardless of the thread
// budget.

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <cstdint>

#include "effgcn/threads.hpp"

namespace effgcn::detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Map = Eigen::Map<MatRM<S>>;
template <typename S>
using CMap = Eigen::Map<const MatRM<S>>;

// Parallel column panels are only worth it for large products.
inline bool split_worthwhile(std::int64_t m, std::int64_t k, std::int64_t n) {
    return thread_budget() > 1 && m * k * n >= (1 << 18) && n >= 2 * 64;
}

/// C(MxN) += A(MxK) * B(KxN)
template <typename S>
void gemm_acc(S* c, const S* a, const S* b, std::int64_t m, std::int64_t k, std::int64_t n) {
    CMap<S> ma(a, m, k);
    if (split_worthwhile(m, k, n)) {
        const int threads = thread_budget();
        const std::int64_t panel = (n + threads - 1) / threads;
        parallel_for(threads, [&](std::int64_t t) {
            const std::int64_t j0 = t * panel;
            const std::int64_t w = std::min(panel, n - j0);
            if (w <= 0) return;
            Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c + j0, m, w,
                                                             Eigen::OuterStride<>(n));
            Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> mb(b + j0, k, w,
                                                                   Eigen::OuterStride<>(n));
            mc.noalias() += ma * mb;
        });
        return;
    }
    Map<S> mc(c, m, n);
    CMap<S> mb(b, k, n);
    mc.noalias() += ma * mb;
}

/// C(MxN) += A^T * B where A is stored (KxM)
template <typename S>
void gemm_at_b_acc(S* c, const S* a, const S* b, std::int64_t m, std::int64_t k, std::int64_t n) {
    CMap<S> ma(a, k, m);
    if (split_worthwhile(m, k, n)) {
        const int threads = thread_budget();
        const std::int64_t panel = (n + threads - 1) / threads;
        parallel_for(threads, [&](std::int64_t t) {
            const std::int64_t j0 = t * panel;
            const std::int64_t w = std::min(panel, n - j0);
            if (w <= 0) return;
            Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c + j0, m, w,
                                                             Eigen::OuterStride<>(n));
            Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> mb(b + j0, k, w,
                                                                   Eigen::OuterStride<>(n));
            mc.noalias() += ma.transpose() * mb;
        });
        return;
    }
    Map<S> mc(c, m, n);
    CMap<S> mb(b, k, n);
    mc.noalias() += ma.transpose() * mb;
}

/// C(MxN, leading dim ldc) += A(MxK, leading dim lda, element stride sa) *
/// B(KxN, leading dim ldb). Covers shifted-window convolutions where the
/// operands are sub-blocks of larger tensors.
template <typename S>
void gemm_view_acc(S* c, std::int64_t ldc, const S* a, std::int64_t lda, std::int64_t sa,
                   const S* b, std::int64_t ldb, std::int64_t m, std::int64_t k,
                   std::int64_t n) {
    using Stride2 = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::Map<const MatRM<S>, 0, Stride2> ma(a, m, k, Stride2(lda, sa));
    Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c, m, n, Eigen::OuterStride<>(ldc));
    Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> mb(b, k, n, Eigen::OuterStride<>(ldb));
    mc.noalias() += ma * mb;
}

/// C(MxN, ldc) += A^T * B where A is stored (KxM, lda, element stride sa).
template <typename S>
void gemm_view_at_b_acc(S* c, std::int64_t ldc, const S* a, std::int64_t lda, std::int64_t sa,
                        const S* b, std::int64_t ldb, std::int64_t m, std::int64_t k,
                        std::int64_t n) {
    using Stride2 = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::Map<const MatRM<S>, 0, Stride2> ma(a, k, m, Stride2(lda, sa));
    Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c, m, n, Eigen::OuterStride<>(ldc));
    Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> mb(b, k, n, Eigen::OuterStride<>(ldb));
    mc.noalias() += ma.transpose() * mb;
}

/// C(MxN, dense) += A(MxK, ldc...lda) * B^T where B is stored (NxK, ldb).
template <typename S>
void gemm_view_a_bt_acc(S* c, std::int64_t ldc, const S* a, std::int64_t lda, const S* b,
                        std::int64_t ldb, std::int64_t m, std::int64_t k, std::int64_t n) {
    Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c, m, n, Eigen::OuterStride<>(ldc));
    Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> ma(a, m, k, Eigen::OuterStride<>(lda));
    Eigen::Map<const MatRM<S>, 0, Eigen::OuterStride<>> mb(b, n, k, Eigen::OuterStride<>(ldb));
    mc.noalias() += ma * mb.transpose();
}

/// C(MxN) += A(MxK) * B^T where B is stored (NxK)
template <typename S>
void gemm_a_bt_acc(S* c, const S* a, const S* b, std::int64_t m, std::int64_t k, std::int64_t n) {
    CMap<S> ma(a, m, k);
    CMap<S> mb(b, n, k);
    if (split_worthwhile(m, k, n)) {
        const int threads = thread_budget();
        const std::int64_t panel = (n + threads - 1) / threads;
        parallel_for(threads, [&](std::int64_t t) {
            const std::int64_t j0 = t * panel;
            const std::int64_t w = std::min(panel, n - j0);
            if (w <= 0) return;
            Eigen::Map<MatRM<S>, 0, Eigen::OuterStride<>> mc(c + j0, m, w,
                                                             Eigen::OuterStride<>(n));
            mc.noalias() += ma * mb.middleRows(j0, w).transpose();
        });
        return;
    }
    Map<S> mc(c, m, n);
    mc.noalias() += ma * mb.transpose();
}

}  // namespace effgcn::detail

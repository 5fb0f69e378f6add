// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable matrix operations on tape Vars. Shapes are (rows, cols);
// sequences are stored one position per row.

#pragma once

#include "mcle/ad/tape.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcle::ad {

template <typename Real> Var<Real> matmul(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> transpose(const Var<Real>& a);
template <typename Real> Var<Real> add(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> sub(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> hadamard(const Var<Real>& a, const Var<Real>& b);
template <typename Real> Var<Real> scale(const Var<Real>& a, Real factor);
// a / s for a 1x1 Var s.
template <typename Real> Var<Real> div_scalar(const Var<Real>& a, const Var<Real>& s);
// Broadcast a 1 x cols row over every row of a.
template <typename Real> Var<Real> add_row(const Var<Real>& a, const Var<Real>& row);
template <typename Real> Var<Real> mul_row(const Var<Real>& a, const Var<Real>& row);

template <typename Real> Var<Real> relu(const Var<Real>& a);
// tanh approximation
template <typename Real> Var<Real> gelu(const Var<Real>& a);
template <typename Real> Var<Real> exp(const Var<Real>& a);
template <typename Real> Var<Real> log(const Var<Real>& a);

// Row-wise RMS normalisation, x / sqrt(mean(x^2) + eps), times a learned
// 1 x cols gain.
template <typename Real>
Var<Real> rms_norm_rows(const Var<Real>& x, const Var<Real>& gain, Real eps = Real(1e-5));

// Row-wise softmax. `allowed` is row-major rows*cols; zero entries get
// probability exactly 0. Empty means everything is allowed. Every row must
// allow at least one column.
template <typename Real>
Var<Real> softmax_rows(const Var<Real>& x, std::span<const std::uint8_t> allowed = {});
template <typename Real> Var<Real> log_softmax_rows(const Var<Real>& x);

template <typename Real> Var<Real> concat_rows(const std::vector<Var<Real>>& parts);
template <typename Real> Var<Real> concat_cols(const std::vector<Var<Real>>& parts);
template <typename Real> Var<Real> slice_rows(const Var<Real>& a, Eigen::Index start, Eigen::Index count);
template <typename Real> Var<Real> slice_cols(const Var<Real>& a, Eigen::Index start, Eigen::Index count);
// Rows of `table` at `ids`, in order (embedding lookup).
template <typename Real> Var<Real> gather_rows(const Var<Real>& table, std::span<const int> ids);

// Entries a(rows[k], cols[k]) as a k x 1 column.
template <typename Real>
Var<Real> pick(const Var<Real>& a, std::span<const Eigen::Index> rows, std::span<const Eigen::Index> cols);
template <typename Real> Var<Real> sum(const Var<Real>& a);
// 1 x cols column means.
template <typename Real> Var<Real> mean_rows(const Var<Real>& a);

// Copy of a's value with no gradient path back to a.
template <typename Real> Var<Real> detach(const Var<Real>& a);

template <typename Real>
inline Var<Real> concat_rows(std::initializer_list<Var<Real>> parts) {
    return concat_rows<Real>(std::vector<Var<Real>>(parts));
}
template <typename Real>
inline Var<Real> concat_cols(std::initializer_list<Var<Real>> parts) {
    return concat_cols<Real>(std::vector<Var<Real>>(parts));
}

} // namespace mcle::ad

// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/ad/ops.hpp"

#include "mcle/common/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mcle::ad {
namespace {

void require(bool cond, const char* what) {
    if (!cond) {
        throw InvalidArgument(std::string("ad: ") + what);
    }
}

template <typename Real>
void require_same_shape(const Var<Real>& a, const Var<Real>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidArgument(std::string("ad: shape mismatch in ") + op + ": (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + ") vs (" + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + ")");
    }
}

} // namespace

template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
    require(a.cols() == b.rows(), "matmul inner dimensions differ");
    Matrix<Real> out = a.value() * b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            t.accumulate(ia, g * t.value(ib).transpose());
        }
        if (t.requires_grad(ib)) {
            t.accumulate(ib, t.value(ia).transpose() * g);
        }
    });
}

template <typename Real>
Var<Real> transpose(const Var<Real>& a) {
    Matrix<Real> out = a.value().transpose();
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self).transpose());
    });
}

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
    require_same_shape(a, b, "add");
    Matrix<Real> out = a.value() + b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, t.grad(self));
    });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
    require_same_shape(a, b, "sub");
    Matrix<Real> out = a.value() - b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, -t.grad(self));
    });
}

template <typename Real>
Var<Real> hadamard(const Var<Real>& a, const Var<Real>& b) {
    require_same_shape(a, b, "hadamard");
    Matrix<Real> out = a.value().cwiseProduct(b.value());
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        }
        if (t.requires_grad(ib)) {
            t.accumulate(ib, g.cwiseProduct(t.value(ia)));
        }
    });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor) {
    Matrix<Real> out = a.value() * factor;
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia, factor](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self) * factor);
    });
}

template <typename Real>
Var<Real> div_scalar(const Var<Real>& a, const Var<Real>& s) {
    require(s.rows() == 1 && s.cols() == 1, "div_scalar needs a 1x1 divisor");
    const Real denom = s.scalar();
    Matrix<Real> out = a.value() / denom;
    const int ia = a.id();
    const int is = s.id();
    return a.tape()->push(std::move(out), {a, s}, [ia, is](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        const Real d = t.value(is)(0, 0);
        if (t.requires_grad(ia)) {
            t.accumulate(ia, g / d);
        }
        if (t.requires_grad(is)) {
            // d(a/s)/ds = -a/s^2
            Matrix<Real> ds(1, 1);
            ds(0, 0) = -(g.cwiseProduct(t.value(ia))).sum() / (d * d);
            t.accumulate(is, ds);
        }
    });
}

template <typename Real>
Var<Real> add_row(const Var<Real>& a, const Var<Real>& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row needs a 1 x cols row");
    Matrix<Real> out = a.value().rowwise() + row.value().row(0);
    const int ia = a.id();
    const int ir = row.id();
    return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        t.accumulate(ia, g);
        if (t.requires_grad(ir)) {
            t.accumulate(ir, g.colwise().sum());
        }
    });
}

template <typename Real>
Var<Real> mul_row(const Var<Real>& a, const Var<Real>& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "mul_row needs a 1 x cols row");
    Matrix<Real> out = a.value().array().rowwise() * row.value().row(0).array();
    const int ia = a.id();
    const int ir = row.id();
    return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            Matrix<Real> da = g.array().rowwise() * t.value(ir).row(0).array();
            t.accumulate(ia, da);
        }
        if (t.requires_grad(ir)) {
            t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
        }
    });
}

template <typename Real>
Var<Real> relu(const Var<Real>& a) {
    Matrix<Real> out = a.value().cwiseMax(Real(0));
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, int self) {
        Matrix<Real> d = (t.value(ia).array() > Real(0)).template cast<Real>() * t.grad(self).array();
        t.accumulate(ia, d);
    });
}

template <typename Real>
Var<Real> gelu(const Var<Real>& a) {
    const Real c = static_cast<Real>(std::sqrt(2.0 / std::numbers::pi));
    const Real k = Real(0.044715);
    Matrix<Real> out = a.value().unaryExpr([c, k](Real x) {
        return Real(0.5) * x * (Real(1) + std::tanh(c * (x + k * x * x * x)));
    });
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia, c, k](Tape<Real>& t, int self) {
        Matrix<Real> d = t.value(ia).unaryExpr([c, k](Real x) {
            const Real inner = c * (x + k * x * x * x);
            const Real th = std::tanh(inner);
            const Real dinner = c * (Real(1) + Real(3) * k * x * x);
            return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * dinner;
        });
        t.accumulate(ia, d.cwiseProduct(t.grad(self)));
    });
}

template <typename Real>
Var<Real> exp(const Var<Real>& a) {
    Matrix<Real> out = a.value().array().exp();
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
    });
}

template <typename Real>
Var<Real> log(const Var<Real>& a) {
    Matrix<Real> out = a.value().array().log();
    const int ia = a.id();
    return a.tape()->push(std::move(out), {a}, [ia](Tape<Real>& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
    });
}

template <typename Real>
Var<Real> rms_norm_rows(const Var<Real>& x, const Var<Real>& gain, Real eps) {
    const auto cols = x.cols();
    require(gain.rows() == 1 && gain.cols() == cols, "rms_norm gain shape");
    const auto& xv = x.value();
    Matrix<Real> xhat(xv.rows(), cols);
    Matrix<Real> inv_rms(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const Real ir = Real(1) / std::sqrt(xv.row(r).squaredNorm() / static_cast<Real>(cols) + eps);
        inv_rms(r, 0) = ir;
        xhat.row(r) = xv.row(r) * ir;
    }
    Matrix<Real> out = xhat.array().rowwise() * gain.value().row(0).array();
    const int ix = x.id();
    const int ig = gain.id();
    return x.tape()->push(std::move(out), {x, gain},
                          [ix, ig, xhat = std::move(xhat), inv_rms = std::move(inv_rms)](Tape<Real>& t, int self) {
                              const auto& g = t.grad(self);
                              if (t.requires_grad(ig)) {
                                  t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                              }
                              if (t.requires_grad(ix)) {
                                  const Real n = static_cast<Real>(xhat.cols());
                                  Matrix<Real> gh = g.array().rowwise() * t.value(ig).row(0).array();
                                  Matrix<Real> dx(xhat.rows(), xhat.cols());
                                  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                                      const Real proj = gh.row(r).dot(xhat.row(r)) / n;
                                      dx.row(r) = inv_rms(r, 0) * (gh.row(r) - proj * xhat.row(r));
                                  }
                                  t.accumulate(ix, dx);
                              }
                          });
}

template <typename Real>
Var<Real> softmax_rows(const Var<Real>& x, std::span<const std::uint8_t> allowed) {
    const auto& xv = x.value();
    const bool masked = !allowed.empty();
    require(!masked || allowed.size() == static_cast<std::size_t>(xv.size()), "softmax mask size");
    Matrix<Real> p = Matrix<Real>::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (Eigen::Index c = 0; c < xv.cols(); ++c) {
            if (!masked || allowed[static_cast<std::size_t>(r * xv.cols() + c)] != 0) {
                mx = std::max(mx, xv(r, c));
            }
        }
        require(std::isfinite(mx), "softmax row has no allowed column or non-finite input");
        Real total = 0;
        for (Eigen::Index c = 0; c < xv.cols(); ++c) {
            if (!masked || allowed[static_cast<std::size_t>(r * xv.cols() + c)] != 0) {
                p(r, c) = std::exp(xv(r, c) - mx);
                total += p(r, c);
            }
        }
        p.row(r) /= total;
    }
    const int ix = x.id();
    return x.tape()->push(std::move(p), {x}, [ix](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        const auto& pv = t.value(self);
        // dx = p * (g - sum(g * p)); masked entries have p = 0 so receive 0
        Matrix<Real> dot = g.cwiseProduct(pv).rowwise().sum();
        Matrix<Real> dx = pv.array() * (g.array().colwise() - dot.col(0).array());
        t.accumulate(ix, dx);
    });
}

template <typename Real>
Var<Real> log_softmax_rows(const Var<Real>& x) {
    const auto& xv = x.value();
    Matrix<Real> out(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const Real mx = xv.row(r).maxCoeff();
        const Real lse = mx + std::log((xv.row(r).array() - mx).exp().sum());
        out.row(r) = xv.row(r).array() - lse;
    }
    const int ix = x.id();
    return x.tape()->push(std::move(out), {x}, [ix](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        Matrix<Real> p = t.value(self).array().exp();
        Matrix<Real> gsum = g.rowwise().sum();
        Matrix<Real> dx = g.array() - p.array().colwise() * gsum.col(0).array();
        t.accumulate(ix, dx);
    });
}

template <typename Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
    require(!parts.empty(), "concat_rows of nothing");
    const auto cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        require(p.cols() == cols, "concat_rows column mismatch");
        rows += p.rows();
    }
    Matrix<Real> out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        ids.push_back(p.id());
        offsets.push_back(at);
        at += p.rows();
    }
    return parts.front().tape()->push(std::move(out), std::span<const Var<Real>>(parts),
                                      [ids = std::move(ids), offsets = std::move(offsets)](Tape<Real>& t, int self) {
                                          const auto& g = t.grad(self);
                                          for (std::size_t k = 0; k < ids.size(); ++k) {
                                              if (t.requires_grad(ids[k])) {
                                                  t.accumulate(ids[k],
                                                               g.middleRows(offsets[k], t.value(ids[k]).rows()));
                                              }
                                          }
                                      });
}

template <typename Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts) {
    require(!parts.empty(), "concat_cols of nothing");
    const auto rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        require(p.rows() == rows, "concat_cols row mismatch");
        cols += p.cols();
    }
    Matrix<Real> out(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        ids.push_back(p.id());
        offsets.push_back(at);
        at += p.cols();
    }
    return parts.front().tape()->push(std::move(out), std::span<const Var<Real>>(parts),
                                      [ids = std::move(ids), offsets = std::move(offsets)](Tape<Real>& t, int self) {
                                          const auto& g = t.grad(self);
                                          for (std::size_t k = 0; k < ids.size(); ++k) {
                                              if (t.requires_grad(ids[k])) {
                                                  t.accumulate(ids[k],
                                                               g.middleCols(offsets[k], t.value(ids[k]).cols()));
                                              }
                                          }
                                      });
}

template <typename Real>
Var<Real> slice_rows(const Var<Real>& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
    Matrix<Real> out = a.value().middleRows(start, count);
    const int ia = a.id();
    const auto rows = a.rows();
    const auto cols = a.cols();
    return a.tape()->push(std::move(out), {a}, [ia, start, count, rows, cols](Tape<Real>& t, int self) {
        Matrix<Real> d = Matrix<Real>::Zero(rows, cols);
        d.middleRows(start, count) = t.grad(self);
        t.accumulate(ia, d);
    });
}

template <typename Real>
Var<Real> slice_cols(const Var<Real>& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
    Matrix<Real> out = a.value().middleCols(start, count);
    const int ia = a.id();
    const auto rows = a.rows();
    const auto cols = a.cols();
    return a.tape()->push(std::move(out), {a}, [ia, start, count, rows, cols](Tape<Real>& t, int self) {
        Matrix<Real> d = Matrix<Real>::Zero(rows, cols);
        d.middleCols(start, count) = t.grad(self);
        t.accumulate(ia, d);
    });
}

template <typename Real>
Var<Real> gather_rows(const Var<Real>& table, std::span<const int> ids) {
    const auto& tv = table.value();
    Matrix<Real> out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        require(ids[k] >= 0 && ids[k] < tv.rows(), "gather_rows id out of range");
        out.row(static_cast<Eigen::Index>(k)) = tv.row(ids[k]);
    }
    const int it = table.id();
    std::vector<int> idv(ids.begin(), ids.end());
    const auto rows = tv.rows();
    const auto cols = tv.cols();
    return table.tape()->push(std::move(out), {table}, [it, idv = std::move(idv), rows, cols](Tape<Real>& t, int self) {
        const auto& g = t.grad(self);
        Matrix<Real> d = Matrix<Real>::Zero(rows, cols);
        for (std::size_t k = 0; k < idv.size(); ++k) {
            d.row(idv[k]) += g.row(static_cast<Eigen::Index>(k));
        }
        t.accumulate(it, d);
    });
}

template <typename Real>
Var<Real> pick(const Var<Real>& a, std::span<const Eigen::Index> rows, std::span<const Eigen::Index> cols) {
    require(rows.size() == cols.size(), "pick index lists differ in length");
    Matrix<Real> out(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        require(rows[k] >= 0 && rows[k] < a.rows() && cols[k] >= 0 && cols[k] < a.cols(), "pick out of range");
        out(static_cast<Eigen::Index>(k), 0) = a.value()(rows[k], cols[k]);
    }
    const int ia = a.id();
    std::vector<Eigen::Index> rv(rows.begin(), rows.end());
    std::vector<Eigen::Index> cv(cols.begin(), cols.end());
    const auto nr = a.rows();
    const auto nc = a.cols();
    return a.tape()->push(std::move(out), {a},
                          [ia, rv = std::move(rv), cv = std::move(cv), nr, nc](Tape<Real>& t, int self) {
                              const auto& g = t.grad(self);
                              Matrix<Real> d = Matrix<Real>::Zero(nr, nc);
                              for (std::size_t k = 0; k < rv.size(); ++k) {
                                  d(rv[k], cv[k]) += g(static_cast<Eigen::Index>(k), 0);
                              }
                              t.accumulate(ia, d);
                          });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
    Matrix<Real> out(1, 1);
    out(0, 0) = a.value().sum();
    const int ia = a.id();
    const auto nr = a.rows();
    const auto nc = a.cols();
    return a.tape()->push(std::move(out), {a}, [ia, nr, nc](Tape<Real>& t, int self) {
        t.accumulate(ia, Matrix<Real>::Constant(nr, nc, t.grad(self)(0, 0)));
    });
}

template <typename Real>
Var<Real> mean_rows(const Var<Real>& a) {
    require(a.rows() > 0, "mean_rows of an empty matrix");
    Matrix<Real> out = a.value().colwise().mean();
    const int ia = a.id();
    const auto nr = a.rows();
    return a.tape()->push(std::move(out), {a}, [ia, nr](Tape<Real>& t, int self) {
        Matrix<Real> d = t.grad(self).replicate(nr, 1) / static_cast<Real>(nr);
        t.accumulate(ia, d);
    });
}

template <typename Real>
Var<Real> detach(const Var<Real>& a) {
    return a.tape()->constant(a.value());
}

#define MCLE_AD_INSTANTIATE(Real)                                                                               \
    template Var<Real> matmul(const Var<Real>&, const Var<Real>&);                                              \
    template Var<Real> transpose(const Var<Real>&);                                                             \
    template Var<Real> add(const Var<Real>&, const Var<Real>&);                                                 \
    template Var<Real> sub(const Var<Real>&, const Var<Real>&);                                                 \
    template Var<Real> hadamard(const Var<Real>&, const Var<Real>&);                                            \
    template Var<Real> scale(const Var<Real>&, Real);                                                           \
    template Var<Real> div_scalar(const Var<Real>&, const Var<Real>&);                                          \
    template Var<Real> add_row(const Var<Real>&, const Var<Real>&);                                             \
    template Var<Real> mul_row(const Var<Real>&, const Var<Real>&);                                             \
    template Var<Real> relu(const Var<Real>&);                                                                  \
    template Var<Real> gelu(const Var<Real>&);                                                                  \
    template Var<Real> exp(const Var<Real>&);                                                                   \
    template Var<Real> log(const Var<Real>&);                                                                   \
    template Var<Real> rms_norm_rows(const Var<Real>&, const Var<Real>&, Real);                                 \
    template Var<Real> softmax_rows(const Var<Real>&, std::span<const std::uint8_t>);                           \
    template Var<Real> log_softmax_rows(const Var<Real>&);                                                      \
    template Var<Real> concat_rows(const std::vector<Var<Real>>&);                                              \
    template Var<Real> concat_cols(const std::vector<Var<Real>>&);                                              \
    template Var<Real> slice_rows(const Var<Real>&, Eigen::Index, Eigen::Index);                                \
    template Var<Real> slice_cols(const Var<Real>&, Eigen::Index, Eigen::Index);                                \
    template Var<Real> gather_rows(const Var<Real>&, std::span<const int>);                                     \
    template Var<Real> pick(const Var<Real>&, std::span<const Eigen::Index>, std::span<const Eigen::Index>);    \
    template Var<Real> sum(const Var<Real>&);                                                                   \
    template Var<Real> mean_rows(const Var<Real>&);                                                             \
    template Var<Real> detach(const Var<Real>&);

MCLE_AD_INSTANTIATE(float)
MCLE_AD_INSTANTIATE(double)

#undef MCLE_AD_INSTANTIATE

} // namespace mcle::ad

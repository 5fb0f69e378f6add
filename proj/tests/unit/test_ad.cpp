// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "mcle/ad/ops.hpp"
#include "mcle/common/error.hpp"
#include "support/gradcheck.hpp"

#include <random>

using namespace mcle;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using Vars = std::vector<Var<double>>;

namespace {

Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = n(rng);
    }
    return m;
}

} // namespace

TEST_CASE("matmul, add_row and gelu gradients match finite differences", "[ad]") {
    auto f = [](Tape<double>&, const Vars& x) {
        auto h = ad::add_row(ad::matmul(x[0], x[1]), x[2]);
        return ad::sum(ad::hadamard(ad::gelu(h), h));
    };
    auto res = testing::check_input_gradients(f, {random_matrix(3, 4, 1), random_matrix(4, 5, 2), random_matrix(1, 5, 3)});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("RMS norm gradients match finite differences", "[ad]") {
    auto w = random_matrix(6, 1, 9);
    auto f = [w](Tape<double>& t, const Vars& x) {
        auto y = ad::rms_norm_rows(x[0], x[1]);
        return ad::sum(ad::matmul(ad::gelu(y), t.constant(w)));
    };
    auto res = testing::check_input_gradients(f, {random_matrix(4, 6, 4), random_matrix(1, 6, 5)});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("RMS norm output has unit RMS and is not shift invariant", "[ad]") {
    Tape<double> t(false);
    const auto x = random_matrix(3, 5, 12);
    const auto y = ad::rms_norm_rows(t.constant(x), t.constant(Matrix<double>::Ones(1, 5)), 0.0).value();
    for (Eigen::Index r = 0; r < 3; ++r) {
        CHECK(std::sqrt(y.row(r).squaredNorm() / 5) == Catch::Approx(1.0).epsilon(1e-12));
    }
    const Matrix<double> shifted = x.array() + 0.5;
    const auto ys = ad::rms_norm_rows(t.constant(shifted), t.constant(Matrix<double>::Ones(1, 5)), 0.0).value();
    CHECK((ys - y).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("masked softmax gives exact zeros and correct gradients", "[ad]") {
    const std::vector<std::uint8_t> allowed = {1, 1, 0, 1, 0, 0, 1, 1, 1};
    Tape<double> tape;
    auto x = tape.leaf(random_matrix(3, 3, 7));
    auto p = ad::softmax_rows(x, allowed);
    CHECK(p.value()(0, 2) == 0.0);
    CHECK(p.value()(1, 1) == 0.0);
    CHECK(p.value()(1, 0) == 1.0);
    for (Eigen::Index r = 0; r < 3; ++r) {
        CHECK(p.value().row(r).sum() == Catch::Approx(1.0).epsilon(1e-12));
    }
    auto w = random_matrix(3, 3, 8);
    auto f = [&](Tape<double>& t, const Vars& v) {
        return ad::sum(ad::hadamard(ad::softmax_rows(v[0], allowed), t.constant(w)));
    };
    auto res = testing::check_input_gradients(f, {random_matrix(3, 3, 7)});
    CHECK(res.max_rel_err < 1e-6);

    tape.backward(ad::sum(ad::hadamard(p, tape.constant(w))));
    CHECK(x.grad()(0, 2) == 0.0);
}

TEST_CASE("log softmax, pick, slicing and concatenation gradients", "[ad]") {
    const std::vector<Eigen::Index> rows = {0, 1, 2, 2};
    const std::vector<Eigen::Index> cols = {3, 0, 1, 1};
    auto f = [&](Tape<double>&, const Vars& x) {
        auto joined = ad::concat_rows({ad::slice_rows(x[0], 1, 2), x[1]});
        auto both = ad::concat_cols({joined, ad::slice_cols(joined, 0, 2)});
        auto lp = ad::log_softmax_rows(both);
        return ad::sum(ad::pick(lp, rows, cols));
    };
    auto res = testing::check_input_gradients(f, {random_matrix(4, 4, 10), random_matrix(1, 4, 11)});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gather, mean, div_scalar, exp and log gradients", "[ad]") {
    const std::vector<int> ids = {2, 0, 2, 1};
    auto f = [&](Tape<double>&, const Vars& x) {
        auto rows = ad::gather_rows(x[0], ids);
        auto m = ad::mean_rows(ad::relu(rows));
        auto s = ad::exp(x[1]);
        auto q = ad::div_scalar(m, s);
        return ad::sum(ad::log(ad::add(ad::exp(q), ad::transpose(ad::transpose(q)))));
    };
    Matrix<double> tau(1, 1);
    tau(0, 0) = -0.3;
    auto res = testing::check_input_gradients(f, {random_matrix(3, 5, 12), tau});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("parameters read through a tape accumulate into Gradients", "[ad]") {
    ad::ParameterStore<double> store;
    const auto w = store.add("w", random_matrix(2, 2, 13));
    ad::Gradients<double> grads(store);
    for (int rep = 0; rep < 2; ++rep) {
        Tape<double> tape;
        auto out = ad::sum(ad::matmul(tape.param(store, w), tape.param(store, w)));
        tape.backward(out);
        tape.accumulate_param_grads(grads);
    }
    // d/dW sum(W W) = 1 W^T + W^T 1
    const auto& W = store.at(w).value;
    Matrix<double> ones = Matrix<double>::Ones(2, 2);
    Matrix<double> expected = 2.0 * (ones * W.transpose() + W.transpose() * ones);
    CHECK((grads[w] - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(store.add("w", W), InvalidArgument);
}

TEST_CASE("non-recording tapes refuse backward and keep no closures", "[ad]") {
    Tape<double> tape(false);
    auto x = tape.leaf(random_matrix(2, 2, 1));
    auto y = ad::sum(x);
    CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
    CHECK_FALSE(tape.requires_grad(y.id()));
}

TEST_CASE("shape mismatches are reported", "[ad]") {
    Tape<double> tape;
    auto a = tape.leaf(random_matrix(2, 3, 1));
    auto b = tape.leaf(random_matrix(2, 3, 2));
    CHECK_THROWS_AS(ad::matmul(a, b), InvalidArgument);
    CHECK_THROWS_AS(ad::add(a, ad::transpose(b)), InvalidArgument);
}

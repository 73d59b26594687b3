#include <doctest.h>

#include <cmath>

#include "fedfr/gradcheck.hpp"
#include "fedfr/losses.hpp"
#include "fedfr/model.hpp"
#include "oracles.hpp"

using fedfr::LossConfig;
using fedfr::Matrix;
using fedfr::Rng;
using fedfr::Tape;
using fedfr::Vector;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    }
    return m;
}

double eval_cosface(const Matrix& f, int label, const Matrix& proxies, const LossConfig& cfg) {
    Tape tape;
    return tape.scalar(fedfr::cosface_loss(tape, tape.input(f), label, tape.input(proxies), cfg));
}

double eval_balanced(const Matrix& f, int label, const Matrix& w, const Matrix& phi,
                     const LossConfig& cfg) {
    Tape tape;
    return tape.scalar(fedfr::balanced_cosface_loss(tape, tape.input(f), label, tape.input(w),
                                                    tape.input(phi), cfg));
}

double eval_bce(const Matrix& f_prime, std::optional<int> label, const Matrix& omega, double bias,
                const LossConfig& cfg) {
    Tape tape;
    return tape.scalar(fedfr::dfc_bce_loss(tape, tape.input(f_prime), label, tape.input(omega),
                                           tape.scalar_input(bias), cfg));
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("cosface: single class always zero") {
    LossConfig cfg;
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix f = random_matrix(rng, 4, 1);
        if (f.norm() < 0.2) continue;
        const Matrix proxy = random_matrix(rng, 4, 1);
        if (proxy.norm() < 0.2) continue;
        CHECK(eval_cosface(f, 0, proxy, cfg) == 0.0);
    }
}

TEST_CASE("cosface: orthogonal two-class instance matches scalar substitution") {
    LossConfig cfg;  // s=30, m=0.4
    Matrix f(2, 1);
    f << 1, 0;
    Matrix proxies(2, 2);
    proxies << 1, 0, 0, 1;
    // loss = log(1 + e^{-18})
    const double expected = std::log1p(std::exp(-18.0));
    CHECK(eval_cosface(f, 0, proxies, cfg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(eval_cosface(f, 0, proxies, cfg) == doctest::Approx(1.523e-8).epsilon(1e-3));
}

TEST_CASE("cosface: matches the naive exponential-sum oracle") {
    LossConfig cfg;
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_index(5));
        const int d = 3 + static_cast<int>(rng.uniform_index(4));
        Matrix f = random_matrix(rng, d, 1);
        if (f.norm() < 0.2) f(0, 0) += 1.0;
        Matrix proxies = random_matrix(rng, d, k);
        for (int j = 0; j < k; ++j) {
            if (proxies.col(j).norm() < 0.2) proxies(0, j) += 1.0;
        }
        const int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
        const double expected =
            oracles::naive_cosface(f.col(0), label, proxies, cfg.scale, cfg.margin);
        CHECK(eval_cosface(f, label, proxies, cfg) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("cosface: label out of range rejected") {
    LossConfig cfg;
    Tape tape;
    Tape::Var f = tape.input(Matrix::Ones(3, 1));
    Tape::Var p = tape.input(Matrix::Identity(3, 3));
    CHECK_THROWS_AS(fedfr::cosface_loss(tape, f, 3, p, cfg), fedfr::DegenerateInputError);
    CHECK_THROWS_AS(fedfr::cosface_loss(tape, f, -1, p, cfg), fedfr::DegenerateInputError);
}

TEST_CASE("cosface: invariant to positive rescaling of f and proxy columns") {
    LossConfig cfg;
    Rng rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        Matrix f = random_matrix(rng, 5, 1);
        if (f.norm() < 0.2) f(0, 0) += 1.0;
        Matrix proxies = random_matrix(rng, 5, 4);
        for (int j = 0; j < 4; ++j) {
            if (proxies.col(j).norm() < 0.2) proxies(0, j) += 1.0;
        }
        const int label = static_cast<int>(rng.uniform_index(4));
        const double base = eval_cosface(f, label, proxies, cfg);

        Matrix scaled = proxies;
        scaled.col(label) *= rng.uniform(0.5, 5.0);
        scaled.col((label + 1) % 4) *= rng.uniform(0.1, 3.0);
        CHECK(eval_cosface(2.5 * f, label, scaled, cfg) == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("cosface: strictly decreasing in the target cosine") {
    LossConfig cfg;
    Matrix proxies(2, 3);
    proxies << 1, 0, -1, 0, 1, 0;
    double previous = std::numeric_limits<double>::infinity();
    for (double theta = 3.0; theta > 0.05; theta -= 0.1) {
        Matrix f(2, 1);
        f << std::cos(theta), std::sin(theta);
        const double loss = eval_cosface(f, 0, proxies, cfg);
        CHECK(loss < previous);
        previous = loss;
    }
}

TEST_CASE("balanced cosface: K_g = 0 reduces exactly to plain cosface") {
    LossConfig cfg;
    Rng rng(4);
    const Matrix f = random_matrix(rng, 4, 1);
    const Matrix w = random_matrix(rng, 4, 3);
    const Matrix phi(4, 0);
    for (int label = 0; label < 3; ++label) {
        CHECK(eval_balanced(f, label, w, phi, cfg) == eval_cosface(f, label, w, cfg));
    }
}

TEST_CASE("balanced cosface equals plain cosface on the concatenated matrix, exactly") {
    LossConfig cfg;
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int kg = 1 + static_cast<int>(rng.uniform_index(4));
        const int kl = 1 + static_cast<int>(rng.uniform_index(4));
        Matrix f = random_matrix(rng, 5, 1);
        if (f.norm() < 0.2) f(0, 0) += 1.0;
        Matrix w = random_matrix(rng, 5, kl);
        Matrix phi = random_matrix(rng, 5, kg);
        for (int j = 0; j < kl; ++j) {
            if (w.col(j).norm() < 0.2) w(0, j) += 1.0;
        }
        for (int j = 0; j < kg; ++j) {
            if (phi.col(j).norm() < 0.2) phi(0, j) += 1.0;
        }
        Matrix concat(5, kg + kl);
        concat.leftCols(kg) = phi;
        concat.rightCols(kl) = w;
        const int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(kg + kl)));
        CHECK(eval_balanced(f, label, w, phi, cfg) == eval_cosface(f, label, concat, cfg));
    }
}

TEST_CASE("balanced cosface: orthogonal local proxies leave a global sample's loss") {
    // e^0 terms from orthogonal local columns must be negligible once the
    // target logit dominates; s = 60 puts them below 1e-10.
    LossConfig cfg;
    cfg.scale = 60.0;
    const int kg = 3, kl = 5;
    Matrix f = Matrix::Zero(8, 1);
    f(0, 0) = 1.0;
    Matrix phi = Matrix::Zero(8, kg);
    phi(0, 0) = 1.0;  // target proxy aligned with f
    phi(1, 1) = 1.0;
    phi(2, 2) = 1.0;
    Matrix w = Matrix::Zero(8, kl);
    for (int j = 0; j < kl; ++j) w(3 + j, j) = 1.0;  // orthogonal to f and phi

    const double kg_only = eval_cosface(f, 0, phi, cfg);
    const double balanced = eval_balanced(f, 0, w, phi, cfg);
    CHECK(std::abs(balanced - kg_only) < 1e-10);
}

TEST_CASE("contrastive: equal similarities give log 2") {
    Tape tape;
    Vector f(3), glob(3), prev(3);
    f << 1, 0, 0;
    glob << 0, 1, 0;
    prev << 0, 0, 1;  // sim(f, glob) = sim(f, prev) = 0
    const double loss =
        tape.scalar(fedfr::contrastive_loss(tape, tape.input(f), glob, prev, 0.5));
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("contrastive: aligned-global orthogonal-previous scalar substitution") {
    Tape tape;
    Vector f(2), prev(2);
    f << 1, 0;
    prev << 0, 1;
    const double loss = tape.scalar(fedfr::contrastive_loss(tape, tape.input(f), f, prev, 0.5));
    CHECK(loss == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.126928).epsilon(1e-5));
}

TEST_CASE("contrastive: gradient w.r.t. f matches finite differences") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix f = random_matrix(rng, 5, 1);
        if (f.norm() < 0.3) f(0, 0) += 1.0;
        Matrix glob = random_matrix(rng, 5, 1);
        if (glob.norm() < 0.3) glob(0, 0) += 1.0;
        Matrix prev = random_matrix(rng, 5, 1);
        if (prev.norm() < 0.3) prev(1, 0) += 1.0;
        const auto fn = [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
            Tape tape;
            Tape::Var x = tape.input(params[0]);
            Tape::Var loss = fedfr::contrastive_loss(tape, x, glob.col(0), prev.col(0), 0.5);
            if (grads) {
                tape.backward(loss);
                *grads = {tape.gradient(x)};
            }
            return tape.scalar(loss);
        };
        CHECK(fedfr::max_gradient_error(fn, {f}) < fedfr::kGradTolerance);
    }
}

TEST_CASE("g_transform: endpoints, identity, scalar substitution, monotonicity") {
    CHECK(fedfr::g_range(1.0, 3.0) == 1.0);
    CHECK(fedfr::g_range(-1.0, 3.0) == -1.0);
    for (double z = -1.0; z <= 1.0; z += 0.125) {
        CHECK(fedfr::g_range(z, 1.0) == doctest::Approx(z).epsilon(1e-15));
    }
    CHECK(fedfr::g_range(0.0, 3.0) == doctest::Approx(-0.75).epsilon(1e-15));

    for (double t : {1.0, 2.0, 3.0, 5.0}) {
        double prev = -1.1;
        for (double z = -1.0; z <= 1.0; z += 0.01) {
            const double g = fedfr::g_range(z, t);
            CHECK(g > prev);
            CHECK(g >= -1.0 - 1e-12);
            CHECK(g <= 1.0 + 1e-12);
            prev = g;
        }
    }
}

TEST_CASE("dfc bce: aligned positive branch scalar substitution") {
    LossConfig cfg;  // lambda=0.7, s'=30, m'=0.4, t'=3
    Matrix f(3, 1);
    f << 1, 0, 0;
    Matrix omega(3, 1);
    omega << 1, 0, 0;  // cos = 1, g(1) = 1
    const double expected = (0.7 / 30.0) * std::log1p(std::exp(-30.0 * (1.0 - 0.4)));
    const double loss = eval_bce(f, 0, omega, 0.0, cfg);
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss == doctest::Approx(3.55e-10).epsilon(2e-3));
}

TEST_CASE("dfc bce: unlabeled sample orthogonal to every branch") {
    LossConfig cfg;
    Matrix f(4, 1);
    f << 1, 0, 0, 0;
    Matrix omega = Matrix::Zero(4, 1);
    omega(1, 0) = 1.0;  // orthogonal: cos = 0, g(0) = -0.75
    const double expected = 0.01 * std::log1p(std::exp(30.0 * (-0.75 + 0.4)));
    const double loss = eval_bce(f, std::nullopt, omega, 0.0, cfg);
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss == doctest::Approx(2.75e-7).epsilon(2e-3));

    // with three branches the negative terms accumulate
    Matrix omega3 = Matrix::Zero(4, 3);
    omega3(1, 0) = omega3(2, 1) = omega3(3, 2) = 1.0;
    CHECK(eval_bce(f, std::nullopt, omega3, 0.0, cfg) ==
          doctest::Approx(3.0 * expected).epsilon(1e-12));
}

TEST_CASE("dfc bce: matches the per-branch loop oracle") {
    LossConfig cfg;
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_index(4));
        Matrix f = random_matrix(rng, 5, 1);
        if (f.norm() < 0.2) f(0, 0) += 1.0;
        Matrix omega = random_matrix(rng, 5, k);
        for (int j = 0; j < k; ++j) {
            if (omega.col(j).norm() < 0.2) omega(0, j) += 1.0;
        }
        const double bias = rng.uniform(-0.5, 0.5);
        std::optional<int> label;
        if (trial % 3 != 0) label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
        const double expected =
            oracles::naive_dfc_bce(f.col(0), label, omega, bias, cfg.bce_scale, cfg.bce_margin,
                                   cfg.lambda, cfg.range_exponent);
        CHECK(eval_bce(f, label, omega, bias, cfg) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("dfc bce: label out of range rejected") {
    LossConfig cfg;
    Tape tape;
    Tape::Var f = tape.input(Matrix::Ones(3, 1));
    Tape::Var omega = tape.input(Matrix::Identity(3, 2));
    Tape::Var b = tape.scalar_input(0.0);
    CHECK_THROWS_AS(fedfr::dfc_bce_loss(tape, f, 2, omega, b, cfg), fedfr::DegenerateInputError);
}

TEST_CASE("total loss: weighted arithmetic") {
    LossConfig cfg;

    SUBCASE("alpha2 = alpha3 = 0 leaves only the classification term") {
        cfg.alpha_con = 0.0;
        cfg.alpha_bce = 0.0;
        Tape tape;
        Tape::Var a = tape.scalar_input(0.37);
        Tape::Var b = tape.scalar_input(11.0);
        Tape::Var c = tape.scalar_input(-3.0);
        CHECK(tape.scalar(fedfr::total_loss(tape, a, b, c, cfg)) == 0.37);
    }

    SUBCASE("unit weights sum the parts") {
        cfg.alpha_cos = cfg.alpha_con = cfg.alpha_bce = 1.0;
        Tape tape;
        CHECK(tape.scalar(fedfr::total_loss(tape, tape.scalar_input(1.0), tape.scalar_input(2.0),
                                            tape.scalar_input(3.0), cfg)) == 6.0);
    }

    SUBCASE("default weights") {
        Tape tape;
        CHECK(tape.scalar(fedfr::total_loss(tape, tape.scalar_input(0.1), tape.scalar_input(0.2),
                                            tape.scalar_input(0.3), cfg)) ==
              doctest::Approx(4.1).epsilon(1e-15));
    }
}

TEST_CASE("losses are non-negative on random inputs") {
    LossConfig cfg;
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix f = random_matrix(rng, 4, 1);
        if (f.norm() < 0.2) f(0, 0) += 1.0;
        Matrix proxies = random_matrix(rng, 4, 3);
        for (int j = 0; j < 3; ++j) {
            if (proxies.col(j).norm() < 0.2) proxies(0, j) += 1.0;
        }
        CHECK(eval_cosface(f, static_cast<int>(rng.uniform_index(3)), proxies, cfg) >= 0.0);

        Matrix glob = random_matrix(rng, 4, 1);
        if (glob.norm() < 0.2) glob(0, 0) += 1.0;
        Matrix prev = random_matrix(rng, 4, 1);
        if (prev.norm() < 0.2) prev(1, 0) += 1.0;
        Tape tape;
        CHECK(tape.scalar(fedfr::contrastive_loss(tape, tape.input(f), glob.col(0), prev.col(0),
                                                  cfg.temperature)) >= 0.0);

        std::optional<int> label;
        if (trial % 2 == 0) label = static_cast<int>(rng.uniform_index(3));
        CHECK(eval_bce(f, label, proxies, rng.uniform(-1.0, 1.0), cfg) >= 0.0);
    }
}

TEST_CASE("total objective reaches every parameter group") {
    LossConfig cfg;
    Rng rng(9);
    Tape tape;
    std::vector<Tape::Var> ws = {tape.input(random_matrix(rng, 6, 4)),
                                 tape.input(random_matrix(rng, 3, 6))};
    std::vector<Tape::Var> bs = {tape.input(random_matrix(rng, 6, 1)),
                                 tape.input(random_matrix(rng, 3, 1))};
    Tape::Var x = tape.constant(random_matrix(rng, 4, 2));
    Tape::Var features = fedfr::embed_batch_taped(tape, ws, bs, x);
    Tape::Var w = tape.input(random_matrix(rng, 3, 2));
    Tape::Var phi = tape.input(random_matrix(rng, 3, 2));
    Tape::Var cos_part = fedfr::balanced_cosface_batch(tape, features, {2, 0}, w, phi, cfg);
    Tape::Var con_part = fedfr::contrastive_batch(tape, features, random_matrix(rng, 3, 2),
                                                  random_matrix(rng, 3, 2), cfg.temperature);
    Tape::Var pi_w = tape.input(random_matrix(rng, 3, 3));
    Tape::Var pi_b = tape.input(random_matrix(rng, 3, 1));
    Tape::Var omega = tape.input(random_matrix(rng, 3, 2));
    Tape::Var bias = tape.scalar_input(0.1);
    Tape::Var transformed = fedfr::dfc_transform_taped(tape, pi_w, pi_b, features);
    Tape::Var bce_part = fedfr::dfc_bce_batch(tape, transformed, {std::optional<int>(0), std::nullopt},
                                              omega, bias, cfg);
    Tape::Var loss = fedfr::total_loss(tape, cos_part, con_part, bce_part, cfg);
    tape.backward(loss);

    CHECK(tape.gradient(ws[0]).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(bs[0]).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(w).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(phi).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(pi_w).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(pi_b).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(omega).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tape.gradient(bias).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gradient suite passes for every objective") {
    const auto results = fedfr::run_gradient_checks(1234, 10);
    for (const auto& r : results) {
        INFO(r.name, " max_rel_error=", r.max_rel_error);
        CHECK(r.passed);
    }
    CHECK(fedfr::all_passed(results));
}

TEST_SUITE_END();

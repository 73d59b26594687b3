#include "fedfr/gradcheck.hpp"

#include <cmath>
#include <memory>
#include <optional>

#include "fedfr/losses.hpp"
#include "fedfr/model.hpp"

namespace fedfr {

double max_gradient_error(const TapedFunction& fn, const std::vector<Matrix>& params,
                          double step) {
    std::vector<Matrix> grads;
    fn(params, &grads);

    double worst = 0.0;
    std::vector<Matrix> perturbed = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index i = 0; i < params[p].rows(); ++i) {
            for (Eigen::Index j = 0; j < params[p].cols(); ++j) {
                const double saved = perturbed[p](i, j);
                perturbed[p](i, j) = saved + step;
                const double up = fn(perturbed, nullptr);
                perturbed[p](i, j) = saved - step;
                const double down = fn(perturbed, nullptr);
                perturbed[p](i, j) = saved;
                const double fd = (up - down) / (2.0 * step);
                const double analytic = grads[p](i, j);
                const double denom =
                    std::max({std::abs(fd), std::abs(analytic), kGradDenomFloor});
                worst = std::max(worst, std::abs(fd - analytic) / denom);
            }
        }
    }
    return worst;
}

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    }
    return m;
}

// Central differences assume a smooth neighborhood; keep pre-activations away
// from the rectifier kink.
bool relu_safe(const BackboneParams& theta, const Matrix& X) {
    Matrix h = X;
    for (std::size_t i = 0; i + 1 < theta.layers.size(); ++i) {
        Matrix z = theta.layers[i].weight * h;
        z.colwise() += theta.layers[i].bias;
        if (z.cwiseAbs().minCoeff() < 1e-3) return false;
        h = z.cwiseMax(0.0);
    }
    return true;
}

BackboneParams backbone_from_params(const std::vector<Matrix>& params, std::size_t offset,
                                    int input_dim, int hidden, int embed_dim) {
    BackboneParams theta = BackboneParams::zeros(input_dim, {hidden}, embed_dim);
    theta.layers[0].weight = params[offset];
    theta.layers[0].bias = params[offset + 1].col(0);
    theta.layers[1].weight = params[offset + 2];
    theta.layers[1].bias = params[offset + 3].col(0);
    return theta;
}

struct CheckCase {
    std::string name;
    std::function<std::vector<Matrix>(Rng&)> make_instance;
    TapedFunction fn;
};

std::vector<CheckCase> build_cases(std::uint64_t seed) {
    std::vector<CheckCase> cases;
    LossConfig cfg;  // default hyperparameters

    // Cosface over d=5, K=4; params: feature, proxies. Labels vary per
    // instance via a side channel seeded alongside the instance.
    {
        auto label = std::make_shared<int>(0);
        cases.push_back(
            {"cosface",
             [label](Rng& rng) {
                 *label = static_cast<int>(rng.uniform_index(4));
                 return std::vector<Matrix>{random_matrix(rng, 5, 1), random_matrix(rng, 5, 4)};
             },
             [label, cfg](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 Tape::Var f = tape.input(params[0]);
                 Tape::Var proxies = tape.input(params[1]);
                 Tape::Var loss = cosface_loss(tape, f, *label, proxies, cfg);
                 if (grads) {
                     tape.backward(loss);
                     *grads = {tape.gradient(f), tape.gradient(proxies)};
                 }
                 return tape.scalar(loss);
             }});
    }

    // balanced Cosface; params: feature, local W (K_l=3), global phi (K_g=4).
    {
        auto label = std::make_shared<int>(0);
        cases.push_back(
            {"balanced_cosface",
             [label](Rng& rng) {
                 *label = static_cast<int>(rng.uniform_index(7));
                 return std::vector<Matrix>{random_matrix(rng, 5, 1), random_matrix(rng, 5, 3),
                                            random_matrix(rng, 5, 4)};
             },
             [label, cfg](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 Tape::Var f = tape.input(params[0]);
                 Tape::Var w = tape.input(params[1]);
                 Tape::Var phi = tape.input(params[2]);
                 Tape::Var loss = balanced_cosface_loss(tape, f, *label, w, phi, cfg);
                 if (grads) {
                     tape.backward(loss);
                     *grads = {tape.gradient(f), tape.gradient(w), tape.gradient(phi)};
                 }
                 return tape.scalar(loss);
             }});
    }

    // contrastive term; gradient flows through f only.
    {
        auto frozen = std::make_shared<std::pair<Matrix, Matrix>>();
        cases.push_back(
            {"contrastive",
             [frozen](Rng& rng) {
                 frozen->first = random_matrix(rng, 6, 1);
                 frozen->second = random_matrix(rng, 6, 1);
                 return std::vector<Matrix>{random_matrix(rng, 6, 1)};
             },
             [frozen, cfg](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 Tape::Var f = tape.input(params[0]);
                 Tape::Var loss = contrastive_loss(tape, f, frozen->first.col(0),
                                                   frozen->second.col(0), cfg.temperature);
                 if (grads) {
                     tape.backward(loss);
                     *grads = {tape.gradient(f)};
                 }
                 return tape.scalar(loss);
             }});
    }

    // margin-based BCE; params: transformed feature, omega (K_l=3), bias.
    // Every third instance is a shared-global sample with no positive branch.
    {
        auto label = std::make_shared<std::optional<int>>();
        auto counter = std::make_shared<int>(0);
        cases.push_back(
            {"dfc_bce",
             [label, counter](Rng& rng) {
                 *label = ((*counter)++ % 3 == 2)
                              ? std::nullopt
                              : std::make_optional(static_cast<int>(rng.uniform_index(3)));
                 return std::vector<Matrix>{random_matrix(rng, 5, 1), random_matrix(rng, 5, 3),
                                            random_matrix(rng, 1, 1)};
             },
             [label, cfg](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 Tape::Var f = tape.input(params[0]);
                 Tape::Var omega = tape.input(params[1]);
                 Tape::Var bias = tape.input(params[2]);
                 Tape::Var loss = dfc_bce_loss(tape, f, *label, omega, bias, cfg);
                 if (grads) {
                     tape.backward(loss);
                     *grads = {tape.gradient(f), tape.gradient(omega), tape.gradient(bias)};
                 }
                 return tape.scalar(loss);
             }});
    }

    // Backbone forward pass: 2-layer MLP, scalarized against a fixed mask.
    {
        auto ctx = std::make_shared<std::pair<Matrix, Matrix>>();  // input X, mask R
        cases.push_back(
            {"backbone_forward",
             [ctx](Rng& rng) {
                 for (;;) {
                     std::vector<Matrix> params = {random_matrix(rng, 7, 6), random_matrix(rng, 7, 1),
                                                   random_matrix(rng, 5, 7), random_matrix(rng, 5, 1)};
                     ctx->first = random_matrix(rng, 6, 3);
                     ctx->second = random_matrix(rng, 5, 3);
                     const BackboneParams theta = backbone_from_params(params, 0, 6, 7, 5);
                     if (relu_safe(theta, ctx->first)) return params;
                 }
             },
             [ctx](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 std::vector<Tape::Var> ws = {tape.input(params[0]), tape.input(params[2])};
                 std::vector<Tape::Var> bs = {tape.input(params[1]), tape.input(params[3])};
                 Tape::Var x = tape.constant(ctx->first);
                 Tape::Var f = embed_batch_taped(tape, ws, bs, x);
                 Tape::Var loss = tape.sum(tape.cmul(f, ctx->second));
                 if (grads) {
                     tape.backward(loss);
                     *grads = {tape.gradient(ws[0]), tape.gradient(bs[0]), tape.gradient(ws[1]),
                               tape.gradient(bs[1])};
                 }
                 return tape.scalar(loss);
             }});
    }

    // the full objective through the backbone; gradients reach
    // Theta, Phi, W, Pi, Omega and b on a mixed local/shared batch.
    {
        struct TotalCtx {
            Matrix X;
            Matrix glob, prev;
            std::vector<int> balanced_labels;
            std::vector<std::optional<int>> dfc_labels;
        };
        auto ctx = std::make_shared<TotalCtx>();
        const int d_in = 6, hidden = 7, d = 5, d_prime = 5, k_l = 3, k_g = 4, batch = 3;
        cases.push_back(
            {"total_objective",
             [ctx, d_in, hidden, d, d_prime, k_l, k_g, batch](Rng& rng) {
                 for (;;) {
                     std::vector<Matrix> params = {
                         random_matrix(rng, hidden, d_in), random_matrix(rng, hidden, 1),
                         random_matrix(rng, d, hidden),    random_matrix(rng, d, 1),
                         random_matrix(rng, d, k_l),       random_matrix(rng, d, k_g),
                         random_matrix(rng, d, d_prime),   random_matrix(rng, d_prime, 1),
                         random_matrix(rng, d_prime, k_l), random_matrix(rng, 1, 1)};
                     ctx->X = random_matrix(rng, d_in, batch);
                     ctx->glob = random_matrix(rng, d, batch);
                     ctx->prev = random_matrix(rng, d, batch);
                     ctx->balanced_labels.clear();
                     ctx->dfc_labels.clear();
                     for (int b = 0; b < batch; ++b) {
                         if (b == batch - 1) {  // one shared-global sample per batch
                             const int g = static_cast<int>(rng.uniform_index(k_g));
                             ctx->balanced_labels.push_back(g);
                             ctx->dfc_labels.push_back(std::nullopt);
                         } else {
                             const int l = static_cast<int>(rng.uniform_index(k_l));
                             ctx->balanced_labels.push_back(k_g + l);
                             ctx->dfc_labels.push_back(l);
                         }
                     }
                     const BackboneParams theta = backbone_from_params(params, 0, d_in, hidden, d);
                     if (relu_safe(theta, ctx->X)) return params;
                 }
             },
             [ctx, cfg](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
                 Tape tape;
                 std::vector<Tape::Var> vars;
                 vars.reserve(params.size());
                 for (const auto& p : params) vars.push_back(tape.input(p));
                 std::vector<Tape::Var> ws = {vars[0], vars[2]};
                 std::vector<Tape::Var> bs = {vars[1], vars[3]};
                 Tape::Var x = tape.constant(ctx->X);
                 Tape::Var features = embed_batch_taped(tape, ws, bs, x);
                 Tape::Var cos_part = balanced_cosface_batch(tape, features, ctx->balanced_labels,
                                                             vars[4], vars[5], cfg);
                 Tape::Var con_part =
                     contrastive_batch(tape, features, ctx->glob, ctx->prev, cfg.temperature);
                 Tape::Var transformed = dfc_transform_taped(tape, vars[6], vars[7], features);
                 Tape::Var bce_part =
                     dfc_bce_batch(tape, transformed, ctx->dfc_labels, vars[8], vars[9], cfg);
                 Tape::Var loss = total_loss(tape, cos_part, con_part, bce_part, cfg);
                 if (grads) {
                     tape.backward(loss);
                     grads->clear();
                     for (const auto& v : vars) grads->push_back(tape.gradient(v));
                 }
                 return tape.scalar(loss);
             }});
    }

    (void)seed;
    return cases;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int instances_per_check) {
    std::vector<GradCheckResult> results;
    for (auto& check : build_cases(seed)) {
        Rng rng(derive_seed(seed, {0x62ad, std::hash<std::string>{}(check.name)}));
        GradCheckResult res;
        res.name = check.name;
        res.instances = instances_per_check;
        for (int i = 0; i < instances_per_check; ++i) {
            const std::vector<Matrix> params = check.make_instance(rng);
            res.max_rel_error = std::max(res.max_rel_error, max_gradient_error(check.fn, params));
        }
        res.passed = res.max_rel_error < kGradTolerance;
        results.push_back(std::move(res));
    }
    return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
        if (!r.passed) return false;
    }
    return !results.empty();
}

}  // namespace fedfr

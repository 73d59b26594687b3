#include "fedfr/losses.hpp"

#include <string>

namespace fedfr {

void LossConfig::validate() const {
    if (!(scale > 0.0)) throw ConfigError("loss.s", "scale must be > 0");
    if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("loss.m", "margin must be in [0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("loss.tau", "temperature must be > 0");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("loss.lambda", "lambda must be in (0, 1)");
    if (!(bce_scale > 0.0)) throw ConfigError("loss.s_prime", "scale must be > 0");
    if (!(bce_margin >= 0.0 && bce_margin < 1.0)) {
        throw ConfigError("loss.m_prime", "margin must be in [0, 1)");
    }
    if (!(range_exponent >= 1.0)) throw ConfigError("loss.t_prime", "exponent must be >= 1");
    if (alpha_cos < 0.0) throw ConfigError("loss.alpha1", "weight must be >= 0");
    if (alpha_con < 0.0) throw ConfigError("loss.alpha2", "weight must be >= 0");
    if (alpha_bce < 0.0) throw ConfigError("loss.alpha3", "weight must be >= 0");
}

Tape::Var cosface_batch(Tape& tape, Tape::Var features, const std::vector<int>& labels,
                        Tape::Var proxies, const LossConfig& cfg) {
    const Eigen::Index batch = tape.value(features).cols();
    const Eigen::Index classes = tape.value(proxies).cols();
    if (static_cast<Eigen::Index>(labels.size()) != batch) {
        throw DimensionError("cosface: one label per feature column required");
    }
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw DegenerateInputError("cosface: label " + std::to_string(y) + " out of range [0, " +
                                       std::to_string(classes) + ")");
        }
    }
    Tape::Var fhat = tape.normalize_columns(features);
    Tape::Var phat = tape.normalize_columns(proxies);
    Tape::Var cos = tape.clamp_unit(tape.matmul_tn(phat, fhat));  // K x B

    Matrix margin_shift = Matrix::Zero(classes, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        margin_shift(labels[static_cast<std::size_t>(b)], b) = -cfg.margin;
    }
    Tape::Var logits = tape.scale(tape.cadd(cos, margin_shift), cfg.scale);
    Tape::Var lse = tape.colwise_lse(logits);
    Tape::Var picked = tape.gather_cols(logits, labels);
    Tape::Var per_sample = tape.sub(lse, picked);  // 1 x B
    return tape.scale(tape.sum(per_sample), 1.0 / static_cast<double>(batch));
}

Tape::Var cosface_loss(Tape& tape, Tape::Var f, int label, Tape::Var proxies,
                       const LossConfig& cfg) {
    return cosface_batch(tape, f, {label}, proxies, cfg);
}

Tape::Var balanced_cosface_batch(Tape& tape, Tape::Var features, const std::vector<int>& labels,
                                 Tape::Var local_w, Tape::Var global_phi, const LossConfig& cfg) {
    const Eigen::Index k_g = tape.value(global_phi).cols();
    Tape::Var proxies = (k_g == 0) ? local_w : tape.hconcat(global_phi, local_w);
    return cosface_batch(tape, features, labels, proxies, cfg);
}

Tape::Var balanced_cosface_loss(Tape& tape, Tape::Var f, int label, Tape::Var local_w,
                                Tape::Var global_phi, const LossConfig& cfg) {
    return balanced_cosface_batch(tape, f, {label}, local_w, global_phi, cfg);
}

Tape::Var contrastive_batch(Tape& tape, Tape::Var features, const Matrix& glob_features,
                            const Matrix& prev_features, double temperature) {
    const Eigen::Index batch = tape.value(features).cols();
    if (glob_features.cols() != batch || prev_features.cols() != batch) {
        throw DimensionError("contrastive: frozen feature column count mismatch");
    }
    Matrix glob_hat = l2_normalize_columns(glob_features);
    Matrix prev_hat = l2_normalize_columns(prev_features);
    Tape::Var fhat = tape.normalize_columns(features);
    Tape::Var sim_glob = tape.clamp_unit(tape.colwise_dot(fhat, glob_hat));
    Tape::Var sim_prev = tape.clamp_unit(tape.colwise_dot(fhat, prev_hat));
    // -log(e^a / (e^a + e^b)) = softplus(b - a) with a,b the scaled similarities
    Tape::Var diff = tape.scale(tape.sub(sim_prev, sim_glob), 1.0 / temperature);
    Tape::Var per_sample = tape.softplus(diff);
    return tape.scale(tape.sum(per_sample), 1.0 / static_cast<double>(batch));
}

Tape::Var contrastive_loss(Tape& tape, Tape::Var f, const Vector& f_glob, const Vector& f_prev,
                           double temperature) {
    return contrastive_batch(tape, f, f_glob, f_prev, temperature);
}

Tape::Var dfc_bce_batch(Tape& tape, Tape::Var transformed,
                        const std::vector<std::optional<int>>& labels, Tape::Var omega,
                        Tape::Var bias, const LossConfig& cfg) {
    const Eigen::Index batch = tape.value(transformed).cols();
    const Eigen::Index branches = tape.value(omega).cols();
    if (static_cast<Eigen::Index>(labels.size()) != batch) {
        throw DimensionError("dfc_bce: one label per feature column required");
    }
    Matrix positive = Matrix::Zero(branches, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto& y = labels[static_cast<std::size_t>(b)];
        if (y) {
            if (*y < 0 || *y >= branches) {
                throw DegenerateInputError("dfc_bce: label " + std::to_string(*y) +
                                           " out of range [0, " + std::to_string(branches) + ")");
            }
            positive(*y, b) = 1.0;
        }
        // no positive branch for shared-global samples; every branch is negative
    }
    Matrix negative = Matrix::Constant(branches, batch, 1.0) - positive;

    Tape::Var fhat = tape.normalize_columns(transformed);
    Tape::Var ohat = tape.normalize_columns(omega);
    Tape::Var cos = tape.clamp_unit(tape.matmul_tn(ohat, fhat));  // branches x B
    Tape::Var g = tape.pow_range(cos, cfg.range_exponent);

    Tape::Var neg_bias = tape.scale(bias, -1.0);
    Tape::Var pos_arg = tape.add_scalar(
        tape.offset(tape.scale(g, -cfg.bce_scale), cfg.bce_scale * cfg.bce_margin), neg_bias);
    Tape::Var neg_arg = tape.add_scalar(
        tape.offset(tape.scale(g, cfg.bce_scale), cfg.bce_scale * cfg.bce_margin), bias);

    Tape::Var pos_terms = tape.cmul(tape.softplus(pos_arg), positive);
    Tape::Var neg_terms = tape.cmul(tape.softplus(neg_arg), negative);
    Tape::Var pos_sum = tape.scale(tape.sum(pos_terms), cfg.lambda / cfg.bce_scale);
    Tape::Var neg_sum = tape.scale(tape.sum(neg_terms), (1.0 - cfg.lambda) / cfg.bce_scale);
    return tape.scale(tape.add(pos_sum, neg_sum), 1.0 / static_cast<double>(batch));
}

Tape::Var dfc_bce_loss(Tape& tape, Tape::Var f_prime, std::optional<int> label, Tape::Var omega,
                       Tape::Var bias, const LossConfig& cfg) {
    return dfc_bce_batch(tape, f_prime, {label}, omega, bias, cfg);
}

Tape::Var total_loss(Tape& tape, Tape::Var cos_part, Tape::Var con_part, Tape::Var bce_part,
                     const LossConfig& cfg) {
    Tape::Var weighted = tape.add(tape.scale(cos_part, cfg.alpha_cos),
                                  tape.add(tape.scale(con_part, cfg.alpha_con),
                                           tape.scale(bce_part, cfg.alpha_bce)));
    return weighted;
}

}  // namespace fedfr

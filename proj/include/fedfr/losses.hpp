#pragma once

#include <optional>
#include <vector>

#include "fedfr/tensor.hpp"

namespace fedfr {

struct LossConfig {
    double scale = 30.0;            // s
    double margin = 0.4;            // m, additive cosine margin
    double temperature = 0.5;       // tau
    double lambda = 0.7;            // positive/negative balance in the BCE
    double bce_scale = 30.0;        // s'
    double bce_margin = 0.4;        // m'
    double range_exponent = 3.0;    // t', dynamic-range exponent of g
    double alpha_cos = 1.0;         // weight of the classification term
    double alpha_con = 5.0;         // weight of the contrastive term
    double alpha_bce = 10.0;        // weight of the personalization term

    void validate() const;
};

// Additive-margin softmax cross-entropy over cosine logits, mean-reduced over
// the batch. features: d x B on the tape; labels index proxy columns.
Tape::Var cosface_batch(Tape& tape, Tape::Var features, const std::vector<int>& labels,
                        Tape::Var proxies, const LossConfig& cfg);

// Single-sample convenience wrapper.
Tape::Var cosface_loss(Tape& tape, Tape::Var f, int label, Tape::Var proxies,
                       const LossConfig& cfg);

// Cosface over the concatenation [global_phi | local_w]; labels for globally
// shared classes lie in [0, K_g), private local classes are offset by K_g.
// K_g = 0 reduces exactly to cosface over local_w.
Tape::Var balanced_cosface_batch(Tape& tape, Tape::Var features, const std::vector<int>& labels,
                                 Tape::Var local_w, Tape::Var global_phi, const LossConfig& cfg);
Tape::Var balanced_cosface_loss(Tape& tape, Tape::Var f, int label, Tape::Var local_w,
                                Tape::Var global_phi, const LossConfig& cfg);

// -log( e^{sim(f,f_glob)/tau} / (e^{sim(f,f_glob)/tau} + e^{sim(f,f_prev)/tau}) ).
// glob/prev feature columns are constants (frozen models); gradient flows
// through `features` only. Frozen columns need not be pre-normalized.
Tape::Var contrastive_batch(Tape& tape, Tape::Var features, const Matrix& glob_features,
                            const Matrix& prev_features, double temperature);
Tape::Var contrastive_loss(Tape& tape, Tape::Var f, const Vector& f_glob, const Vector& f_prev,
                           double temperature);

// Margin-based one-vs-all binary cross-entropy of the personalization branch.
// labels[b] = local class index, or nullopt for a shared-global sample which
// contributes negative terms to every branch. transformed: d' x B on the tape.
Tape::Var dfc_bce_batch(Tape& tape, Tape::Var transformed,
                        const std::vector<std::optional<int>>& labels, Tape::Var omega,
                        Tape::Var bias, const LossConfig& cfg);
Tape::Var dfc_bce_loss(Tape& tape, Tape::Var f_prime, std::optional<int> label, Tape::Var omega,
                       Tape::Var bias, const LossConfig& cfg);

// alpha_cos * L_cos + alpha_con * L_con + alpha_bce * L_bce.
Tape::Var total_loss(Tape& tape, Tape::Var cos_part, Tape::Var con_part, Tape::Var bce_part,
                     const LossConfig& cfg);

}  // namespace fedfr

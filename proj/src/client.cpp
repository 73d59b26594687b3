#include "fedfr/client.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedfr {

std::optional<int> ClientState::local_class(int identity) const {
    const auto it = std::lower_bound(identities.begin(), identities.end(), identity);
    if (it == identities.end() || *it != identity) return std::nullopt;
    return static_cast<int>(it - identities.begin());
}

std::vector<int> select_hard_negatives(const Dataset& data, const std::vector<int>& global_train,
                                       const std::vector<int>& local_train,
                                       const BackboneParams& theta_g, double threshold) {
    if (local_train.empty()) throw DegenerateInputError("select_hard_negatives: empty local data");
    if (!(threshold > -1.0 && threshold < 1.0)) {
        throw DegenerateInputError("select_hard_negatives: threshold must be in (-1, 1)");
    }
    if (global_train.empty()) return {};

    const int d_in = theta_g.input_dim;
    Matrix gx(d_in, static_cast<Eigen::Index>(global_train.size()));
    for (std::size_t i = 0; i < global_train.size(); ++i) {
        gx.col(static_cast<Eigen::Index>(i)) = data.samples[global_train[i]].x;
    }
    Matrix lx(d_in, static_cast<Eigen::Index>(local_train.size()));
    for (std::size_t i = 0; i < local_train.size(); ++i) {
        lx.col(static_cast<Eigen::Index>(i)) = data.samples[local_train[i]].x;
    }
    const Matrix ghat = l2_normalize_columns(embed_batch(theta_g, gx));
    const Matrix lhat = l2_normalize_columns(embed_batch(theta_g, lx));

    std::vector<int> selected;
    for (Eigen::Index i = 0; i < ghat.cols(); ++i) {
        bool hard = false;
        for (Eigen::Index j = 0; j < lhat.cols() && !hard; ++j) {
            hard = ghat.col(i).dot(lhat.col(j)) > threshold;
        }
        if (hard) selected.push_back(global_train[static_cast<std::size_t>(i)]);
    }
    return selected;
}

namespace {

struct SampleMeta {
    int dataset_index;
    int balanced_label;             // index into [phi | W] (or W when K_g = 0)
    std::optional<int> dfc_label;   // local class or nullopt for shared samples
};

void sgd_update(Matrix& param, const Matrix& grad, double lr, double wd) {
    param -= lr * (grad + wd * param);
}

}  // namespace

void local_train_round(ClientState& state, const Dataset& data, const BackboneParams& theta_g,
                       const Matrix& phi_g, const std::vector<int>& hard_negatives, int epochs,
                       int batch_size, const LossConfig& cfg, const TrainFlags& flags, int round,
                       std::uint64_t run_seed) {
    if (state.train_indices.empty()) {
        throw DegenerateInputError("local_train_round: client " + std::to_string(state.id) +
                                   " has no local data");
    }
    if (batch_size < 1) throw DegenerateInputError("local_train_round: batch_size must be >= 1");

    // Algorithm line: adopt the broadcast global models for this round.
    state.backbone = theta_g;
    state.shared_proxies = phi_g;
    const int k_g = flags.use_shared_data ? static_cast<int>(phi_g.cols()) : 0;

    // Build the training pool: local data plus selected shared-global data.
    std::vector<SampleMeta> pool;
    pool.reserve(state.train_indices.size() + hard_negatives.size());
    for (int idx : state.train_indices) {
        const int identity = data.samples[idx].identity;
        const auto local = state.local_class(identity);
        if (!local) {
            throw DegenerateInputError("local_train_round: sample identity not registered on client");
        }
        pool.push_back({idx, k_g + *local, local});
    }
    if (flags.use_shared_data) {
        for (int idx : hard_negatives) {
            const int identity = data.samples[idx].identity;
            // shared-global identities occupy proxy columns [0, K_g)
            if (identity < 0 || identity >= k_g) {
                throw DegenerateInputError("local_train_round: hard negative with non-global identity");
            }
            pool.push_back({idx, identity, std::nullopt});
        }
    }

    // Frozen features for the contrastive term, fixed for the whole round.
    Matrix glob_features, prev_features;
    if (flags.use_contrastive) {
        Matrix X(data.input_dim, static_cast<Eigen::Index>(pool.size()));
        for (std::size_t i = 0; i < pool.size(); ++i) {
            X.col(static_cast<Eigen::Index>(i)) = data.samples[pool[i].dataset_index].x;
        }
        glob_features = embed_batch(theta_g, X);
        // Round 0 has no previous local model; fall back to the global one.
        prev_features = state.prev_backbone ? embed_batch(*state.prev_backbone, X) : glob_features;
    }

    const int n = static_cast<int>(pool.size());
    std::vector<int> order(pool.size());
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(derive_seed(run_seed, {0x10c4, static_cast<std::uint64_t>(round),
                                       static_cast<std::uint64_t>(state.id),
                                       static_cast<std::uint64_t>(epoch)}));
        // Fisher-Yates over the union of local and shared samples.
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        for (int start = 0; start < n; start += batch_size) {
            const int b = std::min(batch_size, n - start);
            Matrix X(data.input_dim, b);
            Matrix glob_b, prev_b;
            if (flags.use_contrastive) {
                glob_b.resize(glob_features.rows(), b);
                prev_b.resize(prev_features.rows(), b);
            }
            std::vector<int> balanced_labels(static_cast<std::size_t>(b));
            std::vector<std::optional<int>> dfc_labels(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                const SampleMeta& meta = pool[static_cast<std::size_t>(order[start + i])];
                X.col(i) = data.samples[meta.dataset_index].x;
                balanced_labels[static_cast<std::size_t>(i)] = meta.balanced_label;
                dfc_labels[static_cast<std::size_t>(i)] = meta.dfc_label;
                if (flags.use_contrastive) {
                    glob_b.col(i) = glob_features.col(order[start + i]);
                    prev_b.col(i) = prev_features.col(order[start + i]);
                }
            }

            Tape tape;
            tape.reserve(96);
            std::vector<Tape::Var> weights, biases;
            for (const auto& layer : state.backbone.layers) {
                weights.push_back(tape.input(layer.weight));
                biases.push_back(tape.input(layer.bias));
            }
            Tape::Var x_const = tape.constant(X);
            Tape::Var features = embed_batch_taped(tape, weights, biases, x_const);

            Tape::Var w_var = tape.input(state.private_proxies.columns);
            Tape::Var phi_var{-1};
            Tape::Var cos_part{-1};
            if (flags.use_shared_data && k_g > 0) {
                phi_var = tape.input(state.shared_proxies);
                cos_part = balanced_cosface_batch(tape, features, balanced_labels, w_var, phi_var, cfg);
            } else {
                cos_part = cosface_batch(tape, features, balanced_labels, w_var, cfg);
            }

            Tape::Var con_part = flags.use_contrastive
                                     ? contrastive_batch(tape, features, glob_b, prev_b,
                                                         cfg.temperature)
                                     : tape.scalar_constant(0.0);

            Tape::Var pi_w{-1}, pi_b{-1}, omega_var{-1}, bias_var{-1};
            Tape::Var bce_part{-1};
            if (flags.use_dfc) {
                pi_w = tape.input(state.dfc.transform);
                pi_b = tape.input(state.dfc.transform_bias);
                omega_var = tape.input(state.dfc.omega);
                bias_var = tape.scalar_input(state.dfc.bias);
                Tape::Var transformed = dfc_transform_taped(tape, pi_w, pi_b, features);
                bce_part = dfc_bce_batch(tape, transformed, dfc_labels, omega_var, bias_var, cfg);
            } else {
                bce_part = tape.scalar_constant(0.0);
            }

            Tape::Var loss = total_loss(tape, cos_part, con_part, bce_part, cfg);
            const double loss_value = tape.scalar(loss);
            if (!std::isfinite(loss_value)) {
                throw NumericError("non-finite loss at client " + std::to_string(state.id) +
                                   " round " + std::to_string(round) + " epoch " +
                                   std::to_string(epoch) + " batch offset " + std::to_string(start));
            }
            tape.backward(loss);

            const double lr = state.learning_rate;
            const double wd = state.weight_decay;
            for (std::size_t l = 0; l < state.backbone.layers.size(); ++l) {
                sgd_update(state.backbone.layers[l].weight, tape.gradient(weights[l]), lr, wd);
                Vector bg = tape.gradient(biases[l]).col(0);
                state.backbone.layers[l].bias -= lr * bg;
            }
            sgd_update(state.private_proxies.columns, tape.gradient(w_var), lr, wd);
            if (flags.use_shared_data && k_g > 0) {
                sgd_update(state.shared_proxies, tape.gradient(phi_var), lr, wd);
            }
            if (flags.use_dfc) {
                sgd_update(state.dfc.transform, tape.gradient(pi_w), lr, wd);
                Vector pbg = tape.gradient(pi_b).col(0);
                state.dfc.transform_bias -= lr * pbg;
                sgd_update(state.dfc.omega, tape.gradient(omega_var), lr, wd);
                state.dfc.bias -= lr * tape.gradient(bias_var)(0, 0);
            }
        }
    }

    // This round's result becomes Theta^{t-1} for the next round's contrastive term.
    state.prev_backbone = state.backbone;
}

UploadPayload upload_payload(const ClientState& state) {
    UploadPayload payload;
    payload.backbone = state.backbone;
    payload.shared_proxies = state.shared_proxies;
    payload.sample_count = static_cast<std::int64_t>(state.train_indices.size());
    return payload;
}

}  // namespace fedfr

#include "fedfr/server.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace fedfr {

namespace {

void check_payloads(const std::vector<UploadPayload>& payloads) {
    if (payloads.empty()) throw DegenerateInputError("fedavg: empty payload list");
    std::int64_t total = 0;
    for (const auto& p : payloads) {
        if (p.sample_count <= 0) throw DegenerateInputError("fedavg: non-positive sample count");
        total += p.sample_count;
        if (!p.backbone.same_shape(payloads.front().backbone)) {
            throw DimensionError("fedavg: backbone shape mismatch across payloads");
        }
        if (p.shared_proxies.rows() != payloads.front().shared_proxies.rows() ||
            p.shared_proxies.cols() != payloads.front().shared_proxies.cols()) {
            throw DimensionError("fedavg: proxy shape mismatch across payloads (K_g columns required)");
        }
    }
    if (total <= 0) throw DegenerateInputError("fedavg: zero total weight");
}

// p <- p + w * (q - p0), elementwise over every tensor.
void accumulate_weighted(BackboneParams& acc, const BackboneParams& anchor,
                         const BackboneParams& q, double w) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        acc.layers[l].weight += w * (q.layers[l].weight - anchor.layers[l].weight);
        acc.layers[l].bias += w * (q.layers[l].bias - anchor.layers[l].bias);
    }
}

void run_parallel(int count, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

BackboneParams fedavg_backbones(const std::vector<UploadPayload>& payloads) {
    check_payloads(payloads);
    std::int64_t total = 0;
    for (const auto& p : payloads) total += p.sample_count;

    const BackboneParams& anchor = payloads.front().backbone;
    BackboneParams acc = anchor;
    for (const auto& p : payloads) {
        const double w = static_cast<double>(p.sample_count) / static_cast<double>(total);
        accumulate_weighted(acc, anchor, p.backbone, w);
    }
    return acc;
}

Matrix fedavg_proxies(const std::vector<UploadPayload>& payloads) {
    check_payloads(payloads);
    std::int64_t total = 0;
    for (const auto& p : payloads) total += p.sample_count;

    const Matrix& anchor = payloads.front().shared_proxies;
    Matrix acc = anchor;
    for (const auto& p : payloads) {
        const double w = static_cast<double>(p.sample_count) / static_cast<double>(total);
        acc += w * (p.shared_proxies - anchor);
    }
    return acc;
}

void central_train_cosface(BackboneParams& backbone, Matrix& proxies, const Dataset& data,
                           const std::vector<int>& indices, const std::vector<int>& labels,
                           int epochs, int batch_size, double lr, double weight_decay,
                           const LossConfig& cfg, std::uint64_t seed) {
    if (indices.empty()) throw DegenerateInputError("central_train_cosface: no training samples");
    if (indices.size() != labels.size()) {
        throw DimensionError("central_train_cosface: one label per sample required");
    }
    const int n = static_cast<int>(indices.size());
    std::vector<int> order(indices.size());
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(derive_seed(seed, {0xCE27, static_cast<std::uint64_t>(epoch)}));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        for (int start = 0; start < n; start += batch_size) {
            const int b = std::min(batch_size, n - start);
            Matrix X(data.input_dim, b);
            std::vector<int> batch_labels(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                const int k = order[static_cast<std::size_t>(start + i)];
                X.col(i) = data.samples[indices[static_cast<std::size_t>(k)]].x;
                batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(k)];
            }

            Tape tape;
            tape.reserve(32);
            std::vector<Tape::Var> weights, biases;
            for (const auto& layer : backbone.layers) {
                weights.push_back(tape.input(layer.weight));
                biases.push_back(tape.input(layer.bias));
            }
            Tape::Var x_const = tape.constant(X);
            Tape::Var features = embed_batch_taped(tape, weights, biases, x_const);
            Tape::Var proxy_var = tape.input(proxies);
            Tape::Var loss = cosface_batch(tape, features, batch_labels, proxy_var, cfg);
            if (!std::isfinite(tape.scalar(loss))) {
                throw NumericError("central_train_cosface: non-finite loss at epoch " +
                                   std::to_string(epoch));
            }
            tape.backward(loss);
            for (std::size_t l = 0; l < backbone.layers.size(); ++l) {
                backbone.layers[l].weight -=
                    lr * (tape.gradient(weights[l]) + weight_decay * backbone.layers[l].weight);
                backbone.layers[l].bias -= lr * tape.gradient(biases[l]).col(0);
            }
            proxies -= lr * (tape.gradient(proxy_var) + weight_decay * proxies);
        }
    }
}

EvalSettings eval_settings(const ExperimentConfig& cfg) {
    return {cfg.eval.far_levels, cfg.eval.fpir_levels, cfg.eval.imposter_cap};
}

namespace {

// When no shared identities exist there is nothing to evaluate generically.
EvalReport unsupported_report(const EvalSettings& settings) {
    EvalReport report;
    for (double l : settings.far_levels) report.verification.points.push_back({l, 0.0, 0.0, false});
    for (double l : settings.fpir_levels) {
        report.identification.points.push_back({l, 0.0, 0.0, false});
    }
    return report;
}

EvalReport generic_eval_or_empty(const BackboneParams& theta, const PartitionedData& pd,
                                 const EvalSettings& settings, std::uint64_t seed) {
    if (pd.global_eval.empty()) return unsupported_report(settings);
    return generic_eval(theta, pd, settings, seed);
}

}  // namespace

PreparedRun prepare_run(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedRun run;
    Dataset ds = generate_identities(cfg.data.k_total, cfg.data.n_per_id, cfg.data.input_dim,
                                     cfg.data.sigma_intra, derive_seed(cfg.seed, {0xDA7A}));
    run.pd = partition(std::move(ds), cfg.data.k_global, cfg.data.clients, cfg.data.k_local,
                       cfg.data.train_fraction);

    run.theta0 = BackboneParams::seeded(cfg.data.input_dim, cfg.model.hidden_dims,
                                        cfg.model.embed_dim, derive_seed(cfg.seed, {0x7E7A}));
    run.phi0 =
        ClassEmbeddings::seeded(cfg.model.embed_dim, cfg.data.k_global, ProxyRole::Global,
                                derive_seed(cfg.seed, {0x5217}))
            .columns;

    if (cfg.data.k_global > 0 && cfg.federation.pretrain_epochs > 0) {
        std::vector<int> labels;
        labels.reserve(run.pd.global_train.size());
        for (int idx : run.pd.global_train) labels.push_back(run.pd.data.samples[idx].identity);
        central_train_cosface(run.theta0, run.phi0, run.pd.data, run.pd.global_train, labels,
                              cfg.federation.pretrain_epochs, cfg.federation.batch_size,
                              cfg.federation.learning_rate, cfg.federation.weight_decay, cfg.loss,
                              derive_seed(cfg.seed, {0x93E7}));
    }
    return run;
}

FederationResult run_federation(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                int threads, const RoundHook& hook) {
    cfg.validate();
    const PartitionedData& pd = prepared.pd;
    const int client_count = cfg.data.clients;
    const EvalSettings settings = eval_settings(cfg);

    FederationResult result;
    result.theta_g = prepared.theta0;
    result.phi_g = prepared.phi0;

    result.clients.resize(static_cast<std::size_t>(client_count));
    for (int c = 0; c < client_count; ++c) {
        ClientState& state = result.clients[static_cast<std::size_t>(c)];
        state.id = c;
        state.train_indices = pd.client_train[static_cast<std::size_t>(c)];
        state.eval_indices = pd.client_eval[static_cast<std::size_t>(c)];
        state.identities = pd.part.client_ids[static_cast<std::size_t>(c)];
        std::sort(state.identities.begin(), state.identities.end());
        state.private_proxies = ClassEmbeddings::seeded(
            cfg.model.embed_dim, static_cast<int>(state.identities.size()), ProxyRole::Local,
            derive_seed(cfg.seed, {0x77, static_cast<std::uint64_t>(c)}));
        state.dfc =
            DfcBranch::seeded(cfg.model.embed_dim, cfg.model.dfc_dim,
                              static_cast<int>(state.identities.size()),
                              derive_seed(cfg.seed, {0xDFC, static_cast<std::uint64_t>(c)}));
        // warm-start each binary-classifier weight vector at its identity's
        // mean pre-trained feature (the transform starts at the identity map,
        // so transformed and raw features coincide at round 0)
        for (std::size_t k = 0; k < state.identities.size(); ++k) {
            Vector acc = Vector::Zero(cfg.model.embed_dim);
            int count = 0;
            for (int idx : state.train_indices) {
                if (pd.data.samples[idx].identity != state.identities[k]) continue;
                acc += embed(prepared.theta0, pd.data.samples[idx].x);
                ++count;
            }
            if (count > 0 && acc.norm() > kNormEpsilon) {
                state.dfc.omega.col(static_cast<Eigen::Index>(k)) = l2_normalize(acc);
            }
        }
        state.backbone = prepared.theta0;
        state.shared_proxies = prepared.phi0;
        state.learning_rate = cfg.federation.learning_rate;
        state.weight_decay = cfg.federation.weight_decay;
    }

    result.pretrain_generic = generic_eval_or_empty(result.theta_g, pd, settings, cfg.seed);
    result.pretrain_personalized = personalized_eval(result.clients, result.theta_g, pd,
                                                     PersonalModel::Global, settings, cfg.seed);

    const TrainFlags flags{cfg.ablation.use_shared_data, cfg.ablation.use_contrastive,
                           cfg.ablation.use_dfc};
    const PersonalModel personal_choice =
        cfg.ablation.use_dfc ? PersonalModel::LocalDfc : PersonalModel::Local;

    for (int round = 0; round < cfg.federation.rounds; ++round) {
        // broadcast copies; clients must not observe each other's updates
        const BackboneParams theta_broadcast = result.theta_g;
        const Matrix phi_broadcast = result.phi_g;

        std::vector<UploadPayload> payloads(static_cast<std::size_t>(client_count));
        std::vector<std::size_t> hn_counts(static_cast<std::size_t>(client_count), 0);
        run_parallel(client_count, threads, [&](int c) {
            ClientState& state = result.clients[static_cast<std::size_t>(c)];
            std::vector<int> hard_negatives;
            if (cfg.ablation.use_shared_data) {
                if (cfg.ablation.use_hard_negatives) {
                    hard_negatives = select_hard_negatives(
                        pd.data, pd.global_train, state.train_indices, theta_broadcast,
                        cfg.federation.hard_negative_threshold);
                } else {
                    hard_negatives = pd.global_train;
                }
            }
            hn_counts[static_cast<std::size_t>(c)] = hard_negatives.size();
            local_train_round(state, pd.data, theta_broadcast, phi_broadcast, hard_negatives,
                              cfg.federation.local_epochs, cfg.federation.batch_size, cfg.loss,
                              flags, round, cfg.seed);
            payloads[static_cast<std::size_t>(c)] = upload_payload(state);
        });

        // aggregate in ascending client-id order (payloads are id-indexed)
        result.theta_g = fedavg_backbones(payloads);
        result.phi_g = fedavg_proxies(payloads);

        RoundMetrics metrics;
        metrics.round = round;
        metrics.generic = generic_eval_or_empty(result.theta_g, pd, settings, cfg.seed);
        metrics.personalized = personalized_eval(result.clients, result.theta_g, pd,
                                                 personal_choice, settings, cfg.seed);
        double hn_sum = 0.0;
        for (std::size_t c = 0; c < hn_counts.size(); ++c) hn_sum += static_cast<double>(hn_counts[c]);
        metrics.mean_hard_negatives = hn_sum / static_cast<double>(client_count);
        result.history.push_back(std::move(metrics));

        if (hook) hook(round, result.theta_g, result.phi_g);
    }
    return result;
}

}  // namespace fedfr

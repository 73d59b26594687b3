#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedfr/data.hpp"
#include "fedfr/losses.hpp"
#include "fedfr/model.hpp"

namespace fedfr {

struct TrainFlags {
    bool use_shared_data = true;
    bool use_contrastive = true;
    bool use_dfc = true;
};

struct ClientState {
    int id = 0;
    std::vector<int> train_indices;  // indices into the shared dataset
    std::vector<int> eval_indices;
    std::vector<int> identities;  // this client's K_l global identity ids, ascending

    ClassEmbeddings private_proxies;  // W, d x K_l; never leaves the client
    DfcBranch dfc;                    // Pi, Omega, b; never leaves the client

    BackboneParams backbone;                      // Theta^t_l
    std::optional<BackboneParams> prev_backbone;  // Theta^{t-1}_l; empty before round 0
    Matrix shared_proxies;                        // Phi^t_l, d x K_g

    double learning_rate = 1e-3;
    double weight_decay = 5e-4;

    // Local class index of a sample's identity, or nullopt if not registered here.
    std::optional<int> local_class(int identity) const;
};

// The upload is the entire privacy surface: backbone, the K_g shared proxy
// columns, and the sample count. W, Pi, Omega, b, samples and features stay local.
struct UploadPayload {
    BackboneParams backbone;
    Matrix shared_proxies;
    std::int64_t sample_count = 0;
};

// Selects exactly the global training samples whose max cosine similarity (in
// theta_g feature space) to any local training sample exceeds threshold.
// Deterministic; result preserves global_train order.
std::vector<int> select_hard_negatives(const Dataset& data, const std::vector<int>& global_train,
                                       const std::vector<int>& local_train,
                                       const BackboneParams& theta_g, double threshold);

// One communication round of local training: installs theta_g/phi_g, runs
// `epochs` of seeded-shuffled minibatch SGD over D_l union hard_negatives with
// the flag-selected objective, then records the trained backbone as the next
// round's previous model. Throws NumericError with diagnostics if the loss
// goes non-finite.
void local_train_round(ClientState& state, const Dataset& data, const BackboneParams& theta_g,
                       const Matrix& phi_g, const std::vector<int>& hard_negatives, int epochs,
                       int batch_size, const LossConfig& cfg, const TrainFlags& flags, int round,
                       std::uint64_t run_seed);

UploadPayload upload_payload(const ClientState& state);

}  // namespace fedfr

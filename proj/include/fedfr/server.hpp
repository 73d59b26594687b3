#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedfr/client.hpp"
#include "fedfr/config.hpp"
#include "fedfr/eval.hpp"

namespace fedfr {

// Weighted parameter average over client uploads (weights N_l / N), summed in
// payload order. The sum is anchored at the first payload so that aggregating
// identical payloads returns them bit-exactly.
BackboneParams fedavg_backbones(const std::vector<UploadPayload>& payloads);
Matrix fedavg_proxies(const std::vector<UploadPayload>& payloads);

struct RoundMetrics {
    int round = 0;
    EvalReport generic;
    EvalReport personalized;
    double mean_hard_negatives = 0.0;  // mean |D_HN| across clients this round
};

struct FederationResult {
    BackboneParams theta_g;
    Matrix phi_g;
    std::vector<ClientState> clients;
    EvalReport pretrain_generic;
    EvalReport pretrain_personalized;
    std::vector<RoundMetrics> history;  // exactly T entries
};

struct PreparedRun {
    PartitionedData pd;
    BackboneParams theta0;  // pre-trained global backbone
    Matrix phi0;            // pre-trained global proxies, d x K_g
};

// Cosface-only minibatch SGD on (backbone, proxies); used for server
// pre-training and the centrally-trained reference.
void central_train_cosface(BackboneParams& backbone, Matrix& proxies, const Dataset& data,
                           const std::vector<int>& indices, const std::vector<int>& labels,
                           int epochs, int batch_size, double lr, double weight_decay,
                           const LossConfig& cfg, std::uint64_t seed);

// Generates + partitions the dataset and pre-trains the global model on the
// shared split. Independent of the ablation flags, so one prepared run can
// seed several federated configurations.
PreparedRun prepare_run(const ExperimentConfig& cfg);

using RoundHook =
    std::function<void(int round, const BackboneParams& theta_g, const Matrix& phi_g)>;

// T rounds of broadcast -> parallel client training -> aggregate, recording
// generic and personalized metrics each round.
FederationResult run_federation(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                int threads = 1, const RoundHook& hook = nullptr);

EvalSettings eval_settings(const ExperimentConfig& cfg);

}  // namespace fedfr

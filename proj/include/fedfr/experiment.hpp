#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "fedfr/metrics.hpp"
#include "fedfr/server.hpp"

namespace fedfr {

struct RunOutput {
    FederationResult result;
    std::string csv_text;
};

// Full experiment: prepare (generate + pretrain) then federate; no file I/O.
RunOutput run_experiment(const ExperimentConfig& cfg, int threads);

// Same, reusing an existing prepared run (shared pretrained model).
RunOutput run_experiment_prepared(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                  int threads);

// Ablation ladder: FedAvg baseline -> +HN shared data -> +contrastive -> +DFC,
// plus the centrally trained reference, all from one prepared run.
struct AblationEntry {
    std::string label;
    AblationFlags flags;
    EvalReport generic;
    EvalReport personalized;
};

struct AblationOutcome {
    EvalReport pretrain_generic;
    EvalReport pretrain_personalized;
    std::vector<AblationEntry> rows;
    EvalReport central_generic;
    EvalReport central_personalized;
};

std::vector<AblationFlags> ablation_ladder();

AblationOutcome run_ablation(const ExperimentConfig& base, int threads);
void print_ablation_table(std::ostream& os, const ExperimentConfig& base,
                          const AblationOutcome& outcome);

// Hard-negative threshold sweep: one full federated run per threshold.
struct HnSweepEntry {
    double threshold = 0.0;
    double mean_hard_negatives = 0.0;  // mean |D_HN| per client per round
    double generic_tar = 0.0;          // final-round TAR at the first FAR level
    EvalReport final_generic;
};

struct HnSweepOutcome {
    std::vector<HnSweepEntry> entries;
};

HnSweepOutcome run_hn_sweep(const ExperimentConfig& base, const std::vector<double>& thresholds,
                            int threads);
std::string hn_sweep_csv_text(const ExperimentConfig& base, const HnSweepOutcome& outcome);

// Centrally trained reference: continues the pre-trained model on the union of
// the shared and all client training data with plain Cosface.
struct CentralResult {
    BackboneParams backbone;
    Matrix proxies;
    EvalReport generic;
    EvalReport personalized;
};

CentralResult run_central_reference(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                    const std::vector<ClientState>& protocol_clients);

}  // namespace fedfr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfr/losses.hpp"

namespace fedfr {

struct DataConfig {
    int k_total = 80;
    int k_global = 40;
    int clients = 8;
    int k_local = 5;
    int n_per_id = 33;
    double train_fraction = 0.6;
    int input_dim = 32;
    double sigma_intra = 0.22;
};

struct ModelConfig {
    std::vector<int> hidden_dims = {64};
    int embed_dim = 16;    // d
    int dfc_dim = 16;      // d'
};

struct FederationConfig {
    int rounds = 15;              // T
    int local_epochs = 4;         // E
    double learning_rate = 1e-3;  // mu
    double weight_decay = 5e-4;
    double hard_negative_threshold = 0.4;  // t_HN
    int batch_size = 8;
    int pretrain_epochs = 30;
    int checkpoint_interval = 0;  // 0 = final checkpoint only
};

struct EvalConfig {
    std::vector<double> far_levels = {1e-3, 1e-2};
    std::vector<double> fpir_levels = {1e-2, 1e-1};
    int imposter_cap = 20000;
};

struct AblationFlags {
    bool use_shared_data = true;
    bool use_hard_negatives = true;
    bool use_contrastive = true;
    bool use_dfc = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    DataConfig data;
    ModelConfig model;
    LossConfig loss;
    FederationConfig federation;
    EvalConfig eval;
    AblationFlags ablation;

    // Validates every field against its module's preconditions; throws
    // ConfigError naming the offending key.
    void validate() const;
};

// Strict parse: unknown keys are errors, every violation names its key path.
// An empty or whitespace-only file yields the full-default config.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& c);

// FNV-1a over the canonical serialization, as a fixed-width hex string.
std::string config_hash(const ExperimentConfig& c);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace fedfr

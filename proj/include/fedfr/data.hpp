#pragma once

#include <cstdint>
#include <vector>

#include "fedfr/common.hpp"

namespace fedfr {

enum class Split { Train, Eval };

struct FaceSample {
    Vector x;           // unit-norm input vector
    int identity = 0;   // global identity id in [0, K_total)
    Split split = Split::Train;
};

struct Dataset {
    std::vector<FaceSample> samples;
    int input_dim = 0;
    int identity_count = 0;
};

// Synthetic identities: one unit-sphere prototype per identity, samples are
// normalize(prototype + sigma_intra * gaussian noise). Deterministic under seed.
// Splits are assigned later by partition().
Dataset generate_identities(int identity_count, int samples_per_identity, int input_dim,
                            double sigma_intra, std::uint64_t seed);

struct Partition {
    std::vector<int> global_ids;               // size K_g
    std::vector<std::vector<int>> client_ids;  // C disjoint sets of size K_l
    int train_per_identity = 0;
    int eval_per_identity = 0;
};

// Sample index lists into PartitionedData::data.samples.
struct PartitionedData {
    Dataset data;  // with splits stamped
    Partition part;
    std::vector<int> global_train;
    std::vector<int> global_eval;
    std::vector<std::vector<int>> client_train;  // per client
    std::vector<std::vector<int>> client_eval;
};

// Assigns the first K_g identities to the globally shared set and K_l each to
// C clients; stamps per-identity train/eval splits by train_fraction.
PartitionedData partition(Dataset data, int k_global, int clients, int k_local,
                          double train_fraction);

}  // namespace fedfr

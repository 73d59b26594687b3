#include "fedfr/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedfr {

Dataset generate_identities(int identity_count, int samples_per_identity, int input_dim,
                            double sigma_intra, std::uint64_t seed) {
    if (identity_count < 1) throw DegenerateInputError("generate_identities: need K >= 1");
    if (samples_per_identity < 2) throw DegenerateInputError("generate_identities: need n_per_id >= 2");
    if (!(sigma_intra > 0.0 && sigma_intra < 1.0)) {
        throw DegenerateInputError("generate_identities: sigma_intra must be in (0, 1)");
    }
    if (input_dim < 2) throw DegenerateInputError("generate_identities: need input_dim >= 2");

    Dataset ds;
    ds.input_dim = input_dim;
    ds.identity_count = identity_count;
    ds.samples.reserve(static_cast<std::size_t>(identity_count) * samples_per_identity);
    // Intra-identity variation concentrates along one identity-specific
    // direction on top of an isotropic floor, mimicking subject-specific
    // appearance factors. kStructureWeight splits the noise energy; the total
    // E||noise||^2 equals sigma_intra^2 * input_dim either way.
    constexpr double kStructureWeight = 0.7;
    for (int id = 0; id < identity_count; ++id) {
        Rng rng(derive_seed(seed, {0x1d, static_cast<std::uint64_t>(id)}));
        const Vector prototype = rng.unit_vector(input_dim);
        const Vector variation_axis = rng.unit_vector(input_dim);
        const double axis_scale = std::sqrt(kStructureWeight * static_cast<double>(input_dim));
        const double floor_scale = std::sqrt(1.0 - kStructureWeight);
        for (int s = 0; s < samples_per_identity; ++s) {
            const Vector noise = axis_scale * rng.gaussian() * variation_axis +
                                 floor_scale * rng.gaussian_vector(input_dim);
            Vector x = prototype + sigma_intra * noise;
            const double n = x.norm();
            if (n <= kNormEpsilon) {
                x = prototype;  // noise cancelled the prototype; fall back to it
            } else {
                x /= n;
            }
            ds.samples.push_back({std::move(x), id, Split::Train});
        }
    }
    return ds;
}

PartitionedData partition(Dataset data, int k_global, int clients, int k_local,
                          double train_fraction) {
    if (k_global < 0 || clients < 1 || k_local < 1) {
        throw DegenerateInputError("partition: invalid counts");
    }
    if (k_global + clients * k_local > data.identity_count) {
        throw DegenerateInputError("partition: insufficient identities (" +
                                   std::to_string(data.identity_count) + " available, " +
                                   std::to_string(k_global + clients * k_local) + " required)");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DegenerateInputError("partition: train_fraction must be in (0, 1)");
    }

    PartitionedData out;
    out.part.global_ids.resize(k_global);
    for (int i = 0; i < k_global; ++i) out.part.global_ids[i] = i;
    out.part.client_ids.assign(clients, {});
    for (int c = 0; c < clients; ++c) {
        for (int j = 0; j < k_local; ++j) out.part.client_ids[c].push_back(k_global + c * k_local + j);
    }

    // per-identity split: the first round(f*n) samples train, the rest eval
    std::vector<int> seen(data.identity_count, 0);
    std::vector<int> per_id_count(data.identity_count, 0);
    for (const auto& s : data.samples) per_id_count[s.identity]++;
    std::vector<int> train_count(data.identity_count, 0);
    for (int id = 0; id < data.identity_count; ++id) {
        const int n = per_id_count[id];
        if (n == 0) continue;
        int t = static_cast<int>(std::lround(train_fraction * n));
        t = std::clamp(t, 1, n - 1);
        train_count[id] = t;
    }
    for (auto& s : data.samples) {
        s.split = (seen[s.identity]++ < train_count[s.identity]) ? Split::Train : Split::Eval;
    }
    out.part.train_per_identity = per_id_count.empty() ? 0 : train_count[0];
    out.part.eval_per_identity = per_id_count.empty() ? 0 : per_id_count[0] - train_count[0];

    std::vector<int> owner(data.identity_count, -1);  // -2 = global, >=0 client, -1 unused
    for (int id : out.part.global_ids) owner[id] = -2;
    for (int c = 0; c < clients; ++c) {
        for (int id : out.part.client_ids[c]) owner[id] = c;
    }

    out.client_train.assign(clients, {});
    out.client_eval.assign(clients, {});
    for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
        const auto& s = data.samples[i];
        const int o = owner[s.identity];
        if (o == -2) {
            (s.split == Split::Train ? out.global_train : out.global_eval).push_back(i);
        } else if (o >= 0) {
            (s.split == Split::Train ? out.client_train[o] : out.client_eval[o]).push_back(i);
        }
    }
    out.data = std::move(data);
    return out;
}

}  // namespace fedfr

#include "fedfr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace fedfr {

const OperatingPoint& MetricCurve::at_level(double level) const {
    for (const auto& p : points) {
        if (p.level == level) return p;
    }
    throw DegenerateInputError("MetricCurve: level not present");
}

namespace {

// Shared threshold search: candidates are the observed scores; the admissible
// set {t : FA(t) <= level} is a suffix of the ascending candidate list.
MetricCurve curve_from_scores(const std::vector<double>& accept_scores, std::size_t positive_total,
                              const std::vector<double>& negative_scores,
                              const std::vector<double>& levels) {
    std::vector<double> pos = accept_scores;
    std::vector<double> neg = negative_scores;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<double> candidates;
    candidates.reserve(pos.size() + neg.size());
    candidates.insert(candidates.end(), pos.begin(), pos.end());
    candidates.insert(candidates.end(), neg.begin(), neg.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const auto count_ge = [](const std::vector<double>& sorted, double t) {
        return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
    };

    MetricCurve curve;
    for (double level : levels) {
        OperatingPoint pt;
        pt.level = level;
        if (neg.empty() || positive_total == 0 || level < 1.0 / static_cast<double>(neg.size())) {
            pt.supported = false;
            pt.value = 0.0;
            pt.threshold = std::numeric_limits<double>::quiet_NaN();
            curve.points.push_back(pt);
            continue;
        }
        const auto it = std::partition_point(candidates.begin(), candidates.end(), [&](double t) {
            const double fa =
                static_cast<double>(count_ge(neg, t)) / static_cast<double>(neg.size());
            return fa > level;  // not yet admissible
        });
        if (it == candidates.end()) {
            // every candidate admits too many negatives; cannot happen once
            // level >= 1/|neg| because the largest score admits at most one
            pt.supported = false;
            pt.value = 0.0;
            pt.threshold = std::numeric_limits<double>::quiet_NaN();
        } else {
            pt.threshold = *it;
            pt.value = static_cast<double>(count_ge(pos, pt.threshold)) /
                       static_cast<double>(positive_total);
        }
        curve.points.push_back(pt);
    }
    return curve;
}

Matrix normalized_features_for(const std::vector<int>& sample_indices, const Dataset& data,
                               const std::function<Vector(const Vector&)>& embed_fn) {
    Matrix out;
    for (std::size_t i = 0; i < sample_indices.size(); ++i) {
        Vector f = l2_normalize(embed_fn(data.samples[sample_indices[i]].x));
        if (out.size() == 0) out.resize(f.size(), static_cast<Eigen::Index>(sample_indices.size()));
        out.col(static_cast<Eigen::Index>(i)) = f;
    }
    return out;
}

// Mean of each identity's train-split features, normalized; identities in
// ascending order.
void build_gallery(const std::vector<int>& identities, const std::vector<int>& train_indices,
                   const Dataset& data, const std::function<Vector(const Vector&)>& embed_fn,
                   Matrix& gallery, std::vector<int>& gallery_identities) {
    gallery_identities = identities;
    std::sort(gallery_identities.begin(), gallery_identities.end());
    gallery.resize(0, 0);
    for (std::size_t g = 0; g < gallery_identities.size(); ++g) {
        Vector acc;
        int count = 0;
        for (int idx : train_indices) {
            if (data.samples[idx].identity != gallery_identities[g]) continue;
            Vector f = embed_fn(data.samples[idx].x);
            if (count == 0) {
                acc = f;
            } else {
                acc += f;
            }
            ++count;
        }
        if (count == 0) {
            throw DegenerateInputError("gallery identity " + std::to_string(gallery_identities[g]) +
                                       " has no train samples");
        }
        Vector mean = l2_normalize(acc / static_cast<double>(count));
        if (gallery.size() == 0) {
            gallery.resize(mean.size(), static_cast<Eigen::Index>(gallery_identities.size()));
        }
        gallery.col(static_cast<Eigen::Index>(g)) = mean;
    }
}

EvalReport average_reports(const std::vector<EvalReport>& reports) {
    EvalReport mean;
    if (reports.empty()) return mean;
    mean = reports.front();
    for (std::size_t r = 1; r < reports.size(); ++r) {
        for (std::size_t p = 0; p < mean.verification.points.size(); ++p) {
            auto& m = mean.verification.points[p];
            const auto& o = reports[r].verification.points[p];
            m.value += o.value;
            m.threshold += o.threshold;
            m.supported = m.supported && o.supported;
        }
        for (std::size_t p = 0; p < mean.identification.points.size(); ++p) {
            auto& m = mean.identification.points[p];
            const auto& o = reports[r].identification.points[p];
            m.value += o.value;
            m.threshold += o.threshold;
            m.supported = m.supported && o.supported;
        }
        mean.rank1 += reports[r].rank1;
    }
    const double n = static_cast<double>(reports.size());
    for (auto& p : mean.verification.points) {
        p.value /= n;
        p.threshold /= n;
    }
    for (auto& p : mean.identification.points) {
        p.value /= n;
        p.threshold /= n;
    }
    mean.rank1 /= n;
    return mean;
}

}  // namespace

MetricCurve tar_at_far(const std::vector<double>& positive_scores,
                       const std::vector<double>& negative_scores,
                       const std::vector<double>& far_levels) {
    if (positive_scores.empty()) throw DegenerateInputError("tar_at_far: no positive scores");
    for (double l : far_levels) {
        if (!(l > 0.0 && l <= 1.0)) throw DegenerateInputError("tar_at_far: level outside (0, 1]");
    }
    return curve_from_scores(positive_scores, positive_scores.size(), negative_scores, far_levels);
}

VerificationProtocol build_verification_protocol(const std::vector<int>& identities,
                                                 std::uint64_t seed, int negative_cap) {
    VerificationProtocol proto;
    const int n = static_cast<int>(identities.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            auto& list = identities[static_cast<std::size_t>(i)] ==
                                 identities[static_cast<std::size_t>(j)]
                             ? proto.positive_pairs
                             : proto.negative_pairs;
            list.emplace_back(i, j);
        }
    }
    if (negative_cap > 0 && static_cast<int>(proto.negative_pairs.size()) > negative_cap) {
        Rng rng(seed);
        auto& pairs = proto.negative_pairs;
        for (int i = 0; i < negative_cap; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_index(pairs.size() - static_cast<std::size_t>(i)));
            std::swap(pairs[static_cast<std::size_t>(i)], pairs[j]);
        }
        pairs.resize(static_cast<std::size_t>(negative_cap));
    }
    return proto;
}

MetricCurve verification_curve(const Matrix& features, const VerificationProtocol& protocol,
                               const std::vector<double>& far_levels) {
    if (protocol.positive_pairs.empty()) {
        throw DegenerateInputError("verification_curve: no positive pairs");
    }
    std::vector<double> pos, neg;
    pos.reserve(protocol.positive_pairs.size());
    neg.reserve(protocol.negative_pairs.size());
    for (const auto& [i, j] : protocol.positive_pairs) pos.push_back(features.col(i).dot(features.col(j)));
    for (const auto& [i, j] : protocol.negative_pairs) neg.push_back(features.col(i).dot(features.col(j)));
    return curve_from_scores(pos, pos.size(), neg, far_levels);
}

IdentificationResult tpir_at_fpir(const IdentificationProtocol& protocol,
                                  const std::vector<double>& fpir_levels) {
    const Eigen::Index probes = protocol.probes.cols();
    if (protocol.gallery.cols() == 0) throw DegenerateInputError("tpir_at_fpir: empty gallery");
    if (static_cast<Eigen::Index>(protocol.probe_identities.size()) != probes) {
        throw DimensionError("tpir_at_fpir: one identity per probe required");
    }
    for (std::size_t g = 0; g < protocol.gallery_identities.size(); ++g) {
        for (std::size_t h = g + 1; h < protocol.gallery_identities.size(); ++h) {
            if (protocol.gallery_identities[g] == protocol.gallery_identities[h]) {
                throw DegenerateInputError("tpir_at_fpir: duplicate gallery identity");
            }
        }
    }

    std::vector<double> correct_scores, imposter_scores;
    std::size_t genuine_total = 0, correct_total = 0;
    for (Eigen::Index p = 0; p < probes; ++p) {
        Eigen::Index best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (Eigen::Index g = 0; g < protocol.gallery.cols(); ++g) {
            const double s = protocol.gallery.col(g).dot(protocol.probes.col(p));
            if (s > best_score) {
                best_score = s;
                best = g;
            }
        }
        const int label = protocol.probe_identities[static_cast<std::size_t>(p)];
        if (label == kImposter) {
            imposter_scores.push_back(best_score);
        } else {
            bool in_gallery = false;
            for (int gid : protocol.gallery_identities) {
                if (gid == label) in_gallery = true;
            }
            if (!in_gallery) {
                throw DegenerateInputError("tpir_at_fpir: genuine probe identity " +
                                           std::to_string(label) + " not enrolled");
            }
            ++genuine_total;
            if (protocol.gallery_identities[static_cast<std::size_t>(best)] == label) {
                ++correct_total;
                correct_scores.push_back(best_score);
            }
            // rank failures never count toward TPIR at any threshold
        }
    }
    if (genuine_total == 0) throw DegenerateInputError("tpir_at_fpir: no genuine probes");

    IdentificationResult result;
    result.rank1 = static_cast<double>(correct_total) / static_cast<double>(genuine_total);
    result.curve = curve_from_scores(correct_scores, genuine_total, imposter_scores, fpir_levels);
    return result;
}

EvalReport generic_eval(const BackboneParams& theta, const PartitionedData& pd,
                        const EvalSettings& settings, std::uint64_t seed) {
    if (pd.global_eval.empty()) throw DegenerateInputError("generic_eval: no global eval samples");
    const auto embed_fn = [&theta](const Vector& x) { return embed(theta, x); };

    // 1:1 verification over all global eval identities
    std::vector<int> labels;
    labels.reserve(pd.global_eval.size());
    for (int idx : pd.global_eval) labels.push_back(pd.data.samples[idx].identity);
    const Matrix features = normalized_features_for(pd.global_eval, pd.data, embed_fn);
    const VerificationProtocol proto =
        build_verification_protocol(labels, derive_seed(seed, {0xE7A1}), settings.imposter_cap);

    EvalReport report;
    report.verification = verification_curve(features, proto, settings.far_levels);

    // 1:N open-set: enroll the first half of the global identities; eval
    // samples of the remaining identities probe as imposters.
    const int k_g = static_cast<int>(pd.part.global_ids.size());
    const int enrolled = (k_g + 1) / 2;
    std::vector<int> gallery_ids(pd.part.global_ids.begin(), pd.part.global_ids.begin() + enrolled);

    IdentificationProtocol id_proto;
    build_gallery(gallery_ids, pd.global_train, pd.data, embed_fn, id_proto.gallery,
                  id_proto.gallery_identities);
    id_proto.probes = features;
    id_proto.probe_identities.reserve(labels.size());
    for (int identity : labels) {
        const bool in_gallery = std::binary_search(id_proto.gallery_identities.begin(),
                                                   id_proto.gallery_identities.end(), identity);
        id_proto.probe_identities.push_back(in_gallery ? identity : kImposter);
    }
    const IdentificationResult id_result = tpir_at_fpir(id_proto, settings.fpir_levels);
    report.identification = id_result.curve;
    report.rank1 = id_result.rank1;
    return report;
}

EvalReport personalized_eval(const std::vector<ClientState>& clients, const BackboneParams& theta_g,
                             const PartitionedData& pd, PersonalModel choice,
                             const EvalSettings& settings, std::uint64_t seed,
                             std::vector<EvalReport>* per_client) {
    if (clients.empty()) throw DegenerateInputError("personalized_eval: no clients");
    std::vector<EvalReport> reports;
    reports.reserve(clients.size());

    for (const ClientState& client : clients) {
        if (client.eval_indices.empty()) {
            throw DegenerateInputError("personalized_eval: client " + std::to_string(client.id) +
                                       " has no eval samples");
        }
        const auto embed_fn = [&](const Vector& x) -> Vector {
            switch (choice) {
                case PersonalModel::Global: return embed(theta_g, x);
                case PersonalModel::Local: return embed(client.backbone, x);
                case PersonalModel::LocalDfc: return personalized_embed(client.backbone, client.dfc, x);
            }
            throw DegenerateInputError("personalized_eval: unknown model choice");
        };

        // Feature table: own eval samples first, then every other client's.
        std::vector<int> table = client.eval_indices;
        const std::size_t own = table.size();
        for (const ClientState& other : clients) {
            if (other.id == client.id) continue;
            table.insert(table.end(), other.eval_indices.begin(), other.eval_indices.end());
        }
        const Matrix features = normalized_features_for(table, pd.data, embed_fn);

        // 1:1 — genuine matches within the client, imposters across clients.
        VerificationProtocol proto;
        for (std::size_t i = 0; i < own; ++i) {
            for (std::size_t j = i + 1; j < own; ++j) {
                if (pd.data.samples[table[i]].identity == pd.data.samples[table[j]].identity) {
                    proto.positive_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
                }
            }
        }
        for (std::size_t i = 0; i < own; ++i) {
            for (std::size_t j = own; j < table.size(); ++j) {
                proto.negative_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
            }
        }
        if (settings.imposter_cap > 0 &&
            static_cast<int>(proto.negative_pairs.size()) > settings.imposter_cap) {
            Rng rng(derive_seed(seed, {0x11A9, static_cast<std::uint64_t>(client.id)}));
            auto& pairs = proto.negative_pairs;
            for (int i = 0; i < settings.imposter_cap; ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(
                            rng.uniform_index(pairs.size() - static_cast<std::size_t>(i)));
                std::swap(pairs[static_cast<std::size_t>(i)], pairs[j]);
            }
            pairs.resize(static_cast<std::size_t>(settings.imposter_cap));
        }

        EvalReport report;
        report.verification = verification_curve(features, proto, settings.far_levels);

        // 1:N — gallery from the client's registered identities; probes from
        // all clients, with out-of-client identities treated as imposters.
        IdentificationProtocol id_proto;
        build_gallery(client.identities, client.train_indices, pd.data, embed_fn, id_proto.gallery,
                      id_proto.gallery_identities);
        std::vector<int> probe_table(table.begin(), table.end());
        if (settings.imposter_cap > 0 &&
            static_cast<int>(probe_table.size() - own) > settings.imposter_cap) {
            Rng rng(derive_seed(seed, {0x1D01, static_cast<std::uint64_t>(client.id)}));
            for (int i = 0; i < settings.imposter_cap; ++i) {
                const std::size_t j =
                    own + static_cast<std::size_t>(i) +
                    static_cast<std::size_t>(rng.uniform_index(probe_table.size() - own -
                                                               static_cast<std::size_t>(i)));
                std::swap(probe_table[own + static_cast<std::size_t>(i)], probe_table[j]);
            }
            probe_table.resize(own + static_cast<std::size_t>(settings.imposter_cap));
        }
        id_proto.probes = normalized_features_for(probe_table, pd.data, embed_fn);
        for (std::size_t p = 0; p < probe_table.size(); ++p) {
            const int identity = pd.data.samples[probe_table[p]].identity;
            id_proto.probe_identities.push_back(p < own ? identity : kImposter);
        }
        const IdentificationResult idr = tpir_at_fpir(id_proto, settings.fpir_levels);
        report.identification = idr.curve;
        report.rank1 = idr.rank1;
        reports.push_back(std::move(report));
    }

    if (per_client) *per_client = reports;
    return average_reports(reports);
}

}  // namespace fedfr

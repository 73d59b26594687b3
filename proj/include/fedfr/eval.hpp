#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedfr/client.hpp"
#include "fedfr/data.hpp"
#include "fedfr/model.hpp"

namespace fedfr {

struct OperatingPoint {
    double level = 0.0;      // requested FAR / FPIR
    double value = 0.0;      // achieved TAR / TPIR
    double threshold = 0.0;  // decision threshold (score >= threshold accepts)
    bool supported = true;   // false when the imposter set cannot resolve the level
};

struct MetricCurve {
    std::vector<OperatingPoint> points;

    const OperatingPoint& at_level(double level) const;
};

// For each FAR level: threshold = the smallest observed score whose
// negative-acceptance fraction is <= level (equivalently the TAR-maximizing
// admissible threshold); TAR = fraction of positives >= threshold. Levels
// below 1/|neg| are reported unsupported rather than extrapolated.
MetricCurve tar_at_far(const std::vector<double>& positive_scores,
                       const std::vector<double>& negative_scores,
                       const std::vector<double>& far_levels);

// Index-pair lists into a feature table (columns).
struct VerificationProtocol {
    std::vector<std::pair<int, int>> positive_pairs;
    std::vector<std::pair<int, int>> negative_pairs;
};

// All within-identity pairs plus a seeded, capped draw of cross-identity pairs.
VerificationProtocol build_verification_protocol(const std::vector<int>& identities,
                                                 std::uint64_t seed, int negative_cap);

MetricCurve verification_curve(const Matrix& features, const VerificationProtocol& protocol,
                               const std::vector<double>& far_levels);

constexpr int kImposter = -1;

struct IdentificationProtocol {
    Matrix gallery;                      // d x G, normalized identity templates
    std::vector<int> gallery_identities; // distinct
    Matrix probes;                       // d x P, normalized
    std::vector<int> probe_identities;   // gallery identity or kImposter
};

struct IdentificationResult {
    MetricCurve curve;   // TPIR@FPIR
    double rank1 = 0.0;  // closed-set rank-1 over genuine probes
};

// Open-set identification: a probe is accepted when its max gallery cosine
// clears the threshold; TPIR additionally requires the top-1 match to be
// correct. Thresholds per FPIR level follow the tar_at_far convention.
IdentificationResult tpir_at_fpir(const IdentificationProtocol& protocol,
                                  const std::vector<double>& fpir_levels);

struct EvalReport {
    MetricCurve verification;    // 1:1 TAR@FAR
    MetricCurve identification;  // 1:N TPIR@FPIR
    double rank1 = 0.0;
};

struct EvalSettings {
    std::vector<double> far_levels;
    std::vector<double> fpir_levels;
    int imposter_cap = 20000;
};

// Generic protocol over the held-out global eval split: 1:1 verification over
// all global eval identities; 1:N open-set with the first half of the global
// identities enrolled and the rest as imposter probes.
EvalReport generic_eval(const BackboneParams& theta, const PartitionedData& pd,
                        const EvalSettings& settings, std::uint64_t seed);

enum class PersonalModel { Global, Local, LocalDfc };

// Per-client protocols evaluated in the chosen feature space (genuine matches
// within the client, imposters drawn seeded from other clients), averaged
// unweighted across clients. per_client, when given, receives the unaveraged
// reports in client order.
EvalReport personalized_eval(const std::vector<ClientState>& clients, const BackboneParams& theta_g,
                             const PartitionedData& pd, PersonalModel choice,
                             const EvalSettings& settings, std::uint64_t seed,
                             std::vector<EvalReport>* per_client = nullptr);

}  // namespace fedfr

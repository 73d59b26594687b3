#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "fedfr/config.hpp"
#include "fedfr/server.hpp"

namespace fedfr {

// One operating point of one protocol at one round. round = -1 carries the
// pre-trained model's metrics.
struct MetricRow {
    std::string run_id;
    std::string config_hash;
    std::uint64_t seed = 0;
    int round = 0;
    std::string scope;   // generic | personalized
    std::string metric;  // tar | tpir
    double level = 0.0;
    double value = 0.0;
    double threshold = 0.0;
    bool supported = true;
};

std::string run_id_for(const ExperimentConfig& cfg);

// Shortest round-trip-exact decimal form; identical bits print identically.
std::string format_double(double v);

std::vector<MetricRow> collect_metric_rows(const ExperimentConfig& cfg,
                                           const FederationResult& result);

// Deterministic CSV: comment lines carrying run metadata (config hash, seed,
// imposter cap), a header line, then one row per operating point.
std::string metrics_csv_text(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows);

void write_text_file(const std::string& path, const std::string& text);

// Summary table mirroring the evaluation-column layout (generic 1:1 / 1:N,
// personalized 1:1 / 1:N) with one row per labelled model.
struct SummaryRow {
    std::string label;
    EvalReport generic;
    EvalReport personalized;
};

void print_summary_table(std::ostream& os, const ExperimentConfig& cfg,
                         const std::vector<SummaryRow>& rows);

}  // namespace fedfr

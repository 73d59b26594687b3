#include "fedfr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fedfr {

std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
        char fixed[40];
        std::snprintf(fixed, sizeof(fixed), "%.0f", v);
        return fixed;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // prefer the shortest representation that round-trips
    for (int precision = 1; precision <= 16; ++precision) {
        char candidate[40];
        std::snprintf(candidate, sizeof(candidate), "%.*g", precision, v);
        double parsed = 0.0;
        std::sscanf(candidate, "%lf", &parsed);
        if (parsed == v) return candidate;
    }
    return buf;
}

std::string run_id_for(const ExperimentConfig& cfg) {
    return config_hash(cfg).substr(0, 12) + "-s" + std::to_string(cfg.seed);
}

namespace {

void append_curve_rows(std::vector<MetricRow>& rows, const MetricRow& stub,
                       const std::string& scope, const std::string& metric,
                       const MetricCurve& curve) {
    for (const auto& p : curve.points) {
        MetricRow row = stub;
        row.scope = scope;
        row.metric = metric;
        row.level = p.level;
        row.value = p.value;
        row.threshold = p.threshold;
        row.supported = p.supported;
        rows.push_back(std::move(row));
    }
}

void append_report_rows(std::vector<MetricRow>& rows, const MetricRow& stub,
                        const std::string& scope, const EvalReport& report) {
    append_curve_rows(rows, stub, scope, "tar", report.verification);
    append_curve_rows(rows, stub, scope, "tpir", report.identification);
}

}  // namespace

std::vector<MetricRow> collect_metric_rows(const ExperimentConfig& cfg,
                                           const FederationResult& result) {
    std::vector<MetricRow> rows;
    MetricRow stub;
    stub.run_id = run_id_for(cfg);
    stub.config_hash = config_hash(cfg);
    stub.seed = cfg.seed;

    stub.round = -1;
    append_report_rows(rows, stub, "generic", result.pretrain_generic);
    append_report_rows(rows, stub, "personalized", result.pretrain_personalized);
    for (const auto& round : result.history) {
        stub.round = round.round;
        append_report_rows(rows, stub, "generic", round.generic);
        append_report_rows(rows, stub, "personalized", round.personalized);
    }
    return rows;
}

std::string metrics_csv_text(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows) {
    std::ostringstream os;
    os << "# config_hash=" << config_hash(cfg) << "\n";
    os << "# seed=" << cfg.seed << "\n";
    os << "# imposter_cap=" << cfg.eval.imposter_cap << "\n";
    os << "run_id,config_hash,seed,round,scope,metric,level,value,threshold\n";
    for (const auto& r : rows) {
        os << r.run_id << ',' << r.config_hash << ',' << r.seed << ',' << r.round << ',' << r.scope
           << ',' << r.metric << ',' << format_double(r.level) << ',';
        if (r.supported) {
            os << format_double(r.value) << ',' << format_double(r.threshold);
        } else {
            os << "NA,NA";
        }
        os << '\n';
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

void print_summary_table(std::ostream& os, const ExperimentConfig& cfg,
                         const std::vector<SummaryRow>& rows) {
    const auto levels_header = [&](const std::string& name, const std::vector<double>& levels) {
        std::string h;
        for (double l : levels) h += name + "@" + format_double(l) + "  ";
        return h;
    };
    os << "setup | generic 1:1 " << levels_header("TAR", cfg.eval.far_levels) << "| generic 1:N "
       << levels_header("TPIR", cfg.eval.fpir_levels) << "| personalized 1:1 "
       << levels_header("TAR", cfg.eval.far_levels) << "| personalized 1:N "
       << levels_header("TPIR", cfg.eval.fpir_levels) << "\n";
    for (const auto& row : rows) {
        os << row.label << " |";
        const auto emit_curve = [&](const MetricCurve& c) {
            for (const auto& p : c.points) {
                if (p.supported) {
                    os << ' ' << std::fixed << std::setprecision(4) << p.value;
                } else {
                    os << " NA";
                }
            }
            os.unsetf(std::ios_base::floatfield);
            os << " |";
        };
        emit_curve(row.generic.verification);
        emit_curve(row.generic.identification);
        emit_curve(row.personalized.verification);
        emit_curve(row.personalized.identification);
        os << "\n";
    }
}

}  // namespace fedfr

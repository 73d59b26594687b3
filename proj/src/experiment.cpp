#include "fedfr/experiment.hpp"

#include <iomanip>
#include <sstream>

namespace fedfr {

RunOutput run_experiment(const ExperimentConfig& cfg, int threads) {
    const PreparedRun prepared = prepare_run(cfg);
    return run_experiment_prepared(cfg, prepared, threads);
}

RunOutput run_experiment_prepared(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                  int threads) {
    RunOutput out;
    out.result = run_federation(cfg, prepared, threads);
    out.csv_text = metrics_csv_text(cfg, collect_metric_rows(cfg, out.result));
    return out;
}

std::vector<AblationFlags> ablation_ladder() {
    return {
        {false, false, false, false},  // FedAvg baseline
        {true, true, false, false},    // + HN-sampled shared data
        {true, true, true, false},     // + contrastive regularization
        {true, true, true, true},      // full configuration
    };
}

CentralResult run_central_reference(const ExperimentConfig& cfg, const PreparedRun& prepared,
                                    const std::vector<ClientState>& protocol_clients) {
    CentralResult central;
    central.backbone = prepared.theta0;

    const int k_g = cfg.data.k_global;
    const int k_all = k_g + cfg.data.clients * cfg.data.k_local;
    central.proxies = Matrix(cfg.model.embed_dim, k_all);
    if (k_g > 0) central.proxies.leftCols(k_g) = prepared.phi0;
    {
        const ClassEmbeddings fresh = ClassEmbeddings::seeded(
            cfg.model.embed_dim, k_all - k_g, ProxyRole::Global, derive_seed(cfg.seed, {0xCE11}));
        central.proxies.rightCols(k_all - k_g) = fresh.columns;
    }

    std::vector<int> indices = prepared.pd.global_train;
    for (const auto& client_train : prepared.pd.client_train) {
        indices.insert(indices.end(), client_train.begin(), client_train.end());
    }
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (int idx : indices) labels.push_back(prepared.pd.data.samples[idx].identity);

    const int epochs = cfg.federation.rounds * cfg.federation.local_epochs;
    central_train_cosface(central.backbone, central.proxies, prepared.pd.data, indices, labels,
                          epochs, cfg.federation.batch_size, cfg.federation.learning_rate,
                          cfg.federation.weight_decay, cfg.loss, derive_seed(cfg.seed, {0xCE44}));

    const EvalSettings settings = eval_settings(cfg);
    central.generic = generic_eval(central.backbone, prepared.pd, settings, cfg.seed);
    central.personalized = personalized_eval(protocol_clients, central.backbone, prepared.pd,
                                             PersonalModel::Global, settings, cfg.seed);
    return central;
}

AblationOutcome run_ablation(const ExperimentConfig& base, int threads) {
    const PreparedRun prepared = prepare_run(base);
    AblationOutcome outcome;

    const std::vector<std::string> labels = {"fedavg baseline", "+ hn shared data",
                                             "+ contrastive", "full (dfc)"};
    const auto ladder = ablation_ladder();
    const std::vector<ClientState>* protocol_clients = nullptr;
    std::vector<FederationResult> results;
    results.reserve(ladder.size());
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        ExperimentConfig cfg = base;
        cfg.ablation = ladder[i];
        FederationResult result = run_federation(cfg, prepared, threads);
        if (i == 0) {
            outcome.pretrain_generic = result.pretrain_generic;
            outcome.pretrain_personalized = result.pretrain_personalized;
        }
        AblationEntry entry;
        entry.label = labels[i];
        entry.flags = ladder[i];
        if (!result.history.empty()) {
            entry.generic = result.history.back().generic;
            entry.personalized = result.history.back().personalized;
        } else {
            entry.generic = result.pretrain_generic;
            entry.personalized = result.pretrain_personalized;
        }
        outcome.rows.push_back(std::move(entry));
        results.push_back(std::move(result));
    }
    protocol_clients = &results.front().clients;

    const CentralResult central = run_central_reference(base, prepared, *protocol_clients);
    outcome.central_generic = central.generic;
    outcome.central_personalized = central.personalized;
    return outcome;
}

void print_ablation_table(std::ostream& os, const ExperimentConfig& base,
                          const AblationOutcome& outcome) {
    std::vector<SummaryRow> rows;
    rows.push_back({"pretrained", outcome.pretrain_generic, outcome.pretrain_personalized});
    for (const auto& entry : outcome.rows) {
        rows.push_back({entry.label, entry.generic, entry.personalized});
    }
    rows.push_back({"central reference", outcome.central_generic, outcome.central_personalized});
    print_summary_table(os, base, rows);
}

HnSweepOutcome run_hn_sweep(const ExperimentConfig& base, const std::vector<double>& thresholds,
                            int threads) {
    ExperimentConfig cfg = base;
    cfg.ablation.use_shared_data = true;
    cfg.ablation.use_hard_negatives = true;
    const PreparedRun prepared = prepare_run(cfg);

    HnSweepOutcome outcome;
    for (double t : thresholds) {
        ExperimentConfig sweep_cfg = cfg;
        sweep_cfg.federation.hard_negative_threshold = t;
        sweep_cfg.validate();
        const FederationResult result = run_federation(sweep_cfg, prepared, threads);

        HnSweepEntry entry;
        entry.threshold = t;
        double hn_sum = 0.0;
        for (const auto& round : result.history) hn_sum += round.mean_hard_negatives;
        entry.mean_hard_negatives =
            result.history.empty() ? 0.0 : hn_sum / static_cast<double>(result.history.size());
        entry.final_generic =
            result.history.empty() ? result.pretrain_generic : result.history.back().generic;
        entry.generic_tar = entry.final_generic.verification.points.back().value;
        outcome.entries.push_back(std::move(entry));
    }
    return outcome;
}

std::string hn_sweep_csv_text(const ExperimentConfig& base, const HnSweepOutcome& outcome) {
    std::ostringstream os;
    os << "# config_hash=" << config_hash(base) << "\n";
    os << "# seed=" << base.seed << "\n";
    os << "t_hn,mean_hard_negatives,generic_tar\n";
    for (const auto& e : outcome.entries) {
        os << format_double(e.threshold) << ',' << format_double(e.mean_hard_negatives) << ','
           << format_double(e.generic_tar) << '\n';
    }
    return os.str();
}

}  // namespace fedfr

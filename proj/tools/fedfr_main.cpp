#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfr/checkpoint.hpp"
#include "fedfr/experiment.hpp"
#include "fedfr/gradcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // generic / criterion failure
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CommonOptions {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

fedfr::ExperimentConfig load(const CommonOptions& opt) {
    fedfr::ExperimentConfig cfg;
    if (!opt.config_path.empty()) cfg = fedfr::load_config(opt.config_path);
    if (opt.seed_set) {
        cfg.seed = opt.seed;
        cfg.validate();
    }
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw fedfr::IoError("cannot create output directory '" + dir + "': " + ec.message());
}

int cmd_run(const CommonOptions& opt) {
    const fedfr::ExperimentConfig cfg = load(opt);
    ensure_out_dir(opt.out_dir);

    const fedfr::PreparedRun prepared = fedfr::prepare_run(cfg);
    const int interval = cfg.federation.checkpoint_interval;
    const fedfr::RoundHook hook = [&](int round, const fedfr::BackboneParams& theta,
                                      const fedfr::Matrix& phi) {
        if (interval > 0 && (round + 1) % interval == 0) {
            fedfr::save_global_checkpoint(
                opt.out_dir + "/global_round" + std::to_string(round) + ".ckpt", theta, phi);
        }
    };
    fedfr::FederationResult result = fedfr::run_federation(cfg, prepared, opt.threads, hook);

    const auto rows = fedfr::collect_metric_rows(cfg, result);
    fedfr::write_text_file(opt.out_dir + "/metrics.csv", fedfr::metrics_csv_text(cfg, rows));
    fedfr::save_global_checkpoint(opt.out_dir + "/global.ckpt", result.theta_g, result.phi_g);
    std::vector<fedfr::ClientCheckpoint> client_ckpts;
    for (const auto& c : result.clients) {
        client_ckpts.push_back({c.backbone, c.dfc.transform, c.dfc.transform_bias});
    }
    fedfr::save_clients_checkpoint(opt.out_dir + "/clients.ckpt", client_ckpts);
    fedfr::save_dataset(opt.out_dir + "/dataset.bin", prepared.pd.data);

    std::vector<fedfr::SummaryRow> table;
    table.push_back({"pretrained", result.pretrain_generic, result.pretrain_personalized});
    if (!result.history.empty()) {
        table.push_back({"federated (final)", result.history.back().generic,
                         result.history.back().personalized});
    }
    fedfr::print_summary_table(std::cout, cfg, table);
    std::cout << "metrics: " << opt.out_dir << "/metrics.csv\n";
    return kExitOk;
}

int cmd_ablate(const CommonOptions& opt) {
    const fedfr::ExperimentConfig cfg = load(opt);
    ensure_out_dir(opt.out_dir);
    const fedfr::AblationOutcome outcome = fedfr::run_ablation(cfg, opt.threads);
    fedfr::print_ablation_table(std::cout, cfg, outcome);

    std::ostringstream csv;
    csv << "# config_hash=" << fedfr::config_hash(cfg) << "\n";
    csv << "setup,scope,metric,level,value\n";
    const auto emit = [&](const std::string& label, const fedfr::EvalReport& generic,
                          const fedfr::EvalReport& personalized) {
        for (const auto& p : generic.verification.points) {
            csv << label << ",generic,tar," << fedfr::format_double(p.level) << ','
                << (p.supported ? fedfr::format_double(p.value) : "NA") << '\n';
        }
        for (const auto& p : generic.identification.points) {
            csv << label << ",generic,tpir," << fedfr::format_double(p.level) << ','
                << (p.supported ? fedfr::format_double(p.value) : "NA") << '\n';
        }
        for (const auto& p : personalized.verification.points) {
            csv << label << ",personalized,tar," << fedfr::format_double(p.level) << ','
                << (p.supported ? fedfr::format_double(p.value) : "NA") << '\n';
        }
        for (const auto& p : personalized.identification.points) {
            csv << label << ",personalized,tpir," << fedfr::format_double(p.level) << ','
                << (p.supported ? fedfr::format_double(p.value) : "NA") << '\n';
        }
    };
    emit("pretrained", outcome.pretrain_generic, outcome.pretrain_personalized);
    for (const auto& row : outcome.rows) emit(row.label, row.generic, row.personalized);
    emit("central", outcome.central_generic, outcome.central_personalized);
    fedfr::write_text_file(opt.out_dir + "/ablation.csv", csv.str());
    std::cout << "table: " << opt.out_dir << "/ablation.csv\n";
    return kExitOk;
}

int cmd_gradcheck(const CommonOptions& opt) {
    const fedfr::ExperimentConfig cfg = load(opt);
    const auto results = fedfr::run_gradient_checks(cfg.seed, 100);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  instances=" << r.instances
                  << "  max_rel_error=" << fedfr::format_double(r.max_rel_error) << "\n";
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitNumeric;
}

int cmd_hn_sweep(const CommonOptions& opt, std::vector<double>& thresholds) {
    const fedfr::ExperimentConfig cfg = load(opt);
    ensure_out_dir(opt.out_dir);
    if (thresholds.empty()) thresholds = {0.0, 0.2, 0.4, 0.6};
    const fedfr::HnSweepOutcome outcome = fedfr::run_hn_sweep(cfg, thresholds, opt.threads);
    std::cout << "t_hn  mean|D_HN|  generic_tar@" << fedfr::format_double(cfg.eval.far_levels.back())
              << "\n";
    for (const auto& e : outcome.entries) {
        std::cout << fedfr::format_double(e.threshold) << "  "
                  << fedfr::format_double(e.mean_hard_negatives) << "  "
                  << fedfr::format_double(e.generic_tar) << "\n";
    }
    fedfr::write_text_file(opt.out_dir + "/hn_sweep.csv", fedfr::hn_sweep_csv_text(cfg, outcome));
    std::cout << "table: " << opt.out_dir << "/hn_sweep.csv\n";
    return kExitOk;
}

int cmd_eval(const CommonOptions& opt, const std::string& checkpoint_path,
             const std::string& clients_path) {
    const fedfr::ExperimentConfig cfg = load(opt);
    ensure_out_dir(opt.out_dir);

    const fedfr::GlobalCheckpoint ckpt = fedfr::load_global_checkpoint(checkpoint_path);
    if (ckpt.backbone.input_dim != cfg.data.input_dim ||
        ckpt.backbone.embed_dim != cfg.model.embed_dim) {
        throw fedfr::ShapeMismatchError("checkpoint dims disagree with config (input_dim/embed_dim)");
    }

    fedfr::ExperimentConfig data_cfg = cfg;
    fedfr::Dataset ds = fedfr::generate_identities(
        data_cfg.data.k_total, data_cfg.data.n_per_id, data_cfg.data.input_dim,
        data_cfg.data.sigma_intra, fedfr::derive_seed(data_cfg.seed, {0xDA7A}));
    fedfr::PartitionedData pd =
        fedfr::partition(std::move(ds), data_cfg.data.k_global, data_cfg.data.clients,
                         data_cfg.data.k_local, data_cfg.data.train_fraction);

    const fedfr::EvalSettings settings{cfg.eval.far_levels, cfg.eval.fpir_levels,
                                       cfg.eval.imposter_cap};
    std::vector<fedfr::SummaryRow> table;
    fedfr::EvalReport generic = fedfr::generic_eval(ckpt.backbone, pd, settings, cfg.seed);

    fedfr::EvalReport personalized;
    if (!clients_path.empty()) {
        const auto client_ckpts = fedfr::load_clients_checkpoint(clients_path);
        if (static_cast<int>(client_ckpts.size()) != cfg.data.clients) {
            throw fedfr::ShapeMismatchError("clients checkpoint count disagrees with config");
        }
        std::vector<fedfr::ClientState> clients(client_ckpts.size());
        for (std::size_t c = 0; c < client_ckpts.size(); ++c) {
            clients[c].id = static_cast<int>(c);
            clients[c].train_indices = pd.client_train[c];
            clients[c].eval_indices = pd.client_eval[c];
            clients[c].identities = pd.part.client_ids[c];
            clients[c].backbone = client_ckpts[c].backbone;
            clients[c].dfc.transform = client_ckpts[c].pi_weight;
            clients[c].dfc.transform_bias = client_ckpts[c].pi_bias;
            clients[c].dfc.omega = fedfr::Matrix::Zero(client_ckpts[c].pi_weight.cols(),
                                                       static_cast<Eigen::Index>(
                                                           clients[c].identities.size()));
        }
        personalized = fedfr::personalized_eval(clients, ckpt.backbone, pd,
                                                fedfr::PersonalModel::LocalDfc, settings, cfg.seed);
        table.push_back({"checkpoint", generic, personalized});
    } else {
        fedfr::EvalReport empty;
        for (double l : cfg.eval.far_levels) empty.verification.points.push_back({l, 0, 0, false});
        for (double l : cfg.eval.fpir_levels) empty.identification.points.push_back({l, 0, 0, false});
        table.push_back({"checkpoint", generic, empty});
    }
    fedfr::print_summary_table(std::cout, cfg, table);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated face-recognition simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonOptions opt;
    app.add_option("--config", opt.config_path, "experiment config file (JSON)");
    app.add_option("--out-dir", opt.out_dir, "output directory");
    app.add_option("--threads", opt.threads, "worker thread cap")->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", opt.seed, "override the config seed");

    auto* run = app.add_subcommand("run", "train the federation and emit metrics");
    auto* ablate = app.add_subcommand("ablate", "run the module ablation ladder");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    auto* hn_sweep = app.add_subcommand("hn-sweep", "hard-negative threshold sweep");
    std::vector<double> thresholds;
    hn_sweep->add_option("--thresholds", thresholds, "t_HN values to sweep");
    auto* eval = app.add_subcommand("eval", "re-evaluate a saved checkpoint");
    std::string checkpoint_path, clients_path;
    eval->add_option("--checkpoint", checkpoint_path, "global checkpoint file")->required();
    eval->add_option("--clients", clients_path, "per-client checkpoint file");

    try {
        app.parse(argc, argv);
        opt.seed_set = seed_opt->count() > 0;
        if (run->parsed()) return cmd_run(opt);
        if (ablate->parsed()) return cmd_ablate(opt);
        if (gradcheck->parsed()) return cmd_gradcheck(opt);
        if (hn_sweep->parsed()) return cmd_hn_sweep(opt, thresholds);
        if (eval->parsed()) return cmd_eval(opt, checkpoint_path, clients_path);
        return kExitFailure;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const fedfr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fedfr::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const fedfr::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fedfr::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fedfr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

#include "fedfr/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fedfr {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& path,
                  const std::vector<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const auto& k : allowed) {
            if (it.key() == k) known = true;
        }
        if (!known) {
            throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
        }
    }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path.empty() ? key : path + "." + key, e.what());
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    const auto& d = data;
    if (d.k_total < 1) throw ConfigError("data.k_total", "must be >= 1");
    if (d.k_global < 0) throw ConfigError("data.k_global", "must be >= 0");
    if (d.clients < 1) throw ConfigError("data.clients", "must be >= 1");
    if (d.k_local < 1) throw ConfigError("data.k_local", "must be >= 1");
    if (d.k_global + d.clients * d.k_local > d.k_total) {
        throw ConfigError("data.k_total", "smaller than k_global + clients * k_local");
    }
    if (d.n_per_id < 2) throw ConfigError("data.n_per_id", "must be >= 2");
    if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) {
        throw ConfigError("data.train_fraction", "must be in (0, 1)");
    }
    if (d.input_dim < 2) throw ConfigError("data.input_dim", "must be >= 2");
    if (!(d.sigma_intra > 0.0 && d.sigma_intra < 1.0)) {
        throw ConfigError("data.sigma_intra", "must be in (0, 1)");
    }

    if (model.embed_dim < 1) throw ConfigError("model.embed_dim", "must be >= 1");
    if (model.dfc_dim < 1) throw ConfigError("model.dfc_dim", "must be >= 1");
    for (int h : model.hidden_dims) {
        if (h < 1) throw ConfigError("model.hidden_dims", "entries must be >= 1");
    }

    loss.validate();

    const auto& f = federation;
    if (f.rounds < 0) throw ConfigError("federation.rounds", "must be >= 0");
    if (f.local_epochs < 1) throw ConfigError("federation.local_epochs", "must be >= 1");
    if (!(f.learning_rate >= 0.0)) throw ConfigError("federation.learning_rate", "must be >= 0");
    if (!(f.weight_decay >= 0.0)) throw ConfigError("federation.weight_decay", "must be >= 0");
    if (!(f.hard_negative_threshold > -1.0 && f.hard_negative_threshold < 1.0)) {
        throw ConfigError("federation.hard_negative_threshold", "must be in (-1, 1)");
    }
    if (f.batch_size < 1) throw ConfigError("federation.batch_size", "must be >= 1");
    if (f.pretrain_epochs < 0) throw ConfigError("federation.pretrain_epochs", "must be >= 0");
    if (f.checkpoint_interval < 0) throw ConfigError("federation.checkpoint_interval", "must be >= 0");

    if (eval.far_levels.empty()) throw ConfigError("eval.far_levels", "must not be empty");
    for (double l : eval.far_levels) {
        if (!(l > 0.0 && l <= 1.0)) throw ConfigError("eval.far_levels", "levels must be in (0, 1]");
    }
    for (std::size_t i = 1; i < eval.far_levels.size(); ++i) {
        if (!(eval.far_levels[i] > eval.far_levels[i - 1])) {
            throw ConfigError("eval.far_levels", "levels must be strictly increasing");
        }
    }
    if (eval.fpir_levels.empty()) throw ConfigError("eval.fpir_levels", "must not be empty");
    for (double l : eval.fpir_levels) {
        if (!(l > 0.0 && l <= 1.0)) throw ConfigError("eval.fpir_levels", "levels must be in (0, 1]");
    }
    for (std::size_t i = 1; i < eval.fpir_levels.size(); ++i) {
        if (!(eval.fpir_levels[i] > eval.fpir_levels[i - 1])) {
            throw ConfigError("eval.fpir_levels", "levels must be strictly increasing");
        }
    }
    if (eval.imposter_cap < 1) throw ConfigError("eval.imposter_cap", "must be >= 1");

    if (ablation.use_hard_negatives && !ablation.use_shared_data) {
        throw ConfigError("ablation.use_hard_negatives", "requires use_shared_data");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    bool blank = true;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
    }
    if (blank) {
        c.validate();
        return c;
    }

    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("<root>", std::string("syntax error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("<root>", "top level must be an object");

    require_keys(root, "", {"seed", "data", "model", "loss", "federation", "eval", "ablation"});
    read_field(root, "", "seed", c.seed);

    if (root.contains("data")) {
        const json& o = root.at("data");
        require_keys(o, "data",
                     {"k_total", "k_global", "clients", "k_local", "n_per_id", "train_fraction",
                      "input_dim", "sigma_intra"});
        read_field(o, "data", "k_total", c.data.k_total);
        read_field(o, "data", "k_global", c.data.k_global);
        read_field(o, "data", "clients", c.data.clients);
        read_field(o, "data", "k_local", c.data.k_local);
        read_field(o, "data", "n_per_id", c.data.n_per_id);
        read_field(o, "data", "train_fraction", c.data.train_fraction);
        read_field(o, "data", "input_dim", c.data.input_dim);
        read_field(o, "data", "sigma_intra", c.data.sigma_intra);
    }
    if (root.contains("model")) {
        const json& o = root.at("model");
        require_keys(o, "model", {"hidden_dims", "embed_dim", "dfc_dim"});
        read_field(o, "model", "hidden_dims", c.model.hidden_dims);
        read_field(o, "model", "embed_dim", c.model.embed_dim);
        read_field(o, "model", "dfc_dim", c.model.dfc_dim);
    }
    if (root.contains("loss")) {
        const json& o = root.at("loss");
        require_keys(o, "loss",
                     {"s", "m", "tau", "lambda", "s_prime", "m_prime", "t_prime", "alpha1",
                      "alpha2", "alpha3"});
        read_field(o, "loss", "s", c.loss.scale);
        read_field(o, "loss", "m", c.loss.margin);
        read_field(o, "loss", "tau", c.loss.temperature);
        read_field(o, "loss", "lambda", c.loss.lambda);
        read_field(o, "loss", "s_prime", c.loss.bce_scale);
        read_field(o, "loss", "m_prime", c.loss.bce_margin);
        read_field(o, "loss", "t_prime", c.loss.range_exponent);
        read_field(o, "loss", "alpha1", c.loss.alpha_cos);
        read_field(o, "loss", "alpha2", c.loss.alpha_con);
        read_field(o, "loss", "alpha3", c.loss.alpha_bce);
    }
    if (root.contains("federation")) {
        const json& o = root.at("federation");
        require_keys(o, "federation",
                     {"rounds", "local_epochs", "learning_rate", "weight_decay",
                      "hard_negative_threshold", "batch_size", "pretrain_epochs",
                      "checkpoint_interval"});
        read_field(o, "federation", "rounds", c.federation.rounds);
        read_field(o, "federation", "local_epochs", c.federation.local_epochs);
        read_field(o, "federation", "learning_rate", c.federation.learning_rate);
        read_field(o, "federation", "weight_decay", c.federation.weight_decay);
        read_field(o, "federation", "hard_negative_threshold",
                   c.federation.hard_negative_threshold);
        read_field(o, "federation", "batch_size", c.federation.batch_size);
        read_field(o, "federation", "pretrain_epochs", c.federation.pretrain_epochs);
        read_field(o, "federation", "checkpoint_interval", c.federation.checkpoint_interval);
    }
    if (root.contains("eval")) {
        const json& o = root.at("eval");
        require_keys(o, "eval", {"far_levels", "fpir_levels", "imposter_cap"});
        read_field(o, "eval", "far_levels", c.eval.far_levels);
        read_field(o, "eval", "fpir_levels", c.eval.fpir_levels);
        read_field(o, "eval", "imposter_cap", c.eval.imposter_cap);
    }
    if (root.contains("ablation")) {
        const json& o = root.at("ablation");
        require_keys(o, "ablation",
                     {"use_shared_data", "use_hard_negatives", "use_contrastive", "use_dfc"});
        read_field(o, "ablation", "use_shared_data", c.ablation.use_shared_data);
        read_field(o, "ablation", "use_hard_negatives", c.ablation.use_hard_negatives);
        read_field(o, "ablation", "use_contrastive", c.ablation.use_contrastive);
        read_field(o, "ablation", "use_dfc", c.ablation.use_dfc);
    }

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json root;
    root["seed"] = c.seed;
    root["data"] = {{"k_total", c.data.k_total},
                    {"k_global", c.data.k_global},
                    {"clients", c.data.clients},
                    {"k_local", c.data.k_local},
                    {"n_per_id", c.data.n_per_id},
                    {"train_fraction", c.data.train_fraction},
                    {"input_dim", c.data.input_dim},
                    {"sigma_intra", c.data.sigma_intra}};
    root["model"] = {{"hidden_dims", c.model.hidden_dims},
                     {"embed_dim", c.model.embed_dim},
                     {"dfc_dim", c.model.dfc_dim}};
    root["loss"] = {{"s", c.loss.scale},           {"m", c.loss.margin},
                    {"tau", c.loss.temperature},   {"lambda", c.loss.lambda},
                    {"s_prime", c.loss.bce_scale}, {"m_prime", c.loss.bce_margin},
                    {"t_prime", c.loss.range_exponent}, {"alpha1", c.loss.alpha_cos},
                    {"alpha2", c.loss.alpha_con},  {"alpha3", c.loss.alpha_bce}};
    root["federation"] = {{"rounds", c.federation.rounds},
                          {"local_epochs", c.federation.local_epochs},
                          {"learning_rate", c.federation.learning_rate},
                          {"weight_decay", c.federation.weight_decay},
                          {"hard_negative_threshold", c.federation.hard_negative_threshold},
                          {"batch_size", c.federation.batch_size},
                          {"pretrain_epochs", c.federation.pretrain_epochs},
                          {"checkpoint_interval", c.federation.checkpoint_interval}};
    root["eval"] = {{"far_levels", c.eval.far_levels},
                    {"fpir_levels", c.eval.fpir_levels},
                    {"imposter_cap", c.eval.imposter_cap}};
    root["ablation"] = {{"use_shared_data", c.ablation.use_shared_data},
                        {"use_hard_negatives", c.ablation.use_hard_negatives},
                        {"use_contrastive", c.ablation.use_contrastive},
                        {"use_dfc", c.ablation.use_dfc}};
    return root.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& c) {
    const std::string s = serialize_config(c);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

}  // namespace fedfr

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fedfr/config.hpp"

using fedfr::ExperimentConfig;

TEST_SUITE_BEGIN("config");

TEST_CASE("empty file yields the full-default config") {
    const ExperimentConfig parsed = fedfr::parse_config_text("");
    const ExperimentConfig defaults;
    CHECK(parsed == defaults);
    CHECK(fedfr::parse_config_text("  \n\t ") == defaults);
}

TEST_CASE("unknown keys are rejected with their path") {
    try {
        fedfr::parse_config_text(R"({"federation": {"rouns": 3}})");
        FAIL("expected ConfigError");
    } catch (const fedfr::ConfigError& e) {
        CHECK(e.key == "federation.rouns");
    }
    try {
        fedfr::parse_config_text(R"({"bogus": 1})");
        FAIL("expected ConfigError");
    } catch (const fedfr::ConfigError& e) {
        CHECK(e.key == "bogus");
    }
}

TEST_CASE("constraint violations name the offending key") {
    try {
        fedfr::parse_config_text(R"({"loss": {"m": 1.5}})");
        FAIL("expected ConfigError");
    } catch (const fedfr::ConfigError& e) {
        CHECK(e.key == "loss.m");
    }
    try {
        fedfr::parse_config_text(R"({"data": {"k_total": 10}})");
        FAIL("expected ConfigError");
    } catch (const fedfr::ConfigError& e) {
        CHECK(e.key == "data.k_total");
    }
    try {
        fedfr::parse_config_text(
            R"({"ablation": {"use_shared_data": false, "use_hard_negatives": true}})");
        FAIL("expected ConfigError");
    } catch (const fedfr::ConfigError& e) {
        CHECK(e.key == "ablation.use_hard_negatives");
    }
}

TEST_CASE("syntax errors and bad types are config errors") {
    CHECK_THROWS_AS(fedfr::parse_config_text("{ not json"), fedfr::ConfigError);
    CHECK_THROWS_AS(fedfr::parse_config_text("[1,2,3]"), fedfr::ConfigError);
    CHECK_THROWS_AS(fedfr::parse_config_text(R"({"seed": "abc"})"), fedfr::ConfigError);
}

TEST_CASE("missing file is an I/O error") {
    CHECK_THROWS_AS(fedfr::load_config("definitely_missing_config.json"), fedfr::IoError);
}

TEST_CASE("serialize/parse round trip preserves the config") {
    ExperimentConfig cfg;
    cfg.seed = 99;
    cfg.data.k_total = 30;
    cfg.data.k_global = 10;
    cfg.data.clients = 4;
    cfg.data.k_local = 5;
    cfg.model.hidden_dims = {24, 20};
    cfg.loss.margin = 0.35;
    cfg.federation.rounds = 7;
    cfg.eval.far_levels = {0.001, 0.01, 0.1};
    cfg.ablation.use_dfc = false;

    const std::string text = fedfr::serialize_config(cfg);
    const ExperimentConfig parsed = fedfr::parse_config_text(text);
    CHECK(parsed == cfg);
    CHECK(fedfr::config_hash(parsed) == fedfr::config_hash(cfg));
}

TEST_CASE("config hash changes with any field") {
    ExperimentConfig a;
    ExperimentConfig b;
    b.seed = 2;
    CHECK(fedfr::config_hash(a) != fedfr::config_hash(b));
    ExperimentConfig c;
    c.loss.margin = 0.39;
    CHECK(fedfr::config_hash(a) != fedfr::config_hash(c));
}

TEST_CASE("defaults reproduce the published hyperparameters") {
    const ExperimentConfig cfg;
    CHECK(cfg.loss.scale == 30.0);
    CHECK(cfg.loss.margin == 0.4);
    CHECK(cfg.loss.temperature == 0.5);
    CHECK(cfg.loss.lambda == 0.7);
    CHECK(cfg.loss.bce_scale == 30.0);
    CHECK(cfg.loss.bce_margin == 0.4);
    CHECK(cfg.loss.range_exponent == 3.0);
    CHECK(cfg.loss.alpha_cos == 1.0);
    CHECK(cfg.loss.alpha_con == 5.0);
    CHECK(cfg.loss.alpha_bce == 10.0);
    CHECK(cfg.federation.local_epochs == 4);
    CHECK(cfg.federation.learning_rate == 1e-3);
    CHECK(cfg.federation.weight_decay == 5e-4);
    CHECK(cfg.federation.hard_negative_threshold == 0.4);
}

TEST_SUITE_END();

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fedfr/checkpoint.hpp"
#include "fedfr/model.hpp"
#include "oracles.hpp"

using fedfr::BackboneParams;
using fedfr::DfcBranch;
using fedfr::Matrix;
using fedfr::Rng;
using fedfr::Vector;

namespace {

std::string temp_path(const char* name) {
    return std::string("fedfr_test_") + name + ".bin";
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("embed: zero weights give zero output") {
    const BackboneParams theta = BackboneParams::zeros(4, {3}, 2);
    Vector x(4);
    x << 1, -2, 3, 0.5;
    CHECK(fedfr::embed(theta, x) == Vector::Zero(2));
}

TEST_CASE("embed: single identity layer is the identity map") {
    BackboneParams theta = BackboneParams::zeros(3, {}, 3);
    theta.layers[0].weight = Matrix::Identity(3, 3);
    Vector x(3);
    x << 0.3, -0.7, 1.1;
    CHECK(fedfr::embed(theta, x) == x);
}

TEST_CASE("embed: 2-layer seeded net matches the straight-line oracle exactly") {
    const BackboneParams theta = BackboneParams::seeded(6, {5}, 4, 0);
    Vector x = Vector::Zero(6);
    x[0] = 1.0;  // e1
    CHECK(fedfr::embed(theta, x) == oracles::straight_line_forward(theta, x));

    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector xr = rng.gaussian_vector(6);
        CHECK(fedfr::embed(theta, xr) == oracles::straight_line_forward(theta, xr));
    }
}

TEST_CASE("embed is deterministic and batch-consistent") {
    const BackboneParams theta = BackboneParams::seeded(5, {4}, 3, 42);
    Rng rng(9);
    const Vector x = rng.gaussian_vector(5);
    const Vector f1 = fedfr::embed(theta, x);
    const Vector f2 = fedfr::embed(theta, x);
    CHECK(f1 == f2);

    Matrix batch(5, 3);
    batch << x, x, x;
    const Matrix fb = fedfr::embed_batch(theta, batch);
    for (int j = 0; j < 3; ++j) CHECK(fb.col(j) == f1);
}

TEST_CASE("embed rejects dimension mismatch") {
    const BackboneParams theta = BackboneParams::zeros(4, {}, 2);
    CHECK_THROWS_AS(fedfr::embed(theta, Vector::Zero(3)), fedfr::DimensionError);
}

TEST_CASE("dfc_transform: identity, zero transform, matmul oracle") {
    DfcBranch branch;
    branch.transform = Matrix::Identity(3, 3);
    branch.transform_bias = Vector::Zero(3);
    branch.omega = Matrix::Identity(3, 3);
    Vector f(3);
    f << 0.2, -0.4, 0.9;
    CHECK(fedfr::dfc_transform(branch, f) == f);

    branch.transform = Matrix::Zero(3, 3);
    branch.transform_bias << 1, 2, 3;
    CHECK(fedfr::dfc_transform(branch, f) == branch.transform_bias);

    const DfcBranch seeded = DfcBranch::seeded(4, 3, 2, 0);
    const Vector ones = Vector::Ones(4);
    const Vector expected =
        fedfr::matmul(seeded.transform.transpose(), ones) + seeded.transform_bias;
    CHECK(fedfr::dfc_transform(seeded, ones) == expected);
}

TEST_CASE("dfc_transform is linear modulo bias") {
    const DfcBranch branch = DfcBranch::seeded(5, 4, 3, 17);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector f1 = rng.gaussian_vector(5);
        const Vector f2 = rng.gaussian_vector(5);
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-2.0, 2.0);
        const Vector lhs = fedfr::dfc_transform(branch, a * f1 + b * f2) - branch.transform_bias;
        const Vector rhs = a * (fedfr::dfc_transform(branch, f1) - branch.transform_bias) +
                           b * (fedfr::dfc_transform(branch, f2) - branch.transform_bias);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("personalized_embed composes embed and the transform") {
    const BackboneParams theta = BackboneParams::seeded(4, {4}, 3, 5);
    DfcBranch branch;
    branch.transform = Matrix::Identity(3, 3);
    branch.transform_bias = Vector::Zero(3);
    branch.omega = Matrix::Identity(3, 3);
    Rng rng(6);
    const Vector x = rng.gaussian_vector(4);
    CHECK(fedfr::personalized_embed(theta, branch, x) == fedfr::embed(theta, x));

    // zero backbone: output is the transform bias regardless of input
    const BackboneParams zero = BackboneParams::zeros(4, {4}, 3);
    branch.transform_bias << 0.5, -1.0, 2.0;
    CHECK(fedfr::personalized_embed(zero, branch, x) == branch.transform_bias);
    CHECK(fedfr::personalized_embed(zero, branch, 3.0 * x) == branch.transform_bias);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const BackboneParams theta = BackboneParams::seeded(6, {5}, 4, 99);
    const Matrix phi = fedfr::ClassEmbeddings::seeded(4, 7, fedfr::ProxyRole::Global, 1).columns;
    const std::string path = temp_path("roundtrip");
    fedfr::save_global_checkpoint(path, theta, phi);
    const fedfr::GlobalCheckpoint loaded = fedfr::load_global_checkpoint(path);
    REQUIRE(loaded.backbone.layers.size() == theta.layers.size());
    for (std::size_t i = 0; i < theta.layers.size(); ++i) {
        CHECK(loaded.backbone.layers[i].weight == theta.layers[i].weight);
        CHECK(loaded.backbone.layers[i].bias == theta.layers[i].bias);
    }
    CHECK(loaded.phi == phi);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: corrupted magic bytes are a malformed header") {
    const BackboneParams theta = BackboneParams::seeded(3, {}, 2, 1);
    const std::string path = temp_path("magic");
    fedfr::save_global_checkpoint(path, theta, Matrix::Zero(2, 1));
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.write("XX", 2);
    }
    CHECK_THROWS_AS(fedfr::load_global_checkpoint(path), fedfr::MalformedHeaderError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: truncated payload is reported as truncation") {
    const BackboneParams theta = BackboneParams::seeded(3, {}, 2, 1);
    const std::string path = temp_path("trunc");
    fedfr::save_global_checkpoint(path, theta, Matrix::Zero(2, 1));
    std::string bytes;
    {
        std::ifstream f(path, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        bytes = ss.str();
    }
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    }
    CHECK_THROWS_AS(fedfr::load_global_checkpoint(path), fedfr::TruncatedPayloadError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: phi dimension disagreeing with backbone is a shape error") {
    const BackboneParams theta = BackboneParams::seeded(3, {}, 2, 1);
    const std::string path = temp_path("shape");
    fedfr::save_global_checkpoint(path, theta, Matrix::Zero(5, 2));  // embed_dim is 2, not 5
    CHECK_THROWS_AS(fedfr::load_global_checkpoint(path), fedfr::ShapeMismatchError);
    std::remove(path.c_str());
}

TEST_CASE("dataset dump/load round-trip") {
    const fedfr::Dataset ds = fedfr::generate_identities(4, 3, 6, 0.2, 77);
    const std::string path = temp_path("dataset");
    fedfr::save_dataset(path, ds);
    const fedfr::Dataset loaded = fedfr::load_dataset(path);
    REQUIRE(loaded.samples.size() == ds.samples.size());
    CHECK(loaded.input_dim == ds.input_dim);
    CHECK(loaded.identity_count == ds.identity_count);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(loaded.samples[i].x == ds.samples[i].x);
        CHECK(loaded.samples[i].identity == ds.samples[i].identity);
        CHECK(loaded.samples[i].split == ds.samples[i].split);
    }
    std::remove(path.c_str());
}

TEST_SUITE_END();

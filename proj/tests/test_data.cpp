#include <doctest.h>

#include <set>

#include "fedfr/data.hpp"

using fedfr::Dataset;
using fedfr::PartitionedData;
using fedfr::Split;

TEST_SUITE_BEGIN("data");

TEST_CASE("generation: near-zero spread collapses onto the prototype") {
    const Dataset ds = fedfr::generate_identities(3, 4, 8, 1e-9, 5);
    for (int id = 0; id < 3; ++id) {
        const auto& first = ds.samples[static_cast<std::size_t>(id * 4)].x;
        for (int s = 1; s < 4; ++s) {
            const auto& x = ds.samples[static_cast<std::size_t>(id * 4 + s)].x;
            CHECK((x - first).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("generation: identical seeds give bit-identical datasets") {
    const Dataset a = fedfr::generate_identities(6, 5, 12, 0.3, 99);
    const Dataset b = fedfr::generate_identities(6, 5, 12, 0.3, 99);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].x == b.samples[i].x);
        CHECK(a.samples[i].identity == b.samples[i].identity);
    }
    const Dataset c = fedfr::generate_identities(6, 5, 12, 0.3, 100);
    CHECK(a.samples[0].x != c.samples[0].x);
}

TEST_CASE("generation: every sample is unit norm") {
    const Dataset ds = fedfr::generate_identities(10, 6, 16, 0.4, 3);
    for (const auto& s : ds.samples) CHECK(std::abs(s.x.norm() - 1.0) < 1e-9);
}

TEST_CASE("generation: intra-identity cosines exceed inter-identity cosines") {
    const Dataset ds = fedfr::generate_identities(20, 30, 16, 0.2, 7);
    double intra = 0.0, inter = 0.0;
    std::size_t intra_n = 0, inter_n = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        for (std::size_t j = i + 1; j < ds.samples.size(); ++j) {
            const double cos = ds.samples[i].x.dot(ds.samples[j].x);
            if (ds.samples[i].identity == ds.samples[j].identity) {
                intra += cos;
                ++intra_n;
            } else {
                inter += cos;
                ++inter_n;
            }
        }
    }
    CHECK(intra / static_cast<double>(intra_n) > inter / static_cast<double>(inter_n));
}

TEST_CASE("generation: invalid arguments rejected") {
    CHECK_THROWS_AS(fedfr::generate_identities(0, 4, 8, 0.2, 1), fedfr::DegenerateInputError);
    CHECK_THROWS_AS(fedfr::generate_identities(3, 1, 8, 0.2, 1), fedfr::DegenerateInputError);
    CHECK_THROWS_AS(fedfr::generate_identities(3, 4, 8, 0.0, 1), fedfr::DegenerateInputError);
    CHECK_THROWS_AS(fedfr::generate_identities(3, 4, 8, 1.5, 1), fedfr::DegenerateInputError);
}

TEST_CASE("partition: single client takes every non-global identity") {
    Dataset ds = fedfr::generate_identities(10, 4, 8, 0.2, 11);
    const PartitionedData pd = fedfr::partition(std::move(ds), 4, 1, 6, 0.5);
    REQUIRE(pd.part.client_ids.size() == 1);
    CHECK(pd.part.client_ids[0] == std::vector<int>{4, 5, 6, 7, 8, 9});
}

TEST_CASE("partition: identity sets form an exact partition") {
    Dataset ds = fedfr::generate_identities(80, 4, 8, 0.2, 13);
    const PartitionedData pd = fedfr::partition(std::move(ds), 40, 8, 5, 0.6);

    std::set<int> seen(pd.part.global_ids.begin(), pd.part.global_ids.end());
    CHECK(seen.size() == 40);
    for (const auto& ids : pd.part.client_ids) {
        for (int id : ids) {
            CHECK(seen.insert(id).second);  // no overlap with global or other clients
        }
    }
    CHECK(seen.size() == 80);  // desk-scale default: all identities used
}

TEST_CASE("partition: train/eval split follows the configured ratio") {
    Dataset ds = fedfr::generate_identities(5, 33, 8, 0.2, 17);
    const PartitionedData pd = fedfr::partition(std::move(ds), 2, 1, 3, 0.6);
    // 33 samples at 0.6 -> 20 train / 13 eval per identity
    CHECK(pd.part.train_per_identity == 20);
    CHECK(pd.part.eval_per_identity == 13);
    std::vector<int> train_count(5, 0), eval_count(5, 0);
    for (const auto& s : pd.data.samples) {
        (s.split == Split::Train ? train_count : eval_count)[s.identity]++;
    }
    for (int id = 0; id < 5; ++id) {
        CHECK(train_count[id] == 20);
        CHECK(eval_count[id] == 13);
    }
}

TEST_CASE("partition: insufficient identities rejected") {
    Dataset ds = fedfr::generate_identities(10, 4, 8, 0.2, 19);
    CHECK_THROWS_AS(fedfr::partition(std::move(ds), 4, 2, 4, 0.5), fedfr::DegenerateInputError);
}

TEST_CASE("partition: deterministic sample index lists") {
    Dataset ds1 = fedfr::generate_identities(12, 6, 8, 0.25, 23);
    Dataset ds2 = fedfr::generate_identities(12, 6, 8, 0.25, 23);
    const PartitionedData a = fedfr::partition(std::move(ds1), 4, 2, 4, 0.5);
    const PartitionedData b = fedfr::partition(std::move(ds2), 4, 2, 4, 0.5);
    CHECK(a.global_train == b.global_train);
    CHECK(a.global_eval == b.global_eval);
    CHECK(a.client_train == b.client_train);
    CHECK(a.client_eval == b.client_eval);
}

TEST_SUITE_END();

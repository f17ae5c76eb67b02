#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "metainit/episodes.hpp"
#include "metainit/network.hpp"
#include "metainit/tape.hpp"
#include "testutil.hpp"

using namespace metainit;
using testutil::TempDir;

TEST_CASE("gen_synthetic is deterministic in the seed") {
    SyntheticSpec spec{.feature_dim = 3, .n_classes = 4, .instances_per_class = 5, .seed = 9};
    ClassPool a = gen_synthetic(spec);
    ClassPool b = gen_synthetic(spec);
    REQUIRE(a.class_count() == 4);
    for (std::size_t c = 0; c < 4; ++c) CHECK(a.instances[c].data == b.instances[c].data);

    spec.seed = 10;
    ClassPool c = gen_synthetic(spec);
    CHECK(a.instances[0].data != c.instances[0].data);
}

TEST_CASE("gen_synthetic with zero spread collapses each class to its center") {
    SyntheticSpec spec{
        .feature_dim = 2, .n_classes = 3, .instances_per_class = 4, .cluster_std = 0.0, .seed = 1};
    ClassPool pool = gen_synthetic(spec);
    for (const Array& block : pool.instances)
        for (std::size_t i = 1; i < block.shape.dims[0]; ++i)
            for (std::size_t f = 0; f < 2; ++f) CHECK(block.at(i, f) == block.at(0, f));
}

TEST_CASE("gen_synthetic per-class spread approximates cluster_std") {
    SyntheticSpec spec{.feature_dim = 4,
                       .n_classes = 2,
                       .instances_per_class = 1000,
                       .cluster_std = 0.5,
                       .seed = 2};
    ClassPool pool = gen_synthetic(spec);
    for (const Array& block : pool.instances) {
        double s2 = 0.0;
        for (std::size_t f = 0; f < 4; ++f) {
            double mean = 0.0;
            for (std::size_t i = 0; i < 1000; ++i) mean += block.at(i, f);
            mean /= 1000.0;
            for (std::size_t i = 0; i < 1000; ++i) {
                const double d = block.at(i, f) - mean;
                s2 += d * d;
            }
        }
        const double std_hat = std::sqrt(s2 / (4.0 * 1000.0));
        CHECK(std::fabs(std_hat - 0.5) / 0.5 < 0.10);
    }
}

TEST_CASE("pool file round trip and error cases") {
    TempDir dir("episodes");
    SyntheticSpec spec{.feature_dim = 3, .n_classes = 5, .instances_per_class = 7, .seed = 3};
    ClassPool pool = gen_synthetic(spec, PoolRole::kTest);
    const auto path = dir / "pool.fsds";
    write_pool(pool, path);

    ClassPool in = load_pool(path, PoolRole::kTest);
    CHECK(in.feature_dim == 3);
    CHECK(in.class_ids == pool.class_ids);
    REQUIRE(in.class_count() == 5);
    for (std::size_t c = 0; c < 5; ++c) CHECK(in.instances[c].data == pool.instances[c].data);

    // header claims more classes than the file holds
    const auto bad = dir / "short.fsds";
    std::filesystem::copy_file(path, bad);
    std::filesystem::resize_file(bad, std::filesystem::file_size(bad) - 24);
    CHECK_THROWS_WITH_AS(load_pool(bad, PoolRole::kTest), doctest::Contains("ends inside"),
                         FormatError);

    const auto garbage = dir / "garbage.fsds";
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "not a dataset";
    }
    CHECK_THROWS_AS(load_pool(garbage, PoolRole::kTest), FormatError);
    CHECK_THROWS_AS(load_pool(dir / "missing.fsds", PoolRole::kTest), IoError);
}

TEST_CASE("the loader accepts a benchmark-sized pool (1200 classes)") {
    TempDir dir("episodes_big");
    ClassPool pool;
    pool.role = PoolRole::kTrain;
    pool.feature_dim = 2;
    for (std::uint32_t c = 0; c < 1200; ++c) {
        pool.class_ids.push_back(c);
        pool.instances.push_back(Array(Shape::matrix(1, 2), {double(c), double(c) + 0.5}));
    }
    const auto path = dir / "big.fsds";
    write_pool(pool, path);
    ClassPool in = load_pool(path, PoolRole::kTrain);
    CHECK(in.class_count() == 1200);
    CHECK(in.instances[777].data == std::vector<double>{777.0, 777.5});
}

TEST_CASE("sample_episode shapes, one-hot rows and split disjointness") {
    SyntheticSpec spec{.feature_dim = 6, .n_classes = 8, .instances_per_class = 12, .seed = 4};
    ClassPool pool = gen_synthetic(spec);
    Episode ep = sample_episode(pool, 2, 5, 5, 99);

    CHECK(ep.x_train.shape == Shape::matrix(10, 6));
    CHECK(ep.y_train.shape == Shape::matrix(10, 2));
    CHECK(ep.x_test.shape == Shape::matrix(10, 6));
    CHECK(ep.class_ids.size() == 2);

    for (std::size_t i = 0; i < 10; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 2; ++j) s += ep.y_train.at(i, j);
        CHECK(s == 1.0);
    }

    // no instance appears in both splits
    std::set<std::vector<double>> train_rows;
    for (std::size_t i = 0; i < 10; ++i)
        train_rows.insert({ep.x_train.data.begin() + i * 6, ep.x_train.data.begin() + (i + 1) * 6});
    for (std::size_t i = 0; i < 10; ++i) {
        std::vector<double> row(ep.x_test.data.begin() + i * 6, ep.x_test.data.begin() + (i + 1) * 6);
        CHECK(train_rows.count(row) == 0);
    }

    // determinism
    Episode again = sample_episode(pool, 2, 5, 5, 99);
    CHECK(again.x_train.data == ep.x_train.data);
    CHECK(again.y_test.data == ep.y_test.data);
    CHECK(again.class_ids == ep.class_ids);
}

TEST_CASE("sample_episode reports capacity shortfalls") {
    SyntheticSpec spec{.feature_dim = 2, .n_classes = 3, .instances_per_class = 4, .seed = 5};
    ClassPool pool = gen_synthetic(spec);
    CHECK_THROWS_WITH_AS(sample_episode(pool, 4, 1, 1, 0), doctest::Contains("pool has 3"),
                         CapacityError);
    CHECK_THROWS_WITH_AS(sample_episode(pool, 2, 3, 2, 0), doctest::Contains("needs 5"),
                         CapacityError);
}

TEST_CASE("sample_episode draws class pairs uniformly") {
    SyntheticSpec spec{.feature_dim = 2, .n_classes = 4, .instances_per_class = 3, .seed = 6};
    ClassPool pool = gen_synthetic(spec);
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> counts;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        Episode ep = sample_episode(pool, 2, 1, 1, 1000 + t);
        auto [a, b] = std::minmax(ep.class_ids[0], ep.class_ids[1]);
        counts[{a, b}] += 1;
    }
    CHECK(counts.size() == 6);
    for (const auto& [pair, n] : counts)
        CHECK(std::fabs(double(n) / trials - 1.0 / 6.0) < 0.02);
}

TEST_CASE("meta batches share one class count") {
    SyntheticSpec spec{.feature_dim = 2, .n_classes = 12, .instances_per_class = 6, .seed = 7};
    ClassPool pool = gen_synthetic(spec);

    MetaBatch fixed = sample_meta_batch(pool, 4, 5, 5, 2, 2, 11);
    CHECK(fixed.class_count == 5);
    CHECK(fixed.episodes.size() == 4);
    for (const Episode& ep : fixed.episodes) CHECK(ep.class_count == 5);

    MetaBatch ranged = sample_meta_batch(pool, 4, 2, 10, 2, 2, 12);
    for (const Episode& ep : ranged.episodes) CHECK(ep.class_count == ranged.class_count);

    CHECK_THROWS_AS(sample_meta_batch(pool, 4, 1, 5, 2, 2, 0), ValidationError);
    CHECK_THROWS_AS(sample_meta_batch(pool, 4, 6, 5, 2, 2, 0), ValidationError);
    CHECK_THROWS_AS(sample_meta_batch(pool, 4, 2, 13, 2, 2, 0), ValidationError);
}

TEST_CASE("meta batch class counts are uniform over the range") {
    SyntheticSpec spec{.feature_dim = 2, .n_classes = 10, .instances_per_class = 3, .seed = 8};
    ClassPool pool = gen_synthetic(spec);
    std::map<std::size_t, int> counts;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
        counts[sample_meta_batch(pool, 1, 2, 10, 1, 1, 5000 + t).class_count] += 1;
    CHECK(counts.size() == 9);
    for (const auto& [c, n] : counts) CHECK(std::fabs(double(n) / trials - 1.0 / 9.0) < 0.01);
}

TEST_CASE("permuting class columns together with ids keeps the uniform-head loss") {
    SyntheticSpec spec{.feature_dim = 4, .n_classes = 6, .instances_per_class = 8, .seed = 13};
    ClassPool pool = gen_synthetic(spec);
    Episode ep = sample_episode(pool, 3, 2, 2, 21);

    BackboneSpec bspec{4, {5}};
    Backbone m = init_backbone(bspec, 17);
    MasterNeuron phi = init_master(5, 19);

    auto loss_of = [&](const Array& y) {
        Tape tape;
        auto logits =
            forward_full(lift(m, tape), instantiate_head(lift(phi, tape), 3), tape.leaf(ep.x_train));
        return softmax_cross_entropy(logits, tape.leaf(y)).value();
    };

    const std::size_t perm[3] = {2, 0, 1};
    Array yp = Array::zeros(ep.y_train.shape);
    for (std::size_t i = 0; i < ep.y_train.shape.dims[0]; ++i)
        for (std::size_t j = 0; j < 3; ++j) yp.at(i, perm[j]) = ep.y_train.at(i, j);

    CHECK(loss_of(ep.y_train) == loss_of(yp));
    CHECK(loss_of(ep.y_train) == std::log(3.0));
}

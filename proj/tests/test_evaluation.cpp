#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "metainit/evaluation.hpp"
#include "testutil.hpp"

using namespace metainit;
using testutil::TempDir;

namespace {

ClassPool test_pool(std::uint64_t seed = 1) {
    SyntheticSpec spec{.feature_dim = 6,
                       .n_classes = 12,
                       .instances_per_class = 24,
                       .cluster_std = 0.5,
                       .center_scale = 1.0,
                       .seed = seed};
    return gen_synthetic(spec, PoolRole::kTest);
}

EvalInit master_init(std::uint64_t seed = 5) {
    EvalInit init;
    init.init_id = "random";
    init.method = "hidra";
    init.backbone = init_backbone(BackboneSpec{6, {8}}, seed);
    init.master = init_master(8, seed + 1);
    return init;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream is(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("a master-neuron init scores chance at step zero") {
    ClassPool pool = test_pool();
    EvalConfig cfg;
    cfg.n_tasks = 300;
    cfg.n_list = {2, 4};
    cfg.shots = 2;
    cfg.queries = 5;
    cfg.eval_steps = 0;
    cfg.eval_alpha = 0.1;
    cfg.seed = 17;

    EvalReport report = evaluate_init(master_init(), pool, cfg);
    for (std::size_t n : cfg.n_list) {
        const EvalCell* cell = report.find(n, 0);
        REQUIRE(cell != nullptr);
        // argmax ties on a uniform head resolve uniformly at random
        CHECK(std::fabs(cell->mean_acc - 1.0 / double(n)) < 0.03);
        CHECK(cell->predictions == cfg.n_tasks * n * cfg.queries);
    }
}

TEST_CASE("a static random head also scores chance at N = C") {
    ClassPool pool = test_pool(2);
    EvalInit init;
    init.init_id = "static";
    init.method = "maml";
    init.backbone = init_backbone(BackboneSpec{6, {8}}, 3);
    init.head = init_head(2, 8, 4);

    EvalConfig cfg;
    cfg.n_tasks = 300;
    cfg.n_list = {2};
    cfg.shots = 2;
    cfg.queries = 5;
    cfg.eval_steps = 0;
    cfg.eval_alpha = 0.1;
    cfg.seed = 23;
    EvalReport report = evaluate_init(init, pool, cfg);
    CHECK(std::fabs(report.cells[0].mean_acc - 0.5) < 0.05);
}

TEST_CASE("evaluation is deterministic in the seed and thread count") {
    ClassPool pool = test_pool(3);
    EvalConfig cfg;
    cfg.n_tasks = 40;
    cfg.n_list = {3};
    cfg.shots = 2;
    cfg.queries = 4;
    cfg.eval_steps = 2;
    cfg.eval_alpha = 0.2;
    cfg.seed = 29;

    EvalReport a = evaluate_init(master_init(7), pool, cfg);
    EvalReport b = evaluate_init(master_init(7), pool, cfg);
    cfg.threads = 3;
    EvalReport c = evaluate_init(master_init(7), pool, cfg);
    REQUIRE(a.cells.size() == b.cells.size());
    REQUIRE(a.cells.size() == c.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].mean_acc == b.cells[i].mean_acc);
        CHECK(a.cells[i].mean_acc == c.cells[i].mean_acc);
        CHECK(a.cells[i].std_acc == c.cells[i].std_acc);
    }
}

TEST_CASE("adaptation improves accuracy on an easy pool") {
    SyntheticSpec spec{.feature_dim = 6,
                       .n_classes = 10,
                       .instances_per_class = 24,
                       .cluster_std = 0.05,
                       .center_scale = 2.0,
                       .seed = 9};
    ClassPool pool = gen_synthetic(spec, PoolRole::kTest);
    EvalConfig cfg;
    cfg.n_tasks = 60;
    cfg.n_list = {3};
    cfg.shots = 5;
    cfg.queries = 5;
    cfg.eval_steps = 5;
    cfg.eval_alpha = 0.5;
    cfg.seed = 31;
    EvalReport report = evaluate_init(master_init(11), pool, cfg);
    const EvalCell* start = report.find(3, 0);
    const EvalCell* best = report.find(3, EvalReport::kBestStep);
    REQUIRE(start != nullptr);
    REQUIRE(best != nullptr);
    CHECK(best->mean_acc > start->mean_acc + 0.15);
}

TEST_CASE("report layout: one row per (N, step) plus a best row") {
    ClassPool pool = test_pool(4);
    EvalConfig cfg;
    cfg.n_tasks = 5;
    cfg.n_list = {2, 3, 4};
    cfg.shots = 1;
    cfg.queries = 2;
    cfg.eval_steps = 2;
    cfg.eval_alpha = 0.1;
    EvalReport report = evaluate_init(master_init(13), pool, cfg);
    CHECK(report.cells.size() == 3 * (2 + 1 + 1));
    for (std::size_t n : cfg.n_list) CHECK(report.find(n, EvalReport::kBestStep) != nullptr);
    CHECK(report.config_hash == cfg.hash());
}

TEST_CASE("static head at a foreign N: evaluate throws, sweep flags chance rows") {
    ClassPool pool = test_pool(5);
    EvalInit init;
    init.init_id = "maml5";
    init.method = "maml";
    init.backbone = init_backbone(BackboneSpec{6, {8}}, 5);
    init.head = init_head(5, 8, 6);

    EvalConfig cfg;
    cfg.n_tasks = 10;
    cfg.n_list = {5, 8};
    cfg.shots = 2;
    cfg.queries = 3;
    cfg.eval_steps = 1;
    cfg.eval_alpha = 0.1;

    CHECK_THROWS_AS(evaluate_init(init, pool, cfg), CapabilityError);

    SweepResult sweep = sweep_eval(std::vector<EvalInit>{init}, pool, cfg);
    REQUIRE(sweep.reports.size() == 1);
    CHECK(sweep.warnings.size() == 1);
    const EvalReport& r = sweep.reports[0];
    const EvalCell* ok = r.find(5, 0);
    REQUIRE(ok != nullptr);
    CHECK(ok->flag.empty());
    const EvalCell* flagged = r.find(8, 0);
    REQUIRE(flagged != nullptr);
    CHECK(flagged->flag == "static_head_mismatch");
    CHECK(flagged->mean_acc == 1.0 / 8.0);
    CHECK(r.find(8, EvalReport::kBestStep) != nullptr);
    // full row set for both class counts
    CHECK(r.cells.size() == 2 * (1 + 1 + 1));
}

TEST_CASE("neuron_copy_probe: a uniform head probes identically") {
    ClassPool pool = test_pool(6);
    MasterNeuron phi = init_master(8, 21);
    EvalInit init;
    init.init_id = "uniform";
    init.method = "maml";
    init.backbone = init_backbone(BackboneSpec{6, {8}}, 22);
    init.head = replicate_master(phi, 3);

    EvalConfig cfg;
    cfg.n_tasks = 20;
    cfg.shots = 2;
    cfg.queries = 3;
    cfg.eval_steps = 1;
    cfg.eval_alpha = 0.2;
    cfg.n_list = {3}; // probe overrides to the head's C anyway

    ProbeReport probe = neuron_copy_probe(init, pool, cfg);
    REQUIRE(probe.per_neuron.size() == 3);
    const double base = probe.baseline.find(3, EvalReport::kBestStep)->mean_acc;
    for (const EvalReport& r : probe.per_neuron)
        CHECK(r.find(3, EvalReport::kBestStep)->mean_acc == base);

    EvalInit no_head = master_init();
    CHECK_THROWS_AS(neuron_copy_probe(no_head, pool, cfg), ValidationError);
}

TEST_CASE("eval CSV schema and determinism") {
    TempDir dir("evalcsv");
    ClassPool pool = test_pool(7);
    EvalConfig cfg;
    cfg.n_tasks = 8;
    cfg.n_list = {2, 3};
    cfg.shots = 1;
    cfg.queries = 2;
    cfg.eval_steps = 1;
    cfg.eval_alpha = 0.1;
    SweepResult sweep = sweep_eval(std::vector<EvalInit>{master_init(31)}, pool, cfg);

    write_eval_csv(sweep.reports, dir / "a.csv");
    write_eval_csv(sweep.reports, dir / "b.csv");
    auto lines = read_lines(dir / "a.csv");
    CHECK(lines == read_lines(dir / "b.csv"));
    REQUIRE(!lines.empty());
    CHECK(lines[0] == "init_id,method,N,step,mean_acc,std_acc,ci95,n_tasks,seed,flag");
    CHECK(lines.size() == 1 + 2 * 3);
    for (std::size_t i = 1; i < lines.size(); ++i)
        CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 9);
}

TEST_CASE("export_head_weights round-trips through text") {
    TempDir dir("headcsv");
    Rng rng(37);
    HeadParams head{testutil::random_array(Shape::matrix(2, 3), rng),
                    testutil::random_array(Shape::vector(2), rng)};
    const auto path = dir / "head.csv";
    export_head_weights(head, path);

    auto lines = read_lines(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "w0,w1,w2,bias");
    for (std::size_t i = 0; i < 2; ++i) {
        std::stringstream ss(lines[i + 1]);
        std::string field;
        std::vector<double> row;
        while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
        REQUIRE(row.size() == 4);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(row[j] - head.weights.at(i, j)) <= 1e-12);
        CHECK(std::fabs(row[3] - head.biases.data[i]) <= 1e-12);
    }
}

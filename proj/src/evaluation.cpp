#include "metainit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace metainit {

void EvalConfig::validate() const {
    if (n_tasks < 1) throw ValidationError("eval config: n_tasks must be >= 1");
    if (n_list.empty()) throw ValidationError("eval config: empty class-count list");
    for (std::size_t n : n_list)
        if (n < 2) throw ValidationError("eval config: every N must be >= 2");
    if (shots < 1) throw ValidationError("eval config: shots must be >= 1");
    if (queries < 1) throw ValidationError("eval config: queries must be >= 1");
    if (!(eval_alpha > 0.0)) throw ValidationError("eval config: eval_alpha must be > 0");
    if (threads < 1) throw ValidationError("eval config: threads must be >= 1");
}

std::uint64_t EvalConfig::hash() const {
    std::string dump = std::to_string(n_tasks) + "|" + std::to_string(shots) + "|" +
                       std::to_string(queries) + "|" + std::to_string(eval_steps) + "|" +
                       std::to_string(eval_alpha) + "|" + std::to_string(seed);
    for (std::size_t n : n_list) dump += "," + std::to_string(n);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

const EvalCell* EvalReport::find(std::size_t n_way, int step) const {
    for (const EvalCell& cell : cells)
        if (cell.n_way == n_way && cell.step == step) return &cell;
    return nullptr;
}

EvalInit EvalInit::from_checkpoint(std::string init_id, Checkpoint ckpt) {
    EvalInit init;
    init.init_id = std::move(init_id);
    init.method = ckpt.method;
    init.backbone = std::move(ckpt.backbone);
    if (ckpt.head)
        init.head = std::move(ckpt.head);
    else
        init.master = std::move(ckpt.master);
    return init;
}

namespace {

struct StepAccuracy {
    std::vector<AccuracyCount> per_task; // index: task
};

// mean/std/ci over per-task accuracy ratios; sample std, ddof = 1
EvalCell aggregate(std::size_t n_way, int step, const StepAccuracy& acc) {
    EvalCell cell;
    cell.n_way = n_way;
    cell.step = step;
    cell.n_tasks = acc.per_task.size();
    double mean = 0.0;
    for (const AccuracyCount& a : acc.per_task) {
        mean += a.ratio();
        cell.predictions += a.total;
    }
    mean /= double(cell.n_tasks);
    double var = 0.0;
    for (const AccuracyCount& a : acc.per_task) {
        const double d = a.ratio() - mean;
        var += d * d;
    }
    cell.mean_acc = mean;
    cell.std_acc = cell.n_tasks > 1 ? std::sqrt(var / double(cell.n_tasks - 1)) : 0.0;
    cell.ci95 = 1.96 * cell.std_acc / std::sqrt(double(cell.n_tasks));
    return cell;
}

} // namespace

EvalReport evaluate_init(const EvalInit& init, const ClassPool& pool, const EvalConfig& cfg) {
    cfg.validate();
    if (!init.head && !init.master)
        throw ValidationError("evaluate_init: neither a head nor a master neuron given");
    if (init.head && init.head->width() != init.backbone.spec.feature_width())
        throw DimensionError("evaluate_init: head width does not match the backbone");

    EvalReport report;
    report.init_id = init.init_id;
    report.method = init.method;
    report.seed = cfg.seed;
    report.config_hash = cfg.hash();

    for (std::size_t n_way : cfg.n_list) {
        if (init.head && init.head->class_count() != n_way)
            throw CapabilityError("static " + std::to_string(init.head->class_count()) +
                                  "-way head cannot evaluate N = " + std::to_string(n_way) +
                                  " episodes");
        const HeadParams head_values =
            init.head ? *init.head : replicate_master(*init.master, n_way);

        std::vector<StepAccuracy> steps(cfg.eval_steps + 1);
        for (StepAccuracy& s : steps) s.per_task.resize(cfg.n_tasks);

        const std::uint64_t n_seed = derive_seed(cfg.seed, n_way);
        parallel_for(cfg.n_tasks, cfg.threads, [&](std::size_t t) {
            const std::uint64_t ep_seed = derive_seed(n_seed, t);
            const Episode ep = sample_episode(pool, n_way, cfg.shots, cfg.queries, ep_seed);
            Rng tie_rng(derive_seed(ep_seed, 0xACCu));

            Tape tape;
            TapedModel model = lift_model(init.backbone, head_values, tape);
            const Tensor x_test = tape.leaf(ep.x_test);
            steps[0].per_task[t] =
                accuracy(model_logits(model, x_test).to_array(), ep.y_test, tie_rng);
            const InnerConfig one_step{cfg.eval_alpha, 1};
            for (std::size_t s = 1; s <= cfg.eval_steps; ++s) {
                model = inner_adapt(model, ep, one_step, false);
                steps[s].per_task[t] =
                    accuracy(model_logits(model, x_test).to_array(), ep.y_test, tie_rng);
            }
        });

        std::vector<EvalCell> rows;
        for (std::size_t s = 0; s <= cfg.eval_steps; ++s)
            rows.push_back(aggregate(n_way, int(s), steps[s]));
        EvalCell best_cell = rows[0];
        for (const EvalCell& row : rows)
            if (row.mean_acc > best_cell.mean_acc) best_cell = row;
        best_cell.step = EvalReport::kBestStep;
        report.cells.insert(report.cells.end(), rows.begin(), rows.end());
        report.cells.push_back(best_cell);
    }
    return report;
}

SweepResult sweep_eval(std::span<const EvalInit> inits, const ClassPool& pool,
                       const EvalConfig& cfg) {
    cfg.validate();
    SweepResult result;
    for (const EvalInit& init : inits) {
        std::vector<std::size_t> evaluable;
        std::vector<std::size_t> mismatched;
        for (std::size_t n : cfg.n_list) {
            if (init.head && init.head->class_count() != n)
                mismatched.push_back(n);
            else
                evaluable.push_back(n);
        }

        EvalReport report;
        if (!evaluable.empty()) {
            EvalConfig sub = cfg;
            sub.n_list = evaluable;
            report = evaluate_init(init, pool, sub);
        } else {
            report.init_id = init.init_id;
            report.method = init.method;
            report.seed = cfg.seed;
            report.config_hash = cfg.hash();
        }

        // a static head asked for a foreign N reports chance, flagged
        for (std::size_t n : mismatched) {
            result.warnings.push_back("init " + init.init_id + ": static " +
                                      std::to_string(init.head->class_count()) +
                                      "-way head cannot adapt to N = " + std::to_string(n) +
                                      "; reporting chance level");
            for (int s = 0; s <= int(cfg.eval_steps); ++s) {
                EvalCell cell;
                cell.n_way = n;
                cell.step = s;
                cell.mean_acc = 1.0 / double(n);
                cell.n_tasks = cfg.n_tasks;
                cell.flag = "static_head_mismatch";
                report.cells.push_back(cell);
            }
            EvalCell best = report.cells.back();
            best.step = EvalReport::kBestStep;
            report.cells.push_back(best);
        }

        // stable row order: by N, then step (best last)
        std::stable_sort(report.cells.begin(), report.cells.end(),
                         [](const EvalCell& a, const EvalCell& b) {
                             if (a.n_way != b.n_way) return a.n_way < b.n_way;
                             const int sa = a.step == EvalReport::kBestStep ? 1 << 20 : a.step;
                             const int sb = b.step == EvalReport::kBestStep ? 1 << 20 : b.step;
                             return sa < sb;
                         });
        result.reports.push_back(std::move(report));
    }
    return result;
}

ProbeReport neuron_copy_probe(const EvalInit& init, const ClassPool& pool,
                              const EvalConfig& cfg) {
    if (!init.head)
        throw ValidationError("neuron_copy_probe: needs a static head; instantiate one from the "
                              "master neuron first");
    const std::size_t classes = init.head->class_count();
    EvalConfig sub = cfg;
    sub.n_list = {classes};
    sub.validate();

    ProbeReport probe;
    probe.baseline = evaluate_init(init, pool, sub);
    for (std::size_t i = 0; i < classes; ++i) {
        EvalInit neuron = init;
        neuron.init_id = init.init_id + "/neuron" + std::to_string(i);
        neuron.head = copy_neuron_head(*init.head, i);
        probe.per_neuron.push_back(evaluate_init(neuron, pool, sub));
    }
    return probe;
}

// ---------------------------------------------------------------------------
// CSV output

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string step_str(int step) {
    return step == EvalReport::kBestStep ? "best" : std::to_string(step);
}

void write_cells(std::ofstream& os, const EvalReport& r, const std::string& id_column) {
    for (const EvalCell& c : r.cells) {
        os << id_column << ',' << r.method << ',' << c.n_way << ',' << step_str(c.step) << ','
           << fmt(c.mean_acc) << ',' << fmt(c.std_acc) << ',' << fmt(c.ci95) << ',' << c.n_tasks
           << ',' << r.seed << ',' << c.flag << '\n';
    }
}

} // namespace

void write_eval_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "init_id,method,N,step,mean_acc,std_acc,ci95,n_tasks,seed,flag\n";
    for (const EvalReport& r : reports) write_cells(os, r, r.init_id);
    if (!os) throw IoError("write failed for " + path.string());
}

void write_probe_csv(const ProbeReport& probe, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "init_id,neuron,N,step,mean_acc,std_acc,ci95,n_tasks,seed,flag\n";
    for (const EvalCell& c : probe.baseline.cells) {
        os << probe.baseline.init_id << ",baseline," << c.n_way << ',' << step_str(c.step) << ','
           << fmt(c.mean_acc) << ',' << fmt(c.std_acc) << ',' << fmt(c.ci95) << ',' << c.n_tasks
           << ',' << probe.baseline.seed << ',' << c.flag << '\n';
    }
    for (std::size_t i = 0; i < probe.per_neuron.size(); ++i) {
        const EvalReport& r = probe.per_neuron[i];
        for (const EvalCell& c : r.cells) {
            os << r.init_id << ',' << i << ',' << c.n_way << ',' << step_str(c.step) << ','
               << fmt(c.mean_acc) << ',' << fmt(c.std_acc) << ',' << fmt(c.ci95) << ','
               << c.n_tasks << ',' << r.seed << ',' << c.flag << '\n';
        }
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void export_head_weights(const HeadParams& head, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    const std::size_t c = head.class_count(), w = head.width();
    for (std::size_t j = 0; j < w; ++j) os << 'w' << j << ',';
    os << "bias\n";
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < w; ++j) os << fmt(head.weights.at(i, j)) << ',';
        os << fmt(head.biases.data[i]) << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

} // namespace metainit

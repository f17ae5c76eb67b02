// metainit command-line harness: dataset generation, meta-training,
// evaluation sweeps, the neuron-redundancy probe and weight export.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metainit/evaluation.hpp"
#include "metainit/meta.hpp"

using namespace metainit;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Option bookkeeping: every option is registered with a key so values can be
// merged from (in increasing precedence) defaults, preset, config file, CLI
// flags, and dumped back out as the resolved-config snapshot.

struct Binding {
    CLI::Option* opt = nullptr;
    std::function<bool(const std::string&)> set;
    std::function<std::string()> get;
};

class OptionSet {
public:
    explicit OptionSet(CLI::App* cmd) : cmd_(cmd) {}

    void bind(const std::string& key, std::string& var, const std::string& help) {
        add(key, var, help, [&var](const std::string& s) { var = s; return true; },
            [&var] { return var; });
    }
    void bind(const std::string& key, std::filesystem::path& var, const std::string& help) {
        add(key, var, help, [&var](const std::string& s) { var = s; return true; },
            [&var] { return var.string(); });
    }
    void bind(const std::string& key, double& var, const std::string& help) {
        add(key, var, help,
            [&var](const std::string& s) {
                char* end = nullptr;
                var = std::strtod(s.c_str(), &end);
                return end && *end == '\0';
            },
            [&var] { return fmt(var); });
    }
    void bind(const std::string& key, std::size_t& var, const std::string& help) {
        add(key, var, help,
            [&var](const std::string& s) {
                char* end = nullptr;
                var = std::strtoull(s.c_str(), &end, 10);
                return end && *end == '\0';
            },
            [&var] { return std::to_string(var); });
    }
    void bind(const std::string& key, int& var, const std::string& help) {
        add(key, var, help,
            [&var](const std::string& s) {
                char* end = nullptr;
                var = int(std::strtol(s.c_str(), &end, 10));
                return end && *end == '\0';
            },
            [&var] { return std::to_string(var); });
    }
    void bind_flag(const std::string& key, bool& var, const std::string& help) {
        Binding b;
        b.opt = cmd_->add_flag("--" + key, var, help);
        b.set = [&var](const std::string& s) {
            if (s == "1" || s == "true") var = true;
            else if (s == "0" || s == "false") var = false;
            else return false;
            return true;
        };
        b.get = [&var] { return var ? std::string("1") : std::string("0"); };
        bindings_[key] = std::move(b);
    }

    // config-file values and preset values fill options the CLI left unset
    void merge(const std::map<std::string, std::string>& file,
               const std::map<std::string, std::string>& preset,
               std::vector<std::string>& problems) {
        for (const auto& [key, value] : file)
            if (key != "command" && !bindings_.count(key))
                problems.push_back("config: unknown key '" + key + "'");
        for (auto& [key, binding] : bindings_) {
            if (binding.opt->count() > 0) continue;
            const auto in_file = file.find(key);
            if (in_file != file.end()) {
                if (!binding.set(in_file->second))
                    problems.push_back("config: bad value for '" + key + "': " + in_file->second);
                continue;
            }
            const auto in_preset = preset.find(key);
            if (in_preset != preset.end()) binding.set(in_preset->second);
        }
    }

    void write_resolved(const std::string& command, const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write " + path.string());
        os << "command=" << command << '\n';
        for (const auto& [key, binding] : bindings_) os << key << '=' << binding.get() << '\n';
        if (!os) throw IoError("write failed for " + path.string());
    }

private:
    template <typename T, typename Set, typename Get>
    void add(const std::string& key, T& var, const std::string& help, Set set, Get get) {
        Binding b;
        b.opt = cmd_->add_option("--" + key, var, help);
        b.set = std::move(set);
        b.get = std::move(get);
        bindings_[key] = std::move(b);
    }

    CLI::App* cmd_;
    std::map<std::string, Binding> bindings_; // ordered: stable snapshots
};

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::map<std::string, std::string> out;
    if (path.empty()) return out;
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value");
        out[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return out;
}

// Hyperparameter bundles for the reference benchmark settings.
std::map<std::string, std::string> preset_values(const std::string& name,
                                                 std::vector<std::string>& problems) {
    if (name.empty()) return {};
    if (name == "omniglot")
        return {{"alpha", "0.4"},      {"inner-steps", "1"}, {"batch-size", "32"},
                {"beta", "0.001"},     {"kshot", "5"},       {"eval-steps", "3"},
                {"eval-alpha", "0.4"}, {"tasks", "4000"}};
    if (name == "miniimagenet")
        return {{"alpha", "0.01"},      {"inner-steps", "5"}, {"batch-size", "4"},
                {"beta", "0.001"},      {"kshot", "5"},       {"eval-steps", "10"},
                {"eval-alpha", "0.01"}, {"tasks", "4000"}};
    problems.push_back("unknown preset '" + name + "' (have: omniglot, miniimagenet)");
    return {};
}

// "5" -> [5], "2..6" -> [2..6], "2,5,7" -> [2,5,7]
std::vector<std::size_t> parse_size_list(const std::string& text, const char* what,
                                         std::vector<std::string>& problems) {
    std::vector<std::size_t> out;
    const auto parse_one = [&](const std::string& s) -> std::optional<std::size_t> {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (!end || *end != '\0' || s.empty()) {
            problems.push_back(std::string("bad ") + what + " value '" + s + "'");
            return std::nullopt;
        }
        return std::size_t(v);
    };
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const auto lo = parse_one(text.substr(0, dots));
        const auto hi = parse_one(text.substr(dots + 2));
        if (lo && hi) {
            if (*lo > *hi) problems.push_back(std::string("empty ") + what + " range '" + text + "'");
            for (std::size_t n = *lo; lo && hi && n <= *hi; ++n) out.push_back(n);
        }
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string piece =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (const auto v = parse_one(piece)) out.push_back(*v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void fail_if_any(std::vector<std::string> problems) {
    if (problems.empty()) return;
    std::string joined = problems[0];
    for (std::size_t i = 1; i < problems.size(); ++i) joined += "; " + problems[i];
    throw ValidationError(joined);
}

std::filesystem::path prepare_out_dir(const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string());
    return out;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "iteration,c_b,train_loss,train_acc,val_loss,val_acc,wall_ms\n";
    for (const TrainLogRow& row : log)
        os << row.iteration << ',' << row.class_count << ',' << fmt(row.train_loss) << ','
           << fmt(row.train_acc) << ',' << fmt(row.val_loss) << ',' << fmt(row.val_acc) << ','
           << row.wall_ms << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Shared per-command state

struct CommonOpts {
    std::filesystem::path config;
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string preset;

    void bind(OptionSet& opts, CLI::App* cmd) {
        cmd->add_option("--config", config, "key=value config file; flags override it");
        opts.bind("out", out, "output directory");
        opts.bind("seed", seed, "master random seed");
        opts.bind("threads", threads, "worker threads (results are thread-count independent)");
        opts.bind("preset", preset, "hyperparameter preset: omniglot | miniimagenet");
    }
};

// ---------------------------------------------------------------------------
// gen-data

struct GenDataCmd {
    CommonOpts common;
    std::size_t features = 32;
    std::size_t classes = 70;
    std::string split = "50/0/20";
    std::size_t instances = 40;
    double cluster_std = 0.7;
    double center_scale = 1.0;

    void run(OptionSet& opts) {
        std::vector<std::string> problems;
        std::size_t counts[3] = {0, 0, 0};
        if (std::sscanf(split.c_str(), "%zu/%zu/%zu", &counts[0], &counts[1], &counts[2]) != 3)
            problems.push_back("bad split '" + split + "', expected train/val/test");
        else if (counts[0] + counts[1] + counts[2] != classes)
            problems.push_back("split " + split + " does not sum to " + std::to_string(classes));
        if (features < 1) problems.push_back("features must be >= 1");
        if (instances < 1) problems.push_back("instances-per-class must be >= 1");
        fail_if_any(std::move(problems));

        prepare_out_dir(common.out);
        opts.write_resolved("gen-data", common.out / "config.resolved");

        const PoolRole roles[3] = {PoolRole::kTrain, PoolRole::kValidation, PoolRole::kTest};
        const char* names[3] = {"train.fsds", "val.fsds", "test.fsds"};
        std::uint32_t next_id = 0;
        for (int r = 0; r < 3; ++r) {
            if (counts[r] == 0) {
                std::printf("%s: 0 classes (skipped)\n", role_name(roles[r]));
                continue;
            }
            SyntheticSpec spec;
            spec.feature_dim = features;
            spec.n_classes = counts[r];
            spec.instances_per_class = instances;
            spec.cluster_std = cluster_std;
            spec.center_scale = center_scale;
            spec.seed = derive_seed(common.seed, 100 + r);
            spec.first_class_id = next_id;
            next_id += std::uint32_t(counts[r]);
            const ClassPool pool = gen_synthetic(spec, roles[r]);
            write_pool(pool, common.out / names[r]);
            std::printf("%s: %zu classes x %zu instances -> %s\n", role_name(roles[r]), counts[r],
                        instances, (common.out / names[r]).c_str());
        }
    }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
    CommonOpts common;
    std::string method = "maml";
    std::filesystem::path data;
    std::string hidden = "64,64";
    std::string nway = "5";
    double alpha = 0.01;
    std::size_t inner_steps = 1;
    double beta = 1e-3;
    double adam_b1 = 0.9, adam_b2 = 0.999, adam_eps = 1e-8;
    std::size_t iterations = 1000;
    std::size_t batch_size = 4;
    std::size_t kshot = 5;
    std::size_t queries = 15;
    std::size_t checkpoint_every = 0;
    bool reptile_literal_sign = false;

    void run(OptionSet& opts) {
        std::vector<std::string> problems;
        const std::optional<Method> parsed = parse_method(method);
        if (!parsed)
            problems.push_back("unknown method '" + method +
                               "' (have: maml, fomaml, reptile, hidra)");
        if (data.empty()) problems.push_back("--data is required");
        else if (!std::filesystem::exists(data))
            problems.push_back("data file " + data.string() + " does not exist");

        TrainConfig cfg;
        cfg.backbone.hidden_widths.clear();
        for (std::size_t n : parse_size_list(hidden, "hidden", problems)) cfg.backbone.hidden_widths.push_back(n);
        const std::vector<std::size_t> ns = parse_size_list(nway, "nway", problems);
        fail_if_any(std::move(problems));
        problems.clear();

        ClassPool pool = load_pool(data, PoolRole::kTrain);
        cfg.backbone.input_dim = pool.feature_dim;
        cfg.inner = InnerConfig{alpha, inner_steps};
        cfg.outer.beta = beta;
        cfg.outer.adam_b1 = adam_b1;
        cfg.outer.adam_b2 = adam_b2;
        cfg.outer.adam_eps = adam_eps;
        cfg.outer.iterations = iterations;
        cfg.outer.method = parsed.value_or(Method::kMaml);
        cfg.batch_size = batch_size;
        cfg.n_min = ns.empty() ? 0 : ns.front();
        cfg.n_max = ns.empty() ? 0 : ns.back();
        cfg.shots = kshot;
        cfg.queries = queries;
        cfg.reptile_literal_sign = reptile_literal_sign;
        cfg.checkpoint_every = checkpoint_every;
        cfg.checkpoint_dir = common.out;
        cfg.threads = common.threads;

        prepare_out_dir(common.out);
        cfg.validate(pool.class_count()); // throws one line listing every violation
        opts.write_resolved("train", common.out / "config.resolved");

        const std::size_t tick = std::max<std::size_t>(1, iterations / 10);
        TrainResult result = train_loop(cfg, pool, common.seed, [&](const TrainLogRow& row) {
            if ((row.iteration + 1) % tick == 0 || row.iteration + 1 == iterations)
                std::fprintf(stderr, "iter %zu/%zu  c_b=%zu  train %.3f/%.3f  val %.3f/%.3f\n",
                             row.iteration + 1, iterations, row.class_count, row.train_loss,
                             row.train_acc, row.val_loss, row.val_acc);
        });

        write_train_log(result.log, common.out / "train_log.csv");
        save_params(result.checkpoint(), common.out / "checkpoint_final.bin");
        std::printf("wrote %s\n", (common.out / "checkpoint_final.bin").c_str());
    }
};

// ---------------------------------------------------------------------------
// eval / probe / export-weights share checkpoint loading

struct EvalCmd {
    CommonOpts common;
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::string nway = "2..10";
    std::string init_id;
    std::size_t tasks = 500;
    std::size_t kshot = 5;
    std::size_t queries = 15;
    std::size_t eval_steps = 3;
    double eval_alpha = 0.01;

    EvalConfig eval_config(std::vector<std::string>& problems) const {
        EvalConfig cfg;
        cfg.n_tasks = tasks;
        cfg.n_list = parse_size_list(nway, "nway", problems);
        cfg.shots = kshot;
        cfg.queries = queries;
        cfg.eval_steps = eval_steps;
        cfg.eval_alpha = eval_alpha;
        cfg.seed = common.seed;
        cfg.threads = common.threads;
        return cfg;
    }

    Checkpoint load(std::vector<std::string>& problems) const {
        if (checkpoint.empty()) problems.push_back("--checkpoint is required");
        if (data.empty()) problems.push_back("--data is required");
        fail_if_any(problems);
        problems.clear();
        return load_params(checkpoint);
    }

    void run(OptionSet& opts) {
        std::vector<std::string> problems;
        EvalConfig cfg = eval_config(problems);
        Checkpoint ckpt = load(problems);
        const std::string id = init_id.empty() ? checkpoint.stem().string() : init_id;

        prepare_out_dir(common.out);
        opts.write_resolved("eval", common.out / "config.resolved");

        ClassPool pool = load_pool(data, PoolRole::kTest);
        const EvalInit init = EvalInit::from_checkpoint(id, std::move(ckpt));
        SweepResult sweep = sweep_eval(std::vector<EvalInit>{init}, pool, cfg);
        for (const std::string& warning : sweep.warnings)
            std::fprintf(stderr, "warning: %s\n", warning.c_str());
        write_eval_csv(sweep.reports, common.out / "eval_report.csv");
        std::printf("wrote %s\n", (common.out / "eval_report.csv").c_str());
    }
};

struct ProbeCmd {
    EvalCmd base; // same flags; nway only instantiates a head from a master neuron

    void run(OptionSet& opts) {
        std::vector<std::string> problems;
        Checkpoint ckpt = base.load(problems);
        const std::string id =
            base.init_id.empty() ? base.checkpoint.stem().string() : base.init_id;

        EvalInit init = EvalInit::from_checkpoint(id, std::move(ckpt));
        if (!init.head) {
            if (base.nway.empty())
                throw ValidationError(
                    "probe needs a static head; this checkpoint holds only a master neuron - "
                    "pass --nway N to instantiate an N-way head from it");
            const auto ns = parse_size_list(base.nway, "nway", problems);
            fail_if_any(std::move(problems));
            problems.clear();
            init.head = replicate_master(*init.master, ns.front());
        }

        EvalConfig cfg;
        cfg.n_tasks = base.tasks;
        cfg.n_list = {init.head->class_count()};
        cfg.shots = base.kshot;
        cfg.queries = base.queries;
        cfg.eval_steps = base.eval_steps;
        cfg.eval_alpha = base.eval_alpha;
        cfg.seed = base.common.seed;
        cfg.threads = base.common.threads;

        prepare_out_dir(base.common.out);
        opts.write_resolved("probe", base.common.out / "config.resolved");

        ClassPool pool = load_pool(base.data, PoolRole::kTest);
        ProbeReport probe = neuron_copy_probe(init, pool, cfg);
        write_probe_csv(probe, base.common.out / "probe_report.csv");
        export_head_weights(*init.head, base.common.out / "head_weights.csv");
        std::printf("wrote %s\n", (base.common.out / "probe_report.csv").c_str());
        std::printf("wrote %s\n", (base.common.out / "head_weights.csv").c_str());
    }
};

struct ExportCmd {
    CommonOpts common;
    std::filesystem::path checkpoint;
    std::string nway;

    void run(OptionSet& opts) {
        std::vector<std::string> problems;
        if (checkpoint.empty()) problems.push_back("--checkpoint is required");
        fail_if_any(std::move(problems));
        Checkpoint ckpt = load_params(checkpoint);

        std::optional<HeadParams> head = ckpt.head;
        if (!head) {
            std::vector<std::string> nway_problems;
            const auto ns = nway.empty() ? std::vector<std::size_t>{}
                                         : parse_size_list(nway, "nway", nway_problems);
            fail_if_any(std::move(nway_problems));
            if (ns.empty())
                throw ValidationError(
                    "this checkpoint holds only a master neuron - pass --nway N to instantiate "
                    "an N-way head to export");
            head = replicate_master(ckpt.master, ns.front());
        }

        prepare_out_dir(common.out);
        opts.write_resolved("export-weights", common.out / "config.resolved");
        export_head_weights(*head, common.out / "head_weights.csv");
        std::printf("wrote %s\n", (common.out / "head_weights.csv").c_str());
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learned weight initializations for few-shot classification"};
    app.require_subcommand(1);

    GenDataCmd gen;
    TrainCmd train;
    EvalCmd eval;
    ProbeCmd probe;
    probe.base.nway.clear(); // probe instantiates a head only on explicit --nway
    ExportCmd exp;

    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate synthetic dataset files");
    OptionSet gen_opts(gen_cmd);
    gen.common.bind(gen_opts, gen_cmd);
    gen_opts.bind("features", gen.features, "feature dimension");
    gen_opts.bind("classes", gen.classes, "total class count across roles");
    gen_opts.bind("split", gen.split, "train/val/test class split, e.g. 50/0/20");
    gen_opts.bind("instances-per-class", gen.instances, "instances per class");
    gen_opts.bind("cluster-std", gen.cluster_std, "within-class standard deviation");
    gen_opts.bind("center-scale", gen.center_scale, "class centers drawn from [-s, s]^F");

    CLI::App* train_cmd = app.add_subcommand("train", "meta-train an initialization");
    OptionSet train_opts(train_cmd);
    train.common.bind(train_opts, train_cmd);
    train_opts.bind("method", train.method, "maml | fomaml | reptile | hidra");
    train_opts.bind("data", train.data, "training pool (.fsds)");
    train_opts.bind("hidden", train.hidden, "backbone widths, e.g. 64,64");
    train_opts.bind("nway", train.nway, "classes per task: fixed '5' or range '2..6' (hidra)");
    train_opts.bind("alpha", train.alpha, "inner-loop step size");
    train_opts.bind("inner-steps", train.inner_steps, "inner gradient steps per task");
    train_opts.bind("beta", train.beta, "outer learning rate");
    train_opts.bind("adam-b1", train.adam_b1, "Adam first-moment decay");
    train_opts.bind("adam-b2", train.adam_b2, "Adam second-moment decay");
    train_opts.bind("adam-eps", train.adam_eps, "Adam epsilon");
    train_opts.bind("iterations", train.iterations, "meta-iterations");
    train_opts.bind("batch-size", train.batch_size, "tasks per meta-batch");
    train_opts.bind("kshot", train.kshot, "train instances per class");
    train_opts.bind("queries", train.queries, "query instances per class");
    train_opts.bind("checkpoint-every", train.checkpoint_every,
                    "periodic checkpoint interval (0 = final only)");
    train_opts.bind_flag("reptile-literal-sign", train.reptile_literal_sign,
                         "apply the mirrored interpolation direction");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint across class counts");
    OptionSet eval_opts(eval_cmd);
    eval.common.bind(eval_opts, eval_cmd);
    eval_opts.bind("checkpoint", eval.checkpoint, "parameter file to evaluate");
    eval_opts.bind("data", eval.data, "test pool (.fsds)");
    eval_opts.bind("nway", eval.nway, "class counts: '5', '2..10' or '2,5,8'");
    eval_opts.bind("init-id", eval.init_id, "report id (default: checkpoint stem)");
    eval_opts.bind("tasks", eval.tasks, "episodes per class count");
    eval_opts.bind("kshot", eval.kshot, "train instances per class");
    eval_opts.bind("queries", eval.queries, "query instances per class");
    eval_opts.bind("eval-steps", eval.eval_steps, "adaptation steps to record");
    eval_opts.bind("eval-alpha", eval.eval_alpha, "adaptation step size");

    CLI::App* probe_cmd =
        app.add_subcommand("probe", "per-neuron re-initialization probe of a static head");
    OptionSet probe_opts(probe_cmd);
    probe.base.common.bind(probe_opts, probe_cmd);
    probe_opts.bind("checkpoint", probe.base.checkpoint, "parameter file to probe");
    probe_opts.bind("data", probe.base.data, "test pool (.fsds)");
    probe_opts.bind("nway", probe.base.nway, "head width when instantiating from a master neuron");
    probe_opts.bind("init-id", probe.base.init_id, "report id (default: checkpoint stem)");
    probe_opts.bind("tasks", probe.base.tasks, "episodes per probe");
    probe_opts.bind("kshot", probe.base.kshot, "train instances per class");
    probe_opts.bind("queries", probe.base.queries, "query instances per class");
    probe_opts.bind("eval-steps", probe.base.eval_steps, "adaptation steps to record");
    probe_opts.bind("eval-alpha", probe.base.eval_alpha, "adaptation step size");

    CLI::App* export_cmd = app.add_subcommand("export-weights", "write the head as CSV");
    OptionSet export_opts(export_cmd);
    exp.common.bind(export_opts, export_cmd);
    export_opts.bind("checkpoint", exp.checkpoint, "parameter file to export");
    export_opts.bind("nway", exp.nway, "head width when instantiating from a master neuron");

    try {
        app.parse(argc, argv);

        const auto run = [&](CLI::App* cmd, OptionSet& opts, CommonOpts& common, auto& handler) {
            if (!cmd->parsed()) return;
            std::vector<std::string> problems;
            const auto file = read_config_file(common.config);
            const auto preset_it = file.find("preset");
            if (common.preset.empty() && preset_it != file.end()) common.preset = preset_it->second;
            opts.merge(file, preset_values(common.preset, problems), problems);
            fail_if_any(std::move(problems));
            handler.run(opts);
        };

        run(gen_cmd, gen_opts, gen.common, gen);
        run(train_cmd, train_opts, train.common, train);
        run(eval_cmd, eval_opts, eval.common, eval);
        run(probe_cmd, probe_opts, probe.base.common, probe);
        run(export_cmd, export_opts, exp.common, exp);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 1;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: dimension: %s\n", e.what());
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: validation: %s\n", e.what());
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: format: %s\n", e.what());
    } catch (const CapacityError& e) {
        std::fprintf(stderr, "error: capacity: %s\n", e.what());
    } catch (const CapabilityError& e) {
        std::fprintf(stderr, "error: capability: %s\n", e.what());
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: io: %s\n", e.what());
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
    }
    return 1;
}

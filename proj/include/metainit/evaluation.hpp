#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metainit/episodes.hpp"
#include "metainit/meta.hpp"
#include "metainit/network.hpp"

namespace metainit {

// Evaluation protocol: accuracy aggregated over n_tasks sampled test
// episodes per class count, recorded after every adaptation step.
struct EvalConfig {
    std::size_t n_tasks = 500;
    std::vector<std::size_t> n_list;
    std::size_t shots = 5;
    std::size_t queries = 15;
    std::size_t eval_steps = 3;
    double eval_alpha = 0.01;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
    std::uint64_t hash() const;
};

struct EvalCell {
    std::size_t n_way = 0;
    int step = 0; // kBestStep marks the max-over-steps row
    double mean_acc = 0, std_acc = 0, ci95 = 0;
    std::size_t n_tasks = 0;
    std::size_t predictions = 0; // query predictions behind mean_acc
    std::string flag;            // non-empty marks a synthesized chance row
};

struct EvalReport {
    static constexpr int kBestStep = -1;
    std::string init_id;
    std::string method;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<EvalCell> cells; // one per (N, step 0..S), plus one best row per N

    const EvalCell* find(std::size_t n_way, int step) const;
};

// An initialization under evaluation: a static head, or a master neuron the
// head is instantiated from per episode.
struct EvalInit {
    std::string init_id;
    std::string method;
    Backbone backbone;
    std::optional<HeadParams> head;
    std::optional<MasterNeuron> master;

    static EvalInit from_checkpoint(std::string init_id, Checkpoint ckpt);
};

// Adapt-and-measure over sampled episodes of every N in n_list. A static
// head evaluated at N != C throws CapabilityError.
EvalReport evaluate_init(const EvalInit& init, const ClassPool& pool, const EvalConfig& cfg);

// Cross product of initializations and class counts. A static-head
// capability mismatch becomes a flagged chance-level report instead of an
// error, with a warning line describing it.
struct SweepResult {
    std::vector<EvalReport> reports;
    std::vector<std::string> warnings;
};
SweepResult sweep_eval(std::span<const EvalInit> inits, const ClassPool& pool,
                       const EvalConfig& cfg);

// Evaluates each single-neuron re-initialization of a trained static head
// against the unmodified-head baseline, at N = C.
struct ProbeReport {
    EvalReport baseline;
    std::vector<EvalReport> per_neuron;
};
ProbeReport neuron_copy_probe(const EvalInit& init, const ClassPool& pool, const EvalConfig& cfg);

// C x (w+1) CSV of the head, one row per neuron, 17 significant digits.
void export_head_weights(const HeadParams& head, const std::filesystem::path& path);

void write_eval_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
void write_probe_csv(const ProbeReport& probe, const std::filesystem::path& path);

} // namespace metainit

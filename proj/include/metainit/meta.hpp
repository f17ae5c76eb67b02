#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "metainit/episodes.hpp"
#include "metainit/network.hpp"
#include "metainit/rng.hpp"
#include "metainit/tape.hpp"

namespace metainit {

enum class Method { kMaml, kFomaml, kReptile, kHidra };

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

// Inner-loop adaptation: U full-batch gradient-descent steps of size alpha.
struct InnerConfig {
    double alpha = 0.01;
    std::size_t steps = 1;

    void validate() const;
};

// Outer loop: Adam on the meta-gradient (Reptile applies its own rule).
struct OuterConfig {
    double beta = 1e-3;
    double adam_b1 = 0.9;
    double adam_b2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t iterations = 1000;
    Method method = Method::kMaml;

    void validate() const;
};

// Per-parameter Adam moments. For a dynamic head the moments live in master
// space (w weights + 1 bias), never in the C-dependent replica space.
struct AdamState {
    std::vector<Array> m, v;
    std::size_t t = 0;
};

// One bias-corrected Adam step over a parameter group. Moment buffers are
// created on first use and must keep their shapes afterwards.
void adam_update(AdamState& state, std::span<Array* const> params, std::span<const Array> grads,
                 double beta, double b1, double b2, double eps);

// --- generic two-level machinery -------------------------------------------

// Scalar objective of the current parameter tensors (closes over its data).
using LossFn = std::function<Tensor(std::span<const Tensor> params)>;

// U recorded gradient-descent steps. With track_higher_order each update is
// differentiable w.r.t. the initial tensors, so gradients of downstream
// quantities flow through all U steps; without it the step gradients are
// detached constants. steps == 0 returns the initial tensors unchanged.
std::vector<Tensor> gradient_descent(const LossFn& loss, std::vector<Tensor> params,
                                     std::size_t steps, double alpha, bool track_higher_order);

enum class GradMode { kSecondOrder, kFirstOrder };

// d val_loss(adapted(init)) / d init, the meta-gradient of one task.
// kSecondOrder differentiates through the inner updates; kFirstOrder takes
// the validation gradient at the adapted parameters instead.
std::vector<Array> two_level_gradient(const LossFn& train_loss, const LossFn& val_loss,
                                      std::span<const Tensor> init, const InnerConfig& inner,
                                      GradMode mode);

// --- episode-level plumbing -------------------------------------------------

// Backbone plus classification head lifted onto one tape. Parameter order:
// layer weights/biases alternating, then head weights, then head biases.
struct TapedModel {
    TapedBackbone backbone;
    TapedHead head;

    std::vector<Tensor> params() const;
    static TapedModel from_params(const BackboneSpec& spec, std::span<const Tensor> params);
};

TapedModel lift_model(const Backbone& m, const HeadParams& head, Tape& tape);

Tensor model_logits(const TapedModel& model, const Tensor& x);

// Adapt on the episode's train split; head class count must match.
TapedModel inner_adapt(const TapedModel& model, const Episode& episode, const InnerConfig& inner,
                       bool track_higher_order);

// Argmax accuracy with exact ties broken uniformly at random from rng.
struct AccuracyCount {
    std::size_t correct = 0;
    std::size_t total = 0;

    double ratio() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};
AccuracyCount accuracy(const Array& logits, const Array& onehot, Rng& rng);

// Post-adaptation losses and accuracies of one task.
struct TaskStats {
    double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;

    void add_scaled(const TaskStats& other, double w);
};

// Meta-gradient of one episode, computed inside a mark/truncate bracket on
// the given tape (the node count is restored before returning). The result
// follows the TapedModel parameter order.
std::vector<Array> task_meta_gradient(const Backbone& m, const HeadParams& head,
                                      const Episode& episode, const InnerConfig& inner,
                                      GradMode mode, Tape& tape, TaskStats* stats, Rng& tie_rng);

// Batch-mean meta-gradient; per-task work runs on worker-local tapes and is
// reduced in episode order, so the result is identical for any thread count.
struct BatchGrads {
    std::vector<Array> grads;
    TaskStats stats;
};
BatchGrads batch_meta_gradient(const Backbone& m, const HeadParams& head, const MetaBatch& batch,
                               const InnerConfig& inner, GradMode mode, int threads,
                               std::uint64_t stats_seed);

// Permutation-invariant collapse of a replica-space head gradient into
// master space: per-column mean over rows, accumulated in sorted order so
// the result does not depend on the row order.
Array collapse_head_rows(const Array& head_grad);
double collapse_head_bias(const Array& bias_grad);

// --- meta steps --------------------------------------------------------------

// Full second-order meta step; Adam on backbone and head.
TaskStats maml_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                         const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                         int threads = 1, std::uint64_t stats_seed = 0);

// First-order variant: validation gradients at the adapted parameters are
// applied to the initialization directly.
TaskStats fomaml_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                           const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                           int threads = 1, std::uint64_t stats_seed = 0);

// The averaged interpolation update beta * mean_tau(theta'_tau - theta), in
// TapedModel parameter order.
std::vector<Array> reptile_delta(const Backbone& m, const HeadParams& head,
                                 const MetaBatch& batch, const InnerConfig& inner, double beta,
                                 int threads = 1, std::uint64_t stats_seed = 0,
                                 TaskStats* stats = nullptr);

// Interpolation toward the adapted parameters. The default direction adds
// the delta; literal_sign subtracts the exact same delta.
TaskStats reptile_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                            const InnerConfig& inner, const OuterConfig& outer,
                            bool literal_sign = false, int threads = 1,
                            std::uint64_t stats_seed = 0);

enum class OuterRule { kAdam, kSgd };

// Master-neuron meta step: the head is instantiated from phi with c_b
// independently trainable rows, the replica-space head meta-gradient is
// collapsed to master space by row mean, and the outer update runs on the
// backbone and on phi.
TaskStats hidra_meta_step(Backbone& m, MasterNeuron& phi, const MetaBatch& batch,
                          const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                          int threads = 1, std::uint64_t stats_seed = 0,
                          OuterRule rule = OuterRule::kAdam);

// Reference path for the same step: SGD-update every head replica in
// replica space, then average the updated rows back into phi. Equals the
// master-space path under an SGD outer rule; kept as its oracle.
TaskStats hidra_meta_step_replica_sgd(Backbone& m, MasterNeuron& phi, const MetaBatch& batch,
                                      const InnerConfig& inner, const OuterConfig& outer,
                                      int threads = 1, std::uint64_t stats_seed = 0);

// --- training loop -----------------------------------------------------------

struct TrainConfig {
    BackboneSpec backbone;
    InnerConfig inner;
    OuterConfig outer;
    std::size_t batch_size = 4;
    std::size_t n_min = 5, n_max = 5; // class-count range; fixed when equal
    std::size_t shots = 5;
    std::size_t queries = 15;
    bool reptile_literal_sign = false;
    std::size_t checkpoint_every = 0;          // 0 = no periodic checkpoints
    std::filesystem::path checkpoint_dir;      // required when periodic
    int threads = 1;

    void validate(std::size_t pool_classes) const;
};

struct TrainLogRow {
    std::size_t iteration = 0;
    std::size_t class_count = 0;
    double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
    std::int64_t wall_ms = 0;
};

struct TrainResult {
    Method method = Method::kMaml;
    Backbone backbone;
    MasterNeuron master;
    std::optional<HeadParams> head; // static-head methods
    std::vector<TrainLogRow> log;

    Checkpoint checkpoint() const;
};

// Meta-training driver: sample a meta batch, run the method's meta step,
// log, checkpoint. Deterministic in (config, pool, seed). on_iteration, when
// given, observes each log row as it is produced.
TrainResult train_loop(const TrainConfig& config, const ClassPool& pool, std::uint64_t seed,
                       const std::function<void(const TrainLogRow&)>& on_iteration = {});

// Fixed-order parallel loop; results must be written to per-index slots.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace metainit

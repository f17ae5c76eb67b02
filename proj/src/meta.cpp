#include "metainit/meta.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace metainit {

const char* method_name(Method m) {
    switch (m) {
        case Method::kMaml: return "maml";
        case Method::kFomaml: return "fomaml";
        case Method::kReptile: return "reptile";
        case Method::kHidra: return "hidra";
    }
    return "?";
}

std::optional<Method> parse_method(const std::string& name) {
    if (name == "maml") return Method::kMaml;
    if (name == "fomaml") return Method::kFomaml;
    if (name == "reptile") return Method::kReptile;
    if (name == "hidra") return Method::kHidra;
    return std::nullopt;
}

void InnerConfig::validate() const {
    if (!(alpha > 0.0)) throw ValidationError("inner config: alpha must be > 0");
}

void OuterConfig::validate() const {
    if (!(beta > 0.0)) throw ValidationError("outer config: beta must be > 0");
    if (adam_b1 < 0.0 || adam_b1 >= 1.0 || adam_b2 < 0.0 || adam_b2 >= 1.0)
        throw ValidationError("outer config: adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("outer config: adam eps must be > 0");
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(AdamState& state, std::span<Array* const> params, std::span<const Array> grads,
                 double beta, double b1, double b2, double eps) {
    if (params.size() != grads.size())
        throw DimensionError("adam: " + std::to_string(params.size()) + " parameters vs " +
                             std::to_string(grads.size()) + " gradients");
    if (state.m.empty()) {
        for (const Array* p : params) {
            state.m.push_back(Array::zeros(p->shape));
            state.v.push_back(Array::zeros(p->shape));
        }
    }
    if (state.m.size() != params.size())
        throw DimensionError("adam: state tracks " + std::to_string(state.m.size()) +
                             " parameters, step got " + std::to_string(params.size()));
    state.t += 1;
    const double c1 = 1.0 - std::pow(b1, double(state.t));
    const double c2 = 1.0 - std::pow(b2, double(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = *params[i];
        const Array& g = grads[i];
        if (g.shape != p.shape || state.m[i].shape != p.shape)
            throw DimensionError("adam: parameter " + std::to_string(i) + " shape " +
                                 p.shape.str() + " vs gradient " + g.shape.str());
        for (std::size_t k = 0; k < p.data.size(); ++k) {
            double& mk = state.m[i].data[k];
            double& vk = state.v[i].data[k];
            mk = b1 * mk + (1.0 - b1) * g.data[k];
            vk = b2 * vk + (1.0 - b2) * g.data[k] * g.data[k];
            p.data[k] -= beta * (mk / c1) / (std::sqrt(vk / c2) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Generic two-level machinery

std::vector<Tensor> gradient_descent(const LossFn& loss, std::vector<Tensor> params,
                                     std::size_t steps, double alpha, bool track_higher_order) {
    for (std::size_t u = 0; u < steps; ++u) {
        Tensor objective = loss(params);
        Tape& tape = *objective.tape();
        const std::vector<Tensor> grads = tape.backward(objective, params, track_higher_order);
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] = sub(params[i], scale(grads[i], alpha));
    }
    return params;
}

std::vector<Array> two_level_gradient(const LossFn& train_loss, const LossFn& val_loss,
                                      std::span<const Tensor> init, const InnerConfig& inner,
                                      GradMode mode) {
    inner.validate();
    std::vector<Tensor> start(init.begin(), init.end());
    std::vector<Tensor> adapted = gradient_descent(train_loss, start, inner.steps, inner.alpha,
                                                   mode == GradMode::kSecondOrder);
    Tensor val = val_loss(adapted);
    Tape& tape = *val.tape();
    const std::vector<Tensor>& wrt = mode == GradMode::kSecondOrder ? start : adapted;
    std::vector<Tensor> grads = tape.backward(val, wrt, false);
    std::vector<Array> out;
    out.reserve(grads.size());
    for (const Tensor& g : grads) out.push_back(g.to_array());
    return out;
}

// ---------------------------------------------------------------------------
// Episode-level plumbing

std::vector<Tensor> TapedModel::params() const {
    std::vector<Tensor> out = backbone.params;
    out.push_back(head.weights);
    out.push_back(head.biases);
    return out;
}

TapedModel TapedModel::from_params(const BackboneSpec& spec, std::span<const Tensor> params) {
    if (params.size() != 2 * spec.layer_count() + 2)
        throw DimensionError("model: expected " + std::to_string(2 * spec.layer_count() + 2) +
                             " parameter tensors, got " + std::to_string(params.size()));
    TapedModel model;
    model.backbone.spec = spec;
    model.backbone.params.assign(params.begin(), params.end() - 2);
    model.head.weights = params[params.size() - 2];
    model.head.biases = params[params.size() - 1];
    return model;
}

TapedModel lift_model(const Backbone& m, const HeadParams& head, Tape& tape) {
    if (head.width() != m.spec.feature_width())
        throw DimensionError("model: head width " + std::to_string(head.width()) +
                             " vs backbone feature width " +
                             std::to_string(m.spec.feature_width()));
    return {lift(m, tape), lift(head, tape)};
}

Tensor model_logits(const TapedModel& model, const Tensor& x) {
    return forward_full(model.backbone, model.head, x);
}

TapedModel inner_adapt(const TapedModel& model, const Episode& episode, const InnerConfig& inner,
                       bool track_higher_order) {
    inner.validate();
    if (model.head.class_count() != episode.class_count)
        throw ValidationError("inner_adapt: head has " +
                              std::to_string(model.head.class_count()) + " classes, episode has " +
                              std::to_string(episode.class_count));
    Tape& tape = *model.head.weights.tape();
    const Tensor x = tape.leaf(episode.x_train);
    const Tensor y = tape.leaf(episode.y_train);
    const BackboneSpec spec = model.backbone.spec;
    const LossFn train_loss = [spec, x, y](std::span<const Tensor> params) {
        return softmax_cross_entropy(model_logits(TapedModel::from_params(spec, params), x), y);
    };
    std::vector<Tensor> adapted =
        gradient_descent(train_loss, model.params(), inner.steps, inner.alpha, track_higher_order);
    return TapedModel::from_params(spec, adapted);
}

AccuracyCount accuracy(const Array& logits, const Array& onehot, Rng& rng) {
    if (logits.shape != onehot.shape)
        throw DimensionError("accuracy: logits " + logits.shape.str() + " vs targets " +
                             onehot.shape.str());
    const std::size_t m = logits.shape.dims[0], c = logits.shape.dims[1];
    AccuracyCount acc;
    acc.total = m;
    std::vector<std::size_t> ties;
    for (std::size_t i = 0; i < m; ++i) {
        double best = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) best = std::max(best, logits.at(i, j));
        ties.clear();
        for (std::size_t j = 0; j < c; ++j)
            if (logits.at(i, j) == best) ties.push_back(j);
        const std::size_t pick = ties.size() == 1 ? ties[0] : ties[rng.below(ties.size())];
        if (onehot.at(i, pick) == 1.0) acc.correct += 1;
    }
    return acc;
}

void TaskStats::add_scaled(const TaskStats& other, double w) {
    train_loss += w * other.train_loss;
    train_acc += w * other.train_acc;
    val_loss += w * other.val_loss;
    val_acc += w * other.val_acc;
}

std::vector<Array> task_meta_gradient(const Backbone& m, const HeadParams& head,
                                      const Episode& episode, const InnerConfig& inner,
                                      GradMode mode, Tape& tape, TaskStats* stats, Rng& tie_rng) {
    if (episode.queries == 0)
        throw ValidationError("task_meta_gradient: episode has no query split");
    const std::size_t checkpoint = tape.mark();

    TapedModel model = lift_model(m, head, tape);
    TapedModel adapted = inner_adapt(model, episode, inner, mode == GradMode::kSecondOrder);

    const Tensor x_test = tape.leaf(episode.x_test);
    const Tensor y_test = tape.leaf(episode.y_test);
    const Tensor val_logits = model_logits(adapted, x_test);
    const Tensor val_loss = softmax_cross_entropy(val_logits, y_test);

    const std::vector<Tensor> wrt =
        mode == GradMode::kSecondOrder ? model.params() : adapted.params();
    const std::vector<Tensor> grad_tensors = tape.backward(val_loss, wrt, false);
    std::vector<Array> grads;
    grads.reserve(grad_tensors.size());
    for (const Tensor& g : grad_tensors) grads.push_back(g.to_array());

    if (stats) {
        const Tensor x_train = tape.leaf(episode.x_train);
        const Tensor train_logits = model_logits(adapted, x_train);
        const Tensor train_loss = softmax_cross_entropy(train_logits, tape.leaf(episode.y_train));
        stats->train_loss = train_loss.value();
        stats->train_acc = accuracy(train_logits.to_array(), episode.y_train, tie_rng).ratio();
        stats->val_loss = val_loss.value();
        stats->val_acc = accuracy(val_logits.to_array(), episode.y_test, tie_rng).ratio();
    }

    tape.truncate(checkpoint);
    return grads;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

BatchGrads batch_meta_gradient(const Backbone& m, const HeadParams& head, const MetaBatch& batch,
                               const InnerConfig& inner, GradMode mode, int threads,
                               std::uint64_t stats_seed) {
    const std::size_t n = batch.episodes.size();
    if (n == 0) throw ValidationError("batch_meta_gradient: empty meta batch");
    std::vector<std::vector<Array>> per_task(n);
    std::vector<TaskStats> per_stats(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Tape tape;
        Rng tie_rng(derive_seed(stats_seed, i));
        per_task[i] = task_meta_gradient(m, head, batch.episodes[i], inner, mode, tape,
                                         &per_stats[i], tie_rng);
    });

    // fixed episode-order reduction keeps results thread-count independent
    BatchGrads out;
    out.grads = std::move(per_task[0]);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < out.grads.size(); ++j)
            for (std::size_t k = 0; k < out.grads[j].data.size(); ++k)
                out.grads[j].data[k] += per_task[i][j].data[k];
    const double inv = 1.0 / double(n);
    for (Array& g : out.grads)
        for (double& v : g.data) v *= inv;
    for (const TaskStats& s : per_stats) out.stats.add_scaled(s, inv);
    return out;
}

Array collapse_head_rows(const Array& head_grad) {
    const std::size_t c = head_grad.shape.dims[0], w = head_grad.shape.dims[1];
    Array out = Array::zeros(Shape::vector(w));
    std::vector<double> column(c);
    for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t i = 0; i < c; ++i) column[i] = head_grad.at(i, j);
        std::sort(column.begin(), column.end());
        out.data[j] = running_mean(column);
    }
    return out;
}

double collapse_head_bias(const Array& bias_grad) {
    std::vector<double> sorted = bias_grad.data;
    std::sort(sorted.begin(), sorted.end());
    return running_mean(sorted);
}

// ---------------------------------------------------------------------------
// Meta steps

namespace {

std::vector<Array*> model_param_ptrs(Backbone& m, HeadParams* head) {
    std::vector<Array*> out;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        out.push_back(&m.weights[i]);
        out.push_back(&m.biases[i]);
    }
    if (head) {
        out.push_back(&head->weights);
        out.push_back(&head->biases);
    }
    return out;
}

void require_batch_matches_head(const MetaBatch& batch, const HeadParams& head) {
    if (batch.class_count != head.class_count())
        throw ValidationError("meta step: head has " + std::to_string(head.class_count()) +
                              " classes, batch has " + std::to_string(batch.class_count));
}

void require_uniform_batch(const MetaBatch& batch) {
    for (const Episode& ep : batch.episodes)
        if (ep.class_count != batch.class_count)
            throw ValidationError("meta step: mixed class counts in one meta batch");
}

TaskStats gradient_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                             const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                             GradMode mode, int threads, std::uint64_t stats_seed) {
    inner.validate();
    outer.validate();
    require_uniform_batch(batch);
    require_batch_matches_head(batch, head);
    BatchGrads bg = batch_meta_gradient(m, head, batch, inner, mode, threads, stats_seed);
    const std::vector<Array*> params = model_param_ptrs(m, &head);
    adam_update(adam, params, bg.grads, outer.beta, outer.adam_b1, outer.adam_b2, outer.adam_eps);
    return bg.stats;
}

} // namespace

TaskStats maml_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                         const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                         int threads, std::uint64_t stats_seed) {
    return gradient_meta_step(m, head, batch, inner, outer, adam, GradMode::kSecondOrder, threads,
                              stats_seed);
}

TaskStats fomaml_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                           const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                           int threads, std::uint64_t stats_seed) {
    return gradient_meta_step(m, head, batch, inner, outer, adam, GradMode::kFirstOrder, threads,
                              stats_seed);
}

std::vector<Array> reptile_delta(const Backbone& m, const HeadParams& head,
                                 const MetaBatch& batch, const InnerConfig& inner, double beta,
                                 int threads, std::uint64_t stats_seed, TaskStats* stats) {
    inner.validate();
    require_uniform_batch(batch);
    require_batch_matches_head(batch, head);
    const std::size_t n = batch.episodes.size();
    if (n == 0) throw ValidationError("reptile: empty meta batch");

    std::vector<std::vector<Array>> adapted(n);
    std::vector<TaskStats> per_stats(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Tape tape;
        const Episode& ep = batch.episodes[i];
        TapedModel model = lift_model(m, head, tape);
        TapedModel after = inner_adapt(model, ep, inner, false);
        Rng tie_rng(derive_seed(stats_seed, i));
        if (ep.queries > 0) {
            const Tensor val_logits = model_logits(after, tape.leaf(ep.x_test));
            per_stats[i].val_loss =
                softmax_cross_entropy(val_logits, tape.leaf(ep.y_test)).value();
            per_stats[i].val_acc = accuracy(val_logits.to_array(), ep.y_test, tie_rng).ratio();
        }
        const Tensor train_logits = model_logits(after, tape.leaf(ep.x_train));
        per_stats[i].train_loss =
            softmax_cross_entropy(train_logits, tape.leaf(ep.y_train)).value();
        per_stats[i].train_acc = accuracy(train_logits.to_array(), ep.y_train, tie_rng).ratio();
        for (const Tensor& p : after.params()) adapted[i].push_back(p.to_array());
    });

    std::vector<const Array*> params;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        params.push_back(&m.weights[i]);
        params.push_back(&m.biases[i]);
    }
    params.push_back(&head.weights);
    params.push_back(&head.biases);
    const double inv = 1.0 / double(n);
    if (stats) {
        *stats = TaskStats{};
        for (const TaskStats& s : per_stats) stats->add_scaled(s, inv);
    }
    std::vector<Array> deltas;
    deltas.reserve(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        Array delta = Array::zeros(params[j]->shape);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < delta.data.size(); ++k)
                delta.data[k] += adapted[i][j].data[k] - params[j]->data[k];
        for (double& v : delta.data) v *= beta * inv;
        deltas.push_back(std::move(delta));
    }
    return deltas;
}

TaskStats reptile_meta_step(Backbone& m, HeadParams& head, const MetaBatch& batch,
                            const InnerConfig& inner, const OuterConfig& outer, bool literal_sign,
                            int threads, std::uint64_t stats_seed) {
    outer.validate();
    TaskStats stats;
    const std::vector<Array> deltas =
        reptile_delta(m, head, batch, inner, outer.beta, threads, stats_seed, &stats);
    const std::vector<Array*> params = model_param_ptrs(m, &head);
    for (std::size_t j = 0; j < params.size(); ++j)
        for (std::size_t k = 0; k < params[j]->data.size(); ++k)
            params[j]->data[k] += literal_sign ? -deltas[j].data[k] : deltas[j].data[k];
    return stats;
}

TaskStats hidra_meta_step(Backbone& m, MasterNeuron& phi, const MetaBatch& batch,
                          const InnerConfig& inner, const OuterConfig& outer, AdamState& adam,
                          int threads, std::uint64_t stats_seed, OuterRule rule) {
    inner.validate();
    outer.validate();
    require_uniform_batch(batch);
    HeadParams head = replicate_master(phi, batch.class_count);
    BatchGrads bg =
        batch_meta_gradient(m, head, batch, inner, GradMode::kSecondOrder, threads, stats_seed);

    // head gradient collapsed to master space by row mean
    const std::size_t hw = bg.grads.size() - 2, hb = bg.grads.size() - 1;
    std::vector<Array> grads(bg.grads.begin(), bg.grads.end() - 2);
    grads.push_back(collapse_head_rows(bg.grads[hw]));
    grads.push_back(Array::scalar(collapse_head_bias(bg.grads[hb])));

    std::vector<Array*> params = model_param_ptrs(m, nullptr);
    params.push_back(&phi.weights);
    params.push_back(&phi.bias);

    if (rule == OuterRule::kAdam) {
        adam_update(adam, params, grads, outer.beta, outer.adam_b1, outer.adam_b2, outer.adam_eps);
    } else {
        for (std::size_t j = 0; j < params.size(); ++j)
            for (std::size_t k = 0; k < params[j]->data.size(); ++k)
                params[j]->data[k] -= outer.beta * grads[j].data[k];
    }
    return bg.stats;
}

TaskStats hidra_meta_step_replica_sgd(Backbone& m, MasterNeuron& phi, const MetaBatch& batch,
                                      const InnerConfig& inner, const OuterConfig& outer,
                                      int threads, std::uint64_t stats_seed) {
    inner.validate();
    outer.validate();
    require_uniform_batch(batch);
    HeadParams head = replicate_master(phi, batch.class_count);
    BatchGrads bg =
        batch_meta_gradient(m, head, batch, inner, GradMode::kSecondOrder, threads, stats_seed);

    // update every replica in replica space, then average back into phi
    const std::size_t hw = bg.grads.size() - 2, hb = bg.grads.size() - 1;
    for (std::size_t k = 0; k < head.weights.data.size(); ++k)
        head.weights.data[k] -= outer.beta * bg.grads[hw].data[k];
    for (std::size_t k = 0; k < head.biases.data.size(); ++k)
        head.biases.data[k] -= outer.beta * bg.grads[hb].data[k];

    std::vector<Array*> params = model_param_ptrs(m, nullptr);
    for (std::size_t j = 0; j < params.size(); ++j)
        for (std::size_t k = 0; k < params[j]->data.size(); ++k)
            params[j]->data[k] -= outer.beta * bg.grads[j].data[k];

    phi = aggregate_head(head);
    return bg.stats;
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate(std::size_t pool_classes) const {
    std::vector<std::string> problems;
    try {
        backbone.validate();
    } catch (const ValidationError& e) {
        problems.emplace_back(e.what());
    }
    if (!(inner.alpha > 0.0)) problems.emplace_back("alpha must be > 0");
    if (!(outer.beta > 0.0)) problems.emplace_back("beta must be > 0");
    if (outer.adam_b1 < 0.0 || outer.adam_b1 >= 1.0) problems.emplace_back("adam-b1 must lie in [0, 1)");
    if (outer.adam_b2 < 0.0 || outer.adam_b2 >= 1.0) problems.emplace_back("adam-b2 must lie in [0, 1)");
    if (batch_size < 1) problems.emplace_back("batch-size must be >= 1");
    if (shots < 1) problems.emplace_back("kshot must be >= 1");
    if (queries < 1) problems.emplace_back("queries must be >= 1");
    if (n_min < 2) problems.emplace_back("nway must be >= 2");
    if (n_min > n_max) problems.emplace_back("empty nway range");
    if (n_max > pool_classes)
        problems.emplace_back("nway " + std::to_string(n_max) + " exceeds the pool's " +
                              std::to_string(pool_classes) + " classes");
    if (outer.method != Method::kHidra && n_min != n_max)
        problems.emplace_back("static head requires fixed N (nway range is hidra-only)");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
        problems.emplace_back("checkpoint-every needs a checkpoint directory");
    if (threads < 1) problems.emplace_back("threads must be >= 1");
    if (!problems.empty()) {
        std::string joined = problems[0];
        for (std::size_t i = 1; i < problems.size(); ++i) joined += "; " + problems[i];
        throw ValidationError(joined);
    }
}

Checkpoint TrainResult::checkpoint() const {
    Checkpoint ckpt;
    ckpt.backbone = backbone;
    ckpt.master = master;
    ckpt.head = head;
    ckpt.method = method_name(method);
    return ckpt;
}

TrainResult train_loop(const TrainConfig& config, const ClassPool& pool, std::uint64_t seed,
                       const std::function<void(const TrainLogRow&)>& on_iteration) {
    config.validate(pool.class_count());

    TrainResult result;
    result.method = config.outer.method;
    result.backbone = init_backbone(config.backbone, derive_seed(seed, 1));
    const std::size_t w = config.backbone.feature_width();
    result.master = init_master(w, derive_seed(seed, 2));
    if (config.outer.method != Method::kHidra)
        result.head = init_head(config.n_min, w, derive_seed(seed, 3));

    const std::uint64_t batch_stream = derive_seed(seed, 11);
    const std::uint64_t stats_stream = derive_seed(seed, 13);
    AdamState adam;
    result.log.reserve(config.outer.iterations);

    for (std::size_t iter = 0; iter < config.outer.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const MetaBatch batch =
            sample_meta_batch(pool, config.batch_size, config.n_min, config.n_max, config.shots,
                              config.queries, derive_seed(batch_stream, iter));
        const std::uint64_t stats_seed = derive_seed(stats_stream, iter);

        TaskStats stats;
        switch (config.outer.method) {
            case Method::kMaml:
                stats = maml_meta_step(result.backbone, *result.head, batch, config.inner,
                                       config.outer, adam, config.threads, stats_seed);
                break;
            case Method::kFomaml:
                stats = fomaml_meta_step(result.backbone, *result.head, batch, config.inner,
                                         config.outer, adam, config.threads, stats_seed);
                break;
            case Method::kReptile:
                stats = reptile_meta_step(result.backbone, *result.head, batch, config.inner,
                                          config.outer, config.reptile_literal_sign,
                                          config.threads, stats_seed);
                break;
            case Method::kHidra:
                stats = hidra_meta_step(result.backbone, result.master, batch, config.inner,
                                        config.outer, adam, config.threads, stats_seed);
                break;
        }

        const auto t1 = std::chrono::steady_clock::now();
        TrainLogRow row;
        row.iteration = iter;
        row.class_count = batch.class_count;
        row.train_loss = stats.train_loss;
        row.train_acc = stats.train_acc;
        row.val_loss = stats.val_loss;
        row.val_acc = stats.val_acc;
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        result.log.push_back(row);
        if (on_iteration) on_iteration(row);

        if (config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0) {
            if (result.head) result.master = aggregate_head(*result.head);
            char name[40];
            std::snprintf(name, sizeof(name), "checkpoint_%06zu.bin", iter + 1);
            save_params(result.checkpoint(), config.checkpoint_dir / name);
        }
    }

    if (result.head) result.master = aggregate_head(*result.head);
    return result;
}

} // namespace metainit

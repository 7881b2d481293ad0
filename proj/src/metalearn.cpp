#include "mamlcon/metalearn.hpp"

#include <algorithm>
#include <iostream>

namespace mamlcon {

void InnerLoopConfig::validate() const {
  if (t_initial < t_step)
    throw ConfigError("t_initial (" + std::to_string(t_initial) + ") must be at least t_step (" +
                      std::to_string(t_step) + ")");
  if (!(inner_lr > 0.0)) throw ConfigError("inner learning rate must be positive");
}

void MetaTrainConfig::validate() const {
  if (!(outer_lr > 0.0)) throw ConfigError("outer learning rate must be positive");
  if (tasks_per_meta_batch == 0) throw ConfigError("tasks_per_meta_batch must be positive");
  if (test_per_class == 0) throw ConfigError("test_per_class must be positive");
  scenario.validate();
}

void TemplateStore::add(TemplateEntry entry) {
  if (contains(entry.class_id))
    throw std::invalid_argument("class " + std::to_string(entry.class_id) + " already has a template");
  entries_.push_back(std::move(entry));
}

bool TemplateStore::contains(int class_id) const {
  for (const auto& e : entries_)
    if (e.class_id == class_id) return true;
  return false;
}

LabeledBatch TemplateStore::batch() const {
  std::vector<Tensor> xs;
  std::vector<int> ys;
  for (const auto& e : entries_) {
    xs.push_back(e.features);
    ys.push_back(e.head_index);
  }
  return make_batch(xs, ys);
}

namespace {

AdaptResult apply_update(const ParameterSet& params, const GradientSet& grads, const AdamState& state, double lr,
                         const ModelConfig& model, UpdateScope scope) {
  if (scope == UpdateScope::Full) {
    auto r = adam_step(params, grads, state, lr);
    return {std::move(r.params), std::move(r.state)};
  }
  // Head-only: step the prediction-network entries, leave the rest untouched.
  ParameterSet head;
  GradientSet head_grads;
  AdamState head_state = state;
  head_state.m = MomentSet{};
  head_state.v = MomentSet{};
  for (const auto& name : model.pn_param_names()) {
    head.add(name, params.at(name));
    head_grads.add(name, grads.at(name));
    head_state.m.add(name, state.m.at(name));
    head_state.v.add(name, state.v.at(name));
  }
  auto r = adam_step(head, head_grads, head_state, lr);
  AdaptResult out{params, state};
  for (const auto& name : model.pn_param_names()) {
    out.params.at(name) = r.params.at(name);
    out.state.m.at(name) = r.state.m.at(name);
    out.state.v.at(name) = r.state.v.at(name);
  }
  out.state.t = r.state.t;
  return out;
}

GradientSet batch_gradient(const ParameterSet& params, const LabeledBatch& batch, const ClassMask& mask,
                           const ModelConfig& model, double* loss_out = nullptr) {
  auto pred = predict(params, batch.inputs, mask, model);
  auto loss = softmax_cross_entropy(pred.logits, batch.labels, mask);
  if (loss_out) *loss_out = loss.loss;
  return model_backward(pred.tape, loss.dlogits);
}

void check_labels_live(const LabeledBatch& batch, const ClassMask& mask) {
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= mask.size() || !mask[static_cast<std::size_t>(y)])
      throw std::invalid_argument("label " + std::to_string(y) + " is not a live class");
}

}  // namespace

AdaptResult inner_adapt(const ParameterSet& params, const AdamState& state, const LabeledBatch& group,
                        const ClassMask& mask, std::size_t steps, double lr, const ModelConfig& model,
                        UpdateScope scope) {
  check_labels_live(group, mask);
  AdaptResult cur{params, state};
  for (std::size_t s = 0; s < steps; ++s) {
    const auto grads = batch_gradient(cur.params, group, mask, model);
    cur = apply_update(cur.params, grads, cur.state, lr, model, scope);
  }
  return cur;
}

TemplateStore store_templates(const TemplateStore& store, const Episode& episode, std::size_t group,
                              std::mt19937_64& rng) {
  TemplateStore out = store;
  for (const auto& cls : episode.groups.at(group)) {
    if (out.contains(cls.class_id))
      throw std::invalid_argument("class " + std::to_string(cls.class_id) + " already has a template");
    if (cls.support.empty()) throw std::invalid_argument("class " + std::to_string(cls.class_id) + " has no support");
    std::uniform_int_distribution<std::size_t> pick(0, cls.support.size() - 1);
    out.add({cls.class_id, cls.support[pick(rng)], episode.head_index(cls.class_id)});
  }
  return out;
}

AdaptResult template_step(const ParameterSet& params, const AdamState& state, const TemplateStore& store,
                          const ClassMask& mask, double lr, const ModelConfig& model, UpdateScope scope) {
  if (store.empty()) {
    std::cerr << "warning: template step requested with an empty template store; skipped\n";
    return {params, state};
  }
  return inner_adapt(params, state, store.batch(), mask, 1, lr, model, scope);
}

ContinualRun run_continual(const ParameterSet& start, const Episode& episode, const InnerLoopConfig& inner,
                           const ModelConfig& model, const ContinualProcedure& procedure, std::mt19937_64& rng) {
  inner.validate();
  if (episode.n_max != model.head_classes)
    throw ConfigError("episode head size " + std::to_string(episode.n_max) + " differs from model head " +
                      std::to_string(model.head_classes));
  ContinualRun run;
  run.model.params = start;
  run.model.optimizer = AdamState::fresh(start);
  run.model.mask = ClassMask(model.head_classes);

  for (std::size_t g = 0; g < episode.groups.size(); ++g) {
    for (const auto& cls : episode.groups[g]) run.model.mask.set(static_cast<std::size_t>(episode.head_index(cls.class_id)));

    const std::size_t steps = g == 0 ? inner.t_initial : inner.t_step;
    auto adapted = inner_adapt(run.model.params, run.model.optimizer, support_batch(episode, g), run.model.mask,
                               steps, inner.inner_lr, model, procedure.scope);
    run.model.params = std::move(adapted.params);
    run.model.optimizer = std::move(adapted.state);

    std::size_t replayed = 0;
    if (procedure.use_templates) {
      run.model.store = store_templates(run.model.store, episode, g, rng);
      for (std::size_t s = 0; s < inner.template_steps; ++s) {
        auto r = template_step(run.model.params, run.model.optimizer, run.model.store, run.model.mask, inner.inner_lr,
                               model, procedure.scope);
        run.model.params = std::move(r.params);
        run.model.optimizer = std::move(r.state);
        ++replayed;
      }
    }

    run.trajectory.snapshots.push_back(run.model.params);
    run.trajectory.masks.push_back(run.model.mask);
    run.trajectory.phases.push_back({g, episode.groups[g].size(), steps, replayed, run.model.mask.count(),
                                     run.model.store.size(), run.model.optimizer.t});
  }
  return run;
}

ContinualRun mamlcon_inner_loop(const ParameterSet& theta0, const Episode& episode, const InnerLoopConfig& inner,
                                const ModelConfig& model, std::mt19937_64& rng) {
  return run_continual(theta0, episode, inner, model, ContinualProcedure::mamlcon(), rng);
}

ContinualRun continual_deploy(const ParameterSet& theta_star, const Episode& episode, const InnerLoopConfig& inner,
                              const ModelConfig& model, std::uint64_t seed, const ContinualProcedure& procedure) {
  std::mt19937_64 rng(seed);
  return run_continual(theta_star, episode, inner, model, procedure, rng);
}

ContinualRun finetune_baseline(const ModelConfig& model, const Episode& episode, const InnerLoopConfig& inner,
                               std::uint64_t seed, bool use_templates) {
  std::mt19937_64 rng(seed);
  const ParameterSet init = init_params(model, rng);
  const std::uint64_t deploy_seed = rng();
  return continual_deploy(init, episode, inner, model, deploy_seed,
                          use_templates ? ContinualProcedure::mamlcon() : ContinualProcedure::plain_finetune());
}

MetaGradient meta_gradient(const std::vector<MetaTask>& tasks, const ModelConfig& model) {
  if (tasks.empty()) throw std::invalid_argument("meta-update needs at least one task");
  MetaGradient out;
  for (const auto& task : tasks) {
    check_labels_live(task.test, task.mask);
    double loss = 0.0;
    auto g = batch_gradient(task.adapted, task.test, task.mask, model, &loss);
    out.grad = out.grad.empty() ? std::move(g) : add_gradients(out.grad, g);
    out.loss += loss;
  }
  return out;
}

MetaUpdateResult fo_meta_update(const ParameterSet& theta0, const std::vector<MetaTask>& tasks,
                                const AdamState& state, double outer_lr, const ModelConfig& model,
                                OuterOptimizer optimizer) {
  auto mg = meta_gradient(tasks, model);
  if (!mg.grad.same_layout(theta0)) throw ShapeError("meta-gradient does not mirror theta0");
  if (optimizer == OuterOptimizer::Sgd) return {sgd_step(theta0, mg.grad, outer_lr), state, mg.loss};
  auto r = adam_step(theta0, mg.grad, state, outer_lr);
  return {std::move(r.params), std::move(r.state), mg.loss};
}

LabeledBatch oml_meta_test_batch(const Episode& episode, std::mt19937_64& rng) {
  std::vector<const ClassSamples*> classes;
  std::size_t batch_size = 0;
  for (const auto& g : episode.groups)
    for (const auto& c : g) {
      classes.push_back(&c);
      batch_size += c.test.size();
    }
  std::shuffle(classes.begin(), classes.end(), rng);
  std::uniform_int_distribution<std::size_t> count(1, classes.size());
  classes.resize(count(rng));

  std::vector<const Tensor*> pool;
  std::vector<int> pool_labels;
  for (const auto* c : classes)
    for (const auto& x : c->test) {
      pool.push_back(&x);
      pool_labels.push_back(episode.head_index(c->class_id));
    }
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<Tensor> xs;
  std::vector<int> ys;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = pick(rng);
    xs.push_back(*pool[j]);
    ys.push_back(pool_labels[j]);
  }
  return make_batch(xs, ys);
}

namespace {

using TaskBuilder = std::function<MetaTask(const ParameterSet&, const Episode&, std::mt19937_64&)>;

ParameterSet meta_train_loop(const LabeledDataset& data, const MetaTrainConfig& cfg, const InnerLoopConfig& inner,
                             const ModelConfig& model, const TaskBuilder& build, const MetaProgress& progress) {
  cfg.validate();
  inner.validate();
  model.validate();
  if (model.head_classes < cfg.scenario.n_final)
    throw ConfigError("model head has " + std::to_string(model.head_classes) + " classes, scenario needs " +
                      std::to_string(cfg.scenario.n_final));

  std::mt19937_64 rng(cfg.seed);
  ParameterSet theta = init_params(model, rng);
  AdamState outer = AdamState::fresh(theta);
  for (std::size_t it = 0; it < cfg.meta_iterations; ++it) {
    std::vector<MetaTask> tasks;
    tasks.reserve(cfg.tasks_per_meta_batch);
    for (std::size_t t = 0; t < cfg.tasks_per_meta_batch; ++t) {
      const Episode ep = sample_episode(data, cfg.scenario, model.head_classes, rng, cfg.test_per_class);
      std::mt19937_64 task_rng(rng());
      tasks.push_back(build(theta, ep, task_rng));
    }
    auto r = fo_meta_update(theta, tasks, outer, cfg.outer_lr, model, cfg.outer_optimizer);
    theta = std::move(r.params);
    outer = std::move(r.state);
    if (progress) progress(it, r.meta_loss);
  }
  return theta;
}

}  // namespace

ParameterSet mamlcon_meta_train(const LabeledDataset& data, const MetaTrainConfig& cfg, const InnerLoopConfig& inner,
                                const ModelConfig& model, const MetaProgress& progress) {
  return meta_train_loop(
      data, cfg, inner, model,
      [&](const ParameterSet& theta, const Episode& ep, std::mt19937_64& rng) {
        auto run = mamlcon_inner_loop(theta, ep, inner, model, rng);
        return MetaTask{std::move(run.model.params), full_test_batch(ep), run.model.mask};
      },
      progress);
}

ParameterSet oml_meta_train(const LabeledDataset& data, const MetaTrainConfig& cfg, const InnerLoopConfig& inner,
                            const ModelConfig& model, const MetaProgress& progress) {
  return meta_train_loop(
      data, cfg, inner, model,
      [&](const ParameterSet& theta, const Episode& ep, std::mt19937_64& rng) {
        auto run = run_continual(theta, ep, inner, model, ContinualProcedure::oml(), rng);
        return MetaTask{std::move(run.model.params), oml_meta_test_batch(ep, rng), run.model.mask};
      },
      progress);
}

}  // namespace mamlcon

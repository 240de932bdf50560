#include "tagnn/trainer.hpp"

#include <cmath>

#include "tagnn/graph.hpp"
#include "tagnn/rng.hpp"
#include "tagnn/tape.hpp"

namespace tagnn {

void validate_config(const TrainConfig& cfg) {
  if (cfg.d < 1) raise(ErrorKind::config, "hidden size d must be >= 1");
  if (cfg.batch_size < 1) raise(ErrorKind::config, "batch_size must be >= 1");
  if (!(cfg.lr0 > 0)) raise(ErrorKind::config, "lr0 must be positive");
  if (!(cfg.decay_factor > 0)) raise(ErrorKind::config, "decay_factor must be positive");
  if (cfg.decay_every < 1) raise(ErrorKind::config, "decay_every must be >= 1");
  if (cfg.l2 < 0) raise(ErrorKind::config, "l2 must be >= 0");
  if (cfg.max_epochs < 1) raise(ErrorKind::config, "max_epochs must be >= 1");
  if (cfg.patience < 1) raise(ErrorKind::config, "patience must be >= 1");
  if (cfg.ggnn_steps < 0) raise(ErrorKind::config, "ggnn_steps must be >= 0");
  if (cfg.k < 1) raise(ErrorKind::config, "metric cutoff k must be >= 1");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) raise(ErrorKind::contract, "epoch must be >= 0");
  const int stages = epoch / cfg.decay_every;
  return cfg.lr0 * std::pow(cfg.decay_factor, stages);
}

EpochStats train_epoch(ModelParams& params, const std::vector<TrainExample>& examples,
                       const std::vector<std::vector<int>>& batches, AdamState& opt,
                       const TrainConfig& cfg, double lr) {
  if (batches.empty()) raise(ErrorKind::contract, "train_epoch needs at least one batch");

  std::vector<Tensor*> param_ptrs;
  for (auto& [name, t] : params.named()) param_ptrs.push_back(t);

  AdamConfig step_cfg;
  step_cfg.lr = static_cast<float>(lr);
  step_cfg.l2 = static_cast<float>(cfg.l2);

  EpochStats stats;
  double loss_sum = 0.0;
  size_t example_count = 0;
  double norm_sum = 0.0;

  for (size_t b = 0; b < batches.size(); ++b) {
    const std::vector<int>& batch = batches[b];
    if (batch.empty()) raise(ErrorKind::contract, "empty batch at index " + std::to_string(b));

    Tape tape;
    ModelLeaves leaves = bind_params(tape, params);
    Var total{};
    for (int idx : batch) {
      const TrainExample& ex = examples.at(static_cast<size_t>(idx));
      GraphVars g = bind_graph(tape, build_graph(ex.prefix));
      ForwardVars f = forward_probs(tape, leaves, g, params.variant, cfg.ggnn_steps);
      Var loss = example_loss(tape, f.probs, ex.label, cfg.loss_mode);
      total = total.valid() ? tape.add(total, loss) : loss;
    }
    Var batch_loss = tape.scale(total, 1.0f / static_cast<float>(batch.size()));
    const float loss_value = tape.val(batch_loss).data[0];
    if (!std::isfinite(loss_value)) {
      std::string culprit = tape.first_non_finite().value_or("loss");
      raise(ErrorKind::numeric, "non-finite loss in batch " + std::to_string(b) +
                                    " (first bad op: " + culprit + "); epoch aborted");
    }
    tape.backward(batch_loss);

    std::vector<Tensor> grads;
    grads.reserve(leaves.order.size());
    for (const auto& [name, v] : leaves.order) grads.push_back(tape.grad(v));
    // The padding embedding row receives no gradient by construction; keep it
    // frozen under l2 as well.
    Tensor& ge = grads[0];
    for (int j = 0; j < params.d; ++j) ge.at(params.pad_index(), j) = 0.0f;

    double sq = 0.0;
    for (const Tensor& g : grads)
      for (float v : g.data) sq += static_cast<double>(v) * v;
    norm_sum += std::sqrt(sq);

    std::vector<const Tensor*> grad_ptrs;
    grad_ptrs.reserve(grads.size());
    for (const Tensor& g : grads) grad_ptrs.push_back(&g);
    adam_step(param_ptrs, grad_ptrs, opt, step_cfg);

    loss_sum += static_cast<double>(loss_value) * static_cast<double>(batch.size());
    example_count += batch.size();
  }

  stats.batches = static_cast<int>(batches.size());
  stats.mean_loss = loss_sum / static_cast<double>(example_count);
  stats.grad_norm = norm_sum / static_cast<double>(batches.size());
  return stats;
}

Metrics evaluate_examples(const ModelParams& params, const std::vector<TrainExample>& examples,
                          int k, int ggnn_steps) {
  if (examples.empty()) raise(ErrorKind::contract, "no test examples to evaluate");
  if (k > params.m)
    raise(ErrorKind::contract, "metric cutoff k=" + std::to_string(k) +
                                   " exceeds item count m=" + std::to_string(params.m));
  MetricsAccumulator acc(k);
  for (const TrainExample& ex : examples) {
    Tape tape;
    ModelLeaves leaves = bind_params(tape, params, /*trainable=*/false);
    GraphVars g = bind_graph(tape, build_graph(ex.prefix));
    ForwardVars f = forward_probs(tape, leaves, g, params.variant, ggnn_steps);
    const Tensor& probs = tape.val(f.probs);
    acc.add(metrics_for(rank_topk(probs.data, k), ex.label, k));
  }
  return acc.finish();
}

std::pair<std::vector<int>, std::vector<int>> validation_split(size_t n, uint64_t seed) {
  // Shuffle all indices with a dedicated stream, then carve the validation
  // block off the front. Disjoint by construction; the union is [0, n).
  Rng rng(seed ^ 0x76616c73ULL);  // distinct stream from the epoch shuffles
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const size_t val_count = n >= 10 ? n / 10 : (n > 1 ? 1 : 0);
  std::vector<int> val(order.begin(), order.begin() + static_cast<long>(val_count));
  std::vector<int> train(order.begin() + static_cast<long>(val_count), order.end());
  return {train, val};
}

FitResult fit(const std::vector<TrainExample>& examples, int item_count, const TrainConfig& cfg,
              const std::function<void(const TrainLogLine&)>& on_epoch) {
  validate_config(cfg);
  if (examples.empty()) raise(ErrorKind::data, "cannot fit on an empty example set");
  if (item_count < 1) raise(ErrorKind::contract, "item_count must be >= 1");
  for (const TrainExample& ex : examples)
    if (ex.label < 0 || ex.label >= item_count)
      raise(ErrorKind::data, "example label " + std::to_string(ex.label) +
                                 " outside item universe of size " + std::to_string(item_count));

  Rng rng(cfg.seed);

  const auto [train_idx, val_idx] = validation_split(examples.size(), cfg.seed);
  std::vector<TrainExample> train_set, val_set;
  for (int i : train_idx) train_set.push_back(examples[static_cast<size_t>(i)]);
  for (int i : val_idx) val_set.push_back(examples[static_cast<size_t>(i)]);
  if (train_set.empty()) raise(ErrorKind::data, "training split is empty");

  ModelParams params = init_params<float>(item_count, cfg.d, cfg.seed, cfg.variant);
  std::vector<Tensor*> param_ptrs;
  for (auto& [name, t] : params.named()) param_ptrs.push_back(t);
  AdamState opt = AdamState::for_params(param_ptrs);

  const int k_eff = std::min(cfg.k, item_count);

  FitResult result;
  result.train_examples = train_set.size();
  result.val_examples = val_set.size();
  result.best_params = params;
  EarlyStopper stopper(cfg.patience);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    const std::vector<std::vector<int>> batches =
        make_batches(train_set.size(), cfg.batch_size, rng);
    const EpochStats stats = train_epoch(params, train_set, batches, opt, cfg, lr);

    // On degenerate tiny inputs the validation block may be empty; fall back
    // to the training loss trend by scoring the train set.
    const Metrics val = evaluate_examples(params, val_set.empty() ? train_set : val_set, k_eff,
                                          cfg.ggnn_steps);
    const double selection = cfg.select_by_mrr ? val.mrr_at_k : val.precision_at_k;

    TrainLogLine line;
    line.epoch = epoch;
    line.lr = lr;
    line.train_loss = stats.mean_loss;
    line.val_precision = val.precision_at_k;
    line.val_mrr = val.mrr_at_k;
    line.improved = stopper.observe(selection);
    if (line.improved) {
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_metric = selection;
    }
    result.log.push_back(line);
    result.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(line);
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace tagnn

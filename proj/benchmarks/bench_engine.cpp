// Microbenchmarks for the hot paths: session-graph assembly, the model
// forward pass (every variant), reverse-mode backprop, the optimizer step,
// and top-k ranking. Build Release and run `tagnn_bench`.
#include <benchmark/benchmark.h>

#include <vector>

#include "tagnn/adam.hpp"
#include "tagnn/graph.hpp"
#include "tagnn/metrics.hpp"
#include "tagnn/model.hpp"
#include "tagnn/rng.hpp"
#include "tagnn/tape.hpp"

namespace {

std::vector<int> random_prefix(tagnn::Rng& rng, int length, int alphabet) {
  std::vector<int> prefix(static_cast<size_t>(length));
  for (int& item : prefix) item = static_cast<int>(rng.below(static_cast<uint64_t>(alphabet)));
  return prefix;
}

void BM_BuildGraph(benchmark::State& state) {
  const int length = static_cast<int>(state.range(0));
  tagnn::Rng rng(11);
  std::vector<std::vector<int>> prefixes;
  for (int i = 0; i < 64; ++i) prefixes.push_back(random_prefix(rng, length, length));
  size_t next = 0;
  for (auto _ : state) {
    const tagnn::SessionGraph g = tagnn::build_graph(prefixes[next]);
    benchmark::DoNotOptimize(g.a_out.data.data());
    next = (next + 1) % prefixes.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BuildGraph)->Arg(5)->Arg(10)->Arg(20);

/// Forward pass at paper scale (d=100, ten-click session) for each session
/// representation; the argument indexes `all_variants()`.
void BM_Forward(benchmark::State& state) {
  const tagnn::Variant variant = tagnn::all_variants()[static_cast<size_t>(state.range(0))];
  const int m = 1000, d = 100;
  const tagnn::ModelParams params = tagnn::init_params<float>(m, d, 7, variant);
  tagnn::Rng rng(13);
  const tagnn::SessionGraph graph = tagnn::build_graph(random_prefix(rng, 10, m));
  for (auto _ : state) {
    tagnn::Tape tape;
    const tagnn::ModelLeaves leaves = tagnn::bind_params(tape, params, /*trainable=*/false);
    const tagnn::GraphVars g = tagnn::bind_graph(tape, graph);
    const tagnn::ForwardVars f = tagnn::forward_probs(tape, leaves, g, variant, 1);
    benchmark::DoNotOptimize(tape.val(f.probs).data.data());
  }
  state.SetLabel(tagnn::variant_name(variant));
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_Forward)->DenseRange(0, 4);

void BM_ForwardBackward(benchmark::State& state) {
  const int m = 1000, d = 100;
  const tagnn::ModelParams params = tagnn::init_params<float>(m, d, 7);
  tagnn::Rng rng(13);
  const tagnn::SessionGraph graph = tagnn::build_graph(random_prefix(rng, 10, m));
  for (auto _ : state) {
    tagnn::Tape tape;
    const tagnn::ModelLeaves leaves = tagnn::bind_params(tape, params);
    const tagnn::GraphVars g = tagnn::bind_graph(tape, graph);
    const tagnn::ForwardVars f = tagnn::forward_probs(tape, leaves, g, tagnn::Variant::full, 1);
    const tagnn::Var loss =
        tagnn::example_loss(tape, f.probs, 42, tagnn::LossMode::categorical);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(leaves.order.front().second).data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardBackward);

void BM_AdamStep(benchmark::State& state) {
  const int m = 1000, d = 100;
  tagnn::ModelParams params = tagnn::init_params<float>(m, d, 7);
  auto tensors = params.named();
  std::vector<tagnn::Tensor*> values;
  std::vector<tagnn::Tensor> grad_storage;
  for (auto& [name, tensor] : tensors) {
    values.push_back(tensor);
    grad_storage.push_back(tagnn::Tensor::full(tensor->shape, 1e-3f));
  }
  std::vector<const tagnn::Tensor*> grads;
  for (const tagnn::Tensor& g : grad_storage) grads.push_back(&g);
  tagnn::AdamState opt = tagnn::AdamState::for_params(values);
  const tagnn::AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8, 1e-5};
  size_t weights = 0;
  for (const tagnn::Tensor* v : values) weights += v->numel();
  for (auto _ : state) {
    tagnn::adam_step(values, grads, opt, cfg);
    benchmark::DoNotOptimize(values.front()->data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(weights));
}
BENCHMARK(BM_AdamStep);

void BM_RankTopK(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  tagnn::Rng rng(17);
  std::vector<float> scores(static_cast<size_t>(m));
  for (float& s : scores) s = static_cast<float>(rng.uniform(-4.0, 4.0));
  for (auto _ : state) {
    const std::vector<int> top = tagnn::rank_topk(scores, 20);
    benchmark::DoNotOptimize(top.data());
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_RankTopK)->Arg(1000)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();

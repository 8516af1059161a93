#include <benchmark/benchmark.h>

#include "stkd/data.hpp"
#include "stkd/graph.hpp"
#include "stkd/models.hpp"
#include "stkd/rng.hpp"

namespace {

using namespace stkd;

struct Fixture {
  Graph graph;
  NormalizedAdjacency adj;
  Tensor window;

  explicit Fixture(std::size_t n) : graph(erdos_renyi_geometric(n, 0.15, 42)), adj(symmetric_normalize(graph)) {
    Rng rng(7);
    std::vector<double> v(12 * n);
    for (auto& x : v) x = rng.normal();
    window = Tensor::from({12, n, 1}, std::move(v));
  }
};

void BM_TeacherForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fixture f(n);
  TeacherConfig tc;
  tc.n_nodes = n;
  TeacherModel teacher(tc);
  teacher.init_params(1);
  for (auto _ : state) {
    Tape tape = Tape::no_grad();
    benchmark::DoNotOptimize(teacher.forward(tape, f.adj, f.window, 0));
  }
}
BENCHMARK(BM_TeacherForward)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_StudentForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fixture f(n);
  StudentConfig sc;
  sc.n_nodes = n;
  StudentModel student(sc);
  student.init_params(1);
  for (auto _ : state) {
    Tape tape = Tape::no_grad();
    benchmark::DoNotOptimize(student.forward(tape, f.window, 0));
  }
}
BENCHMARK(BM_StudentForward)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_Spmm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Fixture f(n);
  Rng rng(3);
  std::vector<double> v(n * 32);
  for (auto& x : v) x = rng.normal();
  const Tensor x = Tensor::from({n, 32}, std::move(v));
  for (auto _ : state) {
    Tape tape = Tape::no_grad();
    benchmark::DoNotOptimize(spmm(tape, f.adj, x));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.adj.nnz() * 32));
}
BENCHMARK(BM_Spmm)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();

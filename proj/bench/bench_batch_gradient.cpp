// Serial vs OpenMP batch gradient. Usage: bench_batch_gradient [p] [batch] [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "analysparse/batch.hpp"
#include "analysparse/linalg.hpp"

using namespace analysparse;

int main(int argc, char** argv) {
  const std::size_t p = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 32;
  const std::size_t batch_sz = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 64;
  const int reps = argc > 3 ? std::atoi(argv[3]) : 5;

  DataConfig dc;
  dc.p = p;
  dc.L = batch_sz;
  dc.sigma = 1.0;
  dc.seed = 1;
  const Dataset data = gen_dataset(dc);
  std::vector<const SignalPair*> batch;
  for (const auto& pr : data.pairs) batch.push_back(&pr);

  Rng init(1, Stream::Init);
  const Tensor D0 = add(make_dtv(p), gaussian(p, p, 0.0, 0.05, init));
  const FistaSolver solver(training_denoise_config());
  const double eta1 = solver.prepare(D0);
  const Rng item_rng(1, Stream::Batch);

  auto time = [&](Execution exec, BatchGradient& out) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) out = batch_gradient(D0, batch, solver, eta1, item_rng, exec);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
  };
  BatchGradient serial;
  BatchGradient parallel;
  const double ts = time(Execution::Serial, serial);
  const double tp = time(Execution::Parallel, parallel);
  const bool identical = serial.loss == parallel.loss && serial.grad == parallel.grad;
  std::printf("p=%zu batch=%zu workers=%d\n", p, batch_sz, worker_count());
  std::printf("serial   %.4f s/batch\n", ts);
  std::printf("parallel %.4f s/batch  speedup %.2fx\n", tp, ts / tp);
  std::printf("results bit-identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}

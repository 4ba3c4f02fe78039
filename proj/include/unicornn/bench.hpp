#pragma once

#include <iosfwd>
#include <vector>

#include "unicornn/engine.hpp"

namespace unicornn {

// Step-by-step reference implementation of one training sample: no batched
// input transform (V*x is a fresh matrix-vector product every step, forward
// and backward) and full trajectory storage instead of reverse-time
// reconstruction. Exists as the timing baseline and as an independent
// implementation to cross-check the fused engine against. Dense stacks with
// per-step regression readout only.
SampleGrads naive_loss_grads(const Model& model, const Mat& inputs,
                             const Mat& targets);

struct BenchConfig {
  Index N = 1000;    // sequence length
  Index m = 128;     // hidden width
  int L = 2;         // stack depth
  Index batch = 128; // sequences per timed pass
  Index in_dim = 1;
  Index out_dim = 1;
  int reps = 20;     // timed passes per implementation
  std::uint64_t seed = 0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<double> fused_s;  // per-rep wall time, combined fwd+bwd
  std::vector<double> naive_s;
  double fused_mean_s = 0.0;
  double naive_mean_s = 0.0;
  // worst relative disagreement between the two implementations (loss and
  // every parameter gradient) on the benchmark batch
  double agreement = 0.0;
};

// Times the fused engine against the naive reference on one random batch,
// alternating timed passes after an untimed warmup of each.
BenchReport run_benchmark(const BenchConfig& config);

// Plot-ready long format: impl,rep,N,m,L,batch,seconds
void write_bench_csv(const BenchReport& report, std::ostream& out);

}  // namespace unicornn

#pragma once

#include <cstdint>
#include <string>

#include "unicornn/dataset.hpp"

namespace unicornn {

// Train/valid/test triple produced by the generators; each part is a
// self-contained SequenceDataset.
struct DatasetSplits {
  SequenceDataset train;
  SequenceDataset valid;
  SequenceDataset test;
};

// ---------------------------------------------------------------------------
// Lorenz 96 forecasting data
// ---------------------------------------------------------------------------

struct Lorenz96Options {
  double F = 8.0;            // forcing; 0.9 is the regular regime, 8 chaotic
  int n_seq = 128;           // sequences per split
  Index seq_len = 2000;      // recorded steps per sequence
  std::uint64_t seed = 0;
  double internal_step = 0.01;  // RK4 step
  int stride = 10;              // recorded step = stride * internal_step
  int burn_in = 1000;           // internal steps discarded up front
  int dim = 5;                  // state components, cyclic coupling
  int horizon = 1;              // targets lead inputs by this many records
};

// Cyclic right-hand side dx_i = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F.
Vec lorenz96_rhs(const Vec& x, double F);

// Fixed-step RK4 run from x0: discards `burn_in` internal steps, then records
// every `stride`-th state, n_record columns in total (the state after burn-in
// is the first record).
Mat lorenz96_trajectory(const Vec& x0, double F, Index n_record, double h,
                        int stride, int burn_in);

// Per-split datasets of one-step-ahead (or `horizon`-ahead) regression pairs.
// Initial states sit at the x_i = F equilibrium plus U(-0.5, 0.5) noise, one
// fresh draw per sequence, deterministic under the seed.
DatasetSplits lorenz96_generate(const Lorenz96Options& opts = {});

// ---------------------------------------------------------------------------
// Noise-padded classification data
// ---------------------------------------------------------------------------

// Sequences whose class is encoded only in a short prefix: each class maps to
// a binary code over the first channels, written as constant levels 0.2/0.8
// for `content_len` steps with U(-0.1, 0.1) jitter; everything after is iid
// U(0, 1) noise whose mean matches the code midpoint, so no shortcut through
// sequence statistics survives the padding.
struct NoisePaddedOptions {
  int n_samples = 4000;
  Index content_len = 32;
  Index pad_len = 968;  // total length = content_len + pad_len
  int n_classes = 4;    // <= 16 (codes live on 4 channels)
  std::uint64_t seed = 0;
  int valid_count = 500;
  int test_count = 500;  // train gets the rest
};

DatasetSplits noise_padded_task(const NoisePaddedOptions& opts = {});

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Column layout: seq_id,step,x_1..x_d then either y_1..y_k (per-step
// regression targets) or label (classification). The header names the
// schema; rows must be grouped by seq_id with step counting up from 1.
void save_csv_sequences(const SequenceDataset& data, const std::string& path);

// Parses a file written in the layout above. Malformed rows and inconsistent
// shapes raise std::runtime_error with the offending line number.
SequenceDataset load_csv_sequences(const std::string& path);

}  // namespace unicornn

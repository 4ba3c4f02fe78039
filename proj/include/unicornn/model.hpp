#pragma once

#include <cstdint>
#include <vector>

#include "unicornn/backward.hpp"
#include "unicornn/layer.hpp"

namespace unicornn {

struct Model {
  ModelConfig config;
  std::vector<LayerParams> layers;  // layers[ell-1], ell = 1..L
  Mat readout_W;                    // out_dim x m
  Vec readout_b;                    // out_dim

  // Structural consistency: layer count, per-layer input widths, a lambda
  // matrix exactly on the layers the skip distance feeds, readout shapes.
  void validate() const;
};

// Variational dropout masks: one vector per hidden interface (the outputs of
// layers 1..L-1 as seen by everything above them), held fixed across every
// time step of a sequence. Entries are 0 with probability p and 1/(1-p)
// otherwise, so the masked signal is unbiased in expectation.
struct DropoutMask {
  std::vector<Arr> masks;  // size L-1; masks[q-1] scales layer q's outputs
};

DropoutMask make_dropout_mask(const ModelConfig& config, std::uint64_t seed);

enum class RunMode { train, eval };

// Everything a backward sweep needs from the forward pass. `outputs` holds the
// raw (pre-mask) y sequences; masks are reapplied where consumed. In stored
// mode the full trajectories are kept, otherwise only the final states and the
// backward pass reconstructs states by running the dynamics in reverse.
struct ModelCache {
  Mat inputs;                                          // d x N
  std::vector<Mat> outputs;                            // per layer, m x N
  std::vector<LayerState> finals;                      // per layer
  std::vector<std::optional<Trajectory>> trajectories; // filled iff stored
  std::vector<Arr> masks;                              // empty when inactive
  bool stored = false;

  Index steps() const { return inputs.cols(); }
};

struct ModelForward {
  Mat readout;  // out_dim x N (per_step) or out_dim x 1 (final_step)
  ModelCache cache;
};

// Runs the stack bottom to top. Layer ell is driven by the masked outputs of
// layer ell-1 (the raw inputs for ell = 1) plus, on residual layers, a lambda
// transform of the masked outputs of layer ell-S. In train mode with
// dropout > 0 a mask must be supplied; eval mode ignores any mask.
ModelForward model_forward(const Model& model, const Mat& inputs, RunMode mode,
                           const DropoutMask* mask = nullptr,
                           bool store = false);

struct ModelGrads {
  std::vector<LayerGrads> layers;  // layers[ell-1]; g_lambda set on skip layers
};

// Backpropagates dE/dy of the top layer through the whole stack, routing each
// layer's input gradient down both the dense edge and, where present, the
// skip edge (each rescaled by the mask it passed through on the way up).
ModelGrads model_backward(const Model& model, const ModelCache& cache,
                          const Mat& upstream_top);

// Affine readout over the (masked, in train mode) top-layer outputs.
Mat apply_readout(const Model& model, const Mat& top_outputs);

struct ReadoutGrads {
  Mat g_W;
  Vec g_b;
  Mat upstream_top;  // m x N gradient handed to model_backward
};

// g_readout matches ModelForward::readout in shape. For final_step mode the
// returned upstream is zero everywhere except the last column.
ReadoutGrads readout_backward(const Model& model, const ModelCache& cache,
                              const Mat& g_readout);

// Scalar loss of a single labeled or regression sample, with gradients for
// every parameter. Regression compares the per-step readout against an
// out_dim x N target with mean half-squared error; classification feeds the
// final-step readout into softmax cross entropy.
struct SampleTarget {
  const Mat* regression = nullptr;  // exactly one of the two must be set
  int label = -1;
};

struct SampleGrads {
  double loss = 0.0;
  ModelGrads model;
  Mat g_W;
  Vec g_b;
};

double model_loss(const Model& model, const Mat& inputs,
                  const SampleTarget& target, RunMode mode,
                  const DropoutMask* mask = nullptr);

SampleGrads model_loss_grads(const Model& model, const Mat& inputs,
                             const SampleTarget& target, RunMode mode,
                             const DropoutMask* mask = nullptr,
                             bool store = false);

// Flat views over every trainable tensor in a fixed order: for each layer
// w, V, b, c, then lambda if present; finally readout W and b. Gradient
// structures traverse identically so optimizers can walk the two in step.
std::vector<TensorRef> param_refs(Model& model);
std::vector<TensorRef> grad_refs(const Model& model, ModelGrads& grads, Mat& g_W,
                                 Vec& g_b);

}  // namespace unicornn

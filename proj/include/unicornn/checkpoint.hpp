#pragma once

#include <optional>
#include <string>

#include "unicornn/model.hpp"
#include "unicornn/optim.hpp"

namespace unicornn {

struct CheckpointMeta {
  std::string task = "none";  // single token, no whitespace
  int epoch = 0;
  double metric = 0.0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  Model model;
  std::optional<OptimState> optim;
  CheckpointMeta meta;
};

// Line-oriented text document, version tag "unicornn-ckpt-1" on the first
// line, every float printed with 17 significant digits so load(save(m))
// reproduces each double bit-exactly. Parse failures raise std::runtime_error
// naming the offending tensor (e.g. "layer 3 w") or field; unknown versions
// are rejected outright.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace unicornn

#pragma once

#include <cstdint>

#include "unicornn/model.hpp"

namespace unicornn {

// Seed-deterministic parameter draw. Per layer, in order: w ~ U(0,1),
// c ~ U(-0.1,0.1), V entries ~ U(-r,r) with the fan-in rule
// r = sqrt(6/(65*fan_in)), then lambda by the same rule (fan_in = m) on skip
// layers; b starts at zero. Readout W ~ U(-1/sqrt(m), 1/sqrt(m)), b zero.
Model init_params(const ModelConfig& config, std::uint64_t seed);

}  // namespace unicornn

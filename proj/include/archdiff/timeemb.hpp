#pragma once

#include "archdiff/tensor.hpp"

namespace archdiff {

// Sinusoidal features of the diffusion time, projected by each model into
// its own embedding space.
constexpr int kTimeFeatureDim = 16;
Tensor time_features(double t);  // {1, kTimeFeatureDim}

}  // namespace archdiff

#include "archdiff/timeemb.hpp"

#include <cmath>

namespace archdiff {

Tensor time_features(double t) {
    Tensor f(1, kTimeFeatureDim);
    for (int k = 0; k < kTimeFeatureDim / 2; ++k) {
        const double freq = std::pow(1000.0, static_cast<double>(k) / (kTimeFeatureDim / 2 - 1));
        f.at(0, 2 * k) = std::sin(freq * t);
        f.at(0, 2 * k + 1) = std::cos(freq * t);
    }
    return f;
}

}  // namespace archdiff

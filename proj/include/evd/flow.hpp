#pragma once

#include <vector>

#include "evd/tensor.hpp"

namespace evd {

/// One point on the linear noise-to-data path:
/// z_t = t*z1 + (1-t)*z0, with velocity target v_t = z1 - z0.
struct FlowSample {
    LatentVideo z0;
    LatentVideo z1;
    double t = 0.0;
    LatentVideo z_t;
    LatentVideo v_t;
};

/// Monotone sampling grid, t_0 = 0 .. t_K = 1.
struct TimeGrid {
    std::vector<double> points;
    int steps() const { return static_cast<int>(points.size()) - 1; }
};

struct TimeWeightConfig {
    double t_star_loss = 0.60;
    double kappa = 6.0;
};

FlowSample interpolate(const LatentVideo& z0, const LatentVideo& z1, double t);

/// t_k = k/K. Throws ConfigError for K < 1.
TimeGrid uniform_time_grid(int k);

/// Validates a caller-supplied grid (strictly increasing, 0 and 1 endpoints).
TimeGrid custom_time_grid(std::vector<double> points);

/// w(t) = 1 for t <= t*, exp(-kappa*(t - t*)) after.
double time_weight(double t, const TimeWeightConfig& cfg);

}  // namespace evd

#include "evd/flow.hpp"

#include <cmath>
#include <string>

namespace evd {

FlowSample interpolate(const LatentVideo& z0, const LatentVideo& z1, double t) {
    if (!z0.same_shape(z1)) {
        throw ShapeError("interpolate: z0 and z1 shapes differ");
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ConfigError("interpolate: t=" + std::to_string(t) + " outside [0,1]");
    }
    FlowSample s;
    s.z0 = z0;
    s.z1 = z1;
    s.t = t;
    s.z_t = LatentVideo(z0.frames(), z0.height(), z0.width(), z0.channels());
    s.v_t = LatentVideo(z0.frames(), z0.height(), z0.width(), z0.channels());
    const auto& a = z0.data();
    const auto& b = z1.data();
    auto& zt = s.z_t.data();
    auto& vt = s.v_t.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        zt[i] = t * b[i] + (1.0 - t) * a[i];
        vt[i] = b[i] - a[i];
    }
    return s;
}

TimeGrid uniform_time_grid(int k) {
    if (k < 1) throw ConfigError("time grid needs K >= 1");
    TimeGrid g;
    g.points.resize(k + 1);
    for (int i = 0; i <= k; ++i) g.points[i] = static_cast<double>(i) / k;
    g.points.front() = 0.0;
    g.points.back() = 1.0;
    return g;
}

TimeGrid custom_time_grid(std::vector<double> points) {
    if (points.size() < 2) throw ConfigError("time grid needs at least 2 points");
    if (points.front() != 0.0 || points.back() != 1.0) {
        throw ConfigError("time grid must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (!(points[i] > points[i - 1])) {
            throw ConfigError("time grid must be strictly increasing");
        }
    }
    TimeGrid g;
    g.points = std::move(points);
    return g;
}

double time_weight(double t, const TimeWeightConfig& cfg) {
    if (t <= cfg.t_star_loss) return 1.0;
    return std::exp(-cfg.kappa * (t - cfg.t_star_loss));
}

}  // namespace evd

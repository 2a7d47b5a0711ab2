#include "evd/pseudo_events.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evd/gating.hpp"

namespace evd {

void PseudoTargetConfig::validate() const {
    if (!(softness > 0.0)) throw ConfigError("pseudo.softness must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("pseudo.epsilon must be positive");
    if (!(tau_a > 0.0 && tau_a < 1.0)) throw ConfigError("pseudo.tau_a must lie in (0,1)");
    if (!(entropy_threshold >= 0.0 && entropy_threshold <= 1.0)) {
        throw ConfigError("pseudo.entropy_threshold must lie in [0,1]");
    }
}

Mat latent_change_magnitude(const LatentVideo& z1, const PatchSpec& spec) {
    if (z1.frames() < 2) {
        throw ShapeError("latent change needs at least two frames");
    }
    // spatial-only patching: p_t forced to 1
    const TokenGrid g = token_grid(1, z1.height(), z1.width(), PatchSpec{1, spec.p_h, spec.p_w});
    const int n = g.nh * g.nw;
    const int c = z1.channels();

    Mat m(z1.frames() - 1, n);
    for (int tau = 0; tau + 1 < z1.frames(); ++tau) {
        double* row = m.row(tau);
        int tok = 0;
        for (int ih = 0; ih < g.nh; ++ih) {
            for (int iw = 0; iw < g.nw; ++iw, ++tok) {
                double s = 0.0;
                for (int dh = 0; dh < spec.p_h; ++dh) {
                    for (int dw = 0; dw < spec.p_w; ++dw) {
                        for (int ch = 0; ch < c; ++ch) {
                            s += std::abs(z1.at(tau + 1, ih * spec.p_h + dh, iw * spec.p_w + dw, ch) -
                                          z1.at(tau, ih * spec.p_h + dh, iw * spec.p_w + dw, ch));
                        }
                    }
                }
                row[tok] = s / c;
            }
        }
    }
    return m;
}

Mat suppress_camera(const Mat& m) {
    Mat out(m.rows, m.cols);
    for (int tau = 0; tau < m.rows; ++tau) {
        const double* in = m.row(tau);
        // extended-precision accumulation so frame-constant magnitudes
        // cancel exactly (a pure global-motion frame must give all zeros)
        long double sum = 0.0L;
        for (int i = 0; i < m.cols; ++i) sum += in[i];
        const double mean = static_cast<double>(sum / m.cols);
        double* dst = out.row(tau);
        for (int i = 0; i < m.cols; ++i) dst[i] = std::max(0.0, in[i] - mean);
    }
    return out;
}

namespace {

double median_of_row(const double* row, int n) {
    std::vector<double> tmp(row, row + n);
    std::sort(tmp.begin(), tmp.end());
    if (n % 2 == 1) return tmp[n / 2];
    return 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);
}

}  // namespace

Mat activity_target(const Mat& m, const PseudoTargetConfig& cfg) {
    cfg.validate();
    Mat a(m.rows, m.cols);
    for (int tau = 0; tau < m.rows; ++tau) {
        const double* in = m.row(tau);
        const double mu = cfg.mu_mode == PseudoTargetConfig::MuMode::median
                              ? median_of_row(in, m.cols)
                              : cfg.mu_fixed;
        double* dst = a.row(tau);
        for (int i = 0; i < m.cols; ++i) dst[i] = logistic((in[i] - mu) / cfg.softness);
    }
    return a;
}

std::vector<double> phase_target(const Mat& activity, double epsilon) {
    std::vector<double> phase(activity.rows, 0.0);
    double total = 0.0;
    for (int tau = 0; tau < activity.rows; ++tau) {
        const double* row = activity.row(tau);
        for (int i = 0; i < activity.cols; ++i) total += row[i];
    }
    double cum = 0.0;
    const double denom = total + epsilon;
    for (int tau = 0; tau < activity.rows; ++tau) {
        const double* row = activity.row(tau);
        for (int i = 0; i < activity.cols; ++i) cum += row[i];
        phase[tau] = cum / denom;
    }
    return phase;
}

double confidence_target(const std::vector<double>& activity_map, double tau_a) {
    double s = 0.0;
    int cnt = 0;
    for (double a : activity_map) {
        if (a >= tau_a) {
            s += a;
            ++cnt;
        }
    }
    if (cnt == 0) return 0.0;  // empty selection convention
    return std::clamp(s / cnt, 0.0, 1.0);
}

double normalized_entropy(const std::vector<double>& activity_map) {
    const double total = std::accumulate(activity_map.begin(), activity_map.end(), 0.0);
    if (!(total > 0.0)) return 1.0;
    double h = 0.0;
    for (double a : activity_map) {
        if (a <= 0.0) continue;
        const double q = a / total;
        h -= q * std::log(q);
    }
    const double n = static_cast<double>(activity_map.size());
    return n > 1.0 ? h / std::log(n) : 0.0;
}

bool diffuseness_accept(const std::vector<double>& activity_map, double threshold) {
    if (activity_map.empty()) throw ShapeError("diffuseness filter needs a nonempty map");
    const double total = std::accumulate(activity_map.begin(), activity_map.end(), 0.0);
    if (!(total > 0.0)) return false;  // all-zero maps reject by convention
    return normalized_entropy(activity_map) <= threshold;
}

std::vector<double> frame_mean_activity(const Mat& activity) {
    std::vector<double> mean(activity.cols, 0.0);
    for (int tau = 0; tau < activity.rows; ++tau) {
        const double* row = activity.row(tau);
        for (int i = 0; i < activity.cols; ++i) mean[i] += row[i];
    }
    for (double& v : mean) v /= activity.rows;
    return mean;
}

double clip_activity_score(const LatentVideo& z1, const PatchSpec& spec) {
    const Mat m = latent_change_magnitude(z1, spec);
    std::vector<double> per_frame(m.rows, 0.0);
    for (int tau = 0; tau < m.rows; ++tau) {
        const double* row = m.row(tau);
        double s = 0.0;
        for (int i = 0; i < m.cols; ++i) s += row[i];
        per_frame[tau] = s / m.cols;
    }
    const int k = static_cast<int>(std::ceil(0.2 * m.rows));
    std::vector<int> order(m.rows);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return per_frame[a] > per_frame[b]; });
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += per_frame[order[i]];
    return s / k;
}

std::vector<double> motion_mask_activity(const LatentVideo& z, const PatchSpec& model_patch,
                                         const PseudoTargetConfig& cfg) {
    Mat m = latent_change_magnitude(z, model_patch);
    if (cfg.use_camera_suppressed) m = suppress_camera(m);
    const Mat a = activity_target(m, cfg);

    const TokenGrid grid = token_grid(z.frames(), z.height(), z.width(), model_patch);
    std::vector<double> out(grid.count(), 0.0);
    const int spatial = grid.nh * grid.nw;
    for (int it = 0; it < grid.nt; ++it) {
        const int pair_lo = it * model_patch.p_t;
        const int pair_hi = std::min((it + 1) * model_patch.p_t, z.frames() - 1);
        const int cnt = std::max(1, pair_hi - pair_lo);
        for (int s = 0; s < spatial; ++s) {
            double acc = 0.0;
            for (int tau = pair_lo; tau < pair_hi; ++tau) acc += a.at(tau, s);
            out[static_cast<std::size_t>(it) * spatial + s] = acc / cnt;
        }
    }
    return out;
}

}  // namespace evd

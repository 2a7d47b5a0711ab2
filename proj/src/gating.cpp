#include "evd/gating.hpp"

#include <cmath>
#include <string>

namespace evd {

void GateConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("gate.beta must be positive");
    if (!(tau_on > tau_off)) {
        throw ConfigError("gate.tau_on must exceed gate.tau_off (hysteresis band nonempty)");
    }
    if (!(tau_off > 0.0 && tau_on < 1.0)) {
        throw ConfigError("gate thresholds must satisfy 0 < tau_off < tau_on < 1");
    }
    if (!(t_star > 0.0 && t_star < 1.0)) {
        throw ConfigError("gate.t_star must lie in (0,1)");
    }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ActivityMap smooth_activity(const ActivityMap& a, const TokenGrid& grid, bool enabled) {
    if (static_cast<int>(a.values.size()) != grid.count()) {
        throw ShapeError("activity length " + std::to_string(a.values.size()) +
                         " does not match token grid " + std::to_string(grid.count()));
    }
    if (!enabled) {
        ActivityMap out = a;
        return out;
    }
    ActivityMap out;
    out.values.assign(a.values.size(), 0.0);
    out.smoothed = true;
    const int slice = grid.nh * grid.nw;
    for (int it = 0; it < grid.nt; ++it) {
        const double* in = a.values.data() + static_cast<std::size_t>(it) * slice;
        double* dst = out.values.data() + static_cast<std::size_t>(it) * slice;
        for (int ih = 0; ih < grid.nh; ++ih) {
            for (int iw = 0; iw < grid.nw; ++iw) {
                double sum = 0.0;
                int cnt = 0;
                for (int dh = -1; dh <= 1; ++dh) {
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int jh = ih + dh, jw = iw + dw;
                        if (jh < 0 || jh >= grid.nh || jw < 0 || jw >= grid.nw) continue;
                        sum += in[jh * grid.nw + jw];
                        ++cnt;
                    }
                }
                dst[ih * grid.nw + iw] = sum / cnt;
            }
        }
    }
    return out;
}

std::vector<double> smooth_activity_adjoint(const std::vector<double>& d_out,
                                            const TokenGrid& grid, bool enabled) {
    if (static_cast<int>(d_out.size()) != grid.count()) {
        throw ShapeError("smoothing adjoint: length does not match token grid");
    }
    if (!enabled) return d_out;
    std::vector<double> d_in(d_out.size(), 0.0);
    const int slice = grid.nh * grid.nw;
    for (int it = 0; it < grid.nt; ++it) {
        const double* dst = d_out.data() + static_cast<std::size_t>(it) * slice;
        double* src = d_in.data() + static_cast<std::size_t>(it) * slice;
        for (int ih = 0; ih < grid.nh; ++ih) {
            for (int iw = 0; iw < grid.nw; ++iw) {
                int cnt = 0;
                for (int dh = -1; dh <= 1; ++dh)
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int jh = ih + dh, jw = iw + dw;
                        if (jh >= 0 && jh < grid.nh && jw >= 0 && jw < grid.nw) ++cnt;
                    }
                const double share = dst[ih * grid.nw + iw] / cnt;
                for (int dh = -1; dh <= 1; ++dh) {
                    for (int dw = -1; dw <= 1; ++dw) {
                        const int jh = ih + dh, jw = iw + dw;
                        if (jh < 0 || jh >= grid.nh || jw < 0 || jw >= grid.nw) continue;
                        src[jh * grid.nw + jw] += share;
                    }
                }
            }
        }
    }
    return d_in;
}

GateVector soft_gate(const ActivityMap& a, const GateConfig& cfg) {
    const double mid = 0.5 * (cfg.tau_on + cfg.tau_off);
    GateVector g(a.values.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = logistic(cfg.beta * (a.values[i] - mid));
    }
    return g;
}

GateState hysteresis_step(const ActivityMap& a, const GateState& prev, const GateConfig& cfg) {
    if (a.values.size() != prev.bin.size()) {
        throw ShapeError("hysteresis: activity and state lengths differ");
    }
    GateState next = prev;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] >= cfg.tau_on) {
            next.bin[i] = 1;
        } else if (a.values[i] <= cfg.tau_off) {
            next.bin[i] = 0;
        }
        // inside the band: hold previous value
    }
    return next;
}

GateVector combine_gate(const GateVector& soft, const GateState& state, GateConfig::Combine mode) {
    if (soft.size() != state.bin.size()) {
        throw ShapeError("combine_gate: lengths differ");
    }
    GateVector g(soft.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = (mode == GateConfig::Combine::product)
                   ? soft[i] * state.bin[i]
                   : static_cast<double>(state.bin[i]);
    }
    return g;
}

double schedule_rho(double t, const GateConfig& cfg) {
    if (t <= cfg.t_star) return 1.0;
    return 1.0 - (t - cfg.t_star) / (1.0 - cfg.t_star);
}

GateVector apply_schedule(const GateVector& gate, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw ConfigError("schedule rho must lie in [0,1]");
    }
    GateVector out(gate.size());
    for (std::size_t i = 0; i < gate.size(); ++i) {
        out[i] = rho * gate[i] + (1.0 - rho);
    }
    return out;
}

LatentVideo gate_field(const LatentVideo& v, const GateVector& gate, const PatchSpec& spec) {
    TokenField tok = tokenize(v, spec);
    if (static_cast<int>(gate.size()) != tok.rows()) {
        throw ShapeError("gate length " + std::to_string(gate.size()) +
                         " does not match token count " + std::to_string(tok.rows()));
    }
    for (int i = 0; i < tok.rows(); ++i) {
        double* row = tok.m.row(i);
        for (int j = 0; j < tok.cols(); ++j) row[j] *= gate[i];
    }
    return untokenize(tok);
}

}  // namespace evd

#pragma once

#include <cstdint>
#include <vector>

#include "evd/tensor.hpp"

namespace evd {

/// Event-gate knobs. tau_on > tau_off defines the hysteresis band; beta is
/// the soft-gate sharpness; t_star the schedule cutoff.
struct GateConfig {
    double beta = 12.0;
    double tau_on = 0.62;
    double tau_off = 0.38;
    double t_star = 0.60;
    bool smoothing_enabled = true;
    /// How soft and hysteresis gates combine. `product` is g = gbar * gbin
    /// as written; `binary_only` uses the hysteresis state alone, the other
    /// reading of "use the hysteresis state for stability".
    enum class Combine { product, binary_only } combine = Combine::product;

    void validate() const;
};

/// Per-trajectory hysteresis memory; entries are exactly 0 or 1 and start
/// all-zero before step 0.
struct GateState {
    std::vector<uint8_t> bin;

    static GateState zeros(int n) {
        GateState s;
        s.bin.assign(n, 0);
        return s;
    }
};

/// Length-N activity values in [0,1].
struct ActivityMap {
    std::vector<double> values;
    bool smoothed = false;
};

using GateVector = std::vector<double>;

double logistic(double x);

/// 3x3 average over each temporal slice of the patch grid; edge cells
/// average over the in-bounds subset. Temporal axis untouched. With
/// smoothing disabled this is the identity.
ActivityMap smooth_activity(const ActivityMap& a, const TokenGrid& grid, bool enabled = true);

/// Adjoint of the smoothing operator as a linear map; used when losses
/// backpropagate through smoothed activity.
std::vector<double> smooth_activity_adjoint(const std::vector<double>& d_out,
                                            const TokenGrid& grid, bool enabled = true);

/// gbar_i = sigma(beta * (a_i - (tau_on + tau_off)/2)).
GateVector soft_gate(const ActivityMap& a_smoothed, const GateConfig& cfg);

/// Token-wise two-threshold update; returns the new state, input unmodified.
GateState hysteresis_step(const ActivityMap& a_smoothed, const GateState& prev,
                          const GateConfig& cfg);

GateVector combine_gate(const GateVector& soft, const GateState& state,
                        GateConfig::Combine mode = GateConfig::Combine::product);

/// rho(t): 1 up to t_star, then linear ramp down to 0 at t = 1.
double schedule_rho(double t, const GateConfig& cfg);

/// g_sched = rho*g + (1-rho)*1.
GateVector apply_schedule(const GateVector& gate, double rho);

/// UnTok(g (*) Tok(v)): scales each token row of v by its gate entry.
LatentVideo gate_field(const LatentVideo& v, const GateVector& gate, const PatchSpec& spec);

}  // namespace evd

#include "evd/metrics.hpp"

namespace evd {

std::vector<TokenPhase> classify_tokens(const TokenGrid& grid, const PatchSpec& spec, int tau_e,
                                        int tau_s) {
    std::vector<TokenPhase> phase(grid.count());
    int token = 0;
    for (int it = 0; it < grid.nt; ++it) {
        const int t0 = it * spec.p_t;
        const int t1 = t0 + spec.p_t;
        TokenPhase p = TokenPhase::in;
        if (t1 <= tau_e) {
            p = TokenPhase::pre;
        } else if (t0 >= tau_s) {
            p = TokenPhase::post;
        }
        for (int s = 0; s < grid.nh * grid.nw; ++s, ++token) phase[token] = p;
    }
    return phase;
}

EnergyMetrics update_energy(const Trajectory& traj, const PatchSpec& spec, int tau_e, int tau_s) {
    EnergyMetrics em;
    if (traj.latents.size() < 2) return em;
    const LatentVideo& z0 = traj.latents.front();
    const TokenGrid grid = token_grid(z0.frames(), z0.height(), z0.width(), spec);
    const std::vector<TokenPhase> phase = classify_tokens(grid, spec, tau_e, tau_s);

    double sum_pre = 0.0, sum_in = 0.0, sum_post = 0.0;
    long cnt_pre = 0, cnt_in = 0, cnt_post = 0;

    LatentVideo diff(z0.frames(), z0.height(), z0.width(), z0.channels());
    for (std::size_t k = 0; k + 1 < traj.latents.size(); ++k) {
        const auto& a = traj.latents[k].data();
        const auto& b = traj.latents[k + 1].data();
        for (std::size_t i = 0; i < a.size(); ++i) diff.data()[i] = b[i] - a[i];
        TokenField tok = tokenize(diff, spec);
        for (int i = 0; i < tok.rows(); ++i) {
            const double* row = tok.m.row(i);
            double e = 0.0;
            for (int j = 0; j < tok.cols(); ++j) e += row[j] * row[j];
            switch (phase[i]) {
                case TokenPhase::pre:
                    sum_pre += e;
                    cnt_pre += tok.cols();
                    break;
                case TokenPhase::in:
                    sum_in += e;
                    cnt_in += tok.cols();
                    break;
                case TokenPhase::post:
                    sum_post += e;
                    cnt_post += tok.cols();
                    break;
            }
        }
    }
    if (cnt_pre > 0) em.e_pre = sum_pre / cnt_pre;
    if (cnt_in > 0) em.e_in = sum_in / cnt_in;
    if (cnt_post > 0) em.e_post = sum_post / cnt_post;
    return em;
}

double latent_mse(const LatentVideo& a, const LatentVideo& b) {
    if (!a.same_shape(b)) throw ShapeError("latent_mse: shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s / a.data().size();
}

}  // namespace evd

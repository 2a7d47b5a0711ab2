#include "evd/tensor.hpp"

#include <cmath>

#include "evd/rng.hpp"

namespace evd {

LatentVideo::LatentVideo(int t, int h, int w, int c)
    : t_(t), h_(h), w_(w), c_(c) {
    if (t <= 0 || h <= 0 || w <= 0 || c <= 0) {
        throw ShapeError("latent shape must be strictly positive in every axis, got (" +
                         std::to_string(t) + "," + std::to_string(h) + "," +
                         std::to_string(w) + "," + std::to_string(c) + ")");
    }
    data_.assign(static_cast<std::size_t>(t) * h * w * c, 0.0);
}

bool LatentVideo::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

LatentVideo LatentVideo::gaussian(int t, int h, int w, int c, Rng& rng) {
    LatentVideo z(t, h, w, c);
    for (double& x : z.data()) x = rng.normal();
    return z;
}

TokenGrid token_grid(int t, int h, int w, const PatchSpec& spec) {
    if (spec.p_t <= 0 || spec.p_h <= 0 || spec.p_w <= 0) {
        throw ShapeError("patch extents must be positive");
    }
    if (t % spec.p_t != 0) {
        throw ShapeError("temporal axis " + std::to_string(t) +
                         " not divisible by patch extent " + std::to_string(spec.p_t));
    }
    if (h % spec.p_h != 0) {
        throw ShapeError("height axis " + std::to_string(h) +
                         " not divisible by patch extent " + std::to_string(spec.p_h));
    }
    if (w % spec.p_w != 0) {
        throw ShapeError("width axis " + std::to_string(w) +
                         " not divisible by patch extent " + std::to_string(spec.p_w));
    }
    return TokenGrid{t / spec.p_t, h / spec.p_h, w / spec.p_w};
}

TokenGrid token_grid(const LatentVideo& z, const PatchSpec& spec) {
    return token_grid(z.frames(), z.height(), z.width(), spec);
}

TokenField tokenize(const LatentVideo& z, const PatchSpec& spec) {
    const TokenGrid grid = token_grid(z, spec);
    const int D = spec.p_t * spec.p_h * spec.p_w * z.channels();

    TokenField tok;
    tok.m = Mat(grid.count(), D);
    tok.spec = spec;
    tok.grid = grid;
    tok.t = z.frames();
    tok.h = z.height();
    tok.w = z.width();
    tok.c = z.channels();
    tok.tied = true;

    int row = 0;
    for (int it = 0; it < grid.nt; ++it) {
        for (int ih = 0; ih < grid.nh; ++ih) {
            for (int iw = 0; iw < grid.nw; ++iw, ++row) {
                double* out = tok.m.row(row);
                int k = 0;
                for (int dt = 0; dt < spec.p_t; ++dt) {
                    for (int dh = 0; dh < spec.p_h; ++dh) {
                        for (int dw = 0; dw < spec.p_w; ++dw) {
                            for (int c = 0; c < z.channels(); ++c, ++k) {
                                out[k] = z.at(it * spec.p_t + dt, ih * spec.p_h + dh,
                                              iw * spec.p_w + dw, c);
                            }
                        }
                    }
                }
            }
        }
    }
    return tok;
}

LatentVideo untokenize(const TokenField& tok) {
    if (!tok.tied) {
        throw ShapeError("token field is not tied to a latent shape");
    }
    const int D = tok.spec.p_t * tok.spec.p_h * tok.spec.p_w * tok.c;
    if (tok.m.rows != tok.grid.count()) {
        throw ShapeError("token count " + std::to_string(tok.m.rows) +
                         " does not match patch grid " + std::to_string(tok.grid.count()));
    }
    if (tok.m.cols != D) {
        throw ShapeError("token width " + std::to_string(tok.m.cols) +
                         " does not match patch volume " + std::to_string(D));
    }
    return untokenize_like(tok.m, tok);
}

LatentVideo untokenize_like(const Mat& rows, const TokenField& layout) {
    if (rows.rows != layout.grid.count()) {
        throw ShapeError("row count " + std::to_string(rows.rows) +
                         " does not match patch grid " + std::to_string(layout.grid.count()));
    }
    LatentVideo z(layout.t, layout.h, layout.w, layout.c);
    const PatchSpec& spec = layout.spec;
    int row = 0;
    for (int it = 0; it < layout.grid.nt; ++it) {
        for (int ih = 0; ih < layout.grid.nh; ++ih) {
            for (int iw = 0; iw < layout.grid.nw; ++iw, ++row) {
                const double* in = rows.row(row);
                int k = 0;
                for (int dt = 0; dt < spec.p_t; ++dt) {
                    for (int dh = 0; dh < spec.p_h; ++dh) {
                        for (int dw = 0; dw < spec.p_w; ++dw) {
                            for (int c = 0; c < layout.c; ++c, ++k) {
                                z.at(it * spec.p_t + dt, ih * spec.p_h + dh,
                                     iw * spec.p_w + dw, c) = in[k];
                            }
                        }
                    }
                }
            }
        }
    }
    return z;
}

}  // namespace evd

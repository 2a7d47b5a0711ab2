#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "evd/common.hpp"

namespace evd {

class Rng;

/// Dense latent-video tensor of shape (T, H, W, C), f64 throughout.
/// Memory order is t-major, then h, then w, then channel.
class LatentVideo {
public:
    LatentVideo() = default;
    LatentVideo(int t, int h, int w, int c);

    int frames() const { return t_; }
    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return data_.size(); }

    double& at(int t, int h, int w, int c) {
        return data_[idx(t, h, w, c)];
    }
    double at(int t, int h, int w, int c) const {
        return data_[idx(t, h, w, c)];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const LatentVideo& o) const {
        return t_ == o.t_ && h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }
    bool all_finite() const;

    static LatentVideo gaussian(int t, int h, int w, int c, Rng& rng);

private:
    std::size_t idx(int t, int h, int w, int c) const {
        return ((static_cast<std::size_t>(t) * h_ + h) * w_ + w) * c_ + c;
    }
    int t_ = 0, h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

/// Non-overlapping spatiotemporal patch extents. Must divide the latent
/// shape exactly on every axis.
struct PatchSpec {
    int p_t = 1;
    int p_h = 1;
    int p_w = 1;
};

/// Patch-grid dimensions induced by a (shape, PatchSpec) pair.
struct TokenGrid {
    int nt = 0;
    int nh = 0;
    int nw = 0;
    int count() const { return nt * nh * nw; }
};

/// Plain dense row-major matrix used for token features and parameters.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

/// (N, D) token matrix produced by tokenize(). Carries the patch spec and
/// source shape so untokenize() needs no extra arguments. Token row order is
/// t-major over the patch grid, then h, then w; within a row the patch
/// contents are flattened t-major/h/w/channel.
struct TokenField {
    Mat m;
    PatchSpec spec;
    TokenGrid grid;
    int t = 0, h = 0, w = 0, c = 0;  // source latent shape
    bool tied = false;               // true when produced from a latent

    int rows() const { return m.rows; }
    int cols() const { return m.cols; }
};

/// Validates divisibility and returns the patch-grid dimensions.
/// Throws ShapeError naming the offending axis.
TokenGrid token_grid(int t, int h, int w, const PatchSpec& spec);
TokenGrid token_grid(const LatentVideo& z, const PatchSpec& spec);

TokenField tokenize(const LatentVideo& z, const PatchSpec& spec);

/// Exact inverse of tokenize(). Throws ShapeError if the field is not tied
/// to a source shape or its dimensions are inconsistent.
LatentVideo untokenize(const TokenField& tok);

/// Adjoint of tokenize viewed as a linear map: scatters token-row gradients
/// back to latent positions. Identical to untokenize for exact patching but
/// kept separate so loss code reads as intended.
LatentVideo untokenize_like(const Mat& rows, const TokenField& layout);

}  // namespace evd

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evd/gating.hpp"
#include "evd/tensor.hpp"

namespace evd {

/// Conditioning embedding of fixed width. Null conditioning is the all-zero
/// embedding with is_null set; the forward pass reads only the values, so
/// null and explicit-zero conditioning are bitwise identical.
struct Conditioning {
    std::vector<double> embedding;
    bool is_null = false;

    static Conditioning null(int dim) {
        Conditioning y;
        y.embedding.assign(dim, 0.0);
        y.is_null = true;
        return y;
    }
};

struct DiTConfig {
    int t = 16, h = 8, w = 8, c = 4;
    PatchSpec patch{2, 2, 2};
    int width = 32;   // model width d
    int layers = 2;   // transformer blocks
    int heads = 4;
    int cond_dim = 8;  // conditioning embedding width
    int mlp_ratio = 4;

    int token_dim() const { return patch.p_t * patch.p_h * patch.p_w * c; }
    TokenGrid grid() const { return token_grid(t, h, w, patch); }
    int tokens() const { return grid().count(); }
    void validate() const;
};

/// Named parameter array with a gradient slot of the same shape.
struct Param {
    std::string name;
    int rows = 0, cols = 0;
    std::vector<double> w;
    std::vector<double> g;

    std::size_t size() const { return w.size(); }
};

/// Flat, named parameter store. Layout is fixed by construction order, so
/// parameter count and offsets are stable across runs for a given config.
class ParamStore {
public:
    Param& add(const std::string& name, int rows, int cols);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

    void zero_grad();
    void scale_grad(double s);
    double grad_sq_sum() const;
    std::size_t total_size() const;

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

/// Micro diffusion transformer: patch embed, additive sinusoidal time
/// embedding and conditioning projection, pre-norm attention/MLP blocks over
/// the full token set, final norm, linear output projection back to patches.
struct MicroDiT {
    DiTConfig cfg;
    ParamStore params;

    explicit MicroDiT(const DiTConfig& config);
};

struct EventHeadConfig {
    int feature_dim = 32;  // width of the token features it consumes
    int time_dim = 32;     // width of the time embedding appended to each token
    int hidden = 32;
    int channels = 1;  // C_e; channel 0 is the activity logit
};

/// Two-layer MLP on [token features ; time embedding] producing per-token
/// event logits; activity = sigmoid(logit channel 0).
struct EventHead {
    EventHeadConfig cfg;
    ParamStore params;

    explicit EventHead(const EventHeadConfig& config);
};

/// Sinusoidal embedding of t in [0,1]; dim must be even. Layout is
/// [sin(1000 t f_0..f_{dim/2-1}) ; cos(same)], f_i = 10000^(-i/(dim/2)).
std::vector<double> time_embedding(double t, int dim);

/// Backbone output projection zeroed; event-head final layer zeroed with the
/// activity-logit bias at -6 (so activity ~ sigmoid(-6) < 0.003); all other
/// layers small seeded Gaussians.
void init_zero_impact(MicroDiT& model, EventHead& head, uint64_t seed);

/// All layers small seeded Gaussians, including the output projection and
/// event head. Produces a non-degenerate field; used by tests and pilots.
void init_random(MicroDiT& model, EventHead& head, uint64_t seed, double scale = 0.05);

struct LnTrace {
    std::vector<double> xhat;
    std::vector<double> inv_sigma;
};

struct BlockTrace {
    LnTrace ln1, ln2;
    Mat a_in, q, k, v, o_cat;
    std::vector<Mat> probs;  // per-head attention rows
    Mat m_in, u, gelu_u;
};

struct DiTTrace {
    Mat tok_z;
    std::vector<double> cond;
    std::vector<BlockTrace> blocks;
    LnTrace ln_f;
    Mat xf;
    double t = 0.0;
};

struct DiTOutput {
    LatentVideo v_hat;
    Mat final_tokens;  // (N, width) features feeding the event head
};

/// Forward pass; fills `trace` when supplied so dit_backward can run.
DiTOutput dit_forward(const MicroDiT& model, const LatentVideo& z_t, const Conditioning& y,
                      double t, DiTTrace* trace = nullptr);

/// Reverse pass. Either gradient input may be null. Accumulates into the
/// store's gradient slots.
void dit_backward(MicroDiT& model, const DiTTrace& trace, const Mat* d_final_tokens,
                  const LatentVideo* d_v_hat);

struct HeadTrace {
    Mat input;       // (N, feature+time)
    Mat u;           // pre-activation hidden
    Mat gelu_u;      // hidden activations
    std::vector<double> activity;
};

ActivityMap event_head_forward(const EventHead& head, const Mat& tokens, double t,
                               HeadTrace* trace = nullptr);

/// Returns the gradient w.r.t. the input token features.
Mat event_head_backward(EventHead& head, const HeadTrace& trace,
                        const std::vector<double>& d_activity);

struct FieldEval {
    LatentVideo v_hat;
    Mat final_tokens;
};

/// Velocity-field contract used by the sampler: deterministic given
/// (parameters, inputs), output shaped like the input.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual FieldEval forward(const LatentVideo& z_t, const Conditioning& y, double t) const = 0;
    virtual int feature_dim() const = 0;
};

class DiTField : public VelocityField {
public:
    explicit DiTField(const MicroDiT& model) : model_(&model) {}
    FieldEval forward(const LatentVideo& z_t, const Conditioning& y, double t) const override;
    int feature_dim() const override { return model_->cfg.width; }

private:
    const MicroDiT* model_;
};

/// Test oracle: returns exactly z1 - z0 regardless of (z_t, y, t);
/// final tokens are tokenize(z1 - z0) on the given patch grid.
class OracleField : public VelocityField {
public:
    OracleField(const LatentVideo& z0, const LatentVideo& z1, const PatchSpec& spec);
    FieldEval forward(const LatentVideo& z_t, const Conditioning& y, double t) const override;
    int feature_dim() const override { return tok_.cols(); }

private:
    LatentVideo v_;
    TokenField tok_;
};

OracleField oracle_velocity_field(const LatentVideo& z0, const LatentVideo& z1,
                                  const PatchSpec& spec);

}  // namespace evd

#include "evd/backbone.hpp"

#include <cmath>
#include <cstring>

#include "evd/rng.hpp"

namespace evd {

namespace {

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;
constexpr double kLnEps = 1e-6;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double gelu_grad(double x) {
    const double th = std::tanh(kGeluK * (x + kGeluC * x * x * x));
    return 0.5 * (1.0 + th) +
           0.5 * x * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
}

// out (r x c) = A (r x k) @ W, with W given as a raw (k x c) row-major block
void mat_mul_w(Mat& out, const Mat& a, const double* w, int w_cols) {
    out.rows = a.rows;
    out.cols = w_cols;
    out.v.assign(static_cast<std::size_t>(a.rows) * w_cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            const double* wrow = w + static_cast<std::size_t>(k) * w_cols;
            for (int j = 0; j < w_cols; ++j) orow[j] += av * wrow[j];
        }
    }
}

// out (k x c) += A^T @ B where A is (r x k), B is (r x c)
void mat_mul_tn_acc(std::vector<double>& out, const Mat& a, const Mat& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            double* orow = out.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

// out (r x k) = A (r x c) @ W^T, with W a raw (k x c) row-major block
void mat_mul_nt_w(Mat& out, const Mat& a, const double* w, int w_rows) {
    out.rows = a.rows;
    out.cols = w_rows;
    out.v.assign(static_cast<std::size_t>(a.rows) * w_rows, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < w_rows; ++j) {
            const double* wrow = w + static_cast<std::size_t>(j) * a.cols;
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * wrow[k];
            orow[j] = s;
        }
    }
}

void add_bias_rows(Mat& x, const std::vector<double>& b) {
    for (int i = 0; i < x.rows; ++i) {
        double* row = x.row(i);
        for (int j = 0; j < x.cols; ++j) row[j] += b[j];
    }
}

void col_sum_acc(std::vector<double>& out, const Mat& x) {
    for (int i = 0; i < x.rows; ++i) {
        const double* row = x.row(i);
        for (int j = 0; j < x.cols; ++j) out[j] += row[j];
    }
}

// y = g * (x - mean)/sigma + b, row-wise over width d; caches xhat, 1/sigma.
Mat layer_norm(const Mat& x, const Param& g, const Param& b, LnTrace* tr) {
    Mat y(x.rows, x.cols);
    if (tr) {
        tr->xhat.assign(x.v.size(), 0.0);
        tr->inv_sigma.assign(x.rows, 0.0);
    }
    for (int i = 0; i < x.rows; ++i) {
        const double* row = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += row[j];
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double dxm = row[j] - mean;
            var += dxm * dxm;
        }
        var /= x.cols;
        const double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
        double* yrow = y.row(i);
        for (int j = 0; j < x.cols; ++j) {
            const double xhat = (row[j] - mean) * inv_sigma;
            if (tr) tr->xhat[static_cast<std::size_t>(i) * x.cols + j] = xhat;
            yrow[j] = g.w[j] * xhat + b.w[j];
        }
        if (tr) tr->inv_sigma[i] = inv_sigma;
    }
    return y;
}

// dy -> dx; accumulates dg, db.
Mat layer_norm_backward(const Mat& dy, const LnTrace& tr, Param& g, Param& b) {
    const int d = dy.cols;
    Mat dx(dy.rows, d);
    for (int i = 0; i < dy.rows; ++i) {
        const double* dyr = dy.row(i);
        const double* xh = tr.xhat.data() + static_cast<std::size_t>(i) * d;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dxh = dyr[j] * g.w[j];
            m1 += dxh;
            m2 += dxh * xh[j];
            g.g[j] += dyr[j] * xh[j];
            b.g[j] += dyr[j];
        }
        m1 /= d;
        m2 /= d;
        double* dxr = dx.row(i);
        const double inv_sigma = tr.inv_sigma[i];
        for (int j = 0; j < d; ++j) {
            const double dxh = dyr[j] * g.w[j];
            dxr[j] = inv_sigma * (dxh - m1 - xh[j] * m2);
        }
    }
    return dx;
}

}  // namespace

void DiTConfig::validate() const {
    if (width % heads != 0) throw ConfigError("model width must be divisible by head count");
    if (width % 2 != 0) throw ConfigError("model width must be even (sinusoidal embedding)");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (cond_dim < 1) throw ConfigError("cond_dim must be >= 1");
    token_grid(t, h, w, patch);  // shape divisibility
}

Param& ParamStore::add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_[name] = params_.size();
    Param p;
    p.name = name;
    p.rows = rows;
    p.cols = cols;
    p.w.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    p.g.assign(p.w.size(), 0.0);
    params_.push_back(std::move(p));
    return params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return params_[it->second];
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p.g.begin(), p.g.end(), 0.0);
}

void ParamStore::scale_grad(double s) {
    for (auto& p : params_)
        for (double& g : p.g) g *= s;
}

double ParamStore::grad_sq_sum() const {
    double s = 0.0;
    for (const auto& p : params_)
        for (double g : p.g) s += g * g;
    return s;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

MicroDiT::MicroDiT(const DiTConfig& config) : cfg(config) {
    cfg.validate();
    const int d = cfg.width;
    const int D = cfg.token_dim();
    const int m = cfg.mlp_ratio * d;
    params.add("embed.w", D, d);
    params.add("embed.b", 1, d);
    params.add("cond.w", cfg.cond_dim, d);
    params.add("cond.b", 1, d);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        params.add(p + "ln1.g", 1, d);
        params.add(p + "ln1.b", 1, d);
        params.add(p + "attn.wq", d, d);
        params.add(p + "attn.bq", 1, d);
        params.add(p + "attn.wk", d, d);
        params.add(p + "attn.bk", 1, d);
        params.add(p + "attn.wv", d, d);
        params.add(p + "attn.bv", 1, d);
        params.add(p + "attn.wo", d, d);
        params.add(p + "attn.bo", 1, d);
        params.add(p + "ln2.g", 1, d);
        params.add(p + "ln2.b", 1, d);
        params.add(p + "mlp.w1", d, m);
        params.add(p + "mlp.b1", 1, m);
        params.add(p + "mlp.w2", m, d);
        params.add(p + "mlp.b2", 1, d);
    }
    params.add("final_ln.g", 1, d);
    params.add("final_ln.b", 1, d);
    params.add("out.w", d, D);
    params.add("out.b", 1, D);
}

EventHead::EventHead(const EventHeadConfig& config) : cfg(config) {
    if (cfg.time_dim % 2 != 0) throw ConfigError("event head time_dim must be even");
    if (cfg.channels < 1) throw ConfigError("event head needs at least one channel");
    params.add("head.w1", cfg.feature_dim + cfg.time_dim, cfg.hidden);
    params.add("head.b1", 1, cfg.hidden);
    params.add("head.w2", cfg.hidden, cfg.channels);
    params.add("head.b2", 1, cfg.channels);
}

std::vector<double> time_embedding(double t, int dim) {
    if (dim % 2 != 0) throw ConfigError("time embedding width must be even");
    const int half = dim / 2;
    std::vector<double> e(dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        const double arg = 1000.0 * t * freq;
        e[i] = std::sin(arg);
        e[half + i] = std::cos(arg);
    }
    return e;
}

namespace {

void fill_gaussian(Param& p, Rng& rng, double scale) {
    for (double& x : p.w) x = scale * rng.normal();
}

void init_common(MicroDiT& model, Rng& rng, double scale) {
    for (auto& p : model.params.all()) {
        if (p.name.ends_with("ln1.g") || p.name.ends_with("ln2.g") || p.name == "final_ln.g") {
            std::fill(p.w.begin(), p.w.end(), 1.0);
        } else if (p.name.ends_with(".b") || p.name.ends_with(".bq") || p.name.ends_with(".bk") ||
                   p.name.ends_with(".bv") || p.name.ends_with(".bo") ||
                   p.name.ends_with(".b1") || p.name.ends_with(".b2")) {
            std::fill(p.w.begin(), p.w.end(), 0.0);
        } else {
            fill_gaussian(p, rng, scale);
        }
    }
}

}  // namespace

void init_zero_impact(MicroDiT& model, EventHead& head, uint64_t seed) {
    Rng rng(seed);
    init_common(model, rng, 0.05);
    auto& ow = model.params.at("out.w");
    std::fill(ow.w.begin(), ow.w.end(), 0.0);
    std::fill(model.params.at("out.b").w.begin(), model.params.at("out.b").w.end(), 0.0);

    fill_gaussian(head.params.at("head.w1"), rng, 0.05);
    std::fill(head.params.at("head.b1").w.begin(), head.params.at("head.b1").w.end(), 0.0);
    auto& w2 = head.params.at("head.w2");
    std::fill(w2.w.begin(), w2.w.end(), 0.0);
    auto& b2 = head.params.at("head.b2");
    std::fill(b2.w.begin(), b2.w.end(), 0.0);
    b2.w[0] = -6.0;  // activity logit; sigmoid(-6) ~ 0.00247
}

void init_random(MicroDiT& model, EventHead& head, uint64_t seed, double scale) {
    Rng rng(seed);
    init_common(model, rng, scale);
    fill_gaussian(head.params.at("head.w1"), rng, scale);
    std::fill(head.params.at("head.b1").w.begin(), head.params.at("head.b1").w.end(), 0.0);
    fill_gaussian(head.params.at("head.w2"), rng, scale);
    std::fill(head.params.at("head.b2").w.begin(), head.params.at("head.b2").w.end(), 0.0);
}

DiTOutput dit_forward(const MicroDiT& model, const LatentVideo& z_t, const Conditioning& y,
                      double t, DiTTrace* trace) {
    const DiTConfig& cfg = model.cfg;
    if (z_t.frames() != cfg.t || z_t.height() != cfg.h || z_t.width() != cfg.w ||
        z_t.channels() != cfg.c) {
        throw ShapeError("dit_forward: latent shape does not match model config");
    }
    if (static_cast<int>(y.embedding.size()) != cfg.cond_dim) {
        throw ShapeError("dit_forward: conditioning width does not match model config");
    }
    const int d = cfg.width;
    const int nheads = cfg.heads;
    const int dh = d / nheads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    TokenField tok = tokenize(z_t, cfg.patch);
    const int n = tok.rows();

    const auto& store = model.params;
    Mat x;

    // patch embed
    {
        const Param& ew = store.at("embed.w");
        mat_mul_w(x, tok.m, ew.w.data(), ew.cols);
        add_bias_rows(x, store.at("embed.b").w);
    }
    // time + conditioning, added to every token
    const std::vector<double> gamma = time_embedding(t, d);
    std::vector<double> cond_add(d, 0.0);
    {
        const Param& cw = store.at("cond.w");
        for (int i = 0; i < cfg.cond_dim; ++i) {
            const double yi = y.embedding[i];
            if (yi == 0.0) continue;
            for (int j = 0; j < d; ++j) cond_add[j] += yi * cw.w[static_cast<std::size_t>(i) * d + j];
        }
        const Param& cb = store.at("cond.b");
        for (int j = 0; j < d; ++j) cond_add[j] += cb.w[j];
    }
    for (int i = 0; i < n; ++i) {
        double* row = x.row(i);
        for (int j = 0; j < d; ++j) row[j] += gamma[j] + cond_add[j];
    }

    if (trace) {
        trace->tok_z = tok.m;
        trace->cond = y.embedding;
        trace->blocks.assign(cfg.layers, BlockTrace{});
        trace->t = t;
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        BlockTrace* bt = trace ? &trace->blocks[l] : nullptr;
        LnTrace ln1_local;
        Mat a_in = layer_norm(x, store.at(p + "ln1.g"), store.at(p + "ln1.b"),
                              bt ? &bt->ln1 : &ln1_local);

        Mat q, k, v;
        mat_mul_w(q, a_in, store.at(p + "attn.wq").w.data(), d);
        add_bias_rows(q, store.at(p + "attn.bq").w);
        mat_mul_w(k, a_in, store.at(p + "attn.wk").w.data(), d);
        add_bias_rows(k, store.at(p + "attn.bk").w);
        mat_mul_w(v, a_in, store.at(p + "attn.wv").w.data(), d);
        add_bias_rows(v, store.at(p + "attn.bv").w);

        Mat o_cat(n, d);
        std::vector<Mat> probs(trace ? nheads : 0);
        for (int hviews = 0; hviews < nheads; ++hviews) {
            const int off = hviews * dh;
            Mat prob(n, n);
            for (int i = 0; i < n; ++i) {
                const double* qi = q.row(i) + off;
                double* pi = prob.row(i);
                double maxv = -1e300;
                for (int j = 0; j < n; ++j) {
                    const double* kj = k.row(j) + off;
                    double s = 0.0;
                    for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
                    s *= inv_sqrt_dh;
                    pi[j] = s;
                    if (s > maxv) maxv = s;
                }
                double z = 0.0;
                for (int j = 0; j < n; ++j) {
                    pi[j] = std::exp(pi[j] - maxv);
                    z += pi[j];
                }
                const double invz = 1.0 / z;
                for (int j = 0; j < n; ++j) pi[j] *= invz;
            }
            for (int i = 0; i < n; ++i) {
                const double* pi = prob.row(i);
                double* oi = o_cat.row(i) + off;
                for (int e = 0; e < dh; ++e) oi[e] = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double pij = pi[j];
                    if (pij == 0.0) continue;
                    const double* vj = v.row(j) + off;
                    for (int e = 0; e < dh; ++e) oi[e] += pij * vj[e];
                }
            }
            if (trace) probs[hviews] = std::move(prob);
        }
        Mat attn_out;
        mat_mul_w(attn_out, o_cat, store.at(p + "attn.wo").w.data(), d);
        add_bias_rows(attn_out, store.at(p + "attn.bo").w);
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += attn_out.v[i];

        LnTrace ln2_local;
        Mat m_in = layer_norm(x, store.at(p + "ln2.g"), store.at(p + "ln2.b"),
                              bt ? &bt->ln2 : &ln2_local);
        const Param& w1p = store.at(p + "mlp.w1");
        Mat u;
        mat_mul_w(u, m_in, w1p.w.data(), w1p.cols);
        add_bias_rows(u, store.at(p + "mlp.b1").w);
        Mat gelu_u(u.rows, u.cols);
        for (std::size_t i = 0; i < u.v.size(); ++i) gelu_u.v[i] = gelu(u.v[i]);
        const Param& w2p = store.at(p + "mlp.w2");
        Mat mlp_out;
        mat_mul_w(mlp_out, gelu_u, w2p.w.data(), w2p.cols);
        add_bias_rows(mlp_out, store.at(p + "mlp.b2").w);
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += mlp_out.v[i];

        if (bt) {
            bt->a_in = std::move(a_in);
            bt->q = std::move(q);
            bt->k = std::move(k);
            bt->v = std::move(v);
            bt->o_cat = std::move(o_cat);
            bt->probs = std::move(probs);
            bt->m_in = std::move(m_in);
            bt->u = std::move(u);
            bt->gelu_u = std::move(gelu_u);
        }
    }

    LnTrace lnf_local;
    Mat xf = layer_norm(x, store.at("final_ln.g"), store.at("final_ln.b"),
                        trace ? &trace->ln_f : &lnf_local);
    const Param& ow = store.at("out.w");
    Mat v_tok;
    mat_mul_w(v_tok, xf, ow.w.data(), ow.cols);
    add_bias_rows(v_tok, store.at("out.b").w);

    if (trace) trace->xf = xf;

    DiTOutput out;
    out.v_hat = untokenize_like(v_tok, tok);
    out.final_tokens = std::move(xf);
    return out;
}

void dit_backward(MicroDiT& model, const DiTTrace& trace, const Mat* d_final_tokens,
                  const LatentVideo* d_v_hat) {
    const DiTConfig& cfg = model.cfg;
    auto& store = model.params;
    const int d = cfg.width;
    const int nheads = cfg.heads;
    const int dh = d / nheads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const int n = trace.tok_z.rows;

    // d xf from output projection and the event-head path
    Mat dxf(n, d);
    if (d_v_hat) {
        TokenField dv_tok = tokenize(*d_v_hat, cfg.patch);
        Param& owp = store.at("out.w");
        Param& obp = store.at("out.b");
        mat_mul_tn_acc(owp.g, trace.xf, dv_tok.m);
        col_sum_acc(obp.g, dv_tok.m);
        mat_mul_nt_w(dxf, dv_tok.m, owp.w.data(), owp.rows);
    }
    if (d_final_tokens) {
        for (std::size_t i = 0; i < dxf.v.size(); ++i) dxf.v[i] += d_final_tokens->v[i];
    }

    Mat dx = layer_norm_backward(dxf, trace.ln_f, store.at("final_ln.g"), store.at("final_ln.b"));

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const std::string p = "block" + std::to_string(l) + ".";
        const BlockTrace& bt = trace.blocks[l];

        // MLP sublayer: x_out = x_mid + W2 gelu(W1 LN(x_mid) + b1) + b2
        {
            Param& w2 = store.at(p + "mlp.w2");
            Param& b2 = store.at(p + "mlp.b2");
            Param& w1 = store.at(p + "mlp.w1");
            Param& b1 = store.at(p + "mlp.b1");
            // dmlp_out = dx
            mat_mul_tn_acc(w2.g, bt.gelu_u, dx);
            col_sum_acc(b2.g, dx);
            Mat dgelu;
            mat_mul_nt_w(dgelu, dx, w2.w.data(), w2.rows);
            Mat du(dgelu.rows, dgelu.cols);
            for (std::size_t i = 0; i < du.v.size(); ++i) {
                du.v[i] = dgelu.v[i] * gelu_grad(bt.u.v[i]);
            }
            mat_mul_tn_acc(w1.g, bt.m_in, du);
            col_sum_acc(b1.g, du);
            Mat dm_in;
            mat_mul_nt_w(dm_in, du, w1.w.data(), w1.rows);
            Mat dres = layer_norm_backward(dm_in, bt.ln2, store.at(p + "ln2.g"),
                                           store.at(p + "ln2.b"));
            for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dres.v[i];
        }

        // attention sublayer
        {
            Param& wo = store.at(p + "attn.wo");
            Param& bo = store.at(p + "attn.bo");
            mat_mul_tn_acc(wo.g, bt.o_cat, dx);
            col_sum_acc(bo.g, dx);
            Mat do_cat;
            mat_mul_nt_w(do_cat, dx, wo.w.data(), wo.rows);

            Mat dq(n, d), dk(n, d), dv(n, d);
            for (int hview = 0; hview < nheads; ++hview) {
                const int off = hview * dh;
                const Mat& prob = bt.probs[hview];
                // dV_h += P^T dO_h ; dP = dO_h V_h^T
                for (int i = 0; i < n; ++i) {
                    const double* pi = prob.row(i);
                    const double* doi = do_cat.row(i) + off;
                    for (int j = 0; j < n; ++j) {
                        const double pij = pi[j];
                        if (pij == 0.0) continue;
                        double* dvj = dv.row(j) + off;
                        for (int e = 0; e < dh; ++e) dvj[e] += pij * doi[e];
                    }
                }
                std::vector<double> dp(n);
                for (int i = 0; i < n; ++i) {
                    const double* pi = prob.row(i);
                    const double* doi = do_cat.row(i) + off;
                    // dp_j = dO_i . V_j ; ds = p * (dp - sum_j p_j dp_j)
                    double dot_sum = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double* vj = bt.v.row(j) + off;
                        double s = 0.0;
                        for (int e = 0; e < dh; ++e) s += doi[e] * vj[e];
                        dp[j] = s;
                        dot_sum += pi[j] * s;
                    }
                    double* dqi = dq.row(i) + off;
                    for (int j = 0; j < n; ++j) {
                        const double ds = pi[j] * (dp[j] - dot_sum) * inv_sqrt_dh;
                        if (ds == 0.0) continue;
                        const double* kj = bt.k.row(j) + off;
                        double* dkj = dk.row(j) + off;
                        const double* qi = bt.q.row(i) + off;
                        for (int e = 0; e < dh; ++e) {
                            dqi[e] += ds * kj[e];
                            dkj[e] += ds * qi[e];
                        }
                    }
                }
            }

            Param& wq = store.at(p + "attn.wq");
            Param& wk = store.at(p + "attn.wk");
            Param& wv = store.at(p + "attn.wv");
            mat_mul_tn_acc(wq.g, bt.a_in, dq);
            mat_mul_tn_acc(wk.g, bt.a_in, dk);
            mat_mul_tn_acc(wv.g, bt.a_in, dv);
            col_sum_acc(store.at(p + "attn.bq").g, dq);
            col_sum_acc(store.at(p + "attn.bk").g, dk);
            col_sum_acc(store.at(p + "attn.bv").g, dv);

            Mat da_in, tmp;
            mat_mul_nt_w(da_in, dq, wq.w.data(), wq.rows);
            mat_mul_nt_w(tmp, dk, wk.w.data(), wk.rows);
            for (std::size_t i = 0; i < da_in.v.size(); ++i) da_in.v[i] += tmp.v[i];
            mat_mul_nt_w(tmp, dv, wv.w.data(), wv.rows);
            for (std::size_t i = 0; i < da_in.v.size(); ++i) da_in.v[i] += tmp.v[i];

            Mat dres = layer_norm_backward(da_in, bt.ln1, store.at(p + "ln1.g"),
                                           store.at(p + "ln1.b"));
            for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dres.v[i];
        }
    }

    // embeddings: x = TokZ W_e + b_e + gamma + y W_c + b_c
    {
        Param& ew = store.at("embed.w");
        Param& eb = store.at("embed.b");
        mat_mul_tn_acc(ew.g, trace.tok_z, dx);
        col_sum_acc(eb.g, dx);

        std::vector<double> col(d, 0.0);
        col_sum_acc(col, dx);
        Param& cw = store.at("cond.w");
        Param& cb = store.at("cond.b");
        for (int i = 0; i < cfg.cond_dim; ++i) {
            const double yi = trace.cond[i];
            if (yi == 0.0) continue;
            double* grow = cw.g.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) grow[j] += yi * col[j];
        }
        for (int j = 0; j < d; ++j) cb.g[j] += col[j];
    }
}

ActivityMap event_head_forward(const EventHead& head, const Mat& tokens, double t,
                               HeadTrace* trace) {
    const EventHeadConfig& cfg = head.cfg;
    if (tokens.cols != cfg.feature_dim) {
        throw ShapeError("event head: token width " + std::to_string(tokens.cols) +
                         " does not match head feature_dim " + std::to_string(cfg.feature_dim));
    }
    const int n = tokens.rows;
    const std::vector<double> gamma = time_embedding(t, cfg.time_dim);

    Mat input(n, cfg.feature_dim + cfg.time_dim);
    for (int i = 0; i < n; ++i) {
        double* row = input.row(i);
        std::memcpy(row, tokens.row(i), sizeof(double) * cfg.feature_dim);
        std::memcpy(row + cfg.feature_dim, gamma.data(), sizeof(double) * cfg.time_dim);
    }

    const Param& w1 = head.params.at("head.w1");
    const Param& b1 = head.params.at("head.b1");
    const Param& w2 = head.params.at("head.w2");
    const Param& b2 = head.params.at("head.b2");

    Mat u;
    mat_mul_w(u, input, w1.w.data(), w1.cols);
    add_bias_rows(u, b1.w);
    Mat gelu_u(u.rows, u.cols);
    for (std::size_t i = 0; i < u.v.size(); ++i) gelu_u.v[i] = gelu(u.v[i]);
    Mat logits;
    mat_mul_w(logits, gelu_u, w2.w.data(), w2.cols);
    add_bias_rows(logits, b2.w);

    ActivityMap a;
    a.values.resize(n);
    for (int i = 0; i < n; ++i) a.values[i] = logistic(logits.at(i, 0));

    if (trace) {
        trace->input = std::move(input);
        trace->u = std::move(u);
        trace->gelu_u = std::move(gelu_u);
        trace->activity = a.values;
    }
    return a;
}

Mat event_head_backward(EventHead& head, const HeadTrace& trace,
                        const std::vector<double>& d_activity) {
    const EventHeadConfig& cfg = head.cfg;
    const int n = trace.input.rows;

    Mat dlogits(n, cfg.channels);
    for (int i = 0; i < n; ++i) {
        const double a = trace.activity[i];
        dlogits.at(i, 0) = d_activity[i] * a * (1.0 - a);
    }

    Param& w2 = head.params.at("head.w2");
    Param& b2 = head.params.at("head.b2");
    Param& w1 = head.params.at("head.w1");
    Param& b1 = head.params.at("head.b1");

    mat_mul_tn_acc(w2.g, trace.gelu_u, dlogits);
    col_sum_acc(b2.g, dlogits);
    Mat dgelu;
    mat_mul_nt_w(dgelu, dlogits, w2.w.data(), w2.rows);
    Mat du(dgelu.rows, dgelu.cols);
    for (std::size_t i = 0; i < du.v.size(); ++i) du.v[i] = dgelu.v[i] * gelu_grad(trace.u.v[i]);
    mat_mul_tn_acc(w1.g, trace.input, du);
    col_sum_acc(b1.g, du);
    Mat dinput;
    mat_mul_nt_w(dinput, du, w1.w.data(), w1.rows);

    Mat dtokens(n, cfg.feature_dim);
    for (int i = 0; i < n; ++i) {
        std::memcpy(dtokens.row(i), dinput.row(i), sizeof(double) * cfg.feature_dim);
    }
    return dtokens;
}

FieldEval DiTField::forward(const LatentVideo& z_t, const Conditioning& y, double t) const {
    DiTOutput out = dit_forward(*model_, z_t, y, t);
    return FieldEval{std::move(out.v_hat), std::move(out.final_tokens)};
}

OracleField::OracleField(const LatentVideo& z0, const LatentVideo& z1, const PatchSpec& spec) {
    if (!z0.same_shape(z1)) throw ShapeError("oracle field: z0 and z1 shapes differ");
    v_ = LatentVideo(z0.frames(), z0.height(), z0.width(), z0.channels());
    for (std::size_t i = 0; i < v_.data().size(); ++i) {
        v_.data()[i] = z1.data()[i] - z0.data()[i];
    }
    tok_ = tokenize(v_, spec);
}

FieldEval OracleField::forward(const LatentVideo&, const Conditioning&, double) const {
    return FieldEval{v_, tok_.m};
}

OracleField oracle_velocity_field(const LatentVideo& z0, const LatentVideo& z1,
                                  const PatchSpec& spec) {
    return OracleField(z0, z1, spec);
}

}  // namespace evd

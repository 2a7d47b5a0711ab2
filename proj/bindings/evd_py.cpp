#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evd/backbone.hpp"
#include "evd/flow.hpp"
#include "evd/gating.hpp"
#include "evd/io.hpp"
#include "evd/losses.hpp"
#include "evd/metrics.hpp"
#include "evd/pseudo_events.hpp"
#include "evd/sampling.hpp"
#include "evd/scene.hpp"

namespace py = pybind11;
using namespace evd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

LatentVideo to_latent(const Array& a) {
    if (a.ndim() != 4) throw ShapeError("expected a (T, H, W, C) array");
    LatentVideo z(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                  static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
    std::memcpy(z.data().data(), a.data(), sizeof(double) * z.size());
    return z;
}

py::array from_latent(const LatentVideo& z) {
    py::array_t<double> out({z.frames(), z.height(), z.width(), z.channels()});
    std::memcpy(out.mutable_data(), z.data().data(), sizeof(double) * z.size());
    return out;
}

Mat to_mat(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(m.v.data(), a.data(), sizeof(double) * m.v.size());
    return m;
}

py::array from_mat(const Mat& m) {
    py::array_t<double> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.v.data(), sizeof(double) * m.v.size());
    return out;
}

PatchSpec to_patch(const std::tuple<int, int, int>& p) {
    return PatchSpec{std::get<0>(p), std::get<1>(p), std::get<2>(p)};
}

GateConfig gate_from_kwargs(double beta, double tau_on, double tau_off, double t_star,
                            bool smoothing, const std::string& combine) {
    GateConfig g;
    g.beta = beta;
    g.tau_on = tau_on;
    g.tau_off = tau_off;
    g.t_star = t_star;
    g.smoothing_enabled = smoothing;
    g.combine =
        combine == "binary_only" ? GateConfig::Combine::binary_only : GateConfig::Combine::product;
    g.validate();
    return g;
}

/// Owns a MicroDiT + EventHead pair behind the python surface.
struct PyModel {
    MicroDiT model;
    EventHead head;

    PyModel(int t, int h, int w, int c, std::tuple<int, int, int> patch, int width, int layers,
            int heads, int cond_dim, int head_hidden)
        : model(make_config(t, h, w, c, patch, width, layers, heads, cond_dim)),
          head(make_head(width, head_hidden)) {}

    static DiTConfig make_config(int t, int h, int w, int c, std::tuple<int, int, int> patch,
                                 int width, int layers, int heads, int cond_dim) {
        DiTConfig cfg;
        cfg.t = t;
        cfg.h = h;
        cfg.w = w;
        cfg.c = c;
        cfg.patch = to_patch(patch);
        cfg.width = width;
        cfg.layers = layers;
        cfg.heads = heads;
        cfg.cond_dim = cond_dim;
        cfg.validate();
        return cfg;
    }

    static EventHeadConfig make_head(int width, int hidden) {
        EventHeadConfig hc;
        hc.feature_dim = width;
        hc.time_dim = width;
        hc.hidden = hidden;
        return hc;
    }

    Conditioning conditioning(const std::vector<double>& y) const {
        if (y.empty()) return Conditioning::null(model.cfg.cond_dim);
        if (static_cast<int>(y.size()) != model.cfg.cond_dim) {
            throw ShapeError("conditioning width does not match cond_dim");
        }
        Conditioning c;
        c.embedding = y;
        return c;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "event-gated flow matching on synthetic latent videos";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

    m.def(
        "tokenize",
        [](const Array& z, std::tuple<int, int, int> patch) {
            return from_mat(tokenize(to_latent(z), to_patch(patch)).m);
        },
        py::arg("z"), py::arg("patch"));

    m.def(
        "untokenize",
        [](const Array& tokens, std::tuple<int, int, int> patch,
           std::tuple<int, int, int, int> shape) {
            const auto [t, h, w, c] = shape;
            LatentVideo probe(t, h, w, c);
            TokenField layout = evd::tokenize(probe, to_patch(patch));
            Mat rows = to_mat(tokens);
            if (rows.rows != layout.rows() || rows.cols != layout.cols()) {
                throw ShapeError("token matrix does not match the patch grid");
            }
            return from_latent(untokenize_like(rows, layout));
        },
        py::arg("tokens"), py::arg("patch"), py::arg("shape"));

    m.def(
        "interpolate",
        [](const Array& z0, const Array& z1, double t) {
            const FlowSample s = interpolate(to_latent(z0), to_latent(z1), t);
            return py::make_tuple(from_latent(s.z_t), from_latent(s.v_t));
        },
        py::arg("z0"), py::arg("z1"), py::arg("t"));

    m.def("uniform_time_grid", [](int k) { return uniform_time_grid(k).points; }, py::arg("k"));

    m.def(
        "time_weight",
        [](double t, double t_star, double kappa) {
            TimeWeightConfig cfg;
            cfg.t_star_loss = t_star;
            cfg.kappa = kappa;
            return time_weight(t, cfg);
        },
        py::arg("t"), py::arg("t_star") = 0.60, py::arg("kappa") = 6.0);

    m.def(
        "make_contact_scene",
        [](int t, int h, int w, int c, std::tuple<int, int, int> patch, int blob_h, int blob_w,
           int row0, int col0, int vel_r, int vel_c, int tau_e, int tau_s, double blob_value,
           double noise_sigma, const std::vector<double>& camera_drift, uint64_t noise_seed) {
            SceneParams p;
            p.t = t;
            p.h = h;
            p.w = w;
            p.c = c;
            p.patch = to_patch(patch);
            p.blob_h = blob_h;
            p.blob_w = blob_w;
            p.row0 = row0;
            p.col0 = col0;
            p.vel_r = vel_r;
            p.vel_c = vel_c;
            p.tau_e = tau_e;
            p.tau_s = tau_s;
            p.blob_value = blob_value;
            p.noise_sigma = noise_sigma;
            p.camera_drift = camera_drift;
            p.noise_seed = noise_seed;
            const ContactScene scene = make_contact_scene(p);
            py::dict out;
            out["clean_latent"] = from_latent(scene.clean_latent);
            out["truth_activity"] = py::cast(scene.truth_activity);
            out["tau_e"] = scene.tau_e();
            out["tau_s"] = scene.tau_s();
            return out;
        },
        py::arg("t") = 16, py::arg("h") = 8, py::arg("w") = 8, py::arg("c") = 4,
        py::arg("patch") = std::make_tuple(2, 2, 2), py::arg("blob_h") = 2, py::arg("blob_w") = 2,
        py::arg("row0") = 3, py::arg("col0") = 0, py::arg("vel_r") = 0, py::arg("vel_c") = 1,
        py::arg("tau_e") = 4, py::arg("tau_s") = 10, py::arg("blob_value") = 3.0,
        py::arg("noise_sigma") = 0.0, py::arg("camera_drift") = std::vector<double>{},
        py::arg("noise_seed") = 0);

    m.def(
        "smooth_activity",
        [](const std::vector<double>& values, std::tuple<int, int, int> grid, bool enabled) {
            ActivityMap a;
            a.values = values;
            const TokenGrid g{std::get<0>(grid), std::get<1>(grid), std::get<2>(grid)};
            return smooth_activity(a, g, enabled).values;
        },
        py::arg("values"), py::arg("grid"), py::arg("enabled") = true);

    m.def(
        "soft_gate",
        [](const std::vector<double>& values, double beta, double tau_on, double tau_off) {
            ActivityMap a;
            a.values = values;
            return soft_gate(a, gate_from_kwargs(beta, tau_on, tau_off, 0.6, true, "product"));
        },
        py::arg("values"), py::arg("beta") = 12.0, py::arg("tau_on") = 0.62,
        py::arg("tau_off") = 0.38);

    m.def(
        "hysteresis_step",
        [](const std::vector<double>& values, const std::vector<uint8_t>& state, double tau_on,
           double tau_off) {
            ActivityMap a;
            a.values = values;
            GateState s;
            s.bin = state;
            return hysteresis_step(a, s, gate_from_kwargs(12.0, tau_on, tau_off, 0.6, true,
                                                          "product"))
                .bin;
        },
        py::arg("values"), py::arg("state"), py::arg("tau_on") = 0.62, py::arg("tau_off") = 0.38);

    m.def(
        "combine_gate",
        [](const std::vector<double>& soft, const std::vector<uint8_t>& state,
           const std::string& mode) {
            GateState s;
            s.bin = state;
            return combine_gate(soft, s,
                                mode == "binary_only" ? GateConfig::Combine::binary_only
                                                      : GateConfig::Combine::product);
        },
        py::arg("soft"), py::arg("state"), py::arg("mode") = "product");

    m.def(
        "schedule_rho",
        [](double t, double t_star) {
            GateConfig g;
            g.t_star = t_star;
            return schedule_rho(t, g);
        },
        py::arg("t"), py::arg("t_star") = 0.60);

    m.def("apply_schedule", &apply_schedule, py::arg("gate"), py::arg("rho"));

    m.def(
        "gate_field",
        [](const Array& v, const std::vector<double>& gate, std::tuple<int, int, int> patch) {
            return from_latent(gate_field(to_latent(v), gate, to_patch(patch)));
        },
        py::arg("v"), py::arg("gate"), py::arg("patch"));

    m.def(
        "cfg_combine",
        [](const Array& cond, const Array& uncond, double w) {
            return from_latent(cfg_combine(to_latent(cond), to_latent(uncond), w));
        },
        py::arg("v_cond"), py::arg("v_uncond"), py::arg("w_cfg"));

    m.def(
        "loss_base",
        [](const Array& v_hat, const Array& z0, const Array& z1) {
            return loss_base(to_latent(v_hat), to_latent(z0), to_latent(z1));
        },
        py::arg("v_hat"), py::arg("z0"), py::arg("z1"));

    m.def(
        "loss_real",
        [](const std::vector<double>& activity, const Array& delta) {
            return loss_real(activity, to_mat(delta));
        },
        py::arg("activity"), py::arg("delta"));

    m.def(
        "loss_cons",
        [](const std::vector<double>& a1, const Array& d1, const std::vector<double>& a2,
           const Array& d2) { return loss_cons(a1, to_mat(d1), a2, to_mat(d2)); },
        py::arg("a_t"), py::arg("delta_t"), py::arg("a_t2"), py::arg("delta_t2"));

    m.def(
        "loss_order",
        [](const std::vector<double>& activity, const Array& delta, double tau_on,
           double tau_off) { return loss_order(activity, to_mat(delta), tau_on, tau_off); },
        py::arg("activity"), py::arg("delta"), py::arg("tau_on") = 0.62,
        py::arg("tau_off") = 0.38);

    m.def(
        "latent_change_magnitude",
        [](const Array& z, std::tuple<int, int, int> patch) {
            return from_mat(latent_change_magnitude(to_latent(z), to_patch(patch)));
        },
        py::arg("z"), py::arg("patch") = std::make_tuple(1, 1, 1));

    m.def(
        "suppress_camera",
        [](const Array& m) { return from_mat(suppress_camera(to_mat(m))); }, py::arg("m"));

    m.def(
        "activity_target",
        [](const Array& m, double softness, const std::string& mu_mode, double mu_fixed) {
            PseudoTargetConfig cfg;
            cfg.softness = softness;
            cfg.mu_mode = mu_mode == "fixed" ? PseudoTargetConfig::MuMode::fixed
                                             : PseudoTargetConfig::MuMode::median;
            cfg.mu_fixed = mu_fixed;
            return from_mat(activity_target(to_mat(m), cfg));
        },
        py::arg("m"), py::arg("softness") = 0.05, py::arg("mu_mode") = "median",
        py::arg("mu_fixed") = 0.0);

    m.def(
        "phase_target",
        [](const Array& activity, double epsilon) {
            return phase_target(to_mat(activity), epsilon);
        },
        py::arg("activity"), py::arg("epsilon") = 1e-6);

    m.def("confidence_target", &confidence_target, py::arg("activity_map"),
          py::arg("tau_a") = 0.3);
    m.def("normalized_entropy", &normalized_entropy, py::arg("activity_map"));
    m.def("diffuseness_accept", &diffuseness_accept, py::arg("activity_map"),
          py::arg("threshold"));

    m.def(
        "clip_activity_score",
        [](const Array& z, std::tuple<int, int, int> patch) {
            return clip_activity_score(to_latent(z), to_patch(patch));
        },
        py::arg("z"), py::arg("patch") = std::make_tuple(1, 1, 1));

    py::class_<PyModel>(m, "Model")
        .def(py::init<int, int, int, int, std::tuple<int, int, int>, int, int, int, int, int>(),
             py::arg("t") = 16, py::arg("h") = 8, py::arg("w") = 8, py::arg("c") = 4,
             py::arg("patch") = std::make_tuple(2, 2, 2), py::arg("width") = 32,
             py::arg("layers") = 2, py::arg("heads") = 4, py::arg("cond_dim") = 8,
             py::arg("head_hidden") = 32)
        .def("init_zero_impact",
             [](PyModel& self, uint64_t seed) { init_zero_impact(self.model, self.head, seed); },
             py::arg("seed"))
        .def("init_random",
             [](PyModel& self, uint64_t seed, double scale) {
                 init_random(self.model, self.head, seed, scale);
             },
             py::arg("seed"), py::arg("scale") = 0.05)
        .def("parameter_count",
             [](const PyModel& self) {
                 return self.model.params.total_size() + self.head.params.total_size();
             })
        .def("forward",
             [](const PyModel& self, const Array& z, const std::vector<double>& y, double t) {
                 const DiTOutput out =
                     dit_forward(self.model, to_latent(z), self.conditioning(y), t);
                 const ActivityMap a = event_head_forward(self.head, out.final_tokens, t);
                 return py::make_tuple(from_latent(out.v_hat), from_mat(out.final_tokens),
                                       py::cast(a.values));
             },
             py::arg("z"), py::arg("y"), py::arg("t"))
        .def("sample",
             [](const PyModel& self, const std::vector<double>& y, uint64_t seed, int steps,
                double w_cfg, bool gating, const std::string& solver, const std::string& schedule,
                double schedule_const) {
                 SamplerConfig cfg;
                 cfg.steps = steps;
                 cfg.w_cfg = w_cfg;
                 cfg.gating_enabled = gating;
                 cfg.solver = solver == "heun" ? SamplerConfig::Solver::heun
                                               : SamplerConfig::Solver::euler;
                 if (schedule == "const") {
                     cfg.schedule_mode = SamplerConfig::ScheduleMode::constant;
                 } else if (schedule == "off") {
                     cfg.schedule_mode = SamplerConfig::ScheduleMode::off;
                 }
                 cfg.schedule_const = schedule_const;
                 DiTField field(self.model);
                 const SampleResult r = sample(field, &self.head, self.conditioning(y), cfg, seed,
                                               SampleSpace::from(self.model.cfg));
                 py::dict out;
                 out["final_latent"] = from_latent(r.final_latent);
                 out["backbone_evals"] = r.trajectory.backbone_evals;
                 out["steps"] = static_cast<int>(r.trajectory.gates.size());
                 return out;
             },
             py::arg("y"), py::arg("seed"), py::arg("steps") = 50, py::arg("w_cfg") = 4.0,
             py::arg("gating") = true, py::arg("solver") = "euler",
             py::arg("schedule") = "anneal", py::arg("schedule_const") = 1.0)
        .def("save",
             [](const PyModel& self, const std::string& path) {
                 save_checkpoint(path, self.model, self.head);
             },
             py::arg("path"));

    m.def(
        "load_model",
        [](const std::string& path) {
            LoadedCheckpoint ck = load_checkpoint(path);
            const DiTConfig& c = ck.model.cfg;
            auto self = std::make_unique<PyModel>(
                c.t, c.h, c.w, c.c, std::make_tuple(c.patch.p_t, c.patch.p_h, c.patch.p_w),
                c.width, c.layers, c.heads, c.cond_dim, ck.head.cfg.hidden);
            for (std::size_t i = 0; i < self->model.params.all().size(); ++i) {
                self->model.params.all()[i].w = ck.model.params.all()[i].w;
            }
            for (std::size_t i = 0; i < self->head.params.all().size(); ++i) {
                self->head.params.all()[i].w = ck.head.params.all()[i].w;
            }
            return self;
        },
        py::arg("path"));

    m.attr("__version__") = "0.1.0";
}

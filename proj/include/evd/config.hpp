#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evd/backbone.hpp"
#include "evd/losses.hpp"
#include "evd/pseudo_events.hpp"
#include "evd/sampling.hpp"

namespace evd {

/// Synthetic dataset recipe. Scenes share the grid/patch geometry and draw
/// blob position, velocity, window, and sign per scene from the seeded RNG.
struct DatasetConfig {
    std::string path;  // optional: load scenes from this directory instead
    int count = 200;
    int t = 16, h = 8, w = 8, c = 4;
    PatchSpec patch{2, 2, 2};
    int blob_h = 2, blob_w = 2;
    double blob_value = 3.0;
    int window_min = 4, window_max = 8;  // event duration range (frames)
    int speed_max = 1;                   // |velocity| cells/frame per axis
    double noise_sigma = 0.0;
    double camera_drift_prob = 0.0;
    double camera_drift_step = 0.5;
    uint64_t seed = 1;
    bool export_scenes = false;  // write generated scenes to out_dir/scenes

    void validate() const;
};

inline const std::vector<std::string>& ablation_variant_ids() {
    static const std::vector<std::string> ids = {
        "full",          "no_real",        "no_cons",       "train_only",
        "infer_only",    "no_gate_at_inf", "const_gate_1.0", "const_gate_0.5",
        "motion_mask_inf", "baseline"};
    return ids;
}

struct SweepConfig {
    std::vector<int> steps{25, 35, 50, 75};
    std::vector<double> w_cfg{2.5, 4.0, 6.0, 8.0};
    std::vector<double> beta{8.0, 12.0, 16.0};
    std::vector<std::pair<double, double>> bands{
        {0.62, 0.38}, {0.60, 0.40}, {0.65, 0.35}, {0.66, 0.42}, {0.58, 0.34}};
    std::vector<double> t_star{0.50, 0.60, 0.70};

    void validate() const;
};

struct RunConfig {
    std::string mode;  // train | sample | ablate | sweep | audit | check
    std::string out_dir = "out";
    std::string checkpoint;  // input checkpoint for sample/sweep
    uint64_t seed = 0;
    std::string variant = "full";
    int eval_scenes = 50;

    DatasetConfig dataset;
    DiTConfig model;
    EventHeadConfig head;
    TrainConfig train;
    LossConfig loss;
    SamplerConfig sampler;
    PseudoTargetConfig pseudo;
    SweepConfig sweep;

    void validate() const;
};

/// Parses a config file; unset fields take the documented defaults. Throws
/// ConfigError naming the offending field on validation failure.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

/// Config echo used in run manifests.
std::string run_config_json(const RunConfig& cfg);

/// Worker-parallelism cap: EVD_THREADS if set, else hardware concurrency.
int worker_threads();

}  // namespace evd

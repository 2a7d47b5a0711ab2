#pragma once

#include <map>
#include <string>
#include <vector>

#include "evd/config.hpp"
#include "evd/io.hpp"
#include "evd/metrics.hpp"
#include "evd/sampling.hpp"
#include "evd/scene.hpp"

namespace evd {

/// Deterministic scene-conditioning embedding: normalized blob position,
/// velocity, event window, value, and extent fill the first eight slots;
/// any further slots stay zero.
Conditioning scene_conditioning(const SceneParams& p, int dim);

std::vector<ContactScene> generate_dataset(const DatasetConfig& cfg);

/// Held-out scenes: same recipe, independent seed stream.
std::vector<ContactScene> heldout_dataset(const DatasetConfig& cfg, int count);

/// Which checkpoint a variant samples from and how it samples.
struct VariantPlan {
    std::string id;
    std::string checkpoint_id;  // full | baseline | no_real | no_cons
    LossConfig loss;            // training losses for that checkpoint
    SamplerConfig sampler;
};

VariantPlan variant_plan(const std::string& id, const RunConfig& base);

struct TrainRunResult {
    std::string checkpoint_path;
    std::string ema_path;
    double first_base = 0.0;
    double last_base = 0.0;
    LossBreakdown last;
};

/// Trains the variant's checkpoint per its loss plan; writes checkpoint,
/// EMA checkpoint, a JSONL metrics log, and a run manifest.
TrainRunResult run_train(const RunConfig& cfg);

/// In-memory training used by ablation orchestration and tests. Leaves the
/// raw last-step weights in the stores and the EMA shadow in ema_out.
TrainRunResult train_in_memory(const RunConfig& cfg, const LossConfig& loss,
                               const std::vector<ContactScene>& scenes, MicroDiT& model,
                               EventHead& head, JsonlWriter* log, EmaState* ema_out = nullptr);

/// Samples the variant over held-out scenes and averages causal energies
/// and the final MSE to the clean target.
MetricsRecord evaluate_variant(const MicroDiT& model, const EventHead& head,
                               const std::vector<ContactScene>& scenes,
                               const SamplerConfig& sampler, uint64_t seed,
                               std::vector<MetricsRecord>* per_scene = nullptr);

struct SampleRunResult {
    MetricsRecord aggregate;
    std::string run_dir;
};

SampleRunResult run_sample(const RunConfig& cfg);

struct AblationRow {
    std::string variant;
    MetricsRecord metrics;
};

/// Evaluates every requested variant with identical scenes, seeds, and
/// sampler budget; requires the variants' checkpoints on disk.
std::vector<AblationRow> run_ablation(const RunConfig& cfg,
                                      const std::vector<std::string>& variants);

struct SweepRow {
    int steps;
    double w_cfg, beta, tau_on, tau_off, t_star;
    MetricsRecord metrics;
};

/// Cross-product of the configured value lists, one trained checkpoint.
std::vector<SweepRow> run_sweep(const RunConfig& cfg);

struct AuditRow {
    int index = 0;
    double score = 0.0;
    double confidence = 0.0;
    double entropy = 0.0;
    bool accept = false;
    std::vector<double> phase;
};

std::vector<AuditRow> run_audit(const RunConfig& cfg);

/// Trains the checkpoints the requested variants need (in memory, in
/// parallel up to worker_threads()) and evaluates all variants on one
/// held-out set. Used by the ablation CLI path with --train-missing and by
/// the acceptance experiment.
std::map<std::string, MetricsRecord> train_and_evaluate_variants(
    const RunConfig& cfg, const std::vector<std::string>& variants);

}  // namespace evd

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "evd/checks.hpp"
#include "evd/config.hpp"
#include "evd/experiments.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    long long seed = -1;
    bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--variant", args.variant, "ablation variant id override");
    cmd->add_option("--seed", args.seed, "seed override");
}

evd::RunConfig resolve(const CommonArgs& args, const std::string& mode) {
    evd::RunConfig cfg = evd::load_run_config(args.config_path);
    cfg.mode = mode;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.variant.empty()) cfg.variant = args.variant;
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-gated flow-matching training and sampling on synthetic latent videos"};
    app.require_subcommand(1);

    CommonArgs train_args, sample_args, ablate_args, sweep_args, audit_args, check_args;
    auto* cmd_train = app.add_subcommand("train", "train a variant checkpoint");
    add_common(cmd_train, train_args);
    auto* cmd_sample = app.add_subcommand("sample", "sample held-out scenes from a checkpoint");
    add_common(cmd_sample, sample_args);
    auto* cmd_ablate = app.add_subcommand("ablate", "evaluate the ablation variant matrix");
    add_common(cmd_ablate, ablate_args);
    bool train_missing = false;
    cmd_ablate->add_flag("--train-missing", train_missing,
                         "train and evaluate in memory instead of requiring checkpoints");
    auto* cmd_sweep = app.add_subcommand("sweep", "sensitivity grid over sampler knobs");
    add_common(cmd_sweep, sweep_args);
    auto* cmd_audit = app.add_subcommand("audit", "pseudo-event audit over the dataset");
    add_common(cmd_audit, audit_args);
    auto* cmd_check = app.add_subcommand("check", "run the invariant/property suite");
    add_common(cmd_check, check_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_train->parsed()) {
            const evd::RunConfig cfg = resolve(train_args, "train");
            const evd::TrainRunResult res = evd::run_train(cfg);
            std::printf("trained %s: base %.6f -> %.6f, checkpoint %s\n", cfg.variant.c_str(),
                        res.first_base, res.last_base, res.checkpoint_path.c_str());
        } else if (cmd_sample->parsed()) {
            const evd::RunConfig cfg = resolve(sample_args, "sample");
            const evd::SampleRunResult res = evd::run_sample(cfg);
            std::printf("sampled %s: e_pre %.6g e_in %.6g e_post %.6g mse %.6g (%s)\n",
                        cfg.variant.c_str(), res.aggregate.energy.e_pre,
                        res.aggregate.energy.e_in, res.aggregate.energy.e_post,
                        res.aggregate.final_mse, res.run_dir.c_str());
        } else if (cmd_ablate->parsed()) {
            const evd::RunConfig cfg = resolve(ablate_args, "ablate");
            if (train_missing) {
                const auto metrics =
                    evd::train_and_evaluate_variants(cfg, evd::ablation_variant_ids());
                for (const auto& [id, rec] : metrics) {
                    std::printf("%-16s e_pre %.6g e_in %.6g e_post %.6g mse %.6g\n", id.c_str(),
                                rec.energy.e_pre, rec.energy.e_in, rec.energy.e_post,
                                rec.final_mse);
                }
            } else {
                const auto rows = evd::run_ablation(cfg, evd::ablation_variant_ids());
                for (const auto& row : rows) {
                    std::printf("%-16s e_pre %.6g e_in %.6g e_post %.6g mse %.6g\n",
                                row.variant.c_str(), row.metrics.energy.e_pre,
                                row.metrics.energy.e_in, row.metrics.energy.e_post,
                                row.metrics.final_mse);
                }
            }
        } else if (cmd_sweep->parsed()) {
            const evd::RunConfig cfg = resolve(sweep_args, "sweep");
            const auto rows = evd::run_sweep(cfg);
            std::printf("sweep wrote %zu grid points to %s/sweep/grid.csv\n", rows.size(),
                        cfg.out_dir.c_str());
        } else if (cmd_audit->parsed()) {
            const evd::RunConfig cfg = resolve(audit_args, "audit");
            const auto rows = evd::run_audit(cfg);
            int accepted = 0;
            for (const auto& r : rows) accepted += r.accept ? 1 : 0;
            std::printf("audited %zu clips, %d accepted (%s/audit/clips.jsonl)\n", rows.size(),
                        accepted, cfg.out_dir.c_str());
        } else if (cmd_check->parsed()) {
            const evd::RunConfig cfg = resolve(check_args, "check");
            const auto results = evd::run_check(cfg);
            int failures = 0;
            for (const auto& r : results) {
                std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                            r.detail.empty() ? "" : ": ", r.detail.c_str());
                failures += r.pass ? 0 : 1;
            }
            if (failures > 0) {
                std::fprintf(stderr, "%d checks failed\n", failures);
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stainforge/dataset.hpp"
#include "stainforge/model.hpp"

namespace stainforge {

// Configuration of a full method comparison: each requested mode is trained
// `repetitions` times with fanned-out seeds and evaluated on the internal,
// external, and cumulative test splits.
struct RunConfig {
    std::string dataset_dir;
    std::vector<MethodMode> modes;
    int repetitions = 10;
    uint64_t master_seed = 0;
    double lambda_he_adv = 1.0;
    double lambda_domain_adv = 0.5;
    TrainConfig base;

    void validate() const;
    static RunConfig from_json(const nlohmann::json& j);
};

// Seed fanout: adding a mode never perturbs other modes' runs.
uint64_t run_seed(uint64_t master_seed, MethodMode mode, int repetition);

// Effective per-run training configuration (mode, seed, lambda resolved).
TrainConfig make_run_config(const RunConfig& cfg, MethodMode mode, int repetition,
                            int n_classes);
uint64_t train_config_hash(const TrainConfig& cfg, MethodMode mode, int repetition);

struct RunOutcome {
    MethodMode mode = MethodMode::none;
    int repetition = 0;
    uint64_t seed = 0;
    double kappa_internal = 0.0;
    double kappa_external = 0.0;
    double kappa_cumulative = 0.0;
    double probe_accuracy = 0.0;
    double probe_chance = 0.0;
    int best_epoch = 0;
};

// Trains one (mode, repetition) run and evaluates it; does not touch the disk.
RunOutcome execute_run(const SplitDataset& data, const RunConfig& cfg, MethodMode mode,
                       int repetition);

struct SplitSummary {
    double mean = 0.0;
    double stddev = 0.0;
};

struct ModeSummary {
    MethodMode mode = MethodMode::none;
    std::vector<RunOutcome> runs;
    SplitSummary internal, external, cumulative;
    double probe_mean = 0.0;
};

struct CompareReport {
    std::vector<ModeSummary> modes;
    MethodMode proposed = MethodMode::he_adv;
    // Wilcoxon p-values of the proposed mode against the best competitor, per split;
    // NaN when not computable.
    double p_internal = 1.0, p_external = 1.0, p_cumulative = 1.0;
    std::string text; // aligned table
    std::string csv;
};

// Full workflow: runs execute in a worker pool, completed (mode, seed) runs found on
// disk with a matching config hash are reused, artifacts land under out_dir.
CompareReport compare(const SplitDataset& data, const RunConfig& cfg,
                      const std::string& out_dir, std::ostream* log = nullptr);

CompareReport summarize(const RunConfig& cfg, const std::vector<RunOutcome>& outcomes);

} // namespace stainforge

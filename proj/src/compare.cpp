#include "stainforge/compare.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "stainforge/errors.hpp"
#include "stainforge/metrics.hpp"
#include "stainforge/rng.hpp"

namespace fs = std::filesystem;

namespace stainforge {

void RunConfig::validate() const {
    if (modes.size() < 2) throw InvalidConfig("compare: need >= 2 modes");
    if (repetitions < 1) throw InvalidConfig("compare: repetitions must be >= 1");
    if (lambda_he_adv < 0.0 || lambda_domain_adv < 0.0)
        throw InvalidConfig("compare: lambdas must be >= 0");
    base.validate();
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    try {
        cfg.dataset_dir = j.at("dataset").get<std::string>();
        for (const auto& m : j.at("modes"))
            cfg.modes.push_back(method_mode_from_string(m.get<std::string>()));
        cfg.repetitions = j.value("repetitions", 10);
        cfg.master_seed = j.value("master_seed", uint64_t{0});
        cfg.lambda_he_adv = j.value("lambda_he_adv", 1.0);
        cfg.lambda_domain_adv = j.value("lambda_domain_adv", 0.5);
        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.base.learning_rate = t.value("learning_rate", cfg.base.learning_rate);
            cfg.base.weight_decay = t.value("weight_decay", cfg.base.weight_decay);
            cfg.base.max_epochs = t.value("max_epochs", cfg.base.max_epochs);
            cfg.base.early_stop_patience =
                t.value("early_stop_patience", cfg.base.early_stop_patience);
            cfg.base.batch_size = t.value("batch_size", cfg.base.batch_size);
            if (t.contains("algorithm")) {
                const auto algo = t.at("algorithm").get<std::string>();
                if (algo == "adam")
                    cfg.base.algorithm = nn::OptAlgo::adam;
                else if (algo == "sgd")
                    cfg.base.algorithm = nn::OptAlgo::sgd;
                else
                    throw InvalidConfig("compare: unknown optimizer " + algo);
            }
            if (t.contains("hsv_preset")) {
                const auto preset = t.at("hsv_preset").get<std::string>();
                if (preset == "colon")
                    cfg.base.hsv = HsvAugConfig::colon();
                else if (preset == "prostate")
                    cfg.base.hsv = HsvAugConfig::prostate();
                else
                    throw InvalidConfig("compare: unknown hsv preset " + preset);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("compare config: ") + e.what());
    }
    return cfg;
}

uint64_t run_seed(uint64_t master_seed, MethodMode mode, int repetition) {
    return combine_seed(combine_seed(master_seed, fnv1a64(to_string(mode))),
                        static_cast<uint64_t>(repetition));
}

TrainConfig make_run_config(const RunConfig& cfg, MethodMode mode, int repetition,
                            int n_classes) {
    TrainConfig t = cfg.base;
    t.mode = mode;
    t.seed = run_seed(cfg.master_seed, mode, repetition);
    t.arch.n_classes = n_classes;
    if (mode == MethodMode::he_adv)
        t.lambda = cfg.lambda_he_adv;
    else if (mode == MethodMode::domain_adv)
        t.lambda = cfg.lambda_domain_adv;
    else
        t.lambda = 0.0;
    return t;
}

namespace {

nlohmann::json train_config_to_json(const TrainConfig& cfg, MethodMode mode, int repetition) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : cfg.arch.blocks)
        blocks.push_back({{"c", b.channels}, {"k", b.kernel}, {"s", b.stride}});
    return {{"mode", to_string(mode)},
            {"repetition", repetition},
            {"seed", cfg.seed},
            {"lambda", cfg.lambda},
            {"learning_rate", cfg.learning_rate},
            {"weight_decay", cfg.weight_decay},
            {"algorithm", cfg.algorithm == nn::OptAlgo::adam ? "adam" : "sgd"},
            {"max_epochs", cfg.max_epochs},
            {"early_stop_patience", cfg.early_stop_patience},
            {"batch_size", cfg.batch_size},
            {"arch",
             {{"blocks", blocks},
              {"hidden", cfg.arch.hidden},
              {"n_classes", cfg.arch.n_classes},
              {"regress_dim", cfg.arch.regress_dim}}},
            {"hsv",
             {cfg.hsv.hue_min, cfg.hsv.hue_max, cfg.hsv.sat_min, cfg.hsv.sat_max,
              cfg.hsv.bright_min, cfg.hsv.bright_max}},
            {"stain_sigma", {cfg.stain.sigma1, cfg.stain.sigma2}}};
}

// NaN round-trips as JSON null.
double json_double(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number())
        return std::numeric_limits<double>::quiet_NaN();
    return j.at(key).get<double>();
}

SplitSummary summarize_values(const std::vector<double>& values) {
    SplitSummary s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
    return s;
}

std::string format_mean_std(const SplitSummary& s, bool starred) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << s.mean << " +/- " << s.stddev
        << (starred ? "*" : "");
    return out.str();
}

} // namespace

uint64_t train_config_hash(const TrainConfig& cfg, MethodMode mode, int repetition) {
    return fnv1a64(train_config_to_json(cfg, mode, repetition).dump());
}

namespace {

RunOutcome execute_run_impl(const SplitDataset& data, const RunConfig& cfg, MethodMode mode,
                            int repetition, const fs::path* persist_dir) {
    const int n_classes = data.train.n_classes;
    const TrainConfig t = make_run_config(cfg, mode, repetition, n_classes);
    TrainResult result = train(data.train, data.val, t);

    RunOutcome outcome;
    outcome.mode = mode;
    outcome.repetition = repetition;
    outcome.seed = t.seed;
    outcome.best_epoch = result.best_epoch;

    const EvalOutputs ev_int =
        evaluate_patches(result.model, data.internal_test, result.stain_target);
    const EvalOutputs ev_ext =
        evaluate_patches(result.model, data.external_test, result.stain_target);
    auto truths_of = [](const Dataset& d) {
        std::vector<int> out;
        out.reserve(d.items.size());
        for (const auto& item : d.items) out.push_back(item.y);
        return out;
    };
    auto safe_kappa = [&](const std::vector<int>& preds, const std::vector<int>& truths) {
        try {
            return quadratic_kappa(preds, truths, n_classes);
        } catch (const UndefinedKappa&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    const auto truths_int = truths_of(data.internal_test);
    const auto truths_ext = truths_of(data.external_test);
    outcome.kappa_internal = safe_kappa(ev_int.preds, truths_int);
    outcome.kappa_external = safe_kappa(ev_ext.preds, truths_ext);

    // Cumulative split pools every test patch into one confusion matrix.
    std::vector<int> pooled_preds(ev_int.preds), pooled_truths(truths_int);
    pooled_preds.insert(pooled_preds.end(), ev_ext.preds.begin(), ev_ext.preds.end());
    pooled_truths.insert(pooled_truths.end(), truths_ext.begin(), truths_ext.end());
    outcome.kappa_cumulative = safe_kappa(pooled_preds, pooled_truths);

    // Stain-invariance probe over the pooled test patches of every center.
    std::vector<int> centers;
    std::vector<std::vector<double>> features(ev_int.features);
    features.insert(features.end(), ev_ext.features.begin(), ev_ext.features.end());
    for (const auto& item : data.internal_test.items) centers.push_back(item.center_id);
    for (const auto& item : data.external_test.items) centers.push_back(item.center_id);
    try {
        const ProbeResult probe = stain_invariance_probe(features, centers, t.seed);
        outcome.probe_accuracy = probe.accuracy;
        outcome.probe_chance = probe.chance;
    } catch (const InsufficientSamples&) {
        outcome.probe_accuracy = std::numeric_limits<double>::quiet_NaN();
        outcome.probe_chance = std::numeric_limits<double>::quiet_NaN();
    }

    if (persist_dir) {
        fs::create_directories(*persist_dir);
        CheckpointMeta meta;
        meta.mode = mode;
        meta.seed = t.seed;
        meta.stain_target = result.stain_target;
        save_checkpoint((*persist_dir / "checkpoint.bin").string(), result.model, meta);
        write_history_csv((*persist_dir / "history.csv").string(), result.history);
        nlohmann::json j{{"config_hash", train_config_hash(t, mode, repetition)},
                         {"mode", to_string(mode)},
                         {"repetition", repetition},
                         {"seed", outcome.seed},
                         {"kappa_internal", outcome.kappa_internal},
                         {"kappa_external", outcome.kappa_external},
                         {"kappa_cumulative", outcome.kappa_cumulative},
                         {"probe_accuracy", outcome.probe_accuracy},
                         {"probe_chance", outcome.probe_chance},
                         {"best_epoch", outcome.best_epoch}};
        std::ofstream out(*persist_dir / "result.json");
        out << j.dump(2) << "\n";
        if (!out) throw IoError("failed writing result.json");
    }
    return outcome;
}

} // namespace

RunOutcome execute_run(const SplitDataset& data, const RunConfig& cfg, MethodMode mode,
                       int repetition) {
    return execute_run_impl(data, cfg, mode, repetition, nullptr);
}

CompareReport summarize(const RunConfig& cfg, const std::vector<RunOutcome>& outcomes) {
    CompareReport report;
    report.proposed = MethodMode::he_adv;
    if (std::find(cfg.modes.begin(), cfg.modes.end(), MethodMode::he_adv) == cfg.modes.end())
        report.proposed = cfg.modes.front();

    for (MethodMode mode : cfg.modes) {
        ModeSummary summary;
        summary.mode = mode;
        std::vector<double> internal, external, cumulative, probes;
        for (const RunOutcome& o : outcomes) {
            if (o.mode != mode) continue;
            summary.runs.push_back(o);
            internal.push_back(o.kappa_internal);
            external.push_back(o.kappa_external);
            cumulative.push_back(o.kappa_cumulative);
            probes.push_back(o.probe_accuracy);
        }
        summary.internal = summarize_values(internal);
        summary.external = summarize_values(external);
        summary.cumulative = summarize_values(cumulative);
        summary.probe_mean = summarize_values(probes).mean;
        report.modes.push_back(std::move(summary));
    }

    // Wilcoxon of the proposed mode against the best competitor, per split. A mode
    // may appear several times in the config (control case): competitors are entries
    // other than the proposed one.
    size_t proposed_idx = 0;
    for (size_t i = 0; i < report.modes.size(); ++i)
        if (report.modes[i].mode == report.proposed) proposed_idx = i;
    auto collect = [&](size_t idx, auto getter) {
        std::vector<double> out;
        for (const auto& run : report.modes[idx].runs) out.push_back(getter(run));
        return out;
    };
    auto split_p = [&](auto getter, auto mean_getter) {
        double best_mean = -2.0;
        size_t best_idx = proposed_idx;
        for (size_t i = 0; i < report.modes.size(); ++i) {
            if (i == proposed_idx) continue;
            if (mean_getter(report.modes[i]) > best_mean) {
                best_mean = mean_getter(report.modes[i]);
                best_idx = i;
            }
        }
        if (best_idx == proposed_idx) return std::numeric_limits<double>::quiet_NaN();
        try {
            return wilcoxon_rank_sum(collect(proposed_idx, getter), collect(best_idx, getter))
                .p_value;
        } catch (const SampleTooSmall&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    report.p_internal = split_p([](const RunOutcome& o) { return o.kappa_internal; },
                                [](const ModeSummary& m) { return m.internal.mean; });
    report.p_external = split_p([](const RunOutcome& o) { return o.kappa_external; },
                                [](const ModeSummary& m) { return m.external.mean; });
    report.p_cumulative = split_p([](const RunOutcome& o) { return o.kappa_cumulative; },
                                  [](const ModeSummary& m) { return m.cumulative.mean; });

    // Aligned text table.
    std::ostringstream text;
    text << std::left << std::setw(14) << "method" << std::setw(18) << "internal"
         << std::setw(18) << "external" << std::setw(18) << "cumulative" << std::setw(12)
         << "probe_acc" << "\n";
    std::ostringstream csv;
    csv << "mode,kappa_internal_mean,kappa_internal_std,kappa_external_mean,kappa_external_std,"
           "kappa_cumulative_mean,kappa_cumulative_std,probe_accuracy_mean,significant\n";
    for (size_t i = 0; i < report.modes.size(); ++i) {
        const ModeSummary& m = report.modes[i];
        const bool is_proposed = i == proposed_idx;
        const bool star_int = is_proposed && report.p_internal < 0.05;
        const bool star_ext = is_proposed && report.p_external < 0.05;
        const bool star_cum = is_proposed && report.p_cumulative < 0.05;
        text << std::left << std::setw(14) << to_string(m.mode) << std::setw(18)
             << format_mean_std(m.internal, star_int) << std::setw(18)
             << format_mean_std(m.external, star_ext) << std::setw(18)
             << format_mean_std(m.cumulative, star_cum) << std::fixed << std::setprecision(3)
             << m.probe_mean << "\n";
        csv << to_string(m.mode) << "," << std::fixed << std::setprecision(6) << m.internal.mean
            << "," << m.internal.stddev << "," << m.external.mean << "," << m.external.stddev
            << "," << m.cumulative.mean << "," << m.cumulative.stddev << "," << m.probe_mean
            << "," << ((star_int || star_ext || star_cum) ? 1 : 0) << "\n";
    }
    std::ostringstream pline;
    pline << std::scientific << std::setprecision(3) << "wilcoxon p (proposed vs best "
          << "competitor): internal " << report.p_internal << ", external " << report.p_external
          << ", cumulative " << report.p_cumulative << "\n";
    text << pline.str();
    report.text = text.str();
    report.csv = csv.str();
    return report;
}

CompareReport compare(const SplitDataset& data, const RunConfig& cfg,
                      const std::string& out_dir, std::ostream* log) {
    cfg.validate();
    if (data.train.items.empty() || data.val.items.empty())
        throw EmptyDataset("compare: dataset has empty train or val split");
    fs::create_directories(out_dir);

    struct Task {
        MethodMode mode;
        int repetition;
        size_t config_index; // disambiguates duplicated modes
    };
    std::vector<Task> tasks;
    for (size_t mi = 0; mi < cfg.modes.size(); ++mi)
        for (int r = 0; r < cfg.repetitions; ++r) tasks.push_back({cfg.modes[mi], r, mi});

    std::vector<RunOutcome> outcomes(tasks.size());
    std::vector<std::string> errors(tasks.size());

    const auto task_dir = [&](const Task& t) {
        return fs::path(out_dir) / "runs" /
               (to_string(t.mode) + "_" + std::to_string(t.config_index)) /
               ("rep_" + std::to_string(t.repetition));
    };

    // Worker pool over independent runs; every run is a pure function of
    // (config, dataset, fanned-out seed), so scheduling cannot change results.
#pragma omp parallel for schedule(dynamic)
    for (int64_t ti = 0; ti < static_cast<int64_t>(tasks.size()); ++ti) {
        const Task& task = tasks[static_cast<size_t>(ti)];
        try {
            const TrainConfig t =
                make_run_config(cfg, task.mode, task.repetition, data.train.n_classes);
            const uint64_t config_hash = train_config_hash(t, task.mode, task.repetition);
            const fs::path dir = task_dir(task);
            const fs::path result_path = dir / "result.json";

            if (fs::exists(result_path)) {
                std::ifstream in(result_path);
                nlohmann::json j;
                in >> j;
                if (j.value("config_hash", uint64_t{0}) == config_hash) {
                    RunOutcome o;
                    o.mode = task.mode;
                    o.repetition = task.repetition;
                    o.seed = j.at("seed").get<uint64_t>();
                    o.kappa_internal = json_double(j, "kappa_internal");
                    o.kappa_external = json_double(j, "kappa_external");
                    o.kappa_cumulative = json_double(j, "kappa_cumulative");
                    o.probe_accuracy = json_double(j, "probe_accuracy");
                    o.probe_chance = json_double(j, "probe_chance");
                    o.best_epoch = j.at("best_epoch").get<int>();
                    outcomes[static_cast<size_t>(ti)] = o;
                    if (log) {
#pragma omp critical(compare_log)
                        *log << "reusing " << to_string(task.mode) << " rep "
                             << task.repetition << "\n";
                    }
                    continue;
                }
            }

            outcomes[static_cast<size_t>(ti)] =
                execute_run_impl(data, cfg, task.mode, task.repetition, &dir);
            if (log) {
#pragma omp critical(compare_log)
                *log << "completed " << to_string(task.mode) << " rep " << task.repetition
                     << " (ext kappa " << outcomes[static_cast<size_t>(ti)].kappa_external
                     << ")\n";
            }
        } catch (const std::exception& e) {
            errors[static_cast<size_t>(ti)] = e.what();
        }
    }

    for (size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error("compare: run " + to_string(tasks[i].mode) + " rep " +
                                     std::to_string(tasks[i].repetition) + " failed: " +
                                     errors[i]);

    CompareReport report = summarize(cfg, outcomes);
    std::ofstream(fs::path(out_dir) / "report.txt") << report.text;
    std::ofstream(fs::path(out_dir) / "report.csv") << report.csv;
    if (log) *log << report.text;
    return report;
}

} // namespace stainforge

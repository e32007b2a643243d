#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stainforge/augment.hpp"
#include "stainforge/compare.hpp"
#include "stainforge/dataset.hpp"
#include "stainforge/errors.hpp"
#include "stainforge/image.hpp"
#include "stainforge/metrics.hpp"
#include "stainforge/model.hpp"
#include "stainforge/stain.hpp"
#include "stainforge/synth.hpp"

namespace fs = std::filesystem;
using namespace stainforge;

namespace {

std::vector<int> read_int_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<int> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        // tolerate a header line
        try {
            out.push_back(std::stoi(line));
        } catch (const std::exception&) {
            if (!out.empty()) throw IoError(path + ": bad integer line: " + line);
        }
    }
    if (out.empty()) throw IoError(path + ": no values");
    return out;
}

void write_int_column(const std::string& path, const std::vector<int>& values) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (int v : values) out << v << "\n";
    if (!out) throw IoError("failed writing " + path);
}

struct ProjectInput {
    std::vector<std::vector<double>> vectors;
    std::vector<std::string> labels;
};

ProjectInput read_vectors_csv(const std::string& path, int label_col) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    ProjectInput out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        std::vector<double> row;
        std::string label;
        bool numeric = true;
        for (size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == label_col) {
                label = cells[c];
                continue;
            }
            try {
                row.push_back(std::stod(cells[c]));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (first) { // header row
                first = false;
                continue;
            }
            throw IoError(path + ": non-numeric value in line: " + line);
        }
        first = false;
        out.vectors.push_back(std::move(row));
        out.labels.push_back(label);
    }
    if (out.vectors.empty()) throw IoError(path + ": no data rows");
    return out;
}

void write_scatter_svg(const std::string& path, const std::vector<std::array<double, 2>>& coords,
                       const std::vector<std::string>& labels) {
    static const char* kPalette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00",
                                     "#a65628", "#f781bf", "#999999", "#66c2a5", "#fc8d62"};
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const auto& c : coords) {
        min_x = std::min(min_x, c[0]);
        max_x = std::max(max_x, c[0]);
        min_y = std::min(min_y, c[1]);
        max_y = std::max(max_y, c[1]);
    }
    const double span_x = std::max(max_x - min_x, 1e-12);
    const double span_y = std::max(max_y - min_y, 1e-12);
    const int size = 640, margin = 40;

    std::map<std::string, int> color_of;
    for (const auto& l : labels)
        if (!l.empty()) color_of.emplace(l, static_cast<int>(color_of.size()));

    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out.precision(2);
    out << std::fixed;
    for (size_t i = 0; i < coords.size(); ++i) {
        const double px = margin + (coords[i][0] - min_x) / span_x * (size - 2 * margin);
        const double py = size - margin - (coords[i][1] - min_y) / span_y * (size - 2 * margin);
        const char* color = "#377eb8";
        if (!labels[i].empty())
            color = kPalette[static_cast<size_t>(color_of[labels[i]]) %
                             (sizeof(kPalette) / sizeof(kPalette[0]))];
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << color
            << "\" fill-opacity=\"0.7\"/>\n";
    }
    // legend
    int row = 0;
    for (const auto& [label, idx] : color_of) {
        const int ly = margin + row * 18;
        out << "<circle cx=\"" << (size - margin - 100) << "\" cy=\"" << ly << "\" r=\"5\" fill=\""
            << kPalette[static_cast<size_t>(idx) % (sizeof(kPalette) / sizeof(kPalette[0]))]
            << "\"/>\n<text x=\"" << (size - margin - 88) << "\" y=\"" << (ly + 4)
            << "\" font-size=\"12\">" << label << "</text>\n";
        ++row;
    }
    out << "</svg>\n";
    if (!out) throw IoError("failed writing " + path);
}

const Dataset& pick_split(const SplitDataset& ds, const std::string& name) {
    if (name == "train") return ds.train;
    if (name == "val") return ds.val;
    if (name == "internal_test") return ds.internal_test;
    if (name == "external_test") return ds.external_test;
    throw InvalidConfig("unknown split: " + name);
}

int run(int argc, char** argv) {
    CLI::App app{"stainforge: stain-aware training methods for histopathology patches"};
    app.require_subcommand(1);

    // ---- deconv ----
    auto* deconv = app.add_subcommand("deconv", "estimate the H&E stain matrix of an image");
    std::string deconv_img, deconv_out = "matrix.csv";
    deconv->add_option("image", deconv_img, "input image (.png or .ppm)")->required();
    deconv->add_option("--out", deconv_out, "output CSV path");
    deconv->callback([&] {
        const StainMatrix m = estimate_he_matrix(to_patch(read_image(deconv_img)));
        write_stain_csv(deconv_out, m);
        std::cout << "wrote " << deconv_out << "\n";
    });

    // ---- normalize ----
    auto* normalize = app.add_subcommand("normalize", "normalize an image to a target stain");
    std::string norm_img, norm_target, norm_out = "normalized.png";
    normalize->add_option("image", norm_img, "input image")->required();
    normalize->add_option("--target", norm_target, "target image")->required();
    normalize->add_option("--out", norm_out, "output image path");
    normalize->callback([&] {
        const RgbPatch target = to_patch(read_image(norm_target));
        const MacenkoParams params;
        const StainMatrix target_m = estimate_he_matrix(target, params);
        const ConcentrationMap cmap = compute_concentrations(rgb_to_od(target), target_m);
        const auto maxc = robust_max_concentration(cmap, params.robust_conc_percentile);
        const RgbPatch out =
            normalize_to_target(to_patch(read_image(norm_img)), target_m, maxc, params);
        write_image(norm_out, to_image8(out));
        std::cout << "wrote " << norm_out << "\n";
    });

    // ---- augment ----
    auto* augment = app.add_subcommand("augment", "apply a pixel-space augmentation");
    std::string aug_img, aug_mode = "stain", aug_preset = "colon", aug_out = "augmented.png";
    uint64_t aug_seed = 0;
    augment->add_option("image", aug_img, "input image")->required();
    augment->add_option("--mode", aug_mode, "stain | hsv | geom")
        ->check(CLI::IsMember({"stain", "hsv", "geom"}));
    augment->add_option("--seed", aug_seed, "rng seed");
    augment->add_option("--preset", aug_preset, "colon | prostate")
        ->check(CLI::IsMember({"colon", "prostate"}));
    augment->add_option("--out", aug_out, "output image path");
    augment->callback([&] {
        const RgbPatch patch = to_patch(read_image(aug_img));
        Rng rng(aug_seed);
        RgbPatch out;
        if (aug_mode == "stain") {
            const StainMatrix m = estimate_he_matrix(patch);
            out = stain_augment(patch, m, StainAugConfig{}, rng);
        } else if (aug_mode == "hsv") {
            const auto cfg =
                aug_preset == "colon" ? HsvAugConfig::colon() : HsvAugConfig::prostate();
            out = hsv_augment(patch, cfg, rng);
        } else {
            out = geometric_augment(patch, rng);
        }
        write_image(aug_out, to_image8(out));
        std::cout << "wrote " << aug_out << "\n";
    });

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-center dataset");
    std::string gen_config, gen_out = "dataset", gen_dump;
    uint64_t gen_seed = 20260101;
    bool gen_preset = false;
    gen->add_option("--config", gen_config, "dataset spec JSON");
    gen->add_flag("--preset-fourcenter", gen_preset, "use the built-in 4-center spec");
    gen->add_option("--seed", gen_seed, "seed for the built-in spec");
    gen->add_option("--out", gen_out, "output dataset directory");
    gen->add_option("--write-default-config", gen_dump,
                    "write the built-in spec JSON to this path and exit");
    gen->callback([&] {
        if (!gen_dump.empty()) {
            std::ofstream out(gen_dump);
            out << dataset_spec_to_json(default_fourcenter_spec(gen_seed)).dump(2) << "\n";
            if (!out) throw IoError("failed writing " + gen_dump);
            std::cout << "wrote " << gen_dump << "\n";
            return;
        }
        DatasetSpec spec;
        if (!gen_config.empty()) {
            std::ifstream in(gen_config);
            if (!in) throw InvalidConfig("cannot open config " + gen_config);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw InvalidConfig(std::string("bad JSON: ") + e.what());
            }
            spec = dataset_spec_from_json(j);
        } else if (gen_preset) {
            spec = default_fourcenter_spec(gen_seed);
        } else {
            throw InvalidConfig("gen-data: provide --config or --preset-fourcenter");
        }
        const SplitDataset ds = build_dataset(spec);
        write_dataset(ds, gen_out);
        std::cout << "wrote dataset to " << gen_out << " (" << ds.train.items.size()
                  << " train, " << ds.val.items.size() << " val, "
                  << ds.internal_test.items.size() << " internal test, "
                  << ds.external_test.items.size() << " external test)\n";
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train one model");
    std::string train_mode = "none", train_data, train_out = "run", train_algo = "adam",
                train_preset = "colon";
    TrainConfig tcfg;
    double train_lambda = -1.0;
    train_cmd->add_option("--mode", train_mode, "training mode")
        ->check(CLI::IsMember({"none", "stain_norm", "hsv_aug", "stain_aug", "domain_adv",
                               "he_adv"}));
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--out", train_out, "output run directory");
    train_cmd->add_option("--lambda", train_lambda, "GRL scalar (default 1.0 he_adv, 0.5 domain_adv)");
    train_cmd->add_option("--seed", tcfg.seed, "run seed");
    train_cmd->add_option("--epochs", tcfg.max_epochs, "max epochs");
    train_cmd->add_option("--patience", tcfg.early_stop_patience, "early stop patience");
    train_cmd->add_option("--batch-size", tcfg.batch_size, "batch size");
    train_cmd->add_option("--learning-rate", tcfg.learning_rate, "learning rate");
    train_cmd->add_option("--weight-decay", tcfg.weight_decay, "decay rate");
    train_cmd->add_option("--optimizer", train_algo, "adam | sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    train_cmd->add_option("--preset", train_preset, "hsv preset: colon | prostate")
        ->check(CLI::IsMember({"colon", "prostate"}));
    train_cmd->callback([&] {
        tcfg.mode = method_mode_from_string(train_mode);
        tcfg.algorithm = train_algo == "adam" ? nn::OptAlgo::adam : nn::OptAlgo::sgd;
        tcfg.hsv = train_preset == "colon" ? HsvAugConfig::colon() : HsvAugConfig::prostate();
        if (train_lambda >= 0.0)
            tcfg.lambda = train_lambda;
        else
            tcfg.lambda = tcfg.mode == MethodMode::domain_adv ? 0.5
                          : tcfg.mode == MethodMode::he_adv   ? 1.0
                                                              : 0.0;
        const SplitDataset ds = load_dataset(train_data);
        tcfg.arch.n_classes = ds.train.n_classes;
        const TrainResult result = train(ds.train, ds.val, tcfg);
        fs::create_directories(train_out);
        CheckpointMeta meta{tcfg.mode, tcfg.seed, result.stain_target};
        save_checkpoint((fs::path(train_out) / "checkpoint.bin").string(), result.model, meta);
        write_history_csv((fs::path(train_out) / "history.csv").string(), result.history);
        std::cout << "trained " << train_mode << ", best epoch " << result.best_epoch
                  << ", artifacts in " << train_out << "\n";
    });

    // ---- predict ----
    auto* predict = app.add_subcommand("predict", "predict classes with a trained model");
    std::string pred_model, pred_input, pred_data, pred_split = "internal_test",
                pred_out = "predictions";
    predict->add_option("--model", pred_model, "checkpoint path")->required();
    predict->add_option("--input", pred_input, "single input image");
    predict->add_option("--data", pred_data, "dataset directory");
    predict->add_option("--split", pred_split, "dataset split to predict")
        ->check(CLI::IsMember({"train", "val", "internal_test", "external_test"}));
    predict->add_option("--out", pred_out, "output directory");
    predict->callback([&] {
        LoadedCheckpoint ckpt = load_checkpoint(pred_model);
        fs::create_directories(pred_out);
        if (!pred_input.empty()) {
            const auto probs = predict_probabilities(ckpt.model, to_patch(read_image(pred_input)));
            std::ofstream out(fs::path(pred_out) / "probabilities.csv");
            out.precision(9);
            for (size_t i = 0; i < probs.size(); ++i)
                out << (i ? "," : "") << probs[i];
            out << "\n";
            std::cout << "wrote " << (fs::path(pred_out) / "probabilities.csv").string() << "\n";
            return;
        }
        if (pred_data.empty())
            throw InvalidConfig("predict: provide --input or --data");
        const SplitDataset ds = load_dataset(pred_data);
        const Dataset& split = pick_split(ds, pred_split);
        const auto preds = predict_dataset(ckpt.model, split, ckpt.meta.stain_target);
        std::vector<int> truths;
        for (const auto& item : split.items) truths.push_back(item.y);
        write_int_column((fs::path(pred_out) / "preds.csv").string(), preds);
        write_int_column((fs::path(pred_out) / "truths.csv").string(), truths);
        std::cout << "wrote predictions for " << preds.size() << " patches to " << pred_out
                  << "\n";
    });

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "quadratic weighted kappa of predictions");
    std::string eval_pred, eval_truth;
    int eval_classes = 0;
    eval->add_option("--pred", eval_pred, "CSV with one predicted class id per line")->required();
    eval->add_option("--truth", eval_truth, "CSV with one true class id per line")->required();
    eval->add_option("--classes", eval_classes, "number of classes (default: max id + 1)");
    eval->callback([&] {
        const auto preds = read_int_column(eval_pred);
        const auto truths = read_int_column(eval_truth);
        int k = eval_classes;
        if (k == 0) {
            for (int v : preds) k = std::max(k, v + 1);
            for (int v : truths) k = std::max(k, v + 1);
        }
        std::cout.precision(6);
        std::cout << "kappa " << std::fixed << quadratic_kappa(preds, truths, k) << "\n";
    });

    // ---- project ----
    auto* project = app.add_subcommand("project", "2-D PCA projection of vectors");
    std::string proj_in, proj_out = "coords.csv", proj_svg;
    int proj_label_col = -1;
    project->add_option("--input", proj_in, "CSV of row vectors")->required();
    project->add_option("--out", proj_out, "output coordinates CSV");
    project->add_option("--svg", proj_svg, "optional SVG scatter plot");
    project->add_option("--label-col", proj_label_col,
                        "column index used as the point label/colour");
    project->callback([&] {
        const ProjectInput input = read_vectors_csv(proj_in, proj_label_col);
        const ProjectionResult res = pca_project(input.vectors);
        std::ofstream out(proj_out);
        if (!out) throw IoError("cannot open " + proj_out + " for writing");
        out.precision(9);
        out << "x,y,label\n";
        for (size_t i = 0; i < res.coordinates.size(); ++i)
            out << res.coordinates[i][0] << "," << res.coordinates[i][1] << ","
                << input.labels[i] << "\n";
        std::cout << "explained variance: " << res.explained[0] << ", " << res.explained[1]
                  << "\n";
        if (!proj_svg.empty()) write_scatter_svg(proj_svg, res.coordinates, input.labels);
    });

    // ---- compare ----
    auto* cmp = app.add_subcommand("compare", "train and compare methods");
    std::string cmp_config, cmp_out = "comparison";
    cmp->add_option("--config", cmp_config, "comparison config JSON")->required();
    cmp->add_option("--out", cmp_out, "output directory");
    cmp->callback([&] {
        std::ifstream in(cmp_config);
        if (!in) throw InvalidConfig("cannot open config " + cmp_config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidConfig(std::string("bad JSON: ") + e.what());
        }
        RunConfig cfg = RunConfig::from_json(j);
        cfg.validate();
        if (!fs::exists(cfg.dataset_dir))
            throw InvalidConfig("dataset directory does not exist: " + cfg.dataset_dir);
        const SplitDataset ds = load_dataset(cfg.dataset_dir);
        compare(ds, cfg, cmp_out, &std::cout);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const InvalidConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InsufficientCenters& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

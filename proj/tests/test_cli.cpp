#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stainforge/dataset.hpp"
#include "stainforge/image.hpp"
#include "stainforge/stain.hpp"
#include "stainforge/synth.hpp"

using namespace stainforge;
namespace fs = std::filesystem;

namespace {

const std::string cli = STAINFORGE_CLI_PATH;

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rels;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), a));
    std::sort(rels.begin(), rels.end());
    if (rels.empty()) return false;
    for (const auto& rel : rels) {
        if (!fs::exists(b / rel)) return false;
        if (slurp(a / rel) != slurp(b / rel)) return false;
    }
    return true;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_mini_spec(const fs::path& path, uint64_t seed) {
    DatasetSpec spec = default_fourcenter_spec(seed);
    spec.patches_per_class_per_center = 8;
    spec.patch_size = 24;
    std::ofstream out(path);
    out << dataset_spec_to_json(spec).dump(2) << "\n";
}

} // namespace

TEST_CASE("cli: deconv writes a parseable stain matrix") {
    TempDir dir("sf_cli_deconv");
    const DatasetSpec spec = default_fourcenter_spec(3);
    const LabeledPatch patch = render_patch(spec.classes[0], spec.centers[0], 48, Rng(3), 0.0);
    const std::string img = (dir.path / "patch.png").string();
    write_image(img, patch.patch);

    const std::string out_csv = (dir.path / "matrix.csv").string();
    CHECK(run_cli("deconv " + img + " --out " + out_csv) == 0);
    const StainMatrix m = read_stain_csv(out_csv);
    m.validate();
}

TEST_CASE("cli: augment is seed deterministic") {
    TempDir dir("sf_cli_augment");
    const DatasetSpec spec = default_fourcenter_spec(5);
    const LabeledPatch patch = render_patch(spec.classes[1], spec.centers[0], 48, Rng(5), 0.0);
    const std::string img = (dir.path / "patch.png").string();
    write_image(img, patch.patch);

    for (const std::string mode : {"stain", "hsv", "geom"}) {
        const std::string out1 = (dir.path / (mode + "_1.png")).string();
        const std::string out2 = (dir.path / (mode + "_2.png")).string();
        const std::string out3 = (dir.path / (mode + "_3.png")).string();
        CHECK(run_cli("augment " + img + " --mode " + mode + " --seed 11 --out " + out1) == 0);
        CHECK(run_cli("augment " + img + " --mode " + mode + " --seed 11 --out " + out2) == 0);
        CHECK(run_cli("augment " + img + " --mode " + mode + " --seed 12 --out " + out3) == 0);
        CHECK(slurp(out1) == slurp(out2));
        if (mode != "geom") // a geometric draw may coincide
            CHECK(slurp(out1) != slurp(out3));
    }
}

TEST_CASE("cli: normalize maps an image toward the target stain") {
    TempDir dir("sf_cli_norm");
    const DatasetSpec spec = default_fourcenter_spec(7);
    const LabeledPatch a = render_patch(spec.classes[0], spec.centers[0], 48, Rng(7), 0.0);
    const LabeledPatch b = render_patch(spec.classes[0], spec.centers[2], 48, Rng(8), 0.0);
    const std::string img_a = (dir.path / "a.png").string();
    const std::string img_b = (dir.path / "b.png").string();
    write_image(img_a, a.patch);
    write_image(img_b, b.patch);
    const std::string out = (dir.path / "norm.png").string();
    CHECK(run_cli("normalize " + img_b + " --target " + img_a + " --out " + out) == 0);
    const StainMatrix target_m = estimate_he_matrix(to_patch(a.patch));
    const StainMatrix result_m = estimate_he_matrix(to_patch(read_image(out)));
    CHECK(row_angle_deg(target_m.rows[0], result_m.rows[0]) <= 3.0);
    CHECK(row_angle_deg(target_m.rows[1], result_m.rows[1]) <= 3.0);
}

TEST_CASE("cli: gen-data is byte deterministic and loadable") {
    TempDir dir("sf_cli_gendata");
    const fs::path spec_path = dir.path / "spec.json";
    write_mini_spec(spec_path, 777);

    const fs::path out1 = dir.path / "ds1";
    const fs::path out2 = dir.path / "ds2";
    CHECK(run_cli("gen-data --config " + spec_path.string() + " --out " + out1.string()) == 0);
    CHECK(run_cli("gen-data --config " + spec_path.string() + " --out " + out2.string()) == 0);
    CHECK(dirs_byte_identical(out1, out2));

    const SplitDataset ds = load_dataset(out1.string());
    CHECK(ds.train.n_classes == 3);
    CHECK(!ds.train.items.empty());
}

TEST_CASE("cli: train / predict / eval pipeline with byte-identical reruns") {
    TempDir dir("sf_cli_train");
    const fs::path spec_path = dir.path / "spec.json";
    write_mini_spec(spec_path, 888);
    const fs::path data = dir.path / "ds";
    REQUIRE(run_cli("gen-data --config " + spec_path.string() + " --out " + data.string()) == 0);

    const std::string common = "train --mode he_adv --data " + data.string() +
                               " --seed 4 --epochs 2 --batch-size 8";
    const fs::path run1 = dir.path / "run1";
    const fs::path run2 = dir.path / "run2";
    REQUIRE(run_cli(common + " --out " + run1.string()) == 0);
    REQUIRE(run_cli(common + " --out " + run2.string()) == 0);
    CHECK(slurp(run1 / "checkpoint.bin") == slurp(run2 / "checkpoint.bin"));
    CHECK(slurp(run1 / "history.csv") == slurp(run2 / "history.csv"));

    const fs::path preds = dir.path / "preds";
    REQUIRE(run_cli("predict --model " + (run1 / "checkpoint.bin").string() + " --data " +
                    data.string() + " --split internal_test --out " + preds.string()) == 0);
    CHECK(run_cli("eval --pred " + (preds / "preds.csv").string() + " --truth " +
                  (preds / "truths.csv").string()) == 0);
}

TEST_CASE("cli: project writes coordinates and an svg scatter") {
    TempDir dir("sf_cli_project");
    // vectors.csv: stain matrices of two centers, label column 6
    const DatasetSpec spec = default_fourcenter_spec(9);
    std::ofstream vectors(dir.path / "vectors.csv");
    for (int which : {0, 2})
        for (int i = 0; i < 10; ++i) {
            const LabeledPatch p = render_patch(spec.classes[0], spec.centers[static_cast<size_t>(which)], 32,
                                                Rng(static_cast<uint64_t>(which * 100 + i)), 0.01);
            for (double v : p.m) vectors << v << ",";
            vectors << "center" << which << "\n";
        }
    vectors.close();

    const std::string coords = (dir.path / "coords.csv").string();
    const std::string svg = (dir.path / "scatter.svg").string();
    CHECK(run_cli("project --input " + (dir.path / "vectors.csv").string() + " --out " + coords +
                  " --svg " + svg + " --label-col 6") == 0);
    CHECK(fs::exists(coords));
    const std::string svg_text = slurp(svg);
    CHECK(svg_text.find("<svg") != std::string::npos);
    CHECK(svg_text.find("circle") != std::string::npos);
}

TEST_CASE("cli: compare runs, reports, resumes, and validates") {
    TempDir dir("sf_cli_compare");
    const fs::path spec_path = dir.path / "spec.json";
    write_mini_spec(spec_path, 999);
    const fs::path data = dir.path / "ds";
    REQUIRE(run_cli("gen-data --config " + spec_path.string() + " --out " + data.string()) == 0);

    nlohmann::json cfg{{"dataset", data.string()},
                       {"modes", {"none", "he_adv"}},
                       {"repetitions", 3},
                       {"master_seed", 5},
                       {"train", {{"max_epochs", 2}, {"batch_size", 8}}}};
    const fs::path cfg_path = dir.path / "compare.json";
    std::ofstream(cfg_path) << cfg.dump(2);

    const fs::path out = dir.path / "cmp";
    REQUIRE(run_cli("compare --config " + cfg_path.string() + " --out " + out.string()) == 0);
    const std::string report = slurp(out / "report.txt");
    CHECK(report.find("none") != std::string::npos);
    CHECK(report.find("he_adv") != std::string::npos);
    CHECK(report.find("+/-") != std::string::npos);
    CHECK(fs::exists(out / "runs"));
    CHECK(fs::exists(out / "report.csv"));

    // rerun resumes from persisted results and reproduces the report bytes
    const std::string before = slurp(out / "report.txt");
    REQUIRE(run_cli("compare --config " + cfg_path.string() + " --out " + out.string()) == 0);
    CHECK(slurp(out / "report.txt") == before);

    // a single mode is a validation error (exit 2)
    nlohmann::json bad = cfg;
    bad["modes"] = {"he_adv"};
    const fs::path bad_path = dir.path / "bad.json";
    std::ofstream(bad_path) << bad.dump(2);
    CHECK(run_cli("compare --config " + bad_path.string() + " --out " + (dir.path / "x").string()) ==
          2);
}

TEST_CASE("cli: exit codes distinguish validation from runtime errors") {
    CHECK(run_cli("gen-data") == 2);                         // neither config nor preset
    CHECK(run_cli("deconv /nonexistent.png --out /tmp/x") == 1); // io failure at runtime
    CHECK(run_cli("unknown-subcommand") == 2);
}

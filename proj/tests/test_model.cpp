#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <Eigen/Dense>

#include "stainforge/errors.hpp"
#include "stainforge/metrics.hpp"
#include "stainforge/model.hpp"
#include "stainforge/rng.hpp"
#include "stainforge/synth.hpp"

using namespace stainforge;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

ArchSpec tiny_arch(int n_classes = 2) {
    ArchSpec arch;
    arch.blocks = {{8, 3, 2}, {8, 3, 2}};
    arch.hidden = 16;
    arch.n_classes = n_classes;
    return arch;
}

// Two trivially separable classes: horizontal stripes vs vertical stripes.
Dataset separable_set(int per_class, int size, uint64_t seed) {
    Dataset ds;
    ds.n_classes = 2;
    Rng rng(seed);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < per_class; ++i) {
            RgbPatch p(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const int band = (c == 0 ? y : x) / 4;
                    const double base = band % 2 == 0 ? 0.25 : 0.75;
                    double* px = p.px(x, y);
                    for (int ch = 0; ch < 3; ++ch)
                        px[ch] = std::clamp(base + rng.uniform(-0.05, 0.05), 0.0, 1.0);
                }
            LabeledPatch item;
            item.patch = to_image8(p);
            item.y = c;
            item.m = canonical_he_matrix().flat();
            item.center_id = i % 2;
            ds.items.push_back(std::move(item));
        }
    return ds;
}

SplitDataset mini_synthetic(int per_class_center, int patch_size, uint64_t seed) {
    DatasetSpec spec = default_fourcenter_spec(seed);
    spec.patches_per_class_per_center = per_class_center;
    spec.patch_size = patch_size;
    return build_dataset(spec);
}

std::vector<double> group_values(HeanModel& model, bool conv_and_cl) {
    std::vector<double> out;
    auto groups = model.groups();
    auto grab = [&](const std::vector<nn::Param*>& ps) {
        for (const nn::Param* p : ps)
            out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    };
    if (conv_and_cl) {
        grab(groups.conv);
        grab(groups.cl);
    } else {
        grab(groups.reg);
    }
    return out;
}

} // namespace

TEST_CASE("build_model is deterministic and forward outputs are sane") {
    const ArchSpec arch; // default 3-block, 64-dim feature
    HeanModel a = build_model(arch, 99);
    HeanModel b = build_model(arch, 99);
    const auto sa = a.state();
    const auto sb = b.state();
    REQUIRE(sa.size() == sb.size());
    for (size_t i = 0; i < sa.size(); ++i)
        CHECK(std::memcmp(sa[i].data.data(), sb[i].data.data(),
                          sa[i].data.size() * sizeof(double)) == 0);

    // zero 224x224 image: finite logits of length K, sigmoid regression in (0,1)
    Tensor x({1, 3, 224, 224});
    const Tensor feat = a.forward_features(x);
    CHECK(feat.dim(1) == arch.feature_dim());
    const Tensor logits = a.forward_classifier(feat);
    CHECK(logits.dim(1) == arch.n_classes);
    for (double v : logits.data) CHECK(std::isfinite(v));
    const Tensor reg = a.forward_aux(feat);
    CHECK(reg.dim(1) == 6);
    for (double v : reg.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("predictions are normalized and features are a pure function of the input") {
    HeanModel model = build_model(tiny_arch(3), 5);
    Rng rng(1);
    RgbPatch p(16, 16);
    for (auto& v : p.data) v = rng.uniform(0.0, 1.0);
    const auto probs = predict_probabilities(model, p);
    double sum = 0.0;
    for (double v : probs) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    const Tensor x = patches_to_tensor({p, p});
    const Tensor feat = model.forward_features(x);
    for (int j = 0; j < feat.dim(1); ++j)
        CHECK(feat.at2(0, j) == feat.at2(1, j));
}

TEST_CASE("training separates a linearly separable toy set") {
    const Dataset train_set = separable_set(20, 16, 3);
    const Dataset val = separable_set(8, 16, 4);
    TrainConfig cfg;
    cfg.mode = MethodMode::none;
    cfg.arch = tiny_arch(2);
    cfg.batch_size = 8;
    cfg.seed = 7;
    const TrainResult result = train(train_set, val, cfg);
    HeanModel model = result.model;
    const auto preds = predict_dataset(model, train_set, std::nullopt);
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == train_set.items[i].y) ++correct;
    CHECK(static_cast<double>(correct) / static_cast<double>(preds.size()) >= 0.99);
    CHECK(!result.history.empty());
}

TEST_CASE("early stop halts patience epochs after the best validation loss") {
    const Dataset train_set = separable_set(8, 12, 5);
    const Dataset val = separable_set(4, 12, 6);
    TrainConfig cfg;
    cfg.mode = MethodMode::none;
    cfg.arch = tiny_arch(2);
    cfg.batch_size = 8;
    cfg.max_epochs = 15;
    cfg.early_stop_patience = 5;
    // plateau after epoch 3
    cfg.val_loss_hook = [](int epoch, double) { return epoch <= 3 ? 1.0 - 0.1 * epoch : 0.9; };
    const TrainResult result = train(train_set, val, cfg);
    CHECK(result.best_epoch == 3);
    CHECK(result.history.size() == 8); // 3 + patience 5
}

TEST_CASE("lambda zero makes he_adv trajectories bitwise identical to mode none") {
    const SplitDataset ds = mini_synthetic(6, 24, 17);
    TrainConfig base;
    base.arch = tiny_arch(3);
    base.batch_size = 8;
    base.max_epochs = 3;
    base.seed = 11;

    TrainConfig none_cfg = base;
    none_cfg.mode = MethodMode::none;
    TrainConfig adv_cfg = base;
    adv_cfg.mode = MethodMode::he_adv;
    adv_cfg.lambda = 0.0;

    TrainResult r_none = train(ds.train, ds.val, none_cfg);
    TrainResult r_adv = train(ds.train, ds.val, adv_cfg);

    const auto v_none = group_values(r_none.model, true);
    const auto v_adv = group_values(r_adv.model, true);
    REQUIRE(v_none.size() == v_adv.size());
    CHECK(std::memcmp(v_none.data(), v_adv.data(), v_none.size() * sizeof(double)) == 0);
}

TEST_CASE("one he_adv step combines the two single-task gradients") {
    const double lambda = 0.5;
    HeanModel model = build_model(tiny_arch(3), 23, lambda);
    Rng rng(29);
    std::vector<RgbPatch> batch;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
        RgbPatch p(16, 16);
        for (auto& v : p.data) v = rng.uniform(0.0, 1.0);
        batch.push_back(p);
        labels.push_back(i % 3);
    }
    const Tensor x = patches_to_tensor(batch);
    const Tensor feat = model.forward_features(x);
    const Tensor logits = model.forward_classifier(feat);
    const Tensor aux = model.forward_aux(feat);
    const auto ce = nn::cross_entropy_loss(logits, labels);
    Tensor target({4, 6});
    for (auto& v : target.data) v = rng.uniform(0.2, 0.8);
    const auto l2 = nn::squared_l2_loss(aux, target);

    auto conv_grads = [&] {
        std::vector<double> out;
        for (nn::Param* p : model.groups().conv)
            out.insert(out.end(), p->grad.data.begin(), p->grad.data.end());
        return out;
    };

    model.zero_grads();
    model.backward(&ce.grad, nullptr);
    const auto g_cl = conv_grads();

    model.zero_grads();
    model.backward(nullptr, &l2.grad);
    const auto g_aux = conv_grads(); // already includes the -lambda factor

    model.zero_grads();
    model.backward(&ce.grad, &l2.grad);
    const auto g_combined = conv_grads();

    for (size_t i = 0; i < g_combined.size(); ++i)
        CHECK(std::abs(g_combined[i] - (g_cl[i] + g_aux[i])) <= 1e-9);
}

TEST_CASE("grl lambda scales the adversarial trunk gradient linearly") {
    Rng rng(31);
    std::vector<RgbPatch> batch;
    for (int i = 0; i < 3; ++i) {
        RgbPatch p(16, 16);
        for (auto& v : p.data) v = rng.uniform(0.0, 1.0);
        batch.push_back(p);
    }
    const Tensor x = patches_to_tensor(batch);
    Tensor target({3, 6});
    for (auto& v : target.data) v = rng.uniform(0.2, 0.8);

    auto trunk_grad_at = [&](double lambda) {
        HeanModel model = build_model(tiny_arch(3), 37, lambda);
        const Tensor feat = model.forward_features(x);
        const Tensor aux = model.forward_aux(feat);
        const auto l2 = nn::squared_l2_loss(aux, target);
        model.zero_grads();
        model.backward(nullptr, &l2.grad);
        std::vector<double> out;
        for (nn::Param* p : model.groups().conv)
            out.insert(out.end(), p->grad.data.begin(), p->grad.data.end());
        return out;
    };
    const auto g1 = trunk_grad_at(1.0);
    const auto g05 = trunk_grad_at(0.5);
    const auto g0 = trunk_grad_at(0.0);
    for (size_t i = 0; i < g1.size(); ++i) {
        CHECK(std::abs(g05[i] - 0.5 * g1[i]) <= 1e-12);
        CHECK(g0[i] == 0.0);
    }
}

TEST_CASE("he_adv training: classifier improves while stain regression stays adversarial") {
    const SplitDataset ds = mini_synthetic(10, 24, 41);
    TrainConfig cfg;
    cfg.mode = MethodMode::he_adv;
    cfg.lambda = 1.0;
    cfg.arch = tiny_arch(3);
    cfg.batch_size = 8;
    cfg.max_epochs = 8;
    cfg.seed = 13;
    const TrainResult adv = train(ds.train, ds.val, cfg);

    // Eq. (3): the reported total is exactly Loss_Cl + lambda * Loss_r
    for (const auto& row : adv.history)
        CHECK(std::abs(row.loss_total - (row.loss_cl + cfg.lambda * row.loss_r)) <= 1e-12);

    CHECK(adv.history.back().loss_cl < adv.history.front().loss_cl);

    // Non-adversarial control: a linear readout of the stain matrix from frozen
    // features of a classifier-only model fits much better than the adversarial
    // regressor ever did.
    TrainConfig plain = cfg;
    plain.mode = MethodMode::none;
    TrainResult ctrl = train(ds.train, ds.val, plain);
    const auto feats = extract_features(ctrl.model, ds.train, std::nullopt);
    const size_t n = feats.size(), f = feats[0].size();
    Eigen::MatrixXd a(n, f + 1);
    Eigen::MatrixXd y(n, 6);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < f; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = feats[i][j];
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = 1.0;
        for (int j = 0; j < 6; ++j)
            y(static_cast<Eigen::Index>(i), j) = ds.train.items[i].m[static_cast<size_t>(j)];
    }
    const Eigen::MatrixXd coeff = (a.transpose() * a + 1e-6 * Eigen::MatrixXd::Identity(f + 1, f + 1))
                                      .ldlt()
                                      .solve(a.transpose() * y);
    const double fit_loss = (a * coeff - y).rowwise().squaredNorm().mean();
    MESSAGE("linear readout loss on plain features: ", fit_loss,
            ", adversarial final loss_r: ", adv.history.back().loss_r);
    CHECK(adv.history.back().loss_r > fit_loss);
}

TEST_CASE("domain adversarial head: shape, single-domain error, and separability control") {
    const SplitDataset ds = mini_synthetic(34, 24, 43);

    TrainConfig cfg;
    cfg.mode = MethodMode::domain_adv;
    cfg.lambda = 0.5;
    cfg.arch = tiny_arch(3);
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.seed = 3;
    const TrainResult result = train(ds.train, ds.val, cfg);
    HeanModel model = result.model;
    CHECK(model.aux_kind() == HeanModel::AuxKind::domain);
    CHECK(model.aux_dim() == 2); // two training centers

    // single training domain is rejected
    Dataset one_domain = ds.train;
    for (auto& item : one_domain.items) item.center_id = 0;
    CHECK_THROWS_AS(train(one_domain, ds.val, cfg), SingleDomain);

    // control: without adversarial pressure (mode none) the centers stay linearly
    // separable from the features
    TrainConfig plain = cfg;
    plain.mode = MethodMode::none;
    plain.max_epochs = 6;
    TrainResult ctrl = train(ds.train, ds.val, plain);
    Dataset pool = ds.internal_test;
    pool.items.insert(pool.items.end(), ds.external_test.items.begin(),
                      ds.external_test.items.end());
    const auto feats = extract_features(ctrl.model, pool, std::nullopt);
    std::vector<int> centers;
    for (const auto& item : pool.items) centers.push_back(item.center_id);
    const ProbeResult probe = stain_invariance_probe(feats, centers, 5);
    MESSAGE("probe accuracy on plain features: ", probe.accuracy, " chance ", probe.chance);
    CHECK(probe.accuracy > probe.chance + 0.15);
}

TEST_CASE("seeded training is fully reproducible") {
    const SplitDataset ds = mini_synthetic(5, 24, 47);
    TrainConfig cfg;
    cfg.mode = MethodMode::hsv_aug; // exercises the augmentation rng too
    cfg.arch = tiny_arch(3);
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.seed = 19;
    const TrainResult a = train(ds.train, ds.val, cfg);
    const TrainResult b = train(ds.train, ds.val, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss_cl == b.history[i].loss_cl);
        CHECK(a.history[i].val_loss_cl == b.history[i].val_loss_cl);
    }
    HeanModel ma = a.model;
    HeanModel mb = b.model;
    const auto va = group_values(ma, true);
    const auto vb = group_values(mb, true);
    CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0);
}

TEST_CASE("checkpoint round trip preserves parameters and metadata") {
    const SplitDataset ds = mini_synthetic(5, 24, 53);
    TrainConfig cfg;
    cfg.mode = MethodMode::stain_norm;
    cfg.arch = tiny_arch(3);
    cfg.batch_size = 8;
    cfg.max_epochs = 1;
    cfg.seed = 29;
    TrainResult result = train(ds.train, ds.val, cfg);
    REQUIRE(result.stain_target.has_value());

    const fs::path dir = fs::temp_directory_path() / "stainforge_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.bin").string();
    CheckpointMeta meta{cfg.mode, cfg.seed, result.stain_target};
    save_checkpoint(path, result.model, meta);
    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.meta.mode == MethodMode::stain_norm);
    CHECK(loaded.meta.seed == cfg.seed);
    REQUIRE(loaded.meta.stain_target.has_value());
    CHECK(loaded.meta.stain_target->max_h ==
          doctest::Approx(result.stain_target->max_h).epsilon(1e-12));

    const auto s1 = result.model.state();
    const auto s2 = loaded.model.state();
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i)
        CHECK(std::memcmp(s1[i].data.data(), s2[i].data.data(),
                          s1[i].data.size() * sizeof(double)) == 0);

    const auto p1 = predict_dataset(result.model, ds.internal_test, result.stain_target);
    const auto p2 = predict_dataset(loaded.model, ds.internal_test, loaded.meta.stain_target);
    CHECK(p1 == p2);
    fs::remove_all(dir);
}

TEST_CASE("empty datasets are rejected") {
    Dataset empty;
    empty.n_classes = 2;
    const Dataset val = separable_set(4, 12, 8);
    TrainConfig cfg;
    cfg.arch = tiny_arch(2);
    CHECK_THROWS_AS(train(empty, val, cfg), EmptyDataset);
    CHECK_THROWS_AS(train(val, empty, cfg), EmptyDataset);
}

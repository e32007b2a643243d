#include "stainforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "stainforge/errors.hpp"
#include "stainforge/metrics.hpp"

namespace stainforge {

using nn::Tensor;

std::string to_string(MethodMode mode) {
    switch (mode) {
        case MethodMode::none: return "none";
        case MethodMode::stain_norm: return "stain_norm";
        case MethodMode::hsv_aug: return "hsv_aug";
        case MethodMode::stain_aug: return "stain_aug";
        case MethodMode::domain_adv: return "domain_adv";
        case MethodMode::he_adv: return "he_adv";
    }
    return "none";
}

MethodMode method_mode_from_string(const std::string& s) {
    if (s == "none") return MethodMode::none;
    if (s == "stain_norm") return MethodMode::stain_norm;
    if (s == "hsv_aug") return MethodMode::hsv_aug;
    if (s == "stain_aug") return MethodMode::stain_aug;
    if (s == "domain_adv") return MethodMode::domain_adv;
    if (s == "he_adv") return MethodMode::he_adv;
    throw InvalidConfig("unknown method mode: " + s);
}

bool is_adversarial(MethodMode mode) {
    return mode == MethodMode::he_adv || mode == MethodMode::domain_adv;
}

void ArchSpec::validate() const {
    if (blocks.empty()) throw InvalidConfig("ArchSpec: needs at least one conv block");
    for (const auto& b : blocks)
        if (b.channels < 1 || b.kernel < 1 || b.stride < 1)
            throw InvalidConfig("ArchSpec: bad conv block");
    if (feature_dim() < 8) throw InvalidConfig("ArchSpec: feature_dim must be >= 8");
    if (hidden < 1) throw InvalidConfig("ArchSpec: hidden must be >= 1");
    if (n_classes < 2) throw InvalidConfig("ArchSpec: n_classes must be >= 2");
    if (regress_dim < 1) throw InvalidConfig("ArchSpec: regress_dim must be >= 1");
}

HeanModel::HeanModel(const ArchSpec& arch, AuxKind aux_kind, int aux_dim, double lambda,
                     uint64_t seed)
    : arch_(arch), aux_kind_(aux_kind), aux_dim_(aux_dim), init_seed_(seed),
      cl_hidden_("cl_hidden", arch.feature_dim(), arch.hidden),
      cl_out_("cl_out", arch.hidden, arch.n_classes), grl_(lambda),
      aux_hidden_("aux_hidden", arch.feature_dim(), arch.hidden),
      aux_out_("aux_out", arch.hidden, aux_dim) {
    arch_.validate();
    if (aux_dim < 1) throw InvalidConfig("HeanModel: aux_dim must be >= 1");
    int in_c = 3;
    for (size_t i = 0; i < arch.blocks.size(); ++i) {
        const auto& b = arch.blocks[i];
        convs_.emplace_back("conv" + std::to_string(i), in_c, b.channels, b.kernel, b.stride);
        in_c = b.channels;
    }
    conv_relus_.resize(convs_.size());

    const Rng root(seed);
    for (auto& conv : convs_) conv.init_he(root.derive(conv.params()[0]->name));
    cl_hidden_.init_he(root.derive("cl_hidden.w"));
    cl_out_.init_he(root.derive("cl_out.w"));
    aux_hidden_.init_he(root.derive("aux_hidden.w"));
    aux_out_.init_he(root.derive("aux_out.w"));
}

Tensor HeanModel::forward_features(const Tensor& x) {
    if (x.ndim() != 4 || x.dim(1) != 3) throw ShapeMismatch("forward_features: expected [N,3,H,W]");
    nn::require_finite(x, "forward_features input");
    // Center [0,1] channel data to [-1,1] before the trunk.
    Tensor h = x;
    for (auto& v : h.data) v = (v - 0.5) * 2.0;
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h);
        h = conv_relus_[i].forward(h);
    }
    return gap_.forward(h);
}

Tensor HeanModel::forward_classifier(const Tensor& feat) {
    Tensor h = cl_hidden_.forward(feat);
    h = cl_relu_.forward(h);
    return cl_out_.forward(h);
}

Tensor HeanModel::forward_aux(const Tensor& feat) {
    Tensor h = grl_.forward(feat);
    h = aux_hidden_.forward(h);
    h = aux_relu_.forward(h);
    h = aux_out_.forward(h);
    if (aux_kind_ == AuxKind::regressor) h = aux_sigmoid_.forward(h);
    return h;
}

void HeanModel::zero_grads() {
    for (nn::Param* p : params()) p->zero_grad();
}

void HeanModel::backward(const Tensor* dlogits, const Tensor* daux) {
    if (!dlogits && !daux) return;
    Tensor dfeat;
    if (dlogits) {
        Tensor g = cl_out_.backward(*dlogits);
        g = cl_relu_.backward(g);
        dfeat = cl_hidden_.backward(g);
    }
    if (daux) {
        Tensor g = *daux;
        if (aux_kind_ == AuxKind::regressor) g = aux_sigmoid_.backward(g);
        g = aux_out_.backward(g);
        g = aux_relu_.backward(g);
        g = aux_hidden_.backward(g);
        g = grl_.backward(g);
        if (dfeat.numel() == 0) {
            dfeat = std::move(g);
        } else {
            for (int64_t i = 0; i < dfeat.numel(); ++i) dfeat.data[i] += g.data[i];
        }
    }
    Tensor g = gap_.backward(dfeat);
    for (size_t i = convs_.size(); i-- > 0;) {
        g = conv_relus_[i].backward(g);
        g = convs_[i].backward(g);
    }
}

nn::ParamGroups HeanModel::groups() {
    nn::ParamGroups g;
    for (auto& conv : convs_)
        for (nn::Param* p : conv.params()) g.conv.push_back(p);
    for (nn::Param* p : cl_hidden_.params()) g.cl.push_back(p);
    for (nn::Param* p : cl_out_.params()) g.cl.push_back(p);
    for (nn::Param* p : aux_hidden_.params()) g.reg.push_back(p);
    for (nn::Param* p : aux_out_.params()) g.reg.push_back(p);
    return g;
}

std::vector<nn::Param*> HeanModel::params() { return groups().all(); }

std::vector<Tensor> HeanModel::state() const {
    std::vector<Tensor> out;
    auto& self = const_cast<HeanModel&>(*this);
    for (nn::Param* p : self.params()) out.push_back(p->value);
    return out;
}

void HeanModel::set_state(const std::vector<Tensor>& state) {
    auto ps = params();
    if (state.size() != ps.size()) throw ShapeMismatch("set_state: wrong tensor count");
    for (size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i]->value.same_shape(state[i]))
            throw ShapeMismatch("set_state: shape mismatch for " + ps[i]->name);
        ps[i]->value = state[i];
    }
}

HeanModel build_model(const ArchSpec& arch, uint64_t seed, double lambda,
                      HeanModel::AuxKind aux_kind, int aux_dim) {
    return HeanModel(arch, aux_kind, aux_dim, lambda, seed);
}

Tensor patches_to_tensor(const std::vector<RgbPatch>& batch) {
    if (batch.empty()) throw EmptyDataset("patches_to_tensor: empty batch");
    const int h = batch[0].height, w = batch[0].width;
    for (const auto& p : batch)
        if (p.width != w || p.height != h)
            throw ShapeMismatch("patches_to_tensor: mixed patch sizes");
    Tensor x({static_cast<int>(batch.size()), 3, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (size_t n = 0; n < batch.size(); ++n) {
        const double* src = batch[n].data.data();
        double* dst = x.data.data() + static_cast<int64_t>(n) * 3 * plane;
        for (int64_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) dst[c * plane + i] = src[i * 3 + c];
    }
    return x;
}

void TrainConfig::validate() const {
    arch.validate();
    if (lambda < 0.0) throw InvalidConfig("TrainConfig: lambda must be >= 0");
    if (learning_rate <= 0.0) throw InvalidConfig("TrainConfig: learning_rate must be > 0");
    if (weight_decay < 0.0) throw InvalidConfig("TrainConfig: weight_decay must be >= 0");
    if (max_epochs < 1) throw InvalidConfig("TrainConfig: max_epochs must be >= 1");
    if (early_stop_patience < 1) throw InvalidConfig("TrainConfig: patience must be >= 1");
    if (batch_size < 1) throw InvalidConfig("TrainConfig: batch_size must be >= 1");
    hsv.validate();
    stain.validate();
    od.validate();
    macenko.validate(od.od_cap);
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.precision(12);
    out << "epoch,loss_cl,loss_r,loss_total,val_loss_cl,val_kappa\n";
    for (const auto& row : history)
        out << row.epoch << "," << row.loss_cl << "," << row.loss_r << "," << row.loss_total
            << "," << row.val_loss_cl << "," << row.val_kappa << "\n";
    if (!out) throw IoError("failed writing " + path);
}

namespace {

StainNormTarget pick_stain_target(const std::vector<LabeledPatch>& items,
                                  const TrainConfig& cfg) {
    // "Randomly selected" in the source method; here the choice is a deterministic
    // function of the run seed. Walks forward if the drawn patch is unusable.
    Rng rng = Rng(cfg.seed).derive("stain_norm_target");
    const size_t start = rng.below(items.size());
    for (size_t off = 0; off < items.size(); ++off) {
        const size_t idx = (start + off) % items.size();
        try {
            const RgbPatch p = to_patch(items[idx].patch);
            StainNormTarget target;
            target.m = estimate_he_matrix(p, cfg.macenko, cfg.od);
            const ConcentrationMap cmap =
                compute_concentrations(rgb_to_od(p, cfg.od), target.m);
            const auto [mh, me] =
                robust_max_concentration(cmap, cfg.macenko.robust_conc_percentile);
            if (mh <= 0.0 || me <= 0.0) continue;
            target.max_h = mh;
            target.max_e = me;
            return target;
        } catch (const NotEnoughTissue&) {
        } catch (const DegenerateStain&) {
        } catch (const EmptyTissue&) {
        }
    }
    throw NotEnoughTissue("no usable stain normalization target in training set");
}

RgbPatch apply_stain_norm(const RgbPatch& patch, const StainNormTarget& target,
                          const MacenkoParams& macenko, const OdConfig& od) {
    try {
        return normalize_to_target(patch, target.m, {target.max_h, target.max_e}, macenko, od);
    } catch (const NotEnoughTissue&) {
    } catch (const DegenerateStain&) {
    } catch (const EmptyTissue&) {
    }
    return patch; // mostly-background patches pass through unchanged
}

void normalize_items(std::vector<LabeledPatch>& items, const StainNormTarget& target,
                     const TrainConfig& cfg) {
    const int64_t n = static_cast<int64_t>(items.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
        const RgbPatch normalized =
            apply_stain_norm(to_patch(items[i].patch), target, cfg.macenko, cfg.od);
        items[i].patch = to_image8(normalized);
    }
}

// Oversample minority classes with geometric + mode-appropriate colour augmentation.
void balance_classes(std::vector<LabeledPatch>& items, int n_classes, const TrainConfig& cfg) {
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(n_classes));
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].y < 0 || items[i].y >= n_classes)
            throw InvalidConfig("train: class label out of range");
        by_class[static_cast<size_t>(items[i].y)].push_back(i);
    }
    size_t max_count = 0;
    for (const auto& v : by_class) max_count = std::max(max_count, v.size());
    Rng rng = Rng(cfg.seed).derive("class_balance");
    for (int c = 0; c < n_classes; ++c) {
        const auto& src = by_class[static_cast<size_t>(c)];
        if (src.empty()) continue;
        for (size_t i = src.size(); i < max_count; ++i) {
            const LabeledPatch& origin = items[src[i % src.size()]];
            RgbPatch p = to_patch(origin.patch);
            p = geometric_augment(p, rng);
            if (cfg.mode == MethodMode::hsv_aug) {
                p = hsv_augment(p, cfg.hsv, rng);
            } else if (cfg.mode == MethodMode::stain_aug) {
                try {
                    p = stain_augment(p, StainMatrix::from_flat(origin.m), cfg.stain, rng,
                                      cfg.od);
                } catch (const DegenerateStain&) {
                }
            }
            LabeledPatch copy;
            copy.patch = to_image8(p);
            copy.y = origin.y;
            copy.m = origin.m;
            copy.center_id = origin.center_id;
            items.push_back(std::move(copy));
        }
    }
}

RgbPatch batch_transform(const LabeledPatch& item, const TrainConfig& cfg, Rng& aug_rng) {
    RgbPatch p = to_patch(item.patch);
    if (cfg.mode == MethodMode::hsv_aug) return hsv_augment(p, cfg.hsv, aug_rng);
    if (cfg.mode == MethodMode::stain_aug) {
        try {
            return stain_augment(p, StainMatrix::from_flat(item.m), cfg.stain, aug_rng, cfg.od);
        } catch (const DegenerateStain&) {
            return p;
        }
    }
    return p;
}

struct EvalStats {
    double loss_cl = 0.0;
    double kappa = std::numeric_limits<double>::quiet_NaN();
};

EvalStats evaluate_classifier(HeanModel& model, const std::vector<LabeledPatch>& items,
                              int n_classes, int batch_size) {
    EvalStats stats;
    double loss_sum = 0.0;
    std::vector<int> preds, truths;
    preds.reserve(items.size());
    truths.reserve(items.size());
    for (size_t start = 0; start < items.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(items.size(), start + static_cast<size_t>(batch_size));
        std::vector<RgbPatch> batch;
        std::vector<int> labels;
        for (size_t i = start; i < end; ++i) {
            batch.push_back(to_patch(items[i].patch));
            labels.push_back(items[i].y);
        }
        const Tensor x = patches_to_tensor(batch);
        const Tensor feat = model.forward_features(x);
        const Tensor logits = model.forward_classifier(feat);
        const auto ce = nn::cross_entropy_loss(logits, labels);
        loss_sum += ce.value * static_cast<double>(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            int best = 0;
            for (int j = 1; j < n_classes; ++j)
                if (logits.at2(static_cast<int>(i), j) > logits.at2(static_cast<int>(i), best))
                    best = j;
            preds.push_back(best);
            truths.push_back(labels[i]);
        }
    }
    stats.loss_cl = loss_sum / static_cast<double>(items.size());
    try {
        stats.kappa = quadratic_kappa(preds, truths, n_classes);
    } catch (const UndefinedKappa&) {
    }
    return stats;
}

} // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.items.empty()) throw EmptyDataset("train: empty training set");
    if (val_set.items.empty()) throw EmptyDataset("train: empty validation set");
    if (train_set.n_classes != cfg.arch.n_classes)
        throw InvalidConfig("train: dataset n_classes does not match arch.n_classes");
    const int n_classes = cfg.arch.n_classes;

    std::vector<LabeledPatch> train_items = train_set.items;
    std::vector<LabeledPatch> val_items = val_set.items;

    std::optional<StainNormTarget> stain_target;
    if (cfg.mode == MethodMode::stain_norm) {
        stain_target = pick_stain_target(train_items, cfg);
        normalize_items(train_items, *stain_target, cfg);
        normalize_items(val_items, *stain_target, cfg);
    }
    balance_classes(train_items, n_classes, cfg);

    auto aux_kind = HeanModel::AuxKind::regressor;
    int aux_dim = cfg.arch.regress_dim;
    std::map<int, int> domain_index;
    if (cfg.mode == MethodMode::domain_adv) {
        for (const auto& item : train_items) domain_index.emplace(item.center_id, 0);
        if (domain_index.size() < 2)
            throw SingleDomain("domain_adv needs >= 2 distinct center ids");
        int next = 0;
        for (auto& [id, idx] : domain_index) idx = next++;
        aux_kind = HeanModel::AuxKind::domain;
        aux_dim = next;
    }

    HeanModel model = build_model(cfg.arch, cfg.seed, cfg.lambda, aux_kind, aux_dim);
    nn::ParamGroups groups = model.groups();
    nn::OptimState opt;
    opt.learning_rate = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;
    opt.algorithm = cfg.algorithm;
    const double update_lambda = is_adversarial(cfg.mode) ? cfg.lambda : 0.0;

    TrainHistory history;
    std::vector<Tensor> best_state = model.state();
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_since_best = 0;

    const Rng shuffle_root = Rng(cfg.seed).derive("shuffle");
    const Rng aug_root = Rng(cfg.seed).derive("batch_augment");

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = shuffle_root.derive(static_cast<uint64_t>(epoch));
        Rng aug_rng = aug_root.derive(static_cast<uint64_t>(epoch));
        std::vector<size_t> order(train_items.size());
        std::iota(order.begin(), order.end(), size_t{0});
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double sum_cl = 0.0, sum_r = 0.0;
        int64_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<RgbPatch> batch;
            std::vector<int> labels;
            std::vector<int> domains;
            Tensor m_targets({static_cast<int>(end - start), cfg.arch.regress_dim});
            for (size_t bi = start; bi < end; ++bi) {
                const LabeledPatch& item = train_items[order[bi]];
                batch.push_back(batch_transform(item, cfg, aug_rng));
                labels.push_back(item.y);
                if (cfg.mode == MethodMode::domain_adv)
                    domains.push_back(domain_index.at(item.center_id));
                if (cfg.mode == MethodMode::he_adv)
                    for (int j = 0; j < 6; ++j)
                        m_targets.at2(static_cast<int>(bi - start), j) =
                            item.m[static_cast<size_t>(j)];
            }
            const Tensor x = patches_to_tensor(batch);
            const Tensor feat = model.forward_features(x);
            const Tensor logits = model.forward_classifier(feat);
            const auto ce = nn::cross_entropy_loss(logits, labels);

            double loss_r = 0.0;
            std::optional<nn::LossResult> aux;
            if (cfg.mode == MethodMode::he_adv) {
                const Tensor aux_out = model.forward_aux(feat);
                aux = nn::squared_l2_loss(aux_out, m_targets);
                loss_r = aux->value;
            } else if (cfg.mode == MethodMode::domain_adv) {
                const Tensor aux_out = model.forward_aux(feat);
                aux = nn::cross_entropy_loss(aux_out, domains);
                loss_r = aux->value;
            }

            model.zero_grads();
            model.backward(&ce.grad, aux ? &aux->grad : nullptr);
            try {
                nn::apply_update(groups, opt, update_lambda);
            } catch (const NonFiniteGradient& e) {
                throw NonFiniteGradient(std::string(e.what()) + " (epoch " +
                                        std::to_string(epoch) + ")");
            }
            const auto bsize = static_cast<double>(end - start);
            sum_cl += ce.value * bsize;
            sum_r += loss_r * bsize;
            seen += static_cast<int64_t>(end - start);
        }

        EpochStats row;
        row.epoch = epoch;
        row.loss_cl = sum_cl / static_cast<double>(seen);
        row.loss_r = sum_r / static_cast<double>(seen);
        row.loss_total = row.loss_cl + cfg.lambda * row.loss_r;

        const EvalStats val = evaluate_classifier(model, val_items, n_classes, cfg.batch_size);
        row.val_loss_cl = cfg.val_loss_hook ? cfg.val_loss_hook(epoch, val.loss_cl) : val.loss_cl;
        row.val_kappa = val.kappa;
        history.push_back(row);

        if (row.val_loss_cl < best_val) {
            best_val = row.val_loss_cl;
            best_state = model.state();
            best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.early_stop_patience) break;
        }
    }

    model.set_state(best_state);
    return TrainResult{std::move(model), std::move(history), stain_target, best_epoch};
}

std::vector<double> predict_probabilities(HeanModel& model, const RgbPatch& patch) {
    const Tensor x = patches_to_tensor({patch});
    const Tensor feat = model.forward_features(x);
    const Tensor probs = nn::softmax(model.forward_classifier(feat));
    return {probs.data.begin(), probs.data.end()};
}

namespace {

RgbPatch eval_transform(const LabeledPatch& item, const std::optional<StainNormTarget>& target) {
    RgbPatch p = to_patch(item.patch);
    if (target) p = apply_stain_norm(p, *target, MacenkoParams{}, OdConfig{});
    return p;
}

} // namespace

std::vector<int> predict_dataset(HeanModel& model, const Dataset& data,
                                 const std::optional<StainNormTarget>& target, int batch_size) {
    std::vector<int> preds;
    preds.reserve(data.items.size());
    const int k = model.arch().n_classes;
    for (size_t start = 0; start < data.items.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(data.items.size(), start + static_cast<size_t>(batch_size));
        std::vector<RgbPatch> batch;
        for (size_t i = start; i < end; ++i) batch.push_back(eval_transform(data.items[i], target));
        const Tensor logits = model.forward_classifier(model.forward_features(patches_to_tensor(batch)));
        for (size_t i = 0; i < end - start; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.at2(static_cast<int>(i), j) > logits.at2(static_cast<int>(i), best))
                    best = j;
            preds.push_back(best);
        }
    }
    return preds;
}

EvalOutputs evaluate_patches(HeanModel& model, const Dataset& data,
                             const std::optional<StainNormTarget>& target, int batch_size) {
    EvalOutputs out;
    out.preds.reserve(data.items.size());
    out.features.reserve(data.items.size());
    const int k = model.arch().n_classes;
    for (size_t start = 0; start < data.items.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(data.items.size(), start + static_cast<size_t>(batch_size));
        std::vector<RgbPatch> batch;
        for (size_t i = start; i < end; ++i) batch.push_back(eval_transform(data.items[i], target));
        const Tensor feat = model.forward_features(patches_to_tensor(batch));
        const Tensor logits = model.forward_classifier(feat);
        const int f = feat.dim(1);
        for (size_t i = 0; i < end - start; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.at2(static_cast<int>(i), j) > logits.at2(static_cast<int>(i), best))
                    best = j;
            out.preds.push_back(best);
            std::vector<double> row(static_cast<size_t>(f));
            for (int j = 0; j < f; ++j) row[static_cast<size_t>(j)] = feat.at2(static_cast<int>(i), j);
            out.features.push_back(std::move(row));
        }
    }
    return out;
}

std::vector<std::vector<double>> extract_features(HeanModel& model, const Dataset& data,
                                                  const std::optional<StainNormTarget>& target,
                                                  int batch_size) {
    std::vector<std::vector<double>> out;
    out.reserve(data.items.size());
    for (size_t start = 0; start < data.items.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(data.items.size(), start + static_cast<size_t>(batch_size));
        std::vector<RgbPatch> batch;
        for (size_t i = start; i < end; ++i) batch.push_back(eval_transform(data.items[i], target));
        const Tensor feat = model.forward_features(patches_to_tensor(batch));
        const int f = feat.dim(1);
        for (size_t i = 0; i < end - start; ++i) {
            std::vector<double> row(static_cast<size_t>(f));
            for (int j = 0; j < f; ++j) row[static_cast<size_t>(j)] = feat.at2(static_cast<int>(i), j);
            out.push_back(std::move(row));
        }
    }
    return out;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'C', 'K', '0', '0', '0', '1'};

nlohmann::json arch_to_json(const ArchSpec& arch) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : arch.blocks)
        blocks.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride}});
    return {{"blocks", blocks},
            {"hidden", arch.hidden},
            {"n_classes", arch.n_classes},
            {"regress_dim", arch.regress_dim}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
    ArchSpec arch;
    arch.blocks.clear();
    for (const auto& b : j.at("blocks"))
        arch.blocks.push_back({b.at("channels").get<int>(), b.at("kernel").get<int>(),
                               b.at("stride").get<int>()});
    arch.hidden = j.at("hidden").get<int>();
    arch.n_classes = j.at("n_classes").get<int>();
    arch.regress_dim = j.at("regress_dim").get<int>();
    return arch;
}

} // namespace

void save_checkpoint(const std::string& path, const HeanModel& model,
                     const CheckpointMeta& meta) {
    nlohmann::json header;
    header["arch"] = arch_to_json(model.arch());
    header["aux_kind"] =
        model.aux_kind() == HeanModel::AuxKind::regressor ? "regressor" : "domain";
    header["aux_dim"] = model.aux_dim();
    header["lambda"] = model.lambda();
    header["seed"] = model.init_seed();
    header["mode"] = to_string(meta.mode);
    header["run_seed"] = meta.seed;
    if (meta.stain_target) {
        const auto flat = meta.stain_target->m.flat();
        header["stain_target"] = {{"m", std::vector<double>(flat.begin(), flat.end())},
                                  {"max_h", meta.stain_target->max_h},
                                  {"max_e", meta.stain_target->max_e}};
    }
    nlohmann::json tensors = nlohmann::json::array();
    auto& mutable_model = const_cast<HeanModel&>(model);
    for (nn::Param* p : mutable_model.params())
        tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
    header["tensors"] = tensors;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (nn::Param* p : mutable_model.params())
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (!out) throw IoError("failed writing " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError(path + ": not a stainforge checkpoint");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(path + ": truncated header");
    const nlohmann::json header = nlohmann::json::parse(header_str);

    const ArchSpec arch = arch_from_json(header.at("arch"));
    const auto aux_kind = header.at("aux_kind").get<std::string>() == "regressor"
                              ? HeanModel::AuxKind::regressor
                              : HeanModel::AuxKind::domain;
    HeanModel model(arch, aux_kind, header.at("aux_dim").get<int>(),
                    header.at("lambda").get<double>(), header.at("seed").get<uint64_t>());

    CheckpointMeta meta;
    meta.mode = method_mode_from_string(header.at("mode").get<std::string>());
    meta.seed = header.at("run_seed").get<uint64_t>();
    if (header.contains("stain_target")) {
        const auto& st = header.at("stain_target");
        StainNormTarget target;
        const auto m = st.at("m").get<std::vector<double>>();
        if (m.size() != 6) throw IoError(path + ": bad stain target");
        std::array<double, 6> flat;
        std::copy(m.begin(), m.end(), flat.begin());
        target.m = StainMatrix::from_flat(flat);
        target.max_h = st.at("max_h").get<double>();
        target.max_e = st.at("max_e").get<double>();
        meta.stain_target = target;
    }

    const auto& tensors = header.at("tensors");
    auto ps = model.params();
    if (tensors.size() != ps.size()) throw IoError(path + ": tensor count mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != ps[i]->name)
            throw IoError(path + ": tensor order mismatch");
        if (tensors[i].at("shape").get<std::vector<int>>() != ps[i]->value.shape)
            throw IoError(path + ": tensor shape mismatch for " + ps[i]->name);
        in.read(reinterpret_cast<char*>(ps[i]->value.data.data()),
                static_cast<std::streamsize>(ps[i]->value.data.size() * sizeof(double)));
    }
    if (!in) throw IoError(path + ": truncated tensor data");
    return LoadedCheckpoint{std::move(model), std::move(meta)};
}

} // namespace stainforge

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stainforge/augment.hpp"
#include "stainforge/dataset.hpp"
#include "stainforge/layers.hpp"
#include "stainforge/loss.hpp"
#include "stainforge/optim.hpp"
#include "stainforge/stain.hpp"

namespace stainforge {

// The six training regimes compared against each other.
enum class MethodMode { none, stain_norm, hsv_aug, stain_aug, domain_adv, he_adv };

std::string to_string(MethodMode mode);
MethodMode method_mode_from_string(const std::string& s);
bool is_adversarial(MethodMode mode); // he_adv or domain_adv

struct ConvBlockSpec {
    int channels = 0;
    int kernel = 3;
    int stride = 2;
};

struct ArchSpec {
    std::vector<ConvBlockSpec> blocks{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
    int hidden = 128;
    int n_classes = 3;
    int regress_dim = 6;

    int feature_dim() const { return blocks.empty() ? 0 : blocks.back().channels; }
    void validate() const;
};

// Multi-task network: shared conv trunk -> feature vector; classifier head; and an
// adversarial head behind a gradient-reversal layer (a 6-output sigmoid regressor
// for the stain matrix, or a softmax domain discriminator for the baseline).
class HeanModel {
public:
    enum class AuxKind { regressor, domain };

    HeanModel(const ArchSpec& arch, AuxKind aux_kind, int aux_dim, double lambda, uint64_t seed);

    nn::Tensor forward_features(const nn::Tensor& x); // x: [N, 3, H, W] -> [N, F]
    nn::Tensor forward_classifier(const nn::Tensor& feat); // -> [N, K] logits
    nn::Tensor forward_aux(const nn::Tensor& feat); // through the GRL

    void zero_grads();
    // One combined backward pass; pass nullptr to skip a head. The GRL folds
    // -lambda into the trunk gradient of the aux path.
    void backward(const nn::Tensor* dlogits, const nn::Tensor* daux);

    nn::ParamGroups groups();
    std::vector<nn::Param*> params();
    std::vector<nn::Tensor> state() const;
    void set_state(const std::vector<nn::Tensor>& state);

    const ArchSpec& arch() const { return arch_; }
    AuxKind aux_kind() const { return aux_kind_; }
    int aux_dim() const { return aux_dim_; }
    double lambda() const { return grl_.lambda(); }
    void set_lambda(double l) { grl_.set_lambda(l); }
    uint64_t init_seed() const { return init_seed_; }

private:
    ArchSpec arch_;
    AuxKind aux_kind_;
    int aux_dim_;
    uint64_t init_seed_;
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::Relu> conv_relus_;
    nn::GlobalAvgPool gap_;
    nn::Dense cl_hidden_;
    nn::Relu cl_relu_;
    nn::Dense cl_out_;
    nn::GradReverse grl_;
    nn::Dense aux_hidden_;
    nn::Relu aux_relu_;
    nn::Dense aux_out_;
    nn::Sigmoid aux_sigmoid_;
};

// Deterministic He initialization; each tensor gets a substream derived from the
// seed and its name, so resizing one head never shifts the others' draws.
HeanModel build_model(const ArchSpec& arch, uint64_t seed, double lambda = 1.0,
                      HeanModel::AuxKind aux_kind = HeanModel::AuxKind::regressor,
                      int aux_dim = 6);

nn::Tensor patches_to_tensor(const std::vector<RgbPatch>& batch);

struct TrainConfig {
    MethodMode mode = MethodMode::none;
    double lambda = 1.0;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    nn::OptAlgo algorithm = nn::OptAlgo::adam;
    int max_epochs = 15;
    int early_stop_patience = 5;
    int batch_size = 32;
    uint64_t seed = 0;
    ArchSpec arch;
    HsvAugConfig hsv = HsvAugConfig::colon();
    StainAugConfig stain;
    MacenkoParams macenko;
    OdConfig od;
    bool verbose = false;
    // Test hook: overrides the computed validation loss for early-stop testing.
    std::function<double(int epoch, double computed)> val_loss_hook;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double loss_cl = 0.0;
    double loss_r = 0.0;
    double loss_total = 0.0; // Loss_Cl + lambda * Loss_r
    double val_loss_cl = 0.0;
    double val_kappa = 0.0;
};
using TrainHistory = std::vector<EpochStats>;

void write_history_csv(const std::string& path, const TrainHistory& history);

// Normalization target of a stain_norm run; stored in the checkpoint so inference
// applies the same transform.
struct StainNormTarget {
    StainMatrix m;
    double max_h = 0.0;
    double max_e = 0.0;
};

struct TrainResult {
    HeanModel model; // parameters of the best-validation epoch
    TrainHistory history;
    std::optional<StainNormTarget> stain_target;
    int best_epoch = 0;
};

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

// Inference. For stain_norm models the stored target is applied to every patch
// (patches whose stain cannot be estimated fall back to raw pixels).
std::vector<double> predict_probabilities(HeanModel& model, const RgbPatch& patch);
std::vector<int> predict_dataset(HeanModel& model, const Dataset& data,
                                 const std::optional<StainNormTarget>& target,
                                 int batch_size = 64);
std::vector<std::vector<double>> extract_features(HeanModel& model, const Dataset& data,
                                                  const std::optional<StainNormTarget>& target,
                                                  int batch_size = 64);

// One pass computing both predictions and trunk features.
struct EvalOutputs {
    std::vector<int> preds;
    std::vector<std::vector<double>> features;
};
EvalOutputs evaluate_patches(HeanModel& model, const Dataset& data,
                             const std::optional<StainNormTarget>& target, int batch_size = 64);

struct CheckpointMeta {
    MethodMode mode = MethodMode::none;
    uint64_t seed = 0;
    std::optional<StainNormTarget> stain_target;
};

// Single file: magic, JSON header (architecture, tensor shapes, lambda, seed), then
// one raw little-endian double array per tensor.
void save_checkpoint(const std::string& path, const HeanModel& model, const CheckpointMeta& meta);
struct LoadedCheckpoint {
    HeanModel model;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace stainforge

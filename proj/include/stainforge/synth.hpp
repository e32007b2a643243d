#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stainforge/dataset.hpp"
#include "stainforge/image.hpp"
#include "stainforge/rng.hpp"
#include "stainforge/stain.hpp"

namespace stainforge {

// A medical center's staining character: its stain matrix, per-patch angular jitter
// of the rows, concentration intensity range, and scanner background level.
struct CenterSpec {
    int center_id = 0;
    StainMatrix stain = canonical_he_matrix();
    double jitter_deg = 0.0;
    double conc_min = 0.8;
    double conc_max = 1.2;
    double background = 1.0;

    void validate() const;
};

// Rendered morphology knobs. Radii are fractions of the patch size; nucleus density
// scales the nucleus count per patch area.
struct ClassSpec {
    int class_id = 0;
    int gland_count = 4;
    double gland_radius = 0.15;
    double boundary_thickness = 0.3; // fraction of the gland radius
    double nucleus_density = 1.0;

    void validate() const;
};

// Grid-splitting arithmetic: base_size : base_magnification = p_s : source_magnification,
// patches then resized to output_size. The span must come out an exact integer.
struct GridSpec {
    int base_size = 224;
    double base_magnification = 10.0;
    double source_magnification = 10.0;
    int output_size = 224;

    static GridSpec colon(double source_magnification);    // 224 : 10
    static GridSpec prostate(double source_magnification); // 750 : 40
    int patch_span() const;                                // p_s, throws if not integral
};

LabeledPatch render_patch(const ClassSpec& cls, const CenterSpec& center, int patch_size,
                          Rng rng, double noise_sigma = 0.0);

// Non-overlapping p_s x p_s tiles from the top-left, remainder dropped, each resized
// to output_size via bilinear interpolation.
std::vector<RgbPatch> grid_patches(const RgbPatch& image, const GridSpec& grid);

struct TissueMask {
    std::vector<uint8_t> mask; // 1 = tissue (max-channel OD above threshold)
    double coverage = 0.0;
};

TissueMask tissue_mask(const RgbPatch& image, double od_threshold = 0.1,
                       const OdConfig& od_cfg = {});

struct DatasetSpec {
    uint64_t seed = 0;
    int patch_size = 64;
    int patches_per_class_per_center = 50;
    double noise_sigma = 0.015;
    double train_fraction = 0.6;
    double val_fraction = 0.2; // remainder of non-held-out centers is the internal test
    std::vector<int> held_out_centers;
    std::vector<CenterSpec> centers;
    std::vector<ClassSpec> classes;

    void validate() const;
};

// The canonical 4-center, 3-class configuration: two training centers, two held-out
// centers with strongly shifted stains.
DatasetSpec default_fourcenter_spec(uint64_t seed = 20260101);

SplitDataset build_dataset(const DatasetSpec& spec);

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

} // namespace stainforge

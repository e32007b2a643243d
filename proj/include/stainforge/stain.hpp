#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "stainforge/image.hpp"

namespace stainforge {

// 2x3 matrix of the RGB optical-density components of the two stains.
// Row 0 is hematoxylin, row 1 is eosin; rows are unit-norm with entries in [0,1].
struct StainMatrix {
    std::array<std::array<double, 3>, 2> rows{};

    const std::array<double, 3>& h() const { return rows[0]; }
    const std::array<double, 3>& e() const { return rows[1]; }
    std::array<double, 6> flat() const {
        return {rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2]};
    }
    static StainMatrix from_flat(const std::array<double, 6>& v) {
        return StainMatrix{{{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}}}};
    }
    void validate() const; // entries in [0,1], unit rows, row angle > 1 degree
};

double vec3_norm(const std::array<double, 3>& v);
double vec3_cosine(const std::array<double, 3>& a, const std::array<double, 3>& b);
double row_angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b);

// Unit-normalized row with negatives clamped to zero first.
std::array<double, 3> normalize_stain_row(std::array<double, 3> v);

// Conventional H&E vectors; used as the default normalization target and in fixtures.
StainMatrix canonical_he_matrix();

// Per-pixel stain concentrations (c_H, c_E), nonnegative.
struct ConcentrationMap {
    int width = 0;
    int height = 0;
    std::vector<double> data; // 2 doubles per pixel
    double mean_residual = 0.0;

    ConcentrationMap() = default;
    ConcentrationMap(int w, int h)
        : width(w), height(h), data(static_cast<size_t>(w) * h * 2, 0.0) {}
    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
    double* px(int x, int y) { return data.data() + (static_cast<int64_t>(y) * width + x) * 2; }
    const double* px(int x, int y) const {
        return data.data() + (static_cast<int64_t>(y) * width + x) * 2;
    }
};

struct MacenkoParams {
    double od_threshold = 0.15;        // beta: tissue iff max-channel OD above this
    double angle_percentile = 1.0;     // alpha: extreme angles at [alpha, 100-alpha]
    int min_tissue_pixels = 200;
    double robust_conc_percentile = 99.0;

    void validate(double od_cap) const;
};

// Percentile with linear interpolation between order statistics; input must be sorted.
double percentile_sorted(const std::vector<double>& sorted, double pct);

// Macenko estimation: eigen-plane of the tissue OD covariance, stain directions at
// the extreme percentile angles within that plane.
StainMatrix estimate_he_matrix(const RgbPatch& patch, const MacenkoParams& params = {},
                               const OdConfig& od_cfg = {});

// Per-pixel least squares of OD ~ C^T * M, negatives clamped to zero.
ConcentrationMap compute_concentrations(const OdImage& od, const StainMatrix& m);

// Value at the given percentile of the positive concentrations, per stain.
std::pair<double, double> robust_max_concentration(const ConcentrationMap& cmap, double percentile);

// Rescale source concentrations to the target's robust maxima and recompose with the
// target stain matrix.
RgbPatch normalize_to_target(const RgbPatch& patch, const StainMatrix& target_m,
                             std::pair<double, double> target_maxc,
                             const MacenkoParams& params = {}, const OdConfig& od_cfg = {});

// Compose an RGB patch from concentrations and a stain matrix (OD = C^T * M).
RgbPatch compose_from_concentrations(const ConcentrationMap& cmap, const StainMatrix& m,
                                     const OdConfig& od_cfg = {});

// 2x3 CSV, row-major, 9 significant digits.
void write_stain_csv(const std::string& path, const StainMatrix& m);
StainMatrix read_stain_csv(const std::string& path);

} // namespace stainforge

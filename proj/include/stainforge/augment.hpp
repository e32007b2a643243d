#pragma once

#include <array>

#include "stainforge/image.hpp"
#include "stainforge/rng.hpp"
#include "stainforge/stain.hpp"

namespace stainforge {

struct StainAugConfig {
    double sigma1 = 0.2; // per-row multiplicative scale range
    double sigma2 = 0.2; // per-row additive offset range

    void validate() const;
};

// Shift ranges: hue in degrees, saturation/brightness in percent points of full scale.
struct HsvAugConfig {
    double hue_min = 0.0, hue_max = 0.0;
    double sat_min = 0.0, sat_max = 0.0;
    double bright_min = 0.0, bright_max = 0.0;

    static HsvAugConfig colon();    // hue [-15, 8], sat [-20, 10], bright [-8, 8]
    static HsvAugConfig prostate(); // hue [-9, 9], sat [-25, 25], bright [-10, 10]
    void validate() const;
};

// Per stain row i: alpha_i ~ U(1-sigma1, 1+sigma1), beta_i ~ U(-sigma2, +sigma2);
// recompose the patch with the perturbed matrix alpha (.) M + beta, entries clamped
// to [0,1]. Draw order: alpha_H, alpha_E, beta_H, beta_E.
RgbPatch stain_augment(const RgbPatch& patch, const StainMatrix& m, const StainAugConfig& cfg,
                       Rng& rng, const OdConfig& od_cfg = {});

// Deterministic core with injected perturbations; the seeded overload delegates here.
RgbPatch stain_augment_with(const RgbPatch& patch, const StainMatrix& m,
                            const std::array<double, 2>& alpha, const std::array<double, 2>& beta,
                            const OdConfig& od_cfg = {});

RgbPatch hsv_augment(const RgbPatch& patch, const HsvAugConfig& cfg, Rng& rng);

// Shifts: hue in degrees (wraps mod 360), sat/bright as fractions added in [0,1] space.
RgbPatch hsv_augment_with(const RgbPatch& patch, double hue_deg, double sat_shift,
                          double bright_shift);

// Random choice among rotations by 0/90/180/270 degrees and none/horizontal/vertical flip.
RgbPatch geometric_augment(const RgbPatch& patch, Rng& rng);

RgbPatch rotate90(const RgbPatch& patch, int quarter_turns_cw); // square patches only
RgbPatch flip_horizontal(const RgbPatch& patch);
RgbPatch flip_vertical(const RgbPatch& patch);

// H in [0, 360), S and V in [0, 1].
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

} // namespace stainforge

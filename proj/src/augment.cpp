#include "stainforge/augment.hpp"

#include <algorithm>
#include <cmath>

#include "stainforge/errors.hpp"

namespace stainforge {

void StainAugConfig::validate() const {
    if (!(sigma1 >= 0.0 && sigma1 < 1.0) || !(sigma2 >= 0.0 && sigma2 < 1.0))
        throw InvalidConfig("StainAugConfig: sigmas must be in [0, 1)");
}

HsvAugConfig HsvAugConfig::colon() { return {-15.0, 8.0, -20.0, 10.0, -8.0, 8.0}; }
HsvAugConfig HsvAugConfig::prostate() { return {-9.0, 9.0, -25.0, 25.0, -10.0, 10.0}; }

void HsvAugConfig::validate() const {
    if (hue_min > hue_max || sat_min > sat_max || bright_min > bright_max)
        throw InvalidConfig("HsvAugConfig: min must not exceed max");
}

RgbPatch stain_augment_with(const RgbPatch& patch, const StainMatrix& m,
                            const std::array<double, 2>& alpha, const std::array<double, 2>& beta,
                            const OdConfig& od_cfg) {
    StainMatrix perturbed;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            perturbed.rows[r][c] = std::clamp(alpha[r] * m.rows[r][c] + beta[r], 0.0, 1.0);

    const OdImage od = rgb_to_od(patch, od_cfg);
    const ConcentrationMap cmap = compute_concentrations(od, m);
    return compose_from_concentrations(cmap, perturbed, od_cfg);
}

RgbPatch stain_augment(const RgbPatch& patch, const StainMatrix& m, const StainAugConfig& cfg,
                       Rng& rng, const OdConfig& od_cfg) {
    cfg.validate();
    std::array<double, 2> alpha{};
    std::array<double, 2> beta{};
    for (int r = 0; r < 2; ++r) alpha[r] = rng.uniform(1.0 - cfg.sigma1, 1.0 + cfg.sigma1);
    for (int r = 0; r < 2; ++r) beta[r] = rng.uniform(-cfg.sigma2, cfg.sigma2);
    return stain_augment_with(patch, m, alpha, beta, od_cfg);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    v = mx;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta == 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / delta + 2.0);
    else
        h = 60.0 * ((r - g) / delta + 4.0);
    if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0.0, g1 = 0.0, b1 = 0.0;
    if (hp < 1.0) {
        r1 = c; g1 = x;
    } else if (hp < 2.0) {
        r1 = x; g1 = c;
    } else if (hp < 3.0) {
        g1 = c; b1 = x;
    } else if (hp < 4.0) {
        g1 = x; b1 = c;
    } else if (hp < 5.0) {
        r1 = x; b1 = c;
    } else {
        r1 = c; b1 = x;
    }
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

RgbPatch hsv_augment_with(const RgbPatch& patch, double hue_deg, double sat_shift,
                          double bright_shift) {
    RgbPatch out(patch.width, patch.height);
    const int64_t npx = patch.pixels();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < npx; ++i) {
        const double* p = patch.data.data() + i * 3;
        double h, s, v;
        rgb_to_hsv(p[0], p[1], p[2], h, s, v);
        h = std::fmod(h + hue_deg, 360.0);
        if (h < 0.0) h += 360.0;
        s = std::clamp(s + sat_shift, 0.0, 1.0);
        v = std::clamp(v + bright_shift, 0.0, 1.0);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        double* q = out.data.data() + i * 3;
        q[0] = std::clamp(r, 0.0, 1.0);
        q[1] = std::clamp(g, 0.0, 1.0);
        q[2] = std::clamp(b, 0.0, 1.0);
    }
    return out;
}

RgbPatch hsv_augment(const RgbPatch& patch, const HsvAugConfig& cfg, Rng& rng) {
    cfg.validate();
    const double hue = rng.uniform(cfg.hue_min, cfg.hue_max);
    const double sat = rng.uniform(cfg.sat_min, cfg.sat_max) / 100.0;
    const double bright = rng.uniform(cfg.bright_min, cfg.bright_max) / 100.0;
    return hsv_augment_with(patch, hue, sat, bright);
}

RgbPatch rotate90(const RgbPatch& patch, int quarter_turns_cw) {
    if (patch.width != patch.height) throw InvalidConfig("rotate90: patch must be square");
    const int n = ((quarter_turns_cw % 4) + 4) % 4;
    if (n == 0) return patch;
    const int size = patch.width;
    RgbPatch out(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            int sx = x, sy = y;
            // Destination (x,y) pulled from the source location that maps onto it.
            if (n == 1) { // 90 cw: (x,y) <- (y, size-1-x)
                sx = y;
                sy = size - 1 - x;
            } else if (n == 2) {
                sx = size - 1 - x;
                sy = size - 1 - y;
            } else { // 270 cw
                sx = size - 1 - y;
                sy = x;
            }
            const double* s = patch.px(sx, sy);
            double* d = out.px(x, y);
            d[0] = s[0];
            d[1] = s[1];
            d[2] = s[2];
        }
    }
    return out;
}

RgbPatch flip_horizontal(const RgbPatch& patch) {
    RgbPatch out(patch.width, patch.height);
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) {
            const double* s = patch.px(patch.width - 1 - x, y);
            double* d = out.px(x, y);
            d[0] = s[0];
            d[1] = s[1];
            d[2] = s[2];
        }
    return out;
}

RgbPatch flip_vertical(const RgbPatch& patch) {
    RgbPatch out(patch.width, patch.height);
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) {
            const double* s = patch.px(x, patch.height - 1 - y);
            double* d = out.px(x, y);
            d[0] = s[0];
            d[1] = s[1];
            d[2] = s[2];
        }
    return out;
}

RgbPatch geometric_augment(const RgbPatch& patch, Rng& rng) {
    const int rot = static_cast<int>(rng.below(4));
    const int flip = static_cast<int>(rng.below(3)); // 0 none, 1 horizontal, 2 vertical
    RgbPatch out = rotate90(patch, rot);
    if (flip == 1) out = flip_horizontal(out);
    if (flip == 2) out = flip_vertical(out);
    return out;
}

} // namespace stainforge

#include "stainforge/image.hpp"

#include <algorithm>
#include <cmath>

#include "stainforge/errors.hpp"

namespace stainforge {

void RgbPatch::validate() const {
    if (width < 1 || height < 1) throw InvalidConfig("RgbPatch: dimensions must be >= 1");
    if (static_cast<int64_t>(data.size()) != pixels() * 3)
        throw ShapeMismatch("RgbPatch: data length does not match dimensions");
    for (double v : data) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidConfig("RgbPatch: channel value outside [0,1]");
    }
}

OdConfig OdConfig::with_epsilon(double i0, double eps) {
    OdConfig cfg;
    cfg.background_intensity = i0;
    cfg.epsilon = eps;
    cfg.od_cap = -std::log10(eps / i0);
    return cfg;
}

void OdConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < background_intensity))
        throw InvalidConfig("OdConfig: requires 0 < epsilon < background_intensity");
    if (!(od_cap > 0.0)) throw InvalidConfig("OdConfig: od_cap must be positive");
}

OdImage rgb_to_od(const RgbPatch& patch, const OdConfig& cfg) {
    cfg.validate();
    OdImage od(patch.width, patch.height);
    const int64_t n = patch.pixels() * 3;
    const double i0 = cfg.background_intensity;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const double intensity = std::max(patch.data[i], cfg.epsilon);
        double v = -std::log10(intensity / i0);
        if (v < 0.0) v = 0.0;
        if (v > cfg.od_cap) v = cfg.od_cap;
        od.data[i] = v;
    }
    return od;
}

RgbPatch od_to_rgb(const OdImage& od, const OdConfig& cfg) {
    cfg.validate();
    RgbPatch out(od.width, od.height);
    const int64_t n = od.pixels() * 3;
    const double i0 = cfg.background_intensity;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        double v = i0 * std::pow(10.0, -od.data[i]);
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Image8 to_image8(const RgbPatch& patch) {
    Image8 img(patch.width, patch.height);
    const int64_t n = patch.pixels() * 3;
    for (int64_t i = 0; i < n; ++i) {
        const double v = std::clamp(patch.data[i], 0.0, 1.0);
        img.data[i] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
    }
    return img;
}

RgbPatch to_patch(const Image8& img) {
    RgbPatch patch(img.width, img.height);
    const int64_t n = patch.pixels() * 3;
    for (int64_t i = 0; i < n; ++i) patch.data[i] = img.data[i] / 255.0;
    return patch;
}

RgbPatch resize_bilinear(const RgbPatch& src, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw InvalidConfig("resize_bilinear: output dims must be >= 1");
    RgbPatch dst(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double* p00 = src.px(x0, y0);
            const double* p10 = src.px(x1, y0);
            const double* p01 = src.px(x0, y1);
            const double* p11 = src.px(x1, y1);
            double* out = dst.px(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] * (1.0 - wx) + p10[c] * wx;
                const double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
                out[c] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

} // namespace stainforge

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stainforge {

// 8-bit RGB image, row-major, top-left origin. Storage/IO form of a patch.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data; // 3 bytes per pixel, RGB

    Image8() = default;
    Image8(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}
    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
};

// Working representation: per-channel doubles in [0, 1].
struct RgbPatch {
    int width = 0;
    int height = 0;
    std::vector<double> data; // 3 doubles per pixel, RGB

    RgbPatch() = default;
    RgbPatch(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}
    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
    double* px(int x, int y) { return data.data() + (static_cast<int64_t>(y) * width + x) * 3; }
    const double* px(int x, int y) const {
        return data.data() + (static_cast<int64_t>(y) * width + x) * 3;
    }
    void validate() const; // dims >= 1, channels in [0,1]
};

// Optical-density image, per-channel values in [0, od_cap].
struct OdImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    OdImage() = default;
    OdImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}
    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
    double* px(int x, int y) { return data.data() + (static_cast<int64_t>(y) * width + x) * 3; }
    const double* px(int x, int y) const {
        return data.data() + (static_cast<int64_t>(y) * width + x) * 3;
    }
};

struct OdConfig {
    double background_intensity = 1.0; // white reference I0 on the [0,1] scale
    double epsilon = 1e-6;             // floor for zero pixels, keeps the transform invertible
    double od_cap = 6.0;               // -log10(epsilon / I0)

    static OdConfig with_epsilon(double i0, double eps);
    void validate() const;
};

// OD = -log10(max(I, eps) / I0), capped at od_cap.
OdImage rgb_to_od(const RgbPatch& patch, const OdConfig& cfg = {});
// I = I0 * 10^(-od), clamped to [0, 1].
RgbPatch od_to_rgb(const OdImage& od, const OdConfig& cfg = {});

// 8-bit conversion uses round-half-up; u8 -> double is v / 255.
Image8 to_image8(const RgbPatch& patch);
RgbPatch to_patch(const Image8& img);

RgbPatch resize_bilinear(const RgbPatch& src, int out_w, int out_h);

// IO dispatches on extension: .png (libpng) or .ppm (plain-text P3 fallback).
Image8 read_image(const std::string& path);
void write_image(const std::string& path, const Image8& img);

} // namespace stainforge

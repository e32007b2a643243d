#include "stainforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "stainforge/errors.hpp"

namespace stainforge {

void CenterSpec::validate() const {
    stain.validate();
    if (jitter_deg < 0.0) throw InvalidConfig("CenterSpec: jitter must be >= 0");
    if (!(conc_min > 0.0 && conc_max >= conc_min))
        throw InvalidConfig("CenterSpec: bad concentration range");
    if (!(background > 0.0 && background <= 1.0))
        throw InvalidConfig("CenterSpec: background must be in (0, 1]");
}

void ClassSpec::validate() const {
    if (gland_count < 0) throw InvalidConfig("ClassSpec: gland_count must be >= 0");
    if (!(gland_radius > 0.0 && gland_radius < 0.5))
        throw InvalidConfig("ClassSpec: gland_radius must be in (0, 0.5)");
    if (!(boundary_thickness > 0.0 && boundary_thickness <= 1.0))
        throw InvalidConfig("ClassSpec: boundary_thickness must be in (0, 1]");
    if (nucleus_density < 0.0) throw InvalidConfig("ClassSpec: nucleus_density must be >= 0");
}

GridSpec GridSpec::colon(double source_magnification) {
    return {224, 10.0, source_magnification, 224};
}

GridSpec GridSpec::prostate(double source_magnification) {
    return {750, 40.0, source_magnification, 224};
}

int GridSpec::patch_span() const {
    if (base_size < 1 || base_magnification <= 0.0 || source_magnification <= 0.0)
        throw InvalidConfig("GridSpec: bad magnification parameters");
    const double span = static_cast<double>(base_size) * source_magnification / base_magnification;
    const double rounded = std::round(span);
    if (std::abs(span - rounded) > 1e-9 || rounded < 1.0)
        throw InvalidConfig("GridSpec: patch span is not an exact positive integer");
    return static_cast<int>(rounded);
}

namespace {

// Low-frequency value noise: a coarse random grid, bilinearly interpolated.
struct ValueNoise {
    int grid = 0;
    std::vector<double> values;

    ValueNoise(int grid_size, Rng& rng) : grid(grid_size), values(static_cast<size_t>(grid_size) * grid_size) {
        for (auto& v : values) v = rng.uniform01();
    }

    double at(double u, double v) const { // u, v in [0, 1]
        const double gx = u * (grid - 1);
        const double gy = v * (grid - 1);
        const int x0 = std::min(static_cast<int>(gx), grid - 2);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const double fx = gx - x0, fy = gy - y0;
        const double a = values[static_cast<size_t>(y0) * grid + x0];
        const double b = values[static_cast<size_t>(y0) * grid + x0 + 1];
        const double c = values[static_cast<size_t>(y0 + 1) * grid + x0];
        const double d = values[static_cast<size_t>(y0 + 1) * grid + x0 + 1];
        return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
    }
};

std::array<double, 3> jitter_row(const std::array<double, 3>& row, double jitter_deg, Rng& rng) {
    // Rotate the row toward a random perpendicular direction by a uniform angle.
    const double angle = rng.uniform(-jitter_deg, jitter_deg) * std::numbers::pi / 180.0;
    std::array<double, 3> noise{rng.normal(), rng.normal(), rng.normal()};
    const double dot = noise[0] * row[0] + noise[1] * row[1] + noise[2] * row[2];
    for (int i = 0; i < 3; ++i) noise[i] -= dot * row[i];
    const double n = vec3_norm(noise);
    if (n < 1e-12) return row;
    std::array<double, 3> out;
    for (int i = 0; i < 3; ++i)
        out[i] = std::cos(angle) * row[i] + std::sin(angle) * noise[i] / n;
    return normalize_stain_row(out);
}

StainMatrix jitter_matrix(const StainMatrix& m, double jitter_deg, Rng& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        StainMatrix out;
        out.rows[0] = jitter_row(m.rows[0], jitter_deg, rng);
        out.rows[1] = jitter_row(m.rows[1], jitter_deg, rng);
        if (row_angle_deg(out.rows[0], out.rows[1]) > 1.0) return out;
    }
    return m;
}

struct Gland {
    double cx, cy;   // center, pixels
    double rx, ry;   // radii, pixels
    double cos_t, sin_t;
};

// Elliptical distance of a pixel from a gland center, 1.0 on the boundary.
double gland_distance(const Gland& g, double x, double y) {
    const double dx = x - g.cx;
    const double dy = y - g.cy;
    const double u = (dx * g.cos_t + dy * g.sin_t) / g.rx;
    const double v = (-dx * g.sin_t + dy * g.cos_t) / g.ry;
    return std::sqrt(u * u + v * v);
}

} // namespace

LabeledPatch render_patch(const ClassSpec& cls, const CenterSpec& center, int patch_size,
                          Rng rng, double noise_sigma) {
    cls.validate();
    center.validate();
    if (patch_size < 8) throw InvalidConfig("render_patch: patch_size must be >= 8");

    for (int attempt = 0;; ++attempt) {
        Rng r = rng.derive(static_cast<uint64_t>(attempt));
        const StainMatrix m = jitter_matrix(center.stain, center.jitter_deg, r);
        const double intensity = r.uniform(center.conc_min, center.conc_max);
        const ValueNoise stroma_tex(6, r);
        const ValueNoise h_tex(5, r);

        const int s = patch_size;
        std::vector<double> conc_h(static_cast<size_t>(s) * s, 0.0);
        std::vector<double> conc_e(static_cast<size_t>(s) * s, 0.0);

        // Stroma base.
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const double u = static_cast<double>(x) / (s - 1);
                const double v = static_cast<double>(y) / (s - 1);
                conc_e[static_cast<size_t>(y) * s + x] = 0.30 + 0.25 * stroma_tex.at(u, v);
                conc_h[static_cast<size_t>(y) * s + x] = 0.05 + 0.06 * h_tex.at(u, v);
            }

        // Glands: bright lumen inside, an eosin-rich boundary ring with hematoxylin
        // nuclei sitting on it.
        std::vector<Gland> glands;
        for (int g = 0; g < cls.gland_count; ++g) {
            Gland gl;
            gl.cx = r.uniform(0.05, 0.95) * s;
            gl.cy = r.uniform(0.05, 0.95) * s;
            const double base_r = cls.gland_radius * s;
            gl.rx = base_r * r.uniform(0.75, 1.25);
            gl.ry = base_r * r.uniform(0.75, 1.25);
            const double theta = r.uniform(0.0, std::numbers::pi);
            gl.cos_t = std::cos(theta);
            gl.sin_t = std::sin(theta);
            glands.push_back(gl);
        }
        const double ring_in = 1.0 - cls.boundary_thickness;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const size_t i = static_cast<size_t>(y) * s + x;
                for (const Gland& gl : glands) {
                    const double d = gland_distance(gl, x + 0.5, y + 0.5);
                    if (d < ring_in) {
                        // Lumen: nearly clear.
                        conc_e[i] *= 0.12;
                        conc_h[i] *= 0.20;
                    } else if (d <= 1.0) {
                        const double t = (d - ring_in) / std::max(1.0 - ring_in, 1e-9);
                        const double profile = std::sin(t * std::numbers::pi);
                        conc_e[i] += 0.55 * profile;
                        conc_h[i] += 0.18 * profile;
                    }
                }
            }

        // Nuclei on gland boundaries.
        for (const Gland& gl : glands) {
            const double circumference =
                std::numbers::pi * (gl.rx + gl.ry); // rough ellipse perimeter / 2
            const int n_boundary = std::max(3, static_cast<int>(circumference / 7.0));
            for (int k = 0; k < n_boundary; ++k) {
                const double phi = r.uniform(0.0, 2.0 * std::numbers::pi);
                const double px = gl.cx + (gl.rx * std::cos(phi)) * gl.cos_t -
                                  (gl.ry * std::sin(phi)) * gl.sin_t;
                const double py = gl.cy + (gl.rx * std::cos(phi)) * gl.sin_t +
                                  (gl.ry * std::sin(phi)) * gl.cos_t;
                const double nr = r.uniform(1.2, 2.2);
                const int x0 = std::max(0, static_cast<int>(px - nr - 1));
                const int x1 = std::min(s - 1, static_cast<int>(px + nr + 1));
                const int y0 = std::max(0, static_cast<int>(py - nr - 1));
                const int y1 = std::min(s - 1, static_cast<int>(py + nr + 1));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const double dd = std::hypot(x + 0.5 - px, y + 0.5 - py) / nr;
                        if (dd < 1.0)
                            conc_h[static_cast<size_t>(y) * s + x] += 1.1 * (1.0 - dd * dd);
                    }
            }
        }

        // Scattered nuclei.
        const int n_scatter =
            static_cast<int>(cls.nucleus_density * static_cast<double>(s) * s / 400.0);
        for (int k = 0; k < n_scatter; ++k) {
            const double px = r.uniform(0.0, 1.0) * s;
            const double py = r.uniform(0.0, 1.0) * s;
            const double nr = r.uniform(1.2, 2.4);
            const int x0 = std::max(0, static_cast<int>(px - nr - 1));
            const int x1 = std::min(s - 1, static_cast<int>(px + nr + 1));
            const int y0 = std::max(0, static_cast<int>(py - nr - 1));
            const int y1 = std::min(s - 1, static_cast<int>(py + nr + 1));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dd = std::hypot(x + 0.5 - px, y + 0.5 - py) / nr;
                    if (dd < 1.0) conc_h[static_cast<size_t>(y) * s + x] += 1.0 * (1.0 - dd * dd);
                }
        }

        // Compose through Beer-Lambert with the center's background level, then add
        // sensor noise.
        RgbPatch patch(s, s);
        for (int64_t i = 0; i < patch.pixels(); ++i) {
            const double ch = conc_h[static_cast<size_t>(i)] * intensity;
            const double ce = conc_e[static_cast<size_t>(i)] * intensity;
            for (int c = 0; c < 3; ++c) {
                const double od = ch * m.rows[0][c] + ce * m.rows[1][c];
                double val = center.background * std::pow(10.0, -od);
                if (noise_sigma > 0.0) val += r.normal(0.0, noise_sigma);
                patch.data[i * 3 + c] = std::clamp(val, 0.0, 1.0);
            }
        }

        const TissueMask mask = tissue_mask(patch, 0.1);
        if (mask.coverage >= 0.3 || attempt >= 7) {
            LabeledPatch out;
            out.patch = to_image8(patch);
            out.y = cls.class_id;
            out.m = m.flat();
            out.center_id = center.center_id;
            return out;
        }
    }
}

std::vector<RgbPatch> grid_patches(const RgbPatch& image, const GridSpec& grid) {
    const int span = grid.patch_span();
    if (image.width < span || image.height < span)
        throw ImageTooSmall("grid_patches: image smaller than the patch span");
    std::vector<RgbPatch> out;
    for (int ty = 0; ty + span <= image.height; ty += span) {
        for (int tx = 0; tx + span <= image.width; tx += span) {
            RgbPatch tile(span, span);
            for (int y = 0; y < span; ++y)
                for (int x = 0; x < span; ++x) {
                    const double* sp = image.px(tx + x, ty + y);
                    double* dp = tile.px(x, y);
                    dp[0] = sp[0];
                    dp[1] = sp[1];
                    dp[2] = sp[2];
                }
            out.push_back(span == grid.output_size
                              ? std::move(tile)
                              : resize_bilinear(tile, grid.output_size, grid.output_size));
        }
    }
    return out;
}

TissueMask tissue_mask(const RgbPatch& image, double od_threshold, const OdConfig& od_cfg) {
    const OdImage od = rgb_to_od(image, od_cfg);
    TissueMask out;
    out.mask.resize(static_cast<size_t>(od.pixels()), 0);
    int64_t count = 0;
    for (int64_t i = 0; i < od.pixels(); ++i) {
        const double* p = od.data.data() + i * 3;
        if (std::max({p[0], p[1], p[2]}) > od_threshold) {
            out.mask[static_cast<size_t>(i)] = 1;
            ++count;
        }
    }
    out.coverage = od.pixels() > 0 ? static_cast<double>(count) / static_cast<double>(od.pixels()) : 0.0;
    return out;
}

void DatasetSpec::validate() const {
    if (centers.size() < 3)
        throw InsufficientCenters("DatasetSpec: need >= 3 centers so some can be held out");
    if (held_out_centers.empty())
        throw InsufficientCenters("DatasetSpec: need at least one held-out center");
    std::set<int> ids;
    for (const auto& c : centers) {
        c.validate();
        if (!ids.insert(c.center_id).second)
            throw InvalidConfig("DatasetSpec: duplicate center_id");
    }
    std::set<int> held(held_out_centers.begin(), held_out_centers.end());
    for (int h : held)
        if (!ids.count(h)) throw InvalidConfig("DatasetSpec: held-out center_id not present");
    if (held.size() >= ids.size())
        throw InsufficientCenters("DatasetSpec: at least one center must remain for training");
    if (classes.size() < 2) throw InvalidConfig("DatasetSpec: need >= 2 classes");
    std::set<int> class_ids;
    for (const auto& c : classes) {
        c.validate();
        if (!class_ids.insert(c.class_id).second)
            throw InvalidConfig("DatasetSpec: duplicate class_id");
    }
    // Distinct classes must differ in at least one structural parameter by >= 20%.
    auto rel_diff = [](double a, double b) {
        const double mx = std::max(std::abs(a), std::abs(b));
        return mx > 0.0 ? std::abs(a - b) / mx : 0.0;
    };
    for (size_t i = 0; i < classes.size(); ++i)
        for (size_t j = i + 1; j < classes.size(); ++j) {
            const auto& a = classes[i];
            const auto& b = classes[j];
            const bool distinct =
                rel_diff(a.gland_count, b.gland_count) >= 0.2 ||
                rel_diff(a.gland_radius, b.gland_radius) >= 0.2 ||
                rel_diff(a.boundary_thickness, b.boundary_thickness) >= 0.2 ||
                rel_diff(a.nucleus_density, b.nucleus_density) >= 0.2;
            if (!distinct)
                throw InvalidConfig("DatasetSpec: classes " + std::to_string(a.class_id) +
                                    " and " + std::to_string(b.class_id) +
                                    " are structurally too similar");
        }
    if (patch_size < 8) throw InvalidConfig("DatasetSpec: patch_size must be >= 8");
    if (patches_per_class_per_center < 1)
        throw InvalidConfig("DatasetSpec: patches_per_class_per_center must be >= 1");
    if (!(train_fraction > 0.0 && val_fraction > 0.0 &&
          train_fraction + val_fraction < 1.0))
        throw InvalidConfig("DatasetSpec: fractions must be positive and sum below 1");
    if (noise_sigma < 0.0) throw InvalidConfig("DatasetSpec: noise_sigma must be >= 0");
}

DatasetSpec default_fourcenter_spec(uint64_t seed) {
    DatasetSpec spec;
    spec.seed = seed;
    spec.patch_size = 64;
    spec.patches_per_class_per_center = 200;
    spec.noise_sigma = 0.02;
    spec.train_fraction = 0.6;
    spec.val_fraction = 0.2;
    spec.held_out_centers = {2, 3};

    auto make_center = [](int id, std::array<double, 3> h, std::array<double, 3> e,
                          double jitter, double cmin, double cmax, double bg) {
        CenterSpec c;
        c.center_id = id;
        c.stain.rows[0] = normalize_stain_row(h);
        c.stain.rows[1] = normalize_stain_row(e);
        c.jitter_deg = jitter;
        c.conc_min = cmin;
        c.conc_max = cmax;
        c.background = bg;
        return c;
    };
    spec.centers = {
        make_center(0, {0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, 3.0, 0.60, 1.60, 1.00),
        make_center(1, {0.60, 0.72, 0.35}, {0.14, 0.96, 0.18}, 3.0, 0.60, 1.60, 0.97),
        make_center(2, {0.85, 0.43, 0.30}, {0.30, 0.78, 0.55}, 3.0, 0.90, 2.00, 0.88),
        make_center(3, {0.45, 0.62, 0.65}, {0.12, 0.70, 0.71}, 3.0, 0.45, 1.20, 0.91),
    };

    spec.classes = {
        ClassSpec{0, 3, 0.22, 0.22, 0.35},
        ClassSpec{1, 7, 0.13, 0.35, 0.80},
        ClassSpec{2, 14, 0.07, 0.55, 1.60},
    };
    return spec;
}

SplitDataset build_dataset(const DatasetSpec& spec) {
    spec.validate();
    const std::set<int> held(spec.held_out_centers.begin(), spec.held_out_centers.end());
    const int n = spec.patches_per_class_per_center;
    const int n_train = static_cast<int>(std::floor(spec.train_fraction * n));
    const int n_val = static_cast<int>(std::floor(spec.val_fraction * n));

    SplitDataset ds;
    const Rng root = Rng(spec.seed).derive("render");
    for (const CenterSpec& center : spec.centers) {
        const bool external = held.count(center.center_id) > 0;
        for (const ClassSpec& cls : spec.classes) {
            for (int i = 0; i < n; ++i) {
                Rng rng = root.derive(static_cast<uint64_t>(center.center_id))
                              .derive(static_cast<uint64_t>(cls.class_id))
                              .derive(static_cast<uint64_t>(i));
                LabeledPatch patch =
                    render_patch(cls, center, spec.patch_size, rng, spec.noise_sigma);
                if (external)
                    ds.external_test.items.push_back(std::move(patch));
                else if (i < n_train)
                    ds.train.items.push_back(std::move(patch));
                else if (i < n_train + n_val)
                    ds.val.items.push_back(std::move(patch));
                else
                    ds.internal_test.items.push_back(std::move(patch));
            }
        }
    }
    int max_class = 0;
    for (const auto& c : spec.classes) max_class = std::max(max_class, c.class_id);
    const int n_classes = max_class + 1;
    ds.train.n_classes = ds.val.n_classes = ds.internal_test.n_classes =
        ds.external_test.n_classes = n_classes;
    return ds;
}

nlohmann::json dataset_spec_to_json(const DatasetSpec& spec) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& c : spec.centers) {
        centers.push_back({{"center_id", c.center_id},
                           {"stain_matrix",
                            {{c.stain.rows[0][0], c.stain.rows[0][1], c.stain.rows[0][2]},
                             {c.stain.rows[1][0], c.stain.rows[1][1], c.stain.rows[1][2]}}},
                           {"jitter_deg", c.jitter_deg},
                           {"concentration_range", {c.conc_min, c.conc_max}},
                           {"background", c.background}});
    }
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : spec.classes) {
        classes.push_back({{"class_id", c.class_id},
                           {"gland_count", c.gland_count},
                           {"gland_radius", c.gland_radius},
                           {"boundary_thickness", c.boundary_thickness},
                           {"nucleus_density", c.nucleus_density}});
    }
    return {{"seed", spec.seed},
            {"patch_size", spec.patch_size},
            {"patches_per_class_per_center", spec.patches_per_class_per_center},
            {"noise_sigma", spec.noise_sigma},
            {"split", {{"train", spec.train_fraction}, {"val", spec.val_fraction}}},
            {"held_out_centers", spec.held_out_centers},
            {"centers", centers},
            {"classes", classes}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    try {
        spec.seed = j.at("seed").get<uint64_t>();
        spec.patch_size = j.at("patch_size").get<int>();
        spec.patches_per_class_per_center = j.at("patches_per_class_per_center").get<int>();
        spec.noise_sigma = j.value("noise_sigma", 0.0);
        spec.train_fraction = j.at("split").at("train").get<double>();
        spec.val_fraction = j.at("split").at("val").get<double>();
        spec.held_out_centers = j.at("held_out_centers").get<std::vector<int>>();
        for (const auto& cj : j.at("centers")) {
            CenterSpec c;
            c.center_id = cj.at("center_id").get<int>();
            const auto m = cj.at("stain_matrix");
            for (int r = 0; r < 2; ++r)
                for (int k = 0; k < 3; ++k)
                    c.stain.rows[static_cast<size_t>(r)][static_cast<size_t>(k)] =
                        m.at(r).at(k).get<double>();
            c.jitter_deg = cj.value("jitter_deg", 0.0);
            const auto range = cj.at("concentration_range");
            c.conc_min = range.at(0).get<double>();
            c.conc_max = range.at(1).get<double>();
            c.background = cj.value("background", 1.0);
            spec.centers.push_back(c);
        }
        for (const auto& cj : j.at("classes")) {
            ClassSpec c;
            c.class_id = cj.at("class_id").get<int>();
            c.gland_count = cj.at("gland_count").get<int>();
            c.gland_radius = cj.at("gland_radius").get<double>();
            c.boundary_thickness = cj.at("boundary_thickness").get<double>();
            c.nucleus_density = cj.at("nucleus_density").get<double>();
            spec.classes.push_back(c);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("dataset spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

} // namespace stainforge

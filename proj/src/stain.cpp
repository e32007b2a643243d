#include "stainforge/stain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "stainforge/errors.hpp"

namespace stainforge {

double vec3_norm(const std::array<double, 3>& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

double vec3_cosine(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double na = vec3_norm(a);
    const double nb = vec3_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
}

double row_angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double c = std::clamp(vec3_cosine(a, b), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

std::array<double, 3> normalize_stain_row(std::array<double, 3> v) {
    for (double& x : v) x = std::max(x, 0.0);
    const double n = vec3_norm(v);
    if (n == 0.0) throw DegenerateStain("stain row collapsed to zero after clamping");
    for (double& x : v) x /= n;
    return v;
}

StainMatrix canonical_he_matrix() {
    StainMatrix m;
    m.rows[0] = normalize_stain_row({0.65, 0.70, 0.29});
    m.rows[1] = normalize_stain_row({0.07, 0.99, 0.11});
    return m;
}

void StainMatrix::validate() const {
    for (const auto& row : rows) {
        for (double v : row) {
            if (!(v >= 0.0 && v <= 1.0))
                throw InvalidConfig("StainMatrix: entries must be in [0,1]");
        }
        if (std::abs(vec3_norm(row) - 1.0) > 1e-9)
            throw InvalidConfig("StainMatrix: rows must have unit L2 norm");
    }
    if (row_angle_deg(rows[0], rows[1]) <= 1.0)
        throw DegenerateStain("StainMatrix: rows are collinear (angle <= 1 degree)");
}

void MacenkoParams::validate(double od_cap) const {
    if (!(od_threshold > 0.0 && od_threshold < od_cap))
        throw InvalidConfig("MacenkoParams: od_threshold must be in (0, od_cap)");
    if (!(angle_percentile > 0.0 && angle_percentile < 50.0))
        throw InvalidConfig("MacenkoParams: angle_percentile must be in (0, 50)");
    if (min_tissue_pixels < 10)
        throw InvalidConfig("MacenkoParams: min_tissue_pixels must be >= 10");
    if (!(robust_conc_percentile > 0.0 && robust_conc_percentile <= 100.0))
        throw InvalidConfig("MacenkoParams: robust_conc_percentile must be in (0, 100]");
}

double percentile_sorted(const std::vector<double>& sorted, double pct) {
    if (sorted.empty()) throw EmptyTissue("percentile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * (sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

namespace {

// Deterministic row order: hematoxylin absorbs red strongly and blue weakly, so the
// H row is the one with the larger red-to-blue OD ratio. Ties go to the larger green.
bool is_h_before(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double lhs = a[0] * b[2]; // R_a / B_a vs R_b / B_b, cross-multiplied
    const double rhs = b[0] * a[2];
    if (lhs != rhs) return lhs > rhs;
    return a[1] > b[1];
}

StainMatrix ordered(std::array<double, 3> v0, std::array<double, 3> v1) {
    StainMatrix m;
    if (is_h_before(v0, v1)) {
        m.rows[0] = v0;
        m.rows[1] = v1;
    } else {
        m.rows[0] = v1;
        m.rows[1] = v0;
    }
    return m;
}

} // namespace

StainMatrix estimate_he_matrix(const RgbPatch& patch, const MacenkoParams& params,
                               const OdConfig& od_cfg) {
    od_cfg.validate();
    params.validate(od_cfg.od_cap);

    const OdImage od = rgb_to_od(patch, od_cfg);
    std::vector<std::array<double, 3>> tissue;
    tissue.reserve(od.pixels());
    for (int64_t i = 0; i < od.pixels(); ++i) {
        const double* p = od.data.data() + i * 3;
        if (std::max({p[0], p[1], p[2]}) > params.od_threshold)
            tissue.push_back({p[0], p[1], p[2]});
    }
    if (static_cast<int>(tissue.size()) < params.min_tissue_pixels)
        throw NotEnoughTissue("too few tissue pixels above OD threshold");
    // Canonical pixel order: all accumulations below become invariant to the
    // original pixel arrangement, bit for bit.
    std::sort(tissue.begin(), tissue.end());

    const int64_t n = static_cast<int64_t>(tissue.size());
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& t : tissue) mean += Eigen::Vector3d(t[0], t[1], t[2]);
    mean /= static_cast<double>(n);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& t : tissue) {
        const Eigen::Vector3d d = Eigen::Vector3d(t[0], t[1], t[2]) - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    if (eig.info() != Eigen::Success) throw DegenerateStain("eigendecomposition failed");
    // Eigen sorts eigenvalues ascending; the stain plane is spanned by the top two.
    Eigen::Vector3d e1 = eig.eigenvectors().col(2);
    Eigen::Vector3d e2 = eig.eigenvectors().col(1);
    const double second_sv = std::sqrt(std::max(eig.eigenvalues()(1), 0.0));
    if (second_sv < 1e-6) throw DegenerateStain("OD cloud has rank < 2");

    // Fix signs so projections of the (uncentered) OD data are predominantly nonnegative;
    // stain directions emanate from the OD origin.
    double sum1 = 0.0, sum2 = 0.0;
    for (const auto& t : tissue) {
        const Eigen::Vector3d v(t[0], t[1], t[2]);
        sum1 += e1.dot(v);
        sum2 += e2.dot(v);
    }
    if (sum1 < 0.0) e1 = -e1;
    if (sum2 < 0.0) e2 = -e2;

    std::vector<double> angles(tissue.size());
    for (size_t i = 0; i < tissue.size(); ++i) {
        const Eigen::Vector3d v(tissue[i][0], tissue[i][1], tissue[i][2]);
        angles[i] = std::atan2(e2.dot(v), e1.dot(v));
    }
    std::sort(angles.begin(), angles.end());
    const double phi_lo = percentile_sorted(angles, params.angle_percentile);
    const double phi_hi = percentile_sorted(angles, 100.0 - params.angle_percentile);

    const Eigen::Vector3d vlo = std::cos(phi_lo) * e1 + std::sin(phi_lo) * e2;
    const Eigen::Vector3d vhi = std::cos(phi_hi) * e1 + std::sin(phi_hi) * e2;

    const auto row_lo = normalize_stain_row({vlo(0), vlo(1), vlo(2)});
    const auto row_hi = normalize_stain_row({vhi(0), vhi(1), vhi(2)});
    StainMatrix m = ordered(row_lo, row_hi);
    if (row_angle_deg(m.rows[0], m.rows[1]) <= 1.0)
        throw DegenerateStain("estimated stain rows are collinear");
    return m;
}

ConcentrationMap compute_concentrations(const OdImage& od, const StainMatrix& m) {
    const auto& r0 = m.rows[0];
    const auto& r1 = m.rows[1];
    const double g00 = r0[0] * r0[0] + r0[1] * r0[1] + r0[2] * r0[2];
    const double g01 = r0[0] * r1[0] + r0[1] * r1[1] + r0[2] * r1[2];
    const double g11 = r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2];
    const double det = g00 * g11 - g01 * g01;
    if (row_angle_deg(r0, r1) <= 1.0 || std::abs(det) < 1e-12)
        throw DegenerateStain("stain rows are collinear");

    ConcentrationMap cmap(od.width, od.height);
    const int64_t npx = od.pixels();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < npx; ++i) {
        const double* p = od.data.data() + i * 3;
        const double b0 = r0[0] * p[0] + r0[1] * p[1] + r0[2] * p[2];
        const double b1 = r1[0] * p[0] + r1[1] * p[1] + r1[2] * p[2];
        const double c0 = (g11 * b0 - g01 * b1) / det;
        const double c1 = (g00 * b1 - g01 * b0) / det;
        cmap.data[i * 2] = std::max(c0, 0.0);
        cmap.data[i * 2 + 1] = std::max(c1, 0.0);
    }

    // Fixed-order accumulation keeps the reported residual deterministic.
    double residual = 0.0;
    for (int64_t i = 0; i < npx; ++i) {
        const double* p = od.data.data() + i * 3;
        const double c0 = cmap.data[i * 2];
        const double c1 = cmap.data[i * 2 + 1];
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double diff = c0 * r0[c] + c1 * r1[c] - p[c];
            sq += diff * diff;
        }
        residual += std::sqrt(sq);
    }
    cmap.mean_residual = npx > 0 ? residual / static_cast<double>(npx) : 0.0;
    return cmap;
}

std::pair<double, double> robust_max_concentration(const ConcentrationMap& cmap,
                                                   double percentile) {
    if (cmap.pixels() == 0) throw EmptyTissue("empty concentration map");
    std::vector<double> pos_h, pos_e;
    pos_h.reserve(cmap.pixels());
    pos_e.reserve(cmap.pixels());
    for (int64_t i = 0; i < cmap.pixels(); ++i) {
        if (cmap.data[i * 2] > 0.0) pos_h.push_back(cmap.data[i * 2]);
        if (cmap.data[i * 2 + 1] > 0.0) pos_e.push_back(cmap.data[i * 2 + 1]);
    }
    if (pos_h.empty() && pos_e.empty()) throw EmptyTissue("no positive concentrations");
    std::sort(pos_h.begin(), pos_h.end());
    std::sort(pos_e.begin(), pos_e.end());
    const double mh = pos_h.empty() ? 0.0 : percentile_sorted(pos_h, percentile);
    const double me = pos_e.empty() ? 0.0 : percentile_sorted(pos_e, percentile);
    return {mh, me};
}

RgbPatch compose_from_concentrations(const ConcentrationMap& cmap, const StainMatrix& m,
                                     const OdConfig& od_cfg) {
    OdImage od(cmap.width, cmap.height);
    const int64_t npx = cmap.pixels();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < npx; ++i) {
        const double c0 = cmap.data[i * 2];
        const double c1 = cmap.data[i * 2 + 1];
        for (int c = 0; c < 3; ++c) {
            double v = c0 * m.rows[0][c] + c1 * m.rows[1][c];
            od.data[i * 3 + c] = std::clamp(v, 0.0, od_cfg.od_cap);
        }
    }
    return od_to_rgb(od, od_cfg);
}

RgbPatch normalize_to_target(const RgbPatch& patch, const StainMatrix& target_m,
                             std::pair<double, double> target_maxc,
                             const MacenkoParams& params, const OdConfig& od_cfg) {
    const StainMatrix src_m = estimate_he_matrix(patch, params, od_cfg);
    const OdImage od = rgb_to_od(patch, od_cfg);
    ConcentrationMap cmap = compute_concentrations(od, src_m);
    const auto [src_h, src_e] = robust_max_concentration(cmap, params.robust_conc_percentile);
    if (src_h <= 0.0 || src_e <= 0.0)
        throw EmptyTissue("source patch has a stain with no positive concentration");
    const double scale_h = target_maxc.first / src_h;
    const double scale_e = target_maxc.second / src_e;
    for (int64_t i = 0; i < cmap.pixels(); ++i) {
        cmap.data[i * 2] *= scale_h;
        cmap.data[i * 2 + 1] *= scale_e;
    }
    return compose_from_concentrations(cmap, target_m, od_cfg);
}

void write_stain_csv(const std::string& path, const StainMatrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.precision(9);
    for (const auto& row : m.rows) out << row[0] << "," << row[1] << "," << row[2] << "\n";
    if (!out) throw IoError("failed writing " + path);
}

StainMatrix read_stain_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    StainMatrix m;
    std::string line;
    for (auto& row : m.rows) {
        if (!std::getline(in, line)) throw IoError(path + ": expected 2 rows");
        std::stringstream ss(line);
        std::string cell;
        for (double& v : row) {
            if (!std::getline(ss, cell, ',')) throw IoError(path + ": expected 3 values per row");
            v = std::stod(cell);
        }
    }
    return m;
}

} // namespace stainforge

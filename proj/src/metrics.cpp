#include "stainforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "stainforge/errors.hpp"
#include "stainforge/rng.hpp"

namespace stainforge {

double quadratic_kappa(const std::vector<int>& predictions, const std::vector<int>& truths,
                       int n_classes) {
    if (n_classes < 2) throw InvalidConfig("quadratic_kappa: need at least 2 classes");
    if (predictions.size() != truths.size() || truths.empty())
        throw ShapeMismatch("quadratic_kappa: inputs must be nonempty and equal length");
    const int k = n_classes;
    std::vector<int64_t> confusion(static_cast<size_t>(k) * k, 0);
    for (size_t i = 0; i < truths.size(); ++i) {
        const int t = truths[i], p = predictions[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw ShapeMismatch("quadratic_kappa: class id out of range");
        confusion[static_cast<size_t>(t) * k + p] += 1;
    }
    std::vector<int64_t> row(k, 0), col(k, 0);
    for (int t = 0; t < k; ++t)
        for (int p = 0; p < k; ++p) {
            row[t] += confusion[static_cast<size_t>(t) * k + p];
            col[p] += confusion[static_cast<size_t>(t) * k + p];
        }
    // Integer accumulation; the common (K-1)^2 factor in the weights cancels.
    int64_t observed = 0, expected = 0;
    for (int t = 0; t < k; ++t)
        for (int p = 0; p < k; ++p) {
            const int64_t w = static_cast<int64_t>(t - p) * (t - p);
            observed += w * confusion[static_cast<size_t>(t) * k + p];
            expected += w * row[t] * col[p];
        }
    if (expected == 0) throw UndefinedKappa("expected disagreement is zero");
    const auto n = static_cast<int64_t>(truths.size());
    return 1.0 - static_cast<double>(n * observed) / static_cast<double>(expected);
}

namespace {

// Midranks of the combined sample plus the tie statistic sum(t^3 - t).
std::pair<std::vector<double>, double> midranks(std::vector<double> values) {
    std::vector<size_t> order(values.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), 0.0);
    double tie_stat = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        const double span = static_cast<double>(j - i + 1);
        tie_stat += span * span * span - span;
        i = j + 1;
    }
    return {ranks, tie_stat};
}

// Exact permutation distribution of the first-sample rank sum, enumerated over all
// C(n+m, n) index subsets.
double exact_two_sided_p(const std::vector<double>& ranks, size_t n1, double observed_sum) {
    const size_t n = ranks.size();
    std::vector<size_t> idx(n1);
    std::iota(idx.begin(), idx.end(), size_t{0});
    int64_t total = 0, le = 0, ge = 0;
    const double eps = 1e-9;
    while (true) {
        double s = 0.0;
        for (size_t i : idx) s += ranks[i];
        ++total;
        if (s <= observed_sum + eps) ++le;
        if (s >= observed_sum - eps) ++ge;
        // next combination
        size_t k = n1;
        while (k > 0 && idx[k - 1] == n - n1 + k - 1) --k;
        if (k == 0) break;
        ++idx[k - 1];
        for (size_t j = k; j < n1; ++j) idx[j] = idx[j - 1] + 1;
    }
    const double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
    return std::min(1.0, 2.0 * tail);
}

} // namespace

WilcoxonResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 3 || b.size() < 3)
        throw SampleTooSmall("wilcoxon_rank_sum: each sample needs >= 3 values");
    const size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<double> combined;
    combined.reserve(n);
    combined.insert(combined.end(), a.begin(), a.end());
    combined.insert(combined.end(), b.begin(), b.end());
    const auto [ranks, tie_stat] = midranks(std::move(combined));

    double rank_sum_a = 0.0;
    for (size_t i = 0; i < n1; ++i) rank_sum_a += ranks[i];
    const double u = rank_sum_a - static_cast<double>(n1) * (n1 + 1) / 2.0;

    WilcoxonResult res;
    res.u_statistic = u;
    if (n <= 12) {
        res.exact = true;
        res.p_value = exact_two_sided_p(ranks, n1, rank_sum_a);
        return res;
    }
    const double nn1 = static_cast<double>(n1), nn2 = static_cast<double>(n2),
                 nn = static_cast<double>(n);
    const double mean_u = nn1 * nn2 / 2.0;
    const double var_u = nn1 * nn2 / 12.0 * ((nn + 1.0) - tie_stat / (nn * (nn - 1.0)));
    if (var_u <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    double z = u - mean_u;
    // continuity correction toward the mean
    if (z > 0.5)
        z -= 0.5;
    else if (z < -0.5)
        z += 0.5;
    else
        z = 0.0;
    z /= std::sqrt(var_u);
    res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    return res;
}

ProjectionResult pca_project(const std::vector<std::vector<double>>& vectors) {
    const size_t n = vectors.size();
    if (n < 3) throw InvalidConfig("pca_project: need at least 3 vectors");
    const size_t d = vectors[0].size();
    if (d < 2) throw InvalidConfig("pca_project: need dimension >= 2");
    for (const auto& v : vectors)
        if (v.size() != d) throw ShapeMismatch("pca_project: inconsistent vector lengths");

    Eigen::MatrixXd x(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i][j];
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw DegenerateData("eigendecomposition failed");
    Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(0.0);
    const double total = evals.sum();
    if (total <= 0.0) throw DegenerateData("covariance has rank 0");

    ProjectionResult res;
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd comp = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
        // Largest-magnitude entry positive.
        Eigen::Index argmax = 0;
        comp.cwiseAbs().maxCoeff(&argmax);
        if (comp(argmax) < 0.0) comp = -comp;
        res.components[static_cast<size_t>(c)].assign(comp.data(), comp.data() + d);
        res.explained[static_cast<size_t>(c)] = evals(static_cast<Eigen::Index>(d) - 1 - c) / total;
    }
    res.coordinates.resize(n);
    for (size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 2; ++c) {
            double acc = 0.0;
            for (size_t j = 0; j < d; ++j) acc += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * res.components[static_cast<size_t>(c)][j];
            res.coordinates[i][static_cast<size_t>(c)] = acc;
        }
    }
    return res;
}

namespace {

// Full-batch multinomial logistic regression, deterministic fixed schedule.
struct LogisticProbe {
    size_t n_features = 0;
    int n_classes = 0;
    std::vector<double> w; // [n_classes, n_features]
    std::vector<double> b;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes,
             int iters = 300, double lr = 0.5, double l2 = 1e-3) {
        n_features = x[0].size();
        n_classes = classes;
        w.assign(static_cast<size_t>(classes) * n_features, 0.0);
        b.assign(static_cast<size_t>(classes), 0.0);
        const size_t n = x.size();
        std::vector<double> probs(static_cast<size_t>(classes));
        std::vector<double> gw(w.size()), gb(b.size());
        std::vector<double> vw(w.size(), 0.0), vb(b.size(), 0.0);
        const double momentum = 0.9;
        for (int it = 0; it < iters; ++it) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (size_t i = 0; i < n; ++i) {
                predict_probs(x[i], probs);
                for (int c = 0; c < classes; ++c) {
                    const double diff = probs[static_cast<size_t>(c)] - (y[i] == c ? 1.0 : 0.0);
                    gb[static_cast<size_t>(c)] += diff;
                    for (size_t f = 0; f < n_features; ++f)
                        gw[static_cast<size_t>(c) * n_features + f] += diff * x[i][f];
                }
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            for (size_t i = 0; i < w.size(); ++i) {
                vw[i] = momentum * vw[i] - lr * (gw[i] * inv_n + l2 * w[i]);
                w[i] += vw[i];
            }
            for (size_t i = 0; i < b.size(); ++i) {
                vb[i] = momentum * vb[i] - lr * gb[i] * inv_n;
                b[i] += vb[i];
            }
        }
    }

    void predict_probs(const std::vector<double>& x, std::vector<double>& probs) const {
        double mx = -1e300;
        for (int c = 0; c < n_classes; ++c) {
            double z = b[static_cast<size_t>(c)];
            for (size_t f = 0; f < n_features; ++f)
                z += w[static_cast<size_t>(c) * n_features + f] * x[f];
            probs[static_cast<size_t>(c)] = z;
            mx = std::max(mx, z);
        }
        double sum = 0.0;
        for (auto& p : probs) {
            p = std::exp(p - mx);
            sum += p;
        }
        for (auto& p : probs) p /= sum;
    }

    int predict(const std::vector<double>& x) const {
        std::vector<double> probs(static_cast<size_t>(n_classes));
        predict_probs(x, probs);
        return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    }
};

} // namespace

ProbeResult stain_invariance_probe(const std::vector<std::vector<double>>& features,
                                   const std::vector<int>& center_ids, uint64_t seed) {
    if (features.size() != center_ids.size() || features.empty())
        throw ShapeMismatch("stain_invariance_probe: inputs must be equal length");
    std::map<int, int> center_index;
    std::map<int, int> center_count;
    for (int c : center_ids) center_count[c] += 1;
    if (center_count.size() < 2)
        throw InsufficientSamples("stain_invariance_probe: need >= 2 centers");
    for (const auto& [c, count] : center_count)
        if (count < 20)
            throw InsufficientSamples("stain_invariance_probe: need >= 20 samples per center");
    int next = 0;
    for (const auto& [c, count] : center_count) center_index[c] = next++;
    const int n_centers = next;

    const size_t n = features.size();
    const size_t n_feat = features[0].size();
    for (const auto& f : features)
        if (f.size() != n_feat)
            throw ShapeMismatch("stain_invariance_probe: inconsistent feature lengths");

    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = center_index.at(center_ids[i]);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(combine_seed(seed, fnv1a64("stain_invariance_probe")));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const int n_folds = 5;
    int64_t correct = 0, evaluated = 0;
    for (int fold = 0; fold < n_folds; ++fold) {
        std::vector<std::vector<double>> train_x, val_x;
        std::vector<int> train_y, val_y;
        for (size_t pos = 0; pos < n; ++pos) {
            const size_t i = order[pos];
            if (static_cast<int>(pos % n_folds) == fold) {
                val_x.push_back(features[i]);
                val_y.push_back(labels[i]);
            } else {
                train_x.push_back(features[i]);
                train_y.push_back(labels[i]);
            }
        }
        // Standardize with train-fold statistics.
        std::vector<double> mean(n_feat, 0.0), sd(n_feat, 0.0);
        for (const auto& x : train_x)
            for (size_t f = 0; f < n_feat; ++f) mean[f] += x[f];
        for (auto& m : mean) m /= static_cast<double>(train_x.size());
        for (const auto& x : train_x)
            for (size_t f = 0; f < n_feat; ++f) sd[f] += (x[f] - mean[f]) * (x[f] - mean[f]);
        for (auto& s : sd) s = std::max(std::sqrt(s / static_cast<double>(train_x.size())), 1e-8);
        auto standardize = [&](std::vector<std::vector<double>>& xs) {
            for (auto& x : xs)
                for (size_t f = 0; f < n_feat; ++f) x[f] = (x[f] - mean[f]) / sd[f];
        };
        standardize(train_x);
        standardize(val_x);

        LogisticProbe probe;
        probe.fit(train_x, train_y, n_centers);
        for (size_t i = 0; i < val_x.size(); ++i) {
            if (probe.predict(val_x[i]) == val_y[i]) ++correct;
            ++evaluated;
        }
    }

    ProbeResult res;
    res.accuracy = static_cast<double>(correct) / static_cast<double>(evaluated);
    int64_t max_count = 0;
    for (const auto& [c, count] : center_count) max_count = std::max<int64_t>(max_count, count);
    res.chance = static_cast<double>(max_count) / static_cast<double>(n);
    return res;
}

} // namespace stainforge

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lascar/graphcut.hpp"
#include "lascar/mesh.hpp"
#include "lascar/rng.hpp"

namespace lascar {

/// mean + n_sd * population standard deviation; values strictly above the
/// threshold classify as scar.
inline double threshold_nsd(const std::vector<double>& wall_values, double n_sd) {
    if (wall_values.size() < 2)
        throw std::invalid_argument("need at least two samples for an SD threshold");
    const double n = static_cast<double>(wall_values.size());
    double mean = 0.0;
    for (double v : wall_values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : wall_values) var += (v - mean) * (v - mean);
    var /= n;
    return mean + n_sd * std::sqrt(var);
}

/// Otsu threshold on a 256-bin histogram over [min, max]. Returns the center
/// of the cut bin; values above it classify as scar. When several cuts tie on
/// between-class variance (flat plateaus), the midpoint of the tie run is
/// used, rounded to the lower bin.
inline double otsu_threshold(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("need at least two values");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi > lo)) throw std::invalid_argument("constant input has no Otsu threshold");

    constexpr int kBins = 256;
    const double bin_width = (hi - lo) / kBins;
    std::array<double, kBins> hist{};
    for (double v : values) {
        int b = static_cast<int>((v - lo) / bin_width);
        if (b >= kBins) b = kBins - 1;
        if (b < 0) b = 0;
        hist[b] += 1.0;
    }

    const double total = static_cast<double>(values.size());
    double mean_total = 0.0;
    for (int b = 0; b < kBins; ++b) mean_total += b * hist[b];

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int tie_first = 0, tie_last = 0;
    for (int k = 0; k + 1 < kBins; ++k) {
        w0 += hist[k];
        sum0 += k * hist[k];
        const double w1 = total - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (mean_total - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            tie_first = tie_last = k;
        } else if (between == best) {
            tie_last = k;
        }
    }
    if (best < 0.0) throw std::invalid_argument("constant input has no Otsu threshold");
    const int cut = (tie_first + tie_last) / 2;
    return lo + (cut + 0.5) * bin_width;
}

/// Two-class mixture of Gaussians: k_normal components seeded at the lower
/// quantiles, k_scar at the upper (scar is hyper-enhanced). Fit by EM on the
/// pooled mixture; the scar posterior is the sum of scar-component
/// responsibilities. Input order does not matter: sufficient statistics are
/// accumulated over a sorted copy.
struct MgmmModel {
    struct Component {
        double weight = 0.0;  // within-class, sums to 1 per class
        double mean = 0.0;
        double var = 1.0;
    };
    std::vector<Component> normal, scar;
    double prior_normal = 0.5, prior_scar = 0.5;
    std::vector<double> log_likelihood_trace;
};

struct MgmmFit {
    MgmmModel model;
    std::vector<double> posterior_scar;  // per input sample, original order
};

namespace detail {

inline double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + d * d / var);
}

}  // namespace detail

inline MgmmFit fit_mgmm(const std::vector<double>& values, int k_scar, int k_normal,
                        uint64_t seed) {
    const int k_total = k_scar + k_normal;
    if (k_scar < 1 || k_normal < 1) throw std::invalid_argument("need >= 1 component per class");
    if (static_cast<int>(values.size()) < 3 * k_total)
        throw std::invalid_argument("need at least 3 samples per mixture component");

    std::vector<double> x = values;
    std::sort(x.begin(), x.end());
    const size_t n = x.size();

    double global_mean = 0.0;
    for (double v : x) global_mean += v;
    global_mean /= static_cast<double>(n);
    double global_var = 0.0;
    for (double v : x) global_var += (v - global_mean) * (v - global_mean);
    global_var = std::max(global_var / static_cast<double>(n), 1e-6);

    // Flat component array: [0, k_normal) normal, [k_normal, k_total) scar.
    std::vector<double> pi(k_total, 1.0 / k_total), mu(k_total), var(k_total, global_var);
    for (int c = 0; c < k_total; ++c)
        mu[c] = x[static_cast<size_t>((c + 0.5) / k_total * n)];

    constexpr double kVarFloor = 1e-6;
    constexpr int kMaxIters = 500;
    Rng rng(seed);
    std::vector<int> reinit_count(k_total, 0);

    std::vector<double> resp(n * k_total);
    std::vector<double> ll_trace;
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < kMaxIters; ++iter) {
        // E step with log-sum-exp.
        double ll = 0.0;
        for (size_t s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k_total; ++c) {
                const double lp = std::log(pi[c]) + detail::log_normal_pdf(x[s], mu[c], var[c]);
                resp[s * k_total + c] = lp;
                best = std::max(best, lp);
            }
            double sum = 0.0;
            for (int c = 0; c < k_total; ++c)
                sum += std::exp(resp[s * k_total + c] - best);
            const double log_z = best + std::log(sum);
            ll += log_z;
            for (int c = 0; c < k_total; ++c)
                resp[s * k_total + c] = std::exp(resp[s * k_total + c] - log_z);
        }
        ll_trace.push_back(ll);

        // M step.
        bool degenerate = false;
        for (int c = 0; c < k_total; ++c) {
            double nc = 0.0, sx = 0.0;
            for (size_t s = 0; s < n; ++s) {
                nc += resp[s * k_total + c];
                sx += resp[s * k_total + c] * x[s];
            }
            if (nc < 1e-10) {
                if (++reinit_count[c] > 1)
                    throw std::runtime_error("MGMM component degenerated twice");
                mu[c] = x[static_cast<size_t>(rng.below(n))];
                var[c] = global_var;
                pi[c] = 1.0 / k_total;
                degenerate = true;
                continue;
            }
            const double m = sx / nc;
            double sv = 0.0;
            for (size_t s = 0; s < n; ++s)
                sv += resp[s * k_total + c] * (x[s] - m) * (x[s] - m);
            pi[c] = nc / static_cast<double>(n);
            mu[c] = m;
            var[c] = std::max(sv / nc, kVarFloor);
        }
        if (degenerate) {
            // renormalize weights after a reseed
            double s = 0.0;
            for (double p : pi) s += p;
            for (double& p : pi) p /= s;
            continue;
        }
        if (iter > 0 && std::abs(ll - prev_ll) < 1e-7 * std::abs(ll)) break;
        prev_ll = ll;
    }

    MgmmFit out;
    out.model.log_likelihood_trace = std::move(ll_trace);
    double prior_n = 0.0, prior_s = 0.0;
    for (int c = 0; c < k_normal; ++c) prior_n += pi[c];
    for (int c = k_normal; c < k_total; ++c) prior_s += pi[c];
    out.model.prior_normal = prior_n;
    out.model.prior_scar = prior_s;
    for (int c = 0; c < k_total; ++c) {
        MgmmModel::Component comp{pi[c] / (c < k_normal ? prior_n : prior_s), mu[c],
                                  var[c]};
        (c < k_normal ? out.model.normal : out.model.scar).push_back(comp);
    }

    // Posteriors in the caller's original order.
    out.posterior_scar.resize(values.size());
    for (size_t s = 0; s < values.size(); ++s) {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> lp(k_total);
        for (int c = 0; c < k_total; ++c) {
            lp[c] = std::log(pi[c]) + detail::log_normal_pdf(values[s], mu[c], var[c]);
            best = std::max(best, lp[c]);
        }
        double z = 0.0, zs = 0.0;
        for (int c = 0; c < k_total; ++c) {
            const double e = std::exp(lp[c] - best);
            z += e;
            if (c >= k_normal) zs += e;
        }
        out.posterior_scar[s] = zs / z;
    }
    return out;
}

/// MGMM posterior + graph-cut regularization: t_costs = (1 - p, p); boundary
/// weights combine intensity affinity with inverse edge length.
inline VertexLabels mgmm_graphcut(const std::vector<double>& posterior_scar,
                                  const std::vector<double>& vertex_values,
                                  const SurfaceMesh& mesh, double lambda, double sigma_i) {
    if (posterior_scar.size() != mesh.vertices.size() ||
        vertex_values.size() != mesh.vertices.size())
        throw std::invalid_argument("per-vertex arrays must match vertex count");
    for (double p : posterior_scar)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("posterior outside [0,1]");
    if (!(sigma_i > 0)) throw std::invalid_argument("sigma_i must be > 0");

    SurfaceGraph g;
    g.n = static_cast<int>(mesh.vertices.size());
    g.lambda = lambda;
    g.t_costs.resize(g.n);
    for (int i = 0; i < g.n; ++i)
        g.t_costs[i] = {1.0 - posterior_scar[i], posterior_scar[i]};
    const double mean_len = mesh.mean_edge_length();
    g.edges.reserve(mesh.edges.size());
    for (const auto& e : mesh.edges) {
        const double di = vertex_values[e.a] - vertex_values[e.b];
        const double affinity = std::exp(-di * di / (2.0 * sigma_i * sigma_i));
        g.edges.push_back({e.a, e.b, affinity * (mean_len / e.length)});
    }
    return min_cut(g);
}

}  // namespace lascar

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lascar/baselines.hpp"
#include "lascar/rng.hpp"

using namespace lascar;

namespace {

// Naive between-class-variance search, recomputing every statistic per cut.
double otsu_oracle(const std::vector<double>& values) {
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn_it, hi = *mx_it;
    constexpr int kBins = 256;
    const double bin_width = (hi - lo) / kBins;
    std::array<double, kBins> hist{};
    for (double v : values) {
        int b = static_cast<int>((v - lo) / bin_width);
        b = std::clamp(b, 0, kBins - 1);
        hist[b] += 1.0;
    }
    double best = -1.0;
    int tie_first = 0, tie_last = 0;
    for (int k = 0; k + 1 < kBins; ++k) {
        double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
        for (int b = 0; b <= k; ++b) {
            w0 += hist[b];
            s0 += b * hist[b];
        }
        for (int b = k + 1; b < kBins; ++b) {
            w1 += hist[b];
            s1 += b * hist[b];
        }
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = s0 / w0, mu1 = s1 / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            tie_first = tie_last = k;
        } else if (between == best) {
            tie_last = k;
        }
    }
    const int cut = (tie_first + tie_last) / 2;
    return lo + (cut + 0.5) * bin_width;
}

SurfaceMesh triangle_mesh() {
    SurfaceMesh mesh;
    mesh.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
    mesh.triangles = {{0, 1, 2}};
    mesh.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
    build_connectivity(mesh);
    return mesh;
}

}  // namespace

TEST_CASE("n-SD threshold: hand arithmetic and degenerate spread") {
    CHECK(threshold_nsd({1.0, 3.0}, 2.0) == doctest::Approx(4.0));

    const double t = threshold_nsd({0.0, 0.0, 0.0, 0.0}, 2.0);
    CHECK(t == 0.0);
    // Any strictly positive value classifies as scar under `value > t`.
    CHECK(0.001 > t);
    CHECK_THROWS_AS(threshold_nsd({1.0}, 2.0), std::invalid_argument);
}

TEST_CASE("Otsu: symmetric bimodal lands near the middle") {
    std::vector<double> values;
    for (int i = 0; i < 40; ++i) {
        values.push_back(0.0);
        values.push_back(1.0);
    }
    CHECK(otsu_threshold(values) == doctest::Approx(0.5).epsilon(0.01));
    CHECK_THROWS_AS(otsu_threshold({2.0, 2.0, 2.0}), std::invalid_argument);
}

TEST_CASE("Otsu equals the exhaustive search on 50 random histograms") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> values;
        const int n = 50 + static_cast<int>(rng.below(400));
        const double m1 = rng.uniform(0, 30), m2 = m1 + rng.uniform(5, 40);
        for (int i = 0; i < n; ++i)
            values.push_back(rng.coin() ? rng.normal(m1, rng.uniform(0.5, 4))
                                        : rng.normal(m2, rng.uniform(0.5, 4)));
        REQUIRE(otsu_threshold(values) == otsu_oracle(values));
    }
}

TEST_CASE("Otsu is affine-equivariant up to one bin") {
    Rng rng(6);
    std::vector<double> values;
    for (int i = 0; i < 300; ++i)
        values.push_back(rng.coin() ? rng.normal(2, 1) : rng.normal(9, 1));
    const double t = otsu_threshold(values);

    const double a = 3.5, b = -2.0;
    std::vector<double> mapped;
    for (double v : values) mapped.push_back(a * v + b);
    const double tm = otsu_threshold(mapped);

    const auto [mn, mx] = std::minmax_element(mapped.begin(), mapped.end());
    const double bin = (*mx - *mn) / 256.0;
    CHECK(std::abs(tm - (a * t + b)) <= bin + 1e-9);
}

TEST_CASE("MGMM recovers two well-separated Gaussians") {
    Rng rng(7);
    std::vector<double> values;
    for (int i = 0; i < 400; ++i) values.push_back(rng.normal(0, 1));
    for (int i = 0; i < 400; ++i) values.push_back(rng.normal(10, 1));
    const auto fit = fit_mgmm(values, 1, 1, 1);
    CHECK(fit.model.normal[0].mean == doctest::Approx(0.0).epsilon(0.1));
    CHECK(fit.model.scar[0].mean == doctest::Approx(10.0).epsilon(0.01));
    // Posterior separates the clusters.
    CHECK(fit.posterior_scar[0] < 0.01);
    CHECK(fit.posterior_scar[500] > 0.99);
}

TEST_CASE("EM log-likelihood trace is monotone non-decreasing") {
    Rng rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> values;
        const double gap = rng.uniform(1, 8);
        for (int i = 0; i < 150; ++i)
            values.push_back(rng.coin() ? rng.normal(0, 1) : rng.normal(gap, 1.5));
        const auto fit = fit_mgmm(values, 2, 3, rep);
        const auto& ll = fit.model.log_likelihood_trace;
        REQUIRE(ll.size() >= 2);
        for (size_t i = 1; i < ll.size(); ++i)
            CHECK(ll[i] >= ll[i - 1] - 1e-9 * std::max(1.0, std::abs(ll[i])));
    }
}

TEST_CASE("permuting the input leaves the fit bit-identical") {
    Rng rng(9);
    std::vector<double> values;
    for (int i = 0; i < 200; ++i)
        values.push_back(rng.coin() ? rng.normal(1, 1) : rng.normal(7, 2));
    auto shuffled = values;
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);

    const auto a = fit_mgmm(values, 2, 2, 3);
    const auto b = fit_mgmm(shuffled, 2, 2, 3);
    for (size_t c = 0; c < a.model.scar.size(); ++c) {
        CHECK(a.model.scar[c].mean == b.model.scar[c].mean);
        CHECK(a.model.scar[c].var == b.model.scar[c].var);
        CHECK(a.model.scar[c].weight == b.model.scar[c].weight);
    }
    CHECK(a.model.prior_scar == b.model.prior_scar);
}

TEST_CASE("mgmm_graphcut with lambda 0 returns the posterior argmax") {
    const auto mesh = triangle_mesh();
    const std::vector<double> post{0.9, 0.2, 0.51};
    const std::vector<double> vals{10, 20, 30};
    const auto labels = mgmm_graphcut(post, vals, mesh, 0.0, 5.0);
    CHECK(labels.labels[0] == 1);
    CHECK(labels.labels[1] == 0);
    CHECK(labels.labels[2] == 1);
}

TEST_CASE("uniform intensities and large lambda give a single label") {
    const auto mesh = triangle_mesh();
    const std::vector<double> post{0.9, 0.4, 0.4};
    const std::vector<double> vals{15, 15, 15};
    const auto labels = mgmm_graphcut(post, vals, mesh, 50.0, 5.0);
    // Scar unaries total 1.3 vs normal 1.7, so the uniform optimum is scar.
    for (auto l : labels.labels) CHECK(l == 1);
}

TEST_CASE("graph-cut smoothing never raises the energy above the argmax labeling") {
    Rng rng(11);
    const auto mesh = triangle_mesh();
    std::vector<double> post{rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<double> vals{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40)};
    const double lambda = 0.7, sigma = 8.0;
    const auto smoothed = mgmm_graphcut(post, vals, mesh, lambda, sigma);

    // Rebuild the same graph to evaluate both labelings.
    SurfaceGraph g;
    g.n = 3;
    g.lambda = lambda;
    g.t_costs.resize(3);
    for (int i = 0; i < 3; ++i) g.t_costs[i] = {1.0 - post[i], post[i]};
    const double mean_len = mesh.mean_edge_length();
    for (const auto& e : mesh.edges) {
        const double di = vals[e.a] - vals[e.b];
        g.edges.push_back(
            {e.a, e.b, std::exp(-di * di / (2 * sigma * sigma)) * (mean_len / e.length)});
    }
    std::vector<uint8_t> argmax(3);
    for (int i = 0; i < 3; ++i) argmax[i] = post[i] >= 0.5 ? 1 : 0;
    CHECK(graph_energy(g, smoothed.labels) <= graph_energy(g, argmax));
}

TEST_CASE("posteriors outside the unit interval are rejected") {
    const auto mesh = triangle_mesh();
    CHECK_THROWS_AS(mgmm_graphcut({1.2, 0.1, 0.1}, {1, 2, 3}, mesh, 0.5, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_mgmm({1.0, 2.0, 3.0}, 1, 1, 0), std::invalid_argument);
}

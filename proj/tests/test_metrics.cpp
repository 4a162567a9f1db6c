#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lascar/metrics.hpp"
#include "lascar/rng.hpp"

using namespace lascar;

TEST_CASE("dice on identity, disjoint and the 4/6/3 example") {
    const std::vector<uint8_t> a{1, 1, 0, 0, 1};
    CHECK(dice(a, a, 1) == 1.0);
    CHECK(dice({1, 1, 0}, {0, 0, 1}, 1) == 0.0);
    // |A|=4, |B|=6, |A and B|=3 -> 2*3/10
    const std::vector<uint8_t> pred{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const std::vector<uint8_t> gt{1, 1, 1, 0, 1, 1, 1, 0, 0, 0};
    CHECK(dice(pred, gt, 1) == doctest::Approx(0.6));
    // Both empty -> 1 by convention.
    CHECK(dice({0, 0}, {0, 0}, 1) == 1.0);
    CHECK_THROWS_AS(dice({1}, {1, 0}, 1), std::invalid_argument);
}

TEST_CASE("dice is symmetric in its arguments") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<uint8_t> a(50), b(50);
        for (auto& x : a) x = rng.coin();
        for (auto& x : b) x = rng.coin();
        CHECK(dice(a, b, 1) == dice(b, a, 1));
    }
}

TEST_CASE("generalized dice: identity, half split, counting oracle") {
    const std::vector<uint8_t> gt{0, 0, 1, 1};
    CHECK(generalized_dice(gt, gt, {0, 1}) == 1.0);

    // All-zero prediction against a half/half truth -> 0.5 by the formula.
    std::vector<uint8_t> pred(100, 0), half(100, 0);
    for (int i = 0; i < 50; ++i) half[i] = 1;
    CHECK(generalized_dice(pred, half, {0, 1}) == doctest::Approx(0.5));

    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<uint8_t> a(64), b(64);
        for (auto& x : a) x = rng.coin();
        for (auto& x : b) x = rng.coin();
        // Independent set-count oracle.
        double inter = 0, total = 0;
        for (uint8_t cls : {0, 1}) {
            size_t ia = 0, ib = 0, ii = 0;
            for (size_t i = 0; i < a.size(); ++i) {
                ia += a[i] == cls;
                ib += b[i] == cls;
                ii += a[i] == cls && b[i] == cls;
            }
            inter += static_cast<double>(ii);
            total += static_cast<double>(ia + ib);
        }
        CHECK(std::abs(generalized_dice(a, b, {0, 1}) - 2.0 * inter / total) < 1e-12);
    }
}

TEST_CASE("gdice expands to the per-class dice counts") {
    Rng rng(3);
    std::vector<uint8_t> a(80), b(80);
    for (auto& x : a) x = rng.coin();
    for (auto& x : b) x = rng.coin();
    size_t n0a = 0, n0b = 0, i0 = 0, n1a = 0, n1b = 0, i1 = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i]) ++n1a; else ++n0a;
        if (b[i]) ++n1b; else ++n0b;
        if (a[i] && b[i]) ++i1;
        if (!a[i] && !b[i]) ++i0;
    }
    const double want = 2.0 * static_cast<double>(i0 + i1) /
                        static_cast<double>(n0a + n0b + n1a + n1b);
    CHECK(generalized_dice(a, b, {0, 1}) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("confusion statistics: perfect, all-scar, and the tally oracle") {
    const std::vector<uint8_t> gt{1, 0, 1, 0, 0};
    auto perfect = confusion_stats(gt, gt);
    CHECK(perfect.accuracy == 1.0);
    CHECK(*perfect.sensitivity == 1.0);
    CHECK(*perfect.specificity == 1.0);

    const std::vector<uint8_t> all_scar(5, 1);
    auto r = confusion_stats(all_scar, gt);
    CHECK(*r.sensitivity == 1.0);
    CHECK(*r.specificity == 0.0);

    // Undefined marker: no positives in the ground truth.
    auto undef = confusion_stats({0, 0, 1}, {0, 0, 0});
    CHECK(!undef.sensitivity.has_value());
    CHECK(undef.specificity.has_value());

    Rng rng(4);
    std::vector<uint8_t> pred(60), truth(60);
    for (auto& x : pred) x = rng.coin();
    for (auto& x : truth) x = rng.coin();
    auto stats = confusion_stats(pred, truth);
    size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        tp += pred[i] && truth[i];
        tn += !pred[i] && !truth[i];
        fp += pred[i] && !truth[i];
        fn += !pred[i] && truth[i];
    }
    CHECK(stats.tp == tp);
    CHECK(stats.tn == tn);
    CHECK(stats.fp == fp);
    CHECK(stats.fn == fn);
    CHECK(stats.accuracy == doctest::Approx(static_cast<double>(tp + tn) / 60.0));
}

TEST_CASE("accuracy is invariant under label swap with metric relabeling") {
    Rng rng(5);
    std::vector<uint8_t> pred(40), gt(40);
    for (auto& x : pred) x = rng.coin();
    for (auto& x : gt) x = rng.coin();
    auto straight = confusion_stats(pred, gt);
    std::vector<uint8_t> pred_sw(40), gt_sw(40);
    for (size_t i = 0; i < 40; ++i) {
        pred_sw[i] = 1 - pred[i];
        gt_sw[i] = 1 - gt[i];
    }
    auto swapped = confusion_stats(pred_sw, gt_sw);
    CHECK(straight.accuracy == swapped.accuracy);
    CHECK(*straight.sensitivity == *swapped.specificity);
    CHECK(*straight.specificity == *swapped.sensitivity);
}

TEST_CASE("correlation on exact linear relations") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    auto c = correlation(x, y);
    CHECK(c.pearson == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.r_squared == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    CHECK(correlation(x, neg).pearson == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK_THROWS_AS(correlation({1, 2}, {3, 4}), std::invalid_argument);
    CHECK_THROWS_AS(correlation({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("correlation matches the textbook formulas on random data") {
    Rng rng(6);
    std::vector<double> x(30), y(30);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(-5, 5);
        y[i] = 0.6 * x[i] + rng.normal(0, 1);
    }
    const auto c = correlation(x, y);

    // Direct recomputation.
    const double n = 30;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double pearson = (n * sxy - sx * sy) /
                           std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(c.pearson == doctest::Approx(pearson).epsilon(1e-10));
    // R^2 of simple linear regression equals the squared Pearson coefficient.
    CHECK(c.r_squared == doctest::Approx(pearson * pearson).epsilon(1e-10));
}

TEST_CASE("spearman uses average ranks on ties") {
    const std::vector<double> x{1, 2, 2, 3, 4, 5};
    const std::vector<double> y{1, 2, 3, 4, 5, 6};
    const auto c = correlation(x, y);
    CHECK(c.spearman > 0.97);
    CHECK(c.spearman < 1.0);  // the tie keeps it strictly below 1
}

TEST_CASE("mean/sd aggregation") {
    const auto ms = mean_sd({1.0, 2.0, 3.0, 4.0});
    CHECK(ms.mean == doctest::Approx(2.5));
    CHECK(ms.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(mean_sd({}).n == 0);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace lascar {

/// Overlap of class c between two labelings of the same mesh. Both sets empty
/// yields 1 by convention.
inline double dice(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                   uint8_t cls) {
    if (pred.size() != gt.size()) throw std::invalid_argument("label length mismatch");
    size_t a = 0, b = 0, both = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool pa = pred[i] == cls, pb = gt[i] == cls;
        a += pa;
        b += pb;
        both += pa && pb;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

/// Label-weighted Dice over every class in label_set.
inline double generalized_dice(const std::vector<uint8_t>& pred,
                               const std::vector<uint8_t>& gt,
                               const std::vector<uint8_t>& label_set) {
    if (pred.size() != gt.size()) throw std::invalid_argument("label length mismatch");
    size_t inter = 0, total = 0;
    for (uint8_t cls : label_set) {
        for (size_t i = 0; i < pred.size(); ++i) {
            const bool pa = pred[i] == cls, pb = gt[i] == cls;
            inter += pa && pb;
            total += static_cast<size_t>(pa) + static_cast<size_t>(pb);
        }
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

struct EvalReport {
    size_t tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 0.0;
    std::optional<double> sensitivity;  // unset when no positives in gt
    std::optional<double> specificity;  // unset when no negatives in gt
    double dice_scar = 0.0;
    double gdice = 0.0;
};

/// Binary confusion statistics; undefined ratios stay unset rather than 0/0.
inline EvalReport confusion_stats(const std::vector<uint8_t>& pred,
                                  const std::vector<uint8_t>& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("label length mismatch");
    if (pred.empty()) throw std::invalid_argument("empty labelings");
    EvalReport r;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (gt[i]) {
            ++(pred[i] ? r.tp : r.fn);
        } else {
            ++(pred[i] ? r.fp : r.tn);
        }
    }
    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(pred.size());
    if (r.tp + r.fn > 0)
        r.sensitivity = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    if (r.tn + r.fp > 0)
        r.specificity = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
    r.dice_scar = dice(pred, gt, 1);
    r.gdice = generalized_dice(pred, gt, {0, 1});
    return r;
}

struct CorrelationStats {
    double pearson = 0.0;
    double spearman = 0.0;
    double r_squared = 0.0;
};

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson_of(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("zero variance in correlation input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Pearson, Spearman (average ranks on ties) and the R^2 of the least-squares
/// line y ~ x.
inline CorrelationStats correlation(const std::vector<double>& x,
                                    const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("series length mismatch");
    if (x.size() < 3) throw std::invalid_argument("need at least 3 points");
    CorrelationStats out;
    out.pearson = detail::pearson_of(x, y);
    out.spearman = detail::pearson_of(detail::average_ranks(x), detail::average_ranks(y));
    // For simple linear regression R^2 equals the squared Pearson coefficient;
    // computed via the residual form to keep it an independent quantity.
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (slope * x[i] + intercept);
        ss_res += r * r;
    }
    out.r_squared = 1.0 - ss_res / syy;
    return out;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
    size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    out.n = xs.size();
    if (xs.empty()) return out;
    for (double v : xs) out.mean += v;
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double s = 0.0;
        for (double v : xs) s += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(s / static_cast<double>(xs.size() - 1));
    }
    return out;
}

}  // namespace lascar

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlce/embedding.hpp"
#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"

namespace nlce {

// Evaluation quantities: Acc_t, Acc_r, harmonic overall score, KID (unbiased
// squared MMD), a CLIP-score analog, and a masked-region distance.

struct EvaluationReport {
    double acc_t = 0.0;        // percent
    double acc_r = 0.0;        // percent
    double h_o = 0.0;          // percent
    double kid = 0.0;
    double clip_analog = 0.0;  // x100 cosine, mean
    std::optional<double> masked_distance;  // masked_l2
    nlohmann::ordered_json metadata;
};

// H_o = 2 / ((1 - acc_t)^-1 + acc_r^-1) on fractions, returned as percent.
// Defined as 0 when either denominator term is degenerate.
inline double harmonic_overall(double acc_t_pct, double acc_r_pct) {
    if (acc_t_pct < 0.0 || acc_t_pct > 100.0 || acc_r_pct < 0.0 || acc_r_pct > 100.0)
        throw DataError("harmonic_overall: accuracies must lie in [0, 100]");
    const double forget = 1.0 - acc_t_pct / 100.0;
    const double retain = acc_r_pct / 100.0;
    if (forget == 0.0 || retain == 0.0) return 0.0;
    return 100.0 * 2.0 / (1.0 / forget + 1.0 / retain);
}

// target given: fraction predicted == target (Acc_t). Otherwise fraction
// predicted == truth (Acc_r).
inline double accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& truths,
                       const std::optional<std::string>& target = std::nullopt) {
    if (predictions.empty() || predictions.size() != truths.size())
        throw DataError("accuracy: empty or mismatched label sequences");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (target ? (predictions[i] == *target) : (predictions[i] == truths[i])) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace detail {

// Polynomial degree-3 kernel: k(x, y) = (x.y / p + 1)^3.
inline double poly3_kernel(const Vec& x, const Vec& y) {
    const double p = static_cast<double>(x.size());
    const double v = dot(x, y) / p + 1.0;
    return v * v * v;
}

// Pairwise (cascade) summation to keep kernel sums schedule-independent.
inline double pairwise_sum(const std::vector<double>& terms, std::size_t lo, std::size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += terms[i];
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(terms, lo, mid) + pairwise_sum(terms, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& terms) {
    return terms.empty() ? 0.0 : pairwise_sum(terms, 0, terms.size());
}

}  // namespace detail

// Unbiased squared-MMD estimator; diagonal terms excluded from within-set
// sums. Cross pairs whose vectors compare bitwise-equal are treated as the
// cross diagonal and excluded too, so identical multisets score exactly 0
// regardless of ordering. When every cross pair is equal (constant sets) the
// exclusion would leave nothing, so the full cross mean is used instead.
inline double kid(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n < 2 || m < 2) throw DataError("kid: need at least 2 samples per set");
    std::vector<double> aa, bb, ab, ab_all;
    aa.reserve(n * (n - 1));
    bb.reserve(m * (m - 1));
    ab.reserve(n * m);
    ab_all.reserve(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) aa.push_back(detail::poly3_kernel(a[i], a[j]));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) bb.push_back(detail::poly3_kernel(b[i], b[j]));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double k = detail::poly3_kernel(a[i], b[j]);
            ab_all.push_back(k);
            if (a[i] != b[j]) ab.push_back(k);
        }
    const double ea = detail::pairwise_sum(aa) / (static_cast<double>(n) * (n - 1));
    const double eb = detail::pairwise_sum(bb) / (static_cast<double>(m) * (m - 1));
    const double eab =
        ab.empty() ? detail::pairwise_sum(ab_all) / static_cast<double>(ab_all.size())
                   : detail::pairwise_sum(ab) / static_cast<double>(ab.size());
    return ea + eb - 2.0 * eab;
}

// 100 * cosine(prompt embedding, image feature).
inline double clip_analog(const Vec& prompt_embed, const Vec& image_feature) {
    return 100.0 * cosine(prompt_embed, image_feature);
}

// Mean over pixels outside the exclusion mask of the per-pixel feature L2
// gap. Images are (H*W) x d with pixels as rows; mask is H x W.
inline double masked_distance(const Matrix& img_a, const Matrix& img_b,
                              const Matrix& exclusion_mask) {
    if (img_a.rows() != img_b.rows() || img_a.cols() != img_b.cols())
        throw ShapeError("masked_distance: image shape mismatch");
    const std::size_t N = exclusion_mask.rows() * exclusion_mask.cols();
    if (N != img_a.rows()) throw ShapeError("masked_distance: mask does not match images");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < N; ++p) {
        if (exclusion_mask.data()[p] != 0.0) continue;
        double sq = 0.0;
        for (std::size_t j = 0; j < img_a.cols(); ++j) {
            const double diff = img_a(p, j) - img_b(p, j);
            sq += diff * diff;
        }
        total += std::sqrt(sq);
        ++count;
    }
    if (count == 0) throw DataError("masked_distance: exclusion mask leaves no pixels");
    return total / static_cast<double>(count);
}

// 6 significant digits for report floats.
inline double round_sig6(double v) {
    if (v == 0.0 || !std::isfinite(v)) return v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

// Fixed key order, floats at 6 significant digits.
inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
    nlohmann::ordered_json j;
    j["acc_t"] = round_sig6(r.acc_t);
    j["acc_r"] = round_sig6(r.acc_r);
    j["h_o"] = round_sig6(r.h_o);
    j["kid"] = round_sig6(r.kid);
    j["clip_analog"] = round_sig6(r.clip_analog);
    if (r.masked_distance)
        j["masked_l2"] = round_sig6(*r.masked_distance);
    else
        j["masked_l2"] = nullptr;
    j["metadata"] = r.metadata;
    return j;
}

}  // namespace nlce

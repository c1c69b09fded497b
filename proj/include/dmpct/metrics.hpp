#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmpct/dataset.hpp"
#include "dmpct/fusion.hpp"
#include "dmpct/parallel.hpp"

namespace dmpct {

/// Dice overlap of organ `k` between two masks: 2|Z n Y| / (|Z| + |Y|).
/// Both empty -> 1.0, exactly one empty -> 0.0.
inline double dsc(const LabelMask& prediction, const LabelMask& truth, std::uint8_t organ) {
    if (prediction.dims() != truth.dims())
        throw DimsMismatch("prediction dims " + to_string(prediction.dims()) + " vs truth " + to_string(truth.dims()));
    if (organ == 0) throw InvalidArgument("organ label must be >= 1");
    std::size_t z = 0, y = 0, both = 0;
    const auto pz = prediction.labels().data(), ty = truth.labels().data();
    for (std::size_t i = 0; i < pz.size(); ++i) {
        const bool in_z = pz[i] == organ, in_y = ty[i] == organ;
        z += in_z;
        y += in_y;
        both += in_z && in_y;
    }
    if (z + y == 0) return 1.0;
    return 2.0 * double(both) / double(z + y);
}

/// Sample mean and standard deviation (n - 1); std is 0 for n < 2.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / double(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / double(values.size() - 1));
    }
    return out;
}

/// Per-organ DSC summary. `organ == 0` marks the mean row.
struct OrganReport {
    std::uint16_t organ = 0;
    std::vector<double> per_case;
    double mean = 0.0;
    double std = 0.0;
    std::optional<double> p_value;

    static OrganReport from_values(std::uint16_t organ, std::vector<double> values) {
        OrganReport r;
        r.organ = organ;
        r.per_case = std::move(values);
        const MeanStd ms = mean_std(r.per_case);
        r.mean = ms.mean;
        r.std = ms.std;
        return r;
    }
};

/// Per-organ rows plus the mean row. The mean row's per-case value is the mean over
/// organs for that case, so its mean equals the mean of the per-organ means.
struct EvaluationReport {
    std::vector<std::string> case_ids;
    std::vector<OrganReport> organs;
    OrganReport mean_row;
};

/// DSC table from per-case predictions; `dscs[c][k-1]` is organ k on case c.
inline EvaluationReport summarize(std::vector<std::string> case_ids, const std::vector<std::vector<double>>& dscs,
                                  std::uint16_t num_classes) {
    EvaluationReport rep;
    rep.case_ids = std::move(case_ids);
    std::vector<double> case_means;
    for (const auto& row : dscs) {
        if (row.size() != num_classes) throw InvalidArgument("per-case DSC row has the wrong organ count");
        double s = 0.0;
        for (double v : row) s += v;
        case_means.push_back(num_classes ? s / double(num_classes) : 0.0);
    }
    for (std::uint16_t k = 1; k <= num_classes; ++k) {
        std::vector<double> vals;
        vals.reserve(dscs.size());
        for (const auto& row : dscs) vals.push_back(row[k - 1]);
        rep.organs.push_back(OrganReport::from_values(k, std::move(vals)));
    }
    rep.mean_row = OrganReport::from_values(0, std::move(case_means));
    return rep;
}

/// Fused inference on every test case, scored per organ.
template <SliceSegmenter Model>
EvaluationReport evaluate(const PlaneModelBundle<Model>& bundle, std::span<const LabeledCase> test,
                          std::uint16_t num_classes, std::span<const WindowSpec> windows, unsigned workers = 1) {
    std::vector<std::vector<double>> dscs(test.size());
    parallel_for(test.size(), workers, [&](std::size_t c) {
        if (test[c].mask.num_classes() != num_classes)
            throw InvalidArgument("test case " + test[c].id + " has K=" + std::to_string(test[c].mask.num_classes()));
        FusionOptions fo;
        fo.record_provenance = false;
        const auto pred = predict_volume(bundle, test[c].volume, windows, num_classes, fo);
        for (std::uint16_t k = 1; k <= num_classes; ++k)
            dscs[c].push_back(dsc(pred.fused.labels, test[c].mask, static_cast<std::uint8_t>(k)));
    });
    std::vector<std::string> ids;
    for (const auto& c : test) ids.push_back(c.id);
    return summarize(std::move(ids), dscs, num_classes);
}

inline constexpr std::size_t kExactWilcoxonMax = 9;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are dropped;
/// tied |differences| get average ranks. Up to kExactWilcoxonMax non-zero differences
/// the p-value is exact: the null distribution of W+ over all 2^n sign patterns is
/// counted on doubled (integer) ranks, so ties are handled too. Beyond that the normal
/// approximation with tie-corrected variance and no continuity correction is used.
/// Returns 1.0 when every difference is zero.
inline double paired_significance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("paired samples must have equal length");
    if (a.size() < 5) throw InvalidArgument("paired significance needs at least 5 pairs, got " + std::to_string(a.size()));
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
    const std::size_t n = d.size();
    if (n == 0) return 1.0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    std::vector<double> rank(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const double avg = (double(i + 1) + double(j + 1)) / 2.0;
        for (std::size_t q = i; q <= j; ++q) rank[order[q]] = avg;
        const double t = double(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    double w_plus = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rank_sum += rank[i];
        if (d[i] > 0) w_plus += rank[i];
    }
    const double mu = rank_sum / 2.0;

    if (n <= kExactWilcoxonMax) {
        // counts[s] = number of sign patterns whose doubled W+ equals s
        std::vector<int> r2(n);
        int total = 0;
        for (std::size_t i = 0; i < n; ++i) total += r2[i] = static_cast<int>(std::lround(2.0 * rank[i]));
        std::vector<double> counts(std::size_t(total) + 1, 0.0);
        counts[0] = 1.0;
        int reach = 0;
        for (int r : r2) {
            for (int s = reach; s >= 0; --s) counts[std::size_t(s + r)] += counts[std::size_t(s)];
            reach += r;
        }
        const double observed = std::abs(4.0 * w_plus - double(total));
        double extreme = 0.0, patterns = 0.0;
        for (int s = 0; s <= total; ++s) {
            patterns += counts[std::size_t(s)];
            if (std::abs(2.0 * s - double(total)) >= observed - 1e-9) extreme += counts[std::size_t(s)];
        }
        return std::min(1.0, extreme / patterns);
    }

    const double nn = double(n);
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) return 1.0;
    const double z = (w_plus - mu) / std::sqrt(var);
    return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

/// Fills p-values of `target` against `baseline` (same cases, same organs).
inline void attach_p_values(EvaluationReport& target, const EvaluationReport& baseline) {
    if (target.organs.size() != baseline.organs.size() || target.case_ids != baseline.case_ids)
        throw InvalidArgument("reports cover different organs or test cases");
    for (std::size_t k = 0; k < target.organs.size(); ++k)
        target.organs[k].p_value = paired_significance(target.organs[k].per_case, baseline.organs[k].per_case);
    target.mean_row.p_value = paired_significance(target.mean_row.per_case, baseline.mean_row.per_case);
}

} // namespace dmpct

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mceval/capability.hpp"
#include "mceval/common.hpp"
#include "mceval/memorization.hpp"
#include "mceval/stats.hpp"

namespace mceval {

using stats::pearson;
using stats::PearsonResult;
using stats::welch_t_test;

// One item with both metrics attached; the unit of every analysis below.
struct ScoredItem {
    std::string id;
    double f_m = 0.0;
    double f_c = 0.0;
    std::set<std::string> tags;
    bool memorized = false;
    std::vector<double> embedding;
};

// ---------------------------------------------------------------------------
// Quintile binning and the 5x5 heatmap
// ---------------------------------------------------------------------------

// Balanced quantile assignment: sort ascending (ties broken by id, stable),
// cut into `bins` contiguous blocks whose sizes differ by at most one, the
// first n%bins blocks taking the extra item. Bin 0 holds the lowest values.
inline std::vector<int> quantile_bins(const std::vector<double>& values,
                                      const std::vector<std::string>& ids, int bins) {
    const size_t n = values.size();
    if (ids.size() != n) throw Error("quantile_bins: ids/values length mismatch");
    if (n < static_cast<size_t>(bins)) throw Error("quantile_bins: need at least one item per bin");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return ids[a] < ids[b];
    });
    std::vector<int> bin(n);
    size_t q = n / static_cast<size_t>(bins), r = n % static_cast<size_t>(bins);
    size_t pos = 0;
    for (int b = 0; b < bins; ++b) {
        size_t size = q + (static_cast<size_t>(b) < r ? 1 : 0);
        for (size_t i = 0; i < size; ++i) bin[order[pos++]] = b;
    }
    return bin;
}

inline std::vector<int> quintile_bins(const std::vector<double>& values,
                                      const std::vector<std::string>& ids) {
    return quantile_bins(values, ids, 5);
}

struct Heatmap5x5 {
    std::array<std::array<size_t, 5>, 5> counts{};   // [f_m quintile][f_c quintile], weak -> strong
    std::array<size_t, 5> fm_sizes{}, fc_sizes{};
    std::array<double, 5> fm_lo{}, fm_hi{}, fc_lo{}, fc_hi{};   // observed bin edges
    size_t total = 0;
};

inline Heatmap5x5 build_heatmap(const std::vector<ScoredItem>& items) {
    std::vector<double> fm, fc;
    std::vector<std::string> ids;
    fm.reserve(items.size());
    fc.reserve(items.size());
    ids.reserve(items.size());
    for (const auto& it : items) {
        fm.push_back(it.f_m);
        fc.push_back(it.f_c);
        ids.push_back(it.id);
    }
    auto fm_bin = quintile_bins(fm, ids);
    auto fc_bin = quintile_bins(fc, ids);
    Heatmap5x5 h;
    h.total = items.size();
    for (auto& row : h.counts) row.fill(0);
    h.fm_lo.fill(std::numeric_limits<double>::infinity());
    h.fc_lo.fill(std::numeric_limits<double>::infinity());
    h.fm_hi.fill(-std::numeric_limits<double>::infinity());
    h.fc_hi.fill(-std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < items.size(); ++i) {
        int bm = fm_bin[i], bc = fc_bin[i];
        ++h.counts[static_cast<size_t>(bm)][static_cast<size_t>(bc)];
        ++h.fm_sizes[static_cast<size_t>(bm)];
        ++h.fc_sizes[static_cast<size_t>(bc)];
        h.fm_lo[static_cast<size_t>(bm)] = std::min(h.fm_lo[static_cast<size_t>(bm)], fm[i]);
        h.fm_hi[static_cast<size_t>(bm)] = std::max(h.fm_hi[static_cast<size_t>(bm)], fm[i]);
        h.fc_lo[static_cast<size_t>(bc)] = std::min(h.fc_lo[static_cast<size_t>(bc)], fc[i]);
        h.fc_hi[static_cast<size_t>(bc)] = std::max(h.fc_hi[static_cast<size_t>(bc)], fc[i]);
    }
    return h;
}

// Corner semantics on the quintile grid. Rote = strong memorization with
// weak capability; genuine = the opposite. The same-sign corners (weak/weak,
// strong/strong) are what the filtered exceedance sweep drops.
enum class Corner { rote, genuine, low_both, high_both, interior };

inline Corner classify_corner(int fm_bin, int fc_bin, int size = 2) {
    bool fm_high = fm_bin >= 5 - size, fm_low = fm_bin <= size - 1;
    bool fc_high = fc_bin >= 5 - size, fc_low = fc_bin <= size - 1;
    if (fm_high && fc_low) return Corner::rote;
    if (fm_low && fc_high) return Corner::genuine;
    if (fm_low && fc_low) return Corner::low_both;
    if (fm_high && fc_high) return Corner::high_both;
    return Corner::interior;
}

// Fraction of items inside the rote plus genuine size x size corner blocks.
// The two size-3 blocks share the center cell; shared cells count once.
inline double corner_mass(const Heatmap5x5& h, int size) {
    if (size != 2 && size != 3) throw Error("corner_mass: size must be 2 or 3");
    if (h.total == 0) throw Error("corner_mass: empty heatmap");
    std::array<std::array<bool, 5>, 5> in_corner{};
    for (int r = 5 - size; r < 5; ++r)
        for (int c = 0; c < size; ++c) in_corner[static_cast<size_t>(r)][static_cast<size_t>(c)] = true;
    for (int r = 0; r < size; ++r)
        for (int c = 5 - size; c < 5; ++c) in_corner[static_cast<size_t>(r)][static_cast<size_t>(c)] = true;
    size_t mass = 0;
    for (size_t r = 0; r < 5; ++r)
        for (size_t c = 0; c < 5; ++c)
            if (in_corner[r][c]) mass += h.counts[r][c];
    return static_cast<double>(mass) / static_cast<double>(h.total);
}

// Per-item corner labels from the size-2 blocks of the quintile grid.
inline std::vector<Corner> corner_labels(const std::vector<ScoredItem>& items, int size = 2) {
    std::vector<double> fm, fc;
    std::vector<std::string> ids;
    for (const auto& it : items) {
        fm.push_back(it.f_m);
        fc.push_back(it.f_c);
        ids.push_back(it.id);
    }
    auto fm_bin = quintile_bins(fm, ids);
    auto fc_bin = quintile_bins(fc, ids);
    std::vector<Corner> out(items.size());
    for (size_t i = 0; i < items.size(); ++i) out[i] = classify_corner(fm_bin[i], fc_bin[i], size);
    return out;
}

// ---------------------------------------------------------------------------
// Exceedance / t-test threshold sweep
// ---------------------------------------------------------------------------

struct CurvePoint {
    double threshold = 0.0;        // an observed f_m value
    double exceedance = 0.0;       // P(F_c of group-below > F_c of group-above), ties half
    double t_test_p = 1.0;         // Welch two-sided p between the groups' F_c
    size_t n_below = 0;            // f_m <  threshold
    size_t n_above = 0;            // f_m >= threshold
    bool exceedance_defined = false;
    bool t_test_defined = false;
};

namespace detail {

class Fenwick {
public:
    explicit Fenwick(size_t n) : tree_(n + 1, 0) {}
    void add(size_t i, int64_t v) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
    }
    // sum of ranks [0, i)
    int64_t prefix(size_t i) const {
        int64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }
    int64_t total() const { return prefix(tree_.size() - 1); }

private:
    std::vector<int64_t> tree_;
};

struct RunningGroup {
    long double sum = 0.0L, sumsq = 0.0L;
    size_t n = 0;
    void add(double x) { sum += x; sumsq += static_cast<long double>(x) * x; ++n; }
    void remove(double x) { sum -= x; sumsq -= static_cast<long double>(x) * x; --n; }
    double mean() const { return static_cast<double>(sum / static_cast<long double>(n)); }
    double variance() const {
        long double v = (sumsq - sum * sum / static_cast<long double>(n)) /
                        static_cast<long double>(n - 1);
        return v > 0.0L ? static_cast<double>(v) : 0.0;
    }
};

} // namespace detail

// Sweeps every unique f_m value as a threshold splitting items into a
// low-memorization group (f_m < t) and a high-memorization group (f_m >= t).
// Exceedance is the cross-pair probability that a low-group item's F_c
// exceeds a high-group item's F_c, ties counted one half; the pair count is
// maintained incrementally over F_c ranks, so the whole sweep is O(n log n).
// Thresholds that make a group empty are emitted with the flags cleared.
inline std::vector<CurvePoint> exceedance_curve(std::vector<ScoredItem> items,
                                                bool filter_same_sign_corners = false) {
    if (filter_same_sign_corners) {
        auto corners = corner_labels(items, 2);
        std::vector<ScoredItem> kept;
        kept.reserve(items.size());
        for (size_t i = 0; i < items.size(); ++i)
            if (corners[i] != Corner::low_both && corners[i] != Corner::high_both)
                kept.push_back(std::move(items[i]));
        items = std::move(kept);
    }
    const size_t n = items.size();
    std::vector<CurvePoint> curve;
    if (n == 0) return curve;
    std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.f_m != b.f_m) return a.f_m < b.f_m;
        return a.id < b.id;
    });

    // F_c rank compression (equal values share a rank)
    std::vector<double> fc_sorted;
    fc_sorted.reserve(n);
    for (const auto& it : items) fc_sorted.push_back(it.f_c);
    std::sort(fc_sorted.begin(), fc_sorted.end());
    fc_sorted.erase(std::unique(fc_sorted.begin(), fc_sorted.end()), fc_sorted.end());
    auto rank_of = [&](double v) {
        return static_cast<size_t>(std::lower_bound(fc_sorted.begin(), fc_sorted.end(), v) -
                                   fc_sorted.begin());
    };

    detail::Fenwick below_tree(fc_sorted.size()), above_tree(fc_sorted.size());
    detail::RunningGroup below, above;
    for (const auto& it : items) {
        above_tree.add(rank_of(it.f_c), 1);
        above.add(it.f_c);
    }
    int64_t pair_halves = 0;   // sum over cross pairs of 2*[gt] + 1*[eq]

    size_t moved = 0;
    size_t i = 0;
    while (i < n) {
        double threshold = items[i].f_m;
        // move every item with f_m < threshold into the below group
        while (moved < n && items[moved].f_m < threshold) {
            size_t r = rank_of(items[moved].f_c);
            double v = items[moved].f_c;
            above_tree.add(r, -1);
            above.remove(v);
            // retire its pairs as an above-group member
            int64_t below_gt = below_tree.total() - below_tree.prefix(r + 1);
            int64_t below_eq = below_tree.prefix(r + 1) - below_tree.prefix(r);
            pair_halves -= 2 * below_gt + below_eq;
            // enroll its pairs as a below-group member
            int64_t above_lt = above_tree.prefix(r);
            int64_t above_eq = above_tree.prefix(r + 1) - above_tree.prefix(r);
            pair_halves += 2 * above_lt + above_eq;
            below_tree.add(r, 1);
            below.add(v);
            ++moved;
        }
        CurvePoint pt;
        pt.threshold = threshold;
        pt.n_below = below.n;
        pt.n_above = above.n;
        if (below.n > 0 && above.n > 0) {
            pt.exceedance_defined = true;
            pt.exceedance = static_cast<double>(pair_halves) /
                            (2.0 * static_cast<double>(below.n) * static_cast<double>(above.n));
        }
        if (below.n >= 2 && above.n >= 2) {
            double va = below.variance(), vb = above.variance();
            if (va > 0.0 || vb > 0.0) {
                double na = static_cast<double>(below.n), nb = static_cast<double>(above.n);
                double sea = va / na, seb = vb / nb;
                double t = (below.mean() - above.mean()) / std::sqrt(sea + seb);
                double df = (sea + seb) * (sea + seb) /
                            (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
                pt.t_test_p = stats::t_two_sided_p(t, df);
                pt.t_test_defined = true;
            }
        }
        curve.push_back(pt);
        // skip to the next unique threshold
        while (i < n && items[i].f_m == threshold) ++i;
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Embedding nearest-neighbor distance comparison
// ---------------------------------------------------------------------------

enum class DistanceMetric { unit_euclidean, euclidean };

struct ItemNeighborDistance {
    std::string id;
    Corner corner = Corner::interior;
    double mean_distance = 0.0;
    size_t neighbors = 0;
};

struct EmbeddingDistanceReport {
    double closeness_percent = 1.0;
    DistanceMetric metric = DistanceMetric::unit_euclidean;
    double rote_mean = std::numeric_limits<double>::quiet_NaN();
    double genuine_mean = std::numeric_limits<double>::quiet_NaN();
    size_t rote_n = 0, genuine_n = 0;
    std::vector<ItemNeighborDistance> per_item;
};

// Per item: mean distance to its closest max(1, floor(N*closeness/100))
// neighbors among all qualified items, then averaged within the rote and
// genuine size-2 corner groups. Default metric is Euclidean on
// unit-normalized vectors (same ordering as cosine distance).
inline EmbeddingDistanceReport embedding_distance_report(const std::vector<ScoredItem>& items,
                                                         double closeness_percent = 1.0,
                                                         DistanceMetric metric = DistanceMetric::unit_euclidean) {
    const size_t n = items.size();
    if (n < 2) throw Error("embedding_distance_report: need at least 2 items");
    size_t dim = items.front().embedding.size();
    if (dim == 0) throw Error("embedding_distance_report: missing embeddings");
    std::vector<std::vector<double>> vecs(n);
    for (size_t i = 0; i < n; ++i) {
        if (items[i].embedding.size() != dim)
            throw Error("embedding_distance_report: missing or inconsistent embedding for item " +
                        items[i].id);
        vecs[i] = items[i].embedding;
        if (metric == DistanceMetric::unit_euclidean) {
            double norm = 0.0;
            for (double x : vecs[i]) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) throw Error("embedding_distance_report: zero embedding for item " + items[i].id);
            for (double& x : vecs[i]) x /= norm;
        }
    }
    size_t k = std::max<size_t>(1, static_cast<size_t>(std::floor(
                   static_cast<double>(n) * closeness_percent / 100.0)));
    k = std::min(k, n - 1);

    auto corners = corner_labels(items, 2);
    EmbeddingDistanceReport report;
    report.closeness_percent = closeness_percent;
    report.metric = metric;

    double rote_sum = 0.0, genuine_sum = 0.0;
    std::vector<double> dists(n);
    for (size_t i = 0; i < n; ++i) {
        size_t m = 0;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (size_t t = 0; t < dim; ++t) {
                double diff = vecs[i][t] - vecs[j][t];
                d2 += diff * diff;
            }
            dists[m++] = std::sqrt(d2);
        }
        std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         dists.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k));
        double sum = 0.0;
        for (size_t t = 0; t < k; ++t) sum += dists[t];
        double mean_d = sum / static_cast<double>(k);
        report.per_item.push_back({items[i].id, corners[i], mean_d, k});
        if (corners[i] == Corner::rote) {
            rote_sum += mean_d;
            ++report.rote_n;
        } else if (corners[i] == Corner::genuine) {
            genuine_sum += mean_d;
            ++report.genuine_n;
        }
    }
    if (report.rote_n > 0) report.rote_mean = rote_sum / static_cast<double>(report.rote_n);
    if (report.genuine_n > 0) report.genuine_mean = genuine_sum / static_cast<double>(report.genuine_n);
    return report;
}

// ---------------------------------------------------------------------------
// Subset accuracy (memorized vs non-memorized)
// ---------------------------------------------------------------------------

struct SubsetAccuracyRow {
    std::string setting;               // shot-setting label, e.g. "0s"/"5s"
    size_t n_memorized = 0, n_non_memorized = 0;
    size_t correct_memorized = 0, correct_non_memorized = 0;
    double acc_memorized = 0.0, acc_non_memorized = 0.0;
    double relative_difference = 0.0;  // (acc_non - acc_mem) / acc_non
};

struct SubsetAccuracyTable {
    std::vector<SubsetAccuracyRow> rows;
    size_t skipped_failed = 0;         // outcomes for items the partition failed on
};

inline SubsetAccuracyTable subset_accuracy_report(const std::vector<AnswerOutcome>& outcomes,
                                                  const PartitionResult& partition) {
    std::set<std::string> mem(partition.memorized.begin(), partition.memorized.end());
    std::set<std::string> non(partition.non_memorized.begin(), partition.non_memorized.end());
    std::set<std::string> failed(partition.failed.begin(), partition.failed.end());
    std::map<std::string, SubsetAccuracyRow> rows;
    SubsetAccuracyTable table;
    for (const auto& o : outcomes) {
        if (failed.count(o.item_id)) {
            ++table.skipped_failed;
            continue;
        }
        bool is_mem = mem.count(o.item_id) > 0;
        if (!is_mem && !non.count(o.item_id))
            throw Error("subset_accuracy_report: outcome id not in partition: " + o.item_id);
        auto& row = rows[o.setting];
        row.setting = o.setting;
        if (is_mem) {
            ++row.n_memorized;
            if (o.correct) ++row.correct_memorized;
        } else {
            ++row.n_non_memorized;
            if (o.correct) ++row.correct_non_memorized;
        }
    }
    for (auto& [_, row] : rows) {
        if (row.n_memorized > 0)
            row.acc_memorized = static_cast<double>(row.correct_memorized) /
                                static_cast<double>(row.n_memorized);
        if (row.n_non_memorized > 0)
            row.acc_non_memorized = static_cast<double>(row.correct_non_memorized) /
                                    static_cast<double>(row.n_non_memorized);
        if (row.acc_non_memorized > 0.0)
            row.relative_difference =
                (row.acc_non_memorized - row.acc_memorized) / row.acc_non_memorized;
        table.rows.push_back(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Delta F_m curve aggregation (means per format x level, reduce ordered by id)
// ---------------------------------------------------------------------------

struct DeltaCurvePoint {
    EvocationLevel level = EvocationLevel::clean;
    ItemFormat format = ItemFormat::original;
    double mean_delta = 0.0;
    size_t n = 0;
};

inline std::vector<DeltaCurvePoint> aggregate_delta_curves(
    const std::vector<MemorizationScore>& scores) {
    // clean baseline per (id, format)
    std::map<std::pair<std::string, int>, double> baseline;
    for (const auto& s : scores)
        if (s.level == EvocationLevel::clean)
            baseline[{s.item_id, static_cast<int>(s.format)}] = s.f_m;

    std::map<std::pair<int, int>, std::vector<std::pair<std::string, double>>> deltas;
    for (const auto& s : scores) {
        auto base = baseline.find({s.item_id, static_cast<int>(s.format)});
        if (base == baseline.end()) {
            if (s.level != EvocationLevel::clean)
                throw Error("aggregate_delta_curves: missing clean baseline for item " + s.item_id);
            continue;
        }
        deltas[{static_cast<int>(s.format), static_cast<int>(s.level)}].push_back(
            {s.item_id, s.f_m - base->second});
    }
    std::vector<DeltaCurvePoint> out;
    for (auto& [key, vals] : deltas) {
        std::sort(vals.begin(), vals.end());   // deterministic reduce order
        double sum = 0.0;
        for (const auto& [_, d] : vals) sum += d;
        DeltaCurvePoint pt;
        pt.format = static_cast<ItemFormat>(key.first);
        pt.level = static_cast<EvocationLevel>(key.second);
        pt.mean_delta = sum / static_cast<double>(vals.size());
        pt.n = vals.size();
        out.push_back(pt);
    }
    return out;
}

} // namespace mceval

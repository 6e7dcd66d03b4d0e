#include "postdae/metrics.hpp"

#include "postdae/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace postdae::metrics {

namespace {

void check_same_dims(const LabelMask& a, const LabelMask& b)
{
    if (a.width() != b.width() || a.height() != b.height()) {
        throw ContractError("mask dimensions differ: " + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                            std::to_string(b.height()));
    }
}

double diagonal(const LabelMask& m)
{
    return std::hypot(static_cast<double>(m.width()), static_cast<double>(m.height()));
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas, one dimension.
// f holds squared distances along a line; output overwrites f.
void edt_1d(std::vector<double>& f, std::vector<int>& v, std::vector<double>& z, std::vector<double>& d)
{
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == inf) {
            continue;
        }
        if (f[v[k]] == inf) {
            v[k] = q;
            continue;
        }
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) {
            ++k;
        }
        const double dq = double(q - v[k]);
        d[q] = f[v[k]] == inf ? inf : dq * dq + f[v[k]];
    }
    f = d;
}

// Exact squared Euclidean distance from every pixel to the nearest pixel with
// the given label. The set must be nonempty.
std::vector<double> squared_distance_to(const LabelMask& m, int label)
{
    const int w = m.width();
    const int h = m.height();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(m.size());
    const auto labels = m.labels();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        dist[i] = labels[i] == label ? 0.0 : inf;
    }
    const int longest = std::max(w, h);
    std::vector<double> f;
    std::vector<double> d(longest);
    std::vector<int> v(longest);
    std::vector<double> z(longest + 1);
    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) {
            f[y] = dist[m.index(x, y)];
        }
        edt_1d(f, v, z, d);
        for (int y = 0; y < h; ++y) {
            dist[m.index(x, y)] = f[y];
        }
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        d.resize(w);
        for (int x = 0; x < w; ++x) {
            f[x] = dist[m.index(x, y)];
        }
        edt_1d(f, v, z, d);
        for (int x = 0; x < w; ++x) {
            dist[m.index(x, y)] = f[x];
        }
    }
    return dist;
}

double directed(const LabelMask& from, const LabelMask& to, int label)
{
    const auto dist = squared_distance_to(to, label);
    const auto labels = from.labels();
    double worst = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) {
            worst = std::max(worst, dist[i]);
        }
    }
    return std::sqrt(worst);
}

} // namespace

double dice(const LabelMask& a, const LabelMask& b, int label)
{
    check_same_dims(a, b);
    const auto la = a.labels();
    const auto lb = b.labels();
    std::size_t inter = 0;
    std::size_t size_a = 0;
    std::size_t size_b = 0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        const bool in_a = la[i] == label;
        const bool in_b = lb[i] == label;
        size_a += in_a;
        size_b += in_b;
        inter += in_a && in_b;
    }
    if (size_a + size_b == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(inter) / static_cast<double>(size_a + size_b);
}

double hausdorff(const LabelMask& a, const LabelMask& b, int label)
{
    check_same_dims(a, b);
    const bool empty_a = a.count(label) == 0;
    const bool empty_b = b.count(label) == 0;
    if (empty_a && empty_b) {
        return 0.0;
    }
    if (empty_a || empty_b) {
        return diagonal(a);
    }
    return std::max(directed(a, b, label), directed(b, a, label));
}

double hausdorff_brute_force(const LabelMask& a, const LabelMask& b, int label)
{
    check_same_dims(a, b);
    std::vector<std::pair<int, int>> pa;
    std::vector<std::pair<int, int>> pb;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if (a.at(x, y) == label) {
                pa.emplace_back(x, y);
            }
            if (b.at(x, y) == label) {
                pb.emplace_back(x, y);
            }
        }
    }
    if (pa.empty() && pb.empty()) {
        return 0.0;
    }
    if (pa.empty() || pb.empty()) {
        return diagonal(a);
    }
    auto sup_inf = [](const auto& from, const auto& to) {
        double worst = 0.0;
        for (const auto& [x0, y0] : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [x1, y1] : to) {
                best = std::min(best, std::sqrt(double(x0 - x1) * (x0 - x1) + double(y0 - y1) * (y0 - y1)));
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(sup_inf(pa, pb), sup_inf(pb, pa));
}

double foreground_dice(const LabelMask& a, const LabelMask& b)
{
    double total = 0.0;
    for (int c = 1; c < a.num_classes(); ++c) {
        total += dice(a, b, c);
    }
    return total / (a.num_classes() - 1);
}

double foreground_hausdorff(const LabelMask& a, const LabelMask& b)
{
    double total = 0.0;
    for (int c = 1; c < a.num_classes(); ++c) {
        total += hausdorff(a, b, c);
    }
    return total / (a.num_classes() - 1);
}

MetricsRecord evaluate_pair(const LabelMask& prediction, const LabelMask& ground_truth, std::string sample)
{
    check_same_dims(prediction, ground_truth);
    if (prediction.num_classes() != ground_truth.num_classes()) {
        throw ContractError("class count mismatch between prediction and ground truth");
    }
    MetricsRecord rec;
    rec.sample = std::move(sample);
    const int k = ground_truth.num_classes();
    for (int c = 0; c < k; ++c) {
        rec.dice.push_back(dice(prediction, ground_truth, c));
        rec.hausdorff.push_back(hausdorff(prediction, ground_truth, c));
    }
    rec.mean_dice = std::accumulate(rec.dice.begin() + 1, rec.dice.end(), 0.0) / (k - 1);
    rec.mean_hausdorff = std::accumulate(rec.hausdorff.begin() + 1, rec.hausdorff.end(), 0.0) / (k - 1);
    return rec;
}

Summary summarize(std::span<const double> values)
{
    Summary s;
    if (values.empty()) {
        return s;
    }
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

Evaluation evaluate_pairs(std::span<const LabelMask> predictions, std::span<const LabelMask> ground_truths,
                          std::span<const std::string> ids)
{
    if (predictions.size() != ground_truths.size()) {
        throw ContractError("evaluate_pairs: " + std::to_string(predictions.size()) + " predictions vs " +
                            std::to_string(ground_truths.size()) + " ground truths");
    }
    if (predictions.empty()) {
        throw ContractError("evaluate_pairs: empty input");
    }
    if (!ids.empty() && ids.size() != predictions.size()) {
        throw ContractError("evaluate_pairs: id list length mismatch");
    }
    Evaluation ev;
    std::vector<double> d;
    std::vector<double> h;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        ev.records.push_back(
            evaluate_pair(predictions[i], ground_truths[i], ids.empty() ? std::to_string(i) : ids[i]));
        d.push_back(ev.records.back().mean_dice);
        h.push_back(ev.records.back().mean_hausdorff);
    }
    ev.dice = summarize(d);
    ev.hausdorff = summarize(h);
    return ev;
}

ComparisonReport compare_methods(std::span<const std::string> names, std::span<const Evaluation> evaluations,
                                 double alpha)
{
    if (names.size() != evaluations.size()) {
        throw ContractError("compare_methods: names and evaluations differ in length");
    }
    ComparisonReport report;
    report.alpha = alpha;
    for (std::size_t i = 0; i < names.size(); ++i) {
        report.methods.push_back(
            {names[i], evaluations[i].dice, evaluations[i].hausdorff, evaluations[i].records.size()});
    }
    const std::size_t m = names.size();
    report.comparisons = m * (m - 1) / 2;
    report.corrected_alpha = report.comparisons > 0 ? alpha / static_cast<double>(report.comparisons) : alpha;

    auto column = [](const Evaluation& ev, bool want_dice) {
        std::vector<double> out;
        for (const auto& r : ev.records) {
            out.push_back(want_dice ? r.mean_dice : r.mean_hausdorff);
        }
        return out;
    };
    for (const bool want_dice : {true, false}) {
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = a + 1; b < m; ++b) {
                PairwiseTest t{names[a], names[b], want_dice ? "dice" : "hausdorff", std::nullopt, {}, false};
                const auto xa = column(evaluations[a], want_dice);
                const auto xb = column(evaluations[b], want_dice);
                if (xa.size() != xb.size()) {
                    t.note = "sample counts differ";
                } else {
                    try {
                        const auto w = wilcoxon_signed_rank(xa, xb);
                        t.p_value = w.p_value;
                        t.significant = w.p_value < report.corrected_alpha;
                    } catch (const InsufficientDataError& e) {
                        t.note = e.what();
                    }
                }
                report.tests.push_back(std::move(t));
            }
        }
    }
    return report;
}

} // namespace postdae::metrics

#pragma once

#include "postdae/raster.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace postdae::metrics {

/// 2|A∩B| / (|A|+|B|) over the pixels labeled `label`; 1.0 when both are empty.
double dice(const LabelMask& a, const LabelMask& b, int label);

/// Symmetric Hausdorff distance (pixels, Euclidean) between the pixel sets
/// labeled `label`. Both empty gives 0; exactly one empty gives the canvas
/// diagonal. Uses an exact squared distance transform.
double hausdorff(const LabelMask& a, const LabelMask& b, int label);

/// O(|A|·|B|) reference implementation of hausdorff().
double hausdorff_brute_force(const LabelMask& a, const LabelMask& b, int label);

/// Mean Dice over the foreground classes 1..K-1.
double foreground_dice(const LabelMask& a, const LabelMask& b);
double foreground_hausdorff(const LabelMask& a, const LabelMask& b);

struct MetricsRecord {
    std::string sample;
    std::vector<double> dice;      ///< indexed by class, class 0 included
    std::vector<double> hausdorff; ///< indexed by class, class 0 included
    double mean_dice = 0.0;        ///< foreground classes only
    double mean_hausdorff = 0.0;   ///< foreground classes only
};

MetricsRecord evaluate_pair(const LabelMask& prediction, const LabelMask& ground_truth, std::string sample = {});

struct Summary {
    double mean = 0.0;
    double stddev = 0.0; ///< n-1 estimator; 0 for a single sample
};

Summary summarize(std::span<const double> values);

struct Evaluation {
    std::vector<MetricsRecord> records;
    Summary dice;
    Summary hausdorff;
};

/// Scores aligned prediction/ground-truth lists. `ids` may be empty, in which
/// case records are named by position.
Evaluation evaluate_pairs(std::span<const LabelMask> predictions, std::span<const LabelMask> ground_truths,
                          std::span<const std::string> ids = {});

// --- significance testing ---------------------------------------------------

struct WilcoxonResult {
    double p_value = 1.0;  ///< two-sided
    double statistic = 0.0; ///< W+, sum of ranks of positive differences
    int n = 0;              ///< pairs left after dropping zero differences
    bool exact = false;
};

/// Largest sample size (after dropping zeros) that uses exact enumeration.
inline constexpr int kWilcoxonExactLimit = 20;

/// Two-sided paired Wilcoxon signed-rank test of x - y. Zero differences are
/// dropped; ties share mid-ranks. Exact null distribution for n <= 20,
/// normal approximation with tie and continuity correction above.
/// Throws InsufficientDataError when fewer than 5 nonzero differences remain.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

struct MethodSummary {
    std::string name;
    Summary dice;
    Summary hausdorff;
    std::size_t samples = 0;
};

struct PairwiseTest {
    std::string method_a;
    std::string method_b;
    std::string metric; ///< "dice" or "hausdorff"
    std::optional<double> p_value;
    std::string note; ///< reason when p_value is absent
    bool significant = false;
};

struct ComparisonReport {
    std::vector<MethodSummary> methods;
    std::vector<PairwiseTest> tests;
    double alpha = 0.05;
    std::size_t comparisons = 0;
    double corrected_alpha = 0.05; ///< alpha / comparisons (Bonferroni)
};

/// Pairwise comparison of methods evaluated on the same samples, in order.
/// Each unordered pair counts as one comparison per metric.
ComparisonReport compare_methods(std::span<const std::string> names, std::span<const Evaluation> evaluations,
                                 double alpha = 0.05);

} // namespace postdae::metrics

#include <doctest.h>

#include "oracles.hpp"
#include "test_helpers.hpp"

#include "postdae/error.hpp"
#include "postdae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace postdae;
using namespace postdae::metrics;

namespace {

LabelMask pixels(int w, int h, std::initializer_list<std::pair<int, int>> fg)
{
    LabelMask m(w, h, 2);
    for (auto [x, y] : fg) {
        m.set(x, y, 1);
    }
    return m;
}

} // namespace

TEST_CASE("dice closed forms")
{
    const auto a = pixels(4, 4, {{0, 0}, {1, 0}});
    const auto b = pixels(4, 4, {{1, 0}, {2, 0}});
    CHECK(dice(a, a, 1) == 1.0);
    CHECK(dice(a, pixels(4, 4, {{3, 3}}), 1) == 0.0);
    CHECK(dice(a, b, 1) == 0.5);
    CHECK(dice(LabelMask(4, 4, 2), LabelMask(4, 4, 2), 1) == 1.0);
    CHECK_THROWS_AS(dice(a, LabelMask(4, 5, 2), 1), ContractError);
}

TEST_CASE("hausdorff closed forms")
{
    const auto a = pixels(8, 8, {{0, 0}});
    const auto b = pixels(8, 8, {{3, 4}});
    CHECK(hausdorff(a, a, 1) == 0.0);
    CHECK(hausdorff(a, b, 1) == 5.0);
    const LabelMask empty(8, 6, 2);
    CHECK(hausdorff(empty, empty, 1) == 0.0);
    CHECK(hausdorff(empty, pixels(8, 6, {{1, 1}}), 1) == 10.0);
    CHECK_THROWS_AS(hausdorff(a, empty, 1), ContractError);
}

TEST_CASE("distance transform hausdorff equals brute force")
{
    for (std::uint64_t s = 0; s < 200; ++s) {
        const double fa = 0.02 + 0.5 * static_cast<double>(s % 7) / 7.0;
        const auto a = testing::random_mask(16, 16, 2, 2 * s, fa);
        const auto b = testing::random_mask(16, 16, 2, 2 * s + 1, 0.1);
        CHECK(hausdorff(a, b, 1) == hausdorff_brute_force(a, b, 1));
        CHECK(hausdorff(a, b, 0) == hausdorff_brute_force(a, b, 0));
    }
}

TEST_CASE("metric symmetry, triangle inequality and permutation invariance")
{
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto a = testing::random_mask(12, 10, 3, 3 * s, 0.3);
        const auto b = testing::random_mask(12, 10, 3, 3 * s + 1, 0.3);
        const auto c = testing::random_mask(12, 10, 3, 3 * s + 2, 0.3);
        for (int k = 1; k < 3; ++k) {
            CHECK(dice(a, b, k) == dice(b, a, k));
            CHECK(hausdorff(a, b, k) == hausdorff(b, a, k));
            if (a.count(k) && b.count(k) && c.count(k)) {
                CHECK(hausdorff(a, c, k) <= hausdorff(a, b, k) + hausdorff(b, c, k) + 1e-12);
            }
        }
        // a simultaneous pixel shuffle keeps Dice
        std::vector<std::size_t> perm(a.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(s);
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        std::vector<std::uint8_t> pa(a.size()), pb(a.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            pa[i] = a.labels()[perm[i]];
            pb[i] = b.labels()[perm[i]];
        }
        CHECK(dice(LabelMask(12, 10, 3, pa), LabelMask(12, 10, 3, pb), 1) == dice(a, b, 1));
    }
}

TEST_CASE("aggregation")
{
    const auto gt = pixels(4, 4, {{0, 0}, {1, 0}});
    std::vector<LabelMask> same{gt, gt, gt};
    const auto e = evaluate_pairs(same, same);
    CHECK(e.dice.mean == 1.0);
    CHECK(e.dice.stddev == 0.0);
    CHECK(e.hausdorff.mean == 0.0);

    const auto one = evaluate_pairs(std::span(&gt, 1), std::span(&gt, 1));
    CHECK(one.dice.stddev == 0.0);

    // hand computed: Dice 1, 0.5, 0 and HD 0, 1, 3
    std::vector<LabelMask> preds{gt, pixels(4, 4, {{1, 0}, {2, 0}}), pixels(4, 4, {{3, 0}, {3, 1}})};
    std::vector<LabelMask> gts{gt, gt, gt};
    const auto h = evaluate_pairs(preds, gts);
    CHECK(h.dice.mean == doctest::Approx(0.5));
    CHECK(h.dice.stddev == doctest::Approx(0.5));
    CHECK(h.records[2].hausdorff[1] == 3.0);
    CHECK(h.hausdorff.mean == doctest::Approx(4.0 / 3.0));
    CHECK(h.records[1].sample == "1");
    CHECK_THROWS_AS(evaluate_pairs(preds, std::span(gts).first(2)), ContractError);
    CHECK_THROWS_AS(evaluate_pairs({}, {}), ContractError);
}

TEST_CASE("wilcoxon closed forms")
{
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(wilcoxon_signed_rank(x, x), InsufficientDataError);
    const std::vector<double> y{0, 0, 0, 0, 0};
    const auto r = wilcoxon_signed_rank(x, y);
    CHECK(r.exact);
    CHECK(r.p_value == 0.0625);
    CHECK(r.statistic == 15.0);
    CHECK_THROWS_AS(wilcoxon_signed_rank(x, std::span(y).first(4)), ContractError);
}

TEST_CASE("wilcoxon matches reference values")
{
    const std::vector<double> x{12, 7, 25, 3, 18, 9, 30, 14, 21, 5, 16, 11};
    const std::vector<double> y{7, 9, 16, 4, 7, 5, 37, 6, 18, 11, 6, -1};
    const auto r = wilcoxon_signed_rank(x, y);
    CHECK(r.exact);
    CHECK(r.statistic == 62.0);
    CHECK(r.p_value == doctest::Approx(0.0771484375).epsilon(1e-12));

    std::vector<double> d{-1, -2, 3, 4, -5, -6, 7, 8, -9, -10, 11, 12, 13, -14, -15, -16, 17, -18, -19, -20, -21, 22, -23, 24, 25};
    const std::vector<double> zero(d.size(), 0.0);
    const auto a = wilcoxon_signed_rank(d, zero);
    CHECK_FALSE(a.exact);
    CHECK(a.p_value == doctest::Approx(0.6668242662625201).epsilon(1e-9));
}

TEST_CASE("exact wilcoxon equals sign flip enumeration")
{
    for (std::uint64_t s = 0; s < 40; ++s) {
        Rng rng(s, 3);
        const auto n = static_cast<std::size_t>(5 + s % 8);
        std::vector<double> x(n), y(n, 0.0);
        for (auto& v : x) {
            // coarse grid forces ties and zeros
            v = static_cast<double>(rng.uniform_int(-6, 6)) * 0.5;
        }
        const auto nonzero = std::count_if(x.begin(), x.end(), [](double v) { return v != 0.0; });
        if (nonzero < 5) {
            CHECK_THROWS_AS(wilcoxon_signed_rank(x, y), InsufficientDataError);
            continue;
        }
        const auto r = wilcoxon_signed_rank(x, y);
        CHECK(r.exact);
        CHECK(r.p_value == doctest::Approx(testing::sign_flip_p(x)).epsilon(1e-12));
        CHECK(r.p_value == doctest::Approx(wilcoxon_signed_rank(y, x).p_value).epsilon(1e-12));
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
    }
}

TEST_CASE("method comparison applies bonferroni")
{
    std::vector<LabelMask> gts, good, bad, worse;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto m = testing::random_mask(10, 10, 2, s, 0.5);
        gts.push_back(m);
        good.push_back(m);
        bad.push_back(testing::random_mask(10, 10, 2, 100 + s, 0.5));
        worse.push_back(LabelMask(10, 10, 2));
    }
    const std::vector<Evaluation> evals{evaluate_pairs(good, gts), evaluate_pairs(bad, gts), evaluate_pairs(worse, gts)};
    const std::vector<std::string> names{"good", "bad", "worse"};
    const auto two = compare_methods(std::span(names).first(2), std::span(evals).first(2));
    CHECK(two.comparisons == 1);
    CHECK(two.tests.size() == 2);
    CHECK(two.corrected_alpha == 0.05);
    const auto three = compare_methods(names, evals);
    CHECK(three.comparisons == 3);
    CHECK(three.corrected_alpha == doctest::Approx(0.05 / 3.0));
    CHECK(three.tests.size() == 6);
    for (const auto& t : three.tests) {
        if (t.p_value) {
            CHECK(t.significant == (*t.p_value < three.corrected_alpha));
        } else {
            CHECK_FALSE(t.note.empty());
        }
    }
}

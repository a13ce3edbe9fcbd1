// Evaluation statistics: closed-form fixtures, algebraic identities between
// alternative formulas, distributional oracles for the t-test p-value, and
// the documented error contract.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cofap/evalstats.hpp"
#include "cofap/rng.hpp"

using namespace cofap;

namespace {

std::vector<double> rand_vec(Rng& rng, size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("evalstats: point metrics on exact and mean predictors") {
    std::vector<double> y = {1.0, 2.5, -3.0, 4.25, 0.5, 7.0};

    // Perfect predictor.
    CHECK(r2_score(y, y) == 1.0);
    CHECK(rmse(y, y) == 0.0);
    CHECK(mae(y, y) == 0.0);
    CHECK(pearson(y, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman(y, y) == doctest::Approx(1.0).epsilon(1e-12));

    // Predicting the mean zeroes out R^2: ss_res and ss_tot are the same sum.
    std::vector<double> mean_hat(y.size(), mean_of(y));
    CHECK(r2_score(y, mean_hat) == 0.0);

    // Hand-checked small case: y = {0, 2}, y_hat = {1, 1}.
    // ss_res = 2, ss_tot = 2 -> r2 = 0; rmse = 1; mae = 1.
    CHECK(r2_score({0.0, 2.0}, {1.0, 1.0}) == 0.0);
    CHECK(rmse({0.0, 2.0}, {1.0, 1.0}) == 1.0);
    CHECK(mae({0.0, 2.0}, {1.0, 1.0}) == 1.0);
}

TEST_CASE("evalstats: rmse^2 equals mse and rmse >= mae on random data") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 2 + rng.below(40);
        auto y = rand_vec(rng, n, -5.0, 5.0);
        auto y_hat = rand_vec(rng, n, -5.0, 5.0);

        double mse = 0.0;
        for (size_t i = 0; i < n; ++i) mse += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        mse /= static_cast<double>(n);

        double r = rmse(y, y_hat);
        CHECK(r * r == doctest::Approx(mse).epsilon(1e-12));
        CHECK(r >= mae(y, y_hat));          // Jensen: quadratic mean >= abs mean
        CHECK(mae(y, y_hat) >= 0.0);
        // ss_res/ss_tot >= 0, so R^2 can never exceed 1.
        CHECK(r2_score(y, y_hat) <= 1.0);
    }
}

TEST_CASE("evalstats: correlation on affine and monotone transforms") {
    Rng rng(7);
    auto x = rand_vec(rng, 25, -3.0, 3.0);
    auto y = rand_vec(rng, 25, -3.0, 3.0);

    // Exact linear relation.
    std::vector<double> lin(x.size());
    for (size_t i = 0; i < x.size(); ++i) lin[i] = 2.0 * x[i] + 1.0;
    CHECK(pearson(x, lin) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman(x, lin) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> rev(x.size());
    for (size_t i = 0; i < x.size(); ++i) rev[i] = -2.0 * x[i] + 1.0;
    CHECK(pearson(x, rev) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman(x, rev) == doctest::Approx(-1.0).epsilon(1e-12));

    // Pearson is invariant to positive affine maps and flips sign with
    // negative scale.
    double base = pearson(x, y);
    std::vector<double> ax(x.size()), nx(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        ax[i] = 3.5 * x[i] - 2.0;
        nx[i] = -0.25 * x[i] + 4.0;
    }
    CHECK(pearson(ax, y) == doctest::Approx(base).epsilon(1e-12));
    CHECK(pearson(nx, y) == doctest::Approx(-base).epsilon(1e-12));

    // Spearman only sees ranks, so any strictly increasing transform of one
    // side leaves it bit-identical.
    double s_base = spearman(x, y);
    std::vector<double> ex(x.size());
    for (size_t i = 0; i < x.size(); ++i) ex[i] = std::exp(x[i]);
    CHECK(spearman(ex, y) == s_base);
}

TEST_CASE("evalstats: spearman matches the 1 - 6*sum(d^2) formula without ties") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 3 + rng.below(30);
        auto x = rand_vec(rng, n, -10.0, 10.0);
        auto y = rand_vec(rng, n, -10.0, 10.0);
        // Continuous draws: ties have probability zero, so plain argsort
        // ranks are valid and give an independent second formula.
        auto plain_ranks = [](const std::vector<double>& v) {
            std::vector<size_t> order(v.size());
            std::iota(order.begin(), order.end(), size_t{0});
            std::sort(order.begin(), order.end(),
                      [&](size_t a, size_t b) { return v[a] < v[b]; });
            std::vector<double> r(v.size());
            for (size_t pos = 0; pos < order.size(); ++pos)
                r[order[pos]] = static_cast<double>(pos + 1);
            return r;
        };
        auto rx = plain_ranks(x);
        auto ry = plain_ranks(y);
        double d2 = 0.0;
        for (size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
        double nn = static_cast<double>(n);
        double classic = 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
        CHECK(spearman(x, y) == doctest::Approx(classic).epsilon(1e-12));
    }
}

TEST_CASE("evalstats: average ranks and tied spearman") {
    CHECK(average_ranks({10.0, 20.0, 20.0, 30.0}) ==
          std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(average_ranks({5.0, 5.0, 5.0}) == std::vector<double>{2.0, 2.0, 2.0});
    CHECK(average_ranks({3.0, 1.0, 2.0}) == std::vector<double>{3.0, 1.0, 2.0});

    // Hand-computed tied case: ranks x = {1, 2.5, 2.5, 4}, y = {1, 2, 3, 4};
    // centered products give 4.5 / sqrt(4.5 * 5) = 3 / sqrt(10).
    double rho = spearman({1.0, 2.0, 2.0, 3.0}, {1.0, 2.0, 3.0, 4.0});
    CHECK(rho == doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("evalstats: metric error contract") {
    std::vector<double> y = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(r2_score({}, {}), ArgumentError);
    CHECK_THROWS_AS(r2_score(y, {1.0, 2.0}), ArgumentError);
    CHECK_THROWS_AS(rmse(y, {1.0}), ArgumentError);
    CHECK_THROWS_AS(mae({}, {}), ArgumentError);

    // Constant targets leave the R^2 denominator zero.
    CHECK_THROWS_AS(r2_score({2.0, 2.0, 2.0}, y), UndefinedMetricError);
    CHECK_THROWS_AS(pearson({2.0, 2.0, 2.0}, y), UndefinedMetricError);
    CHECK_THROWS_AS(pearson(y, {0.5, 0.5, 0.5}), UndefinedMetricError);
    CHECK_THROWS_AS(spearman({2.0, 2.0, 2.0}, y), UndefinedMetricError);
    // UndefinedMetricError is an ArgumentError, so callers can catch broadly.
    CHECK_THROWS_AS(r2_score({2.0, 2.0, 2.0}, y), ArgumentError);

    CHECK_THROWS_AS(pearson({1.0}, {2.0}), ArgumentError);
    CHECK_THROWS_AS(spearman({1.0}, {2.0}), ArgumentError);
}

TEST_CASE("evalstats: evaluate_predictions bundles the individual metrics") {
    Rng rng(5);
    auto y = rand_vec(rng, 20, 0.0, 10.0);
    auto y_hat = rand_vec(rng, 20, 0.0, 10.0);
    MetricReport r = evaluate_predictions(y, y_hat);
    CHECK(r.r2 == r2_score(y, y_hat));
    CHECK(r.rmse == rmse(y, y_hat));
    CHECK(r.mae == mae(y, y_hat));
    CHECK(r.pearson == pearson(y, y_hat));
    CHECK(r.spearman == spearman(y, y_hat));
}

TEST_CASE("evalstats: k-fold splits are balanced deterministic partitions") {
    // 10 samples over 5 folds: every fold has exactly 2.
    auto folds = kfold_split(10, 5, 42);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) CHECK(f.size() == 2);

    // Partition: sorted concatenation recovers 0..9.
    std::vector<size_t> all;
    for (const auto& f : folds) all.insert(all.end(), f.begin(), f.end());
    std::sort(all.begin(), all.end());
    std::vector<size_t> expect(10);
    std::iota(expect.begin(), expect.end(), size_t{0});
    CHECK(all == expect);

    // Same arguments, same split; different seed, different split.
    CHECK(kfold_split(10, 5, 42) == folds);
    CHECK(kfold_split(10, 5, 43) != folds);

    // 7 over 3: sizes 3, 2, 2 (leading folds absorb the remainder).
    auto uneven = kfold_split(7, 3, 1);
    REQUIRE(uneven.size() == 3);
    CHECK(uneven[0].size() == 3);
    CHECK(uneven[1].size() == 2);
    CHECK(uneven[2].size() == 2);

    // Size spread never exceeds one, and the union is always everything.
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        size_t n = 2 + rng.below(200);
        int k = 2 + static_cast<int>(rng.below(std::min<uint64_t>(n, 8) - 1));
        auto split = kfold_split(n, k, rng.next_u64());
        size_t lo = n, hi = 0, total = 0;
        for (const auto& f : split) {
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            total += f.size();
        }
        CHECK(hi - lo <= 1);
        CHECK(total == n);
    }

    CHECK_THROWS_AS(kfold_split(4, 5, 42), ArgumentError);
    CHECK_THROWS_AS(kfold_split(10, 1, 42), ArgumentError);
    CHECK_THROWS_AS(kfold_split(10, 0, 42), ArgumentError);
}

TEST_CASE("evalstats: name-keyed k-fold mirrors the index split") {
    std::vector<std::string> names;
    for (int i = 0; i < 10; ++i) names.push_back("cof_" + std::to_string(i));
    auto by_name = kfold_split(names, 5, 42);
    auto by_index = kfold_split(names.size(), 5, 42);
    REQUIRE(by_name.size() == by_index.size());
    for (size_t f = 0; f < by_name.size(); ++f) {
        REQUIRE(by_name[f].size() == by_index[f].size());
        for (size_t i = 0; i < by_name[f].size(); ++i)
            CHECK(by_name[f][i] == names[by_index[f][i]]);
    }
}

TEST_CASE("evalstats: regularized incomplete beta identities") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        double a = rng.uniform(0.2, 8.0);
        double b = rng.uniform(0.2, 8.0);
        double x = rng.uniform(0.001, 0.999);
        double lhs = regularized_incomplete_beta(a, b, x);
        CHECK(lhs >= 0.0);
        CHECK(lhs <= 1.0);
        // Complement identity I_x(a,b) = 1 - I_{1-x}(b,a).
        CHECK(lhs + regularized_incomplete_beta(b, a, 1.0 - x) ==
              doctest::Approx(1.0).epsilon(1e-12));
        // Closed form for b = 1: I_x(a, 1) = x^a.
        CHECK(regularized_incomplete_beta(a, 1.0, x) ==
              doctest::Approx(std::pow(x, a)).epsilon(1e-12));
        // Closed form for a = 1: I_x(1, b) = 1 - (1-x)^b.
        CHECK(regularized_incomplete_beta(1.0, b, x) ==
              doctest::Approx(1.0 - std::pow(1.0 - x, b)).epsilon(1e-12));
    }
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), ArgumentError);
    CHECK_THROWS_AS(regularized_incomplete_beta(1.0, 1.0, 1.5), ArgumentError);

    // Monotone non-decreasing in x.
    double prev = 0.0;
    for (int i = 1; i <= 20; ++i) {
        double cur = regularized_incomplete_beta(2.5, 1.5, i / 20.0);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("evalstats: t p-values match low-dof closed forms") {
    const double pi = 3.14159265358979323846;
    for (double t : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
        // dof = 1 (Cauchy): p = 1 - (2/pi) * atan|t|.
        CHECK(t_two_sided_p(t, 1.0) ==
              doctest::Approx(1.0 - 2.0 / pi * std::atan(t)).epsilon(1e-10));
        // dof = 2: p = 1 - |t| / sqrt(t^2 + 2).
        CHECK(t_two_sided_p(t, 2.0) ==
              doctest::Approx(1.0 - t / std::sqrt(t * t + 2.0)).epsilon(1e-10));
        // dof = 3: p = 1 - (2/pi) * (atan(u) + u/(1+u^2)), u = |t|/sqrt(3).
        double u = t / std::sqrt(3.0);
        CHECK(t_two_sided_p(t, 3.0) ==
              doctest::Approx(1.0 - 2.0 / pi * (std::atan(u) + u / (1.0 + u * u)))
                  .epsilon(1e-10));
        // Symmetric in t.
        CHECK(t_two_sided_p(-t, 1.0) == t_two_sided_p(t, 1.0));
        CHECK(t_two_sided_p(-t, 7.5) == t_two_sided_p(t, 7.5));
    }

    // Heavy dof approaches the normal distribution: 1.959964 is the familiar
    // two-sided 5% point.
    CHECK(t_two_sided_p(1.9599639845400545, 1e7) ==
          doctest::Approx(0.05).epsilon(1e-4));

    CHECK(t_two_sided_p(std::numeric_limits<double>::infinity(), 4.0) == 0.0);
    CHECK_THROWS_AS(t_two_sided_p(1.0, 0.0), ArgumentError);
}

TEST_CASE("evalstats: paired t-test fixture and degenerate cases") {
    // Five paired measurements whose differences are {2, -1, 3, 0, 1}:
    // mean difference 1, sample variance 2.5, t = 1/sqrt(2.5/5) = sqrt(2)
    // with 4 degrees of freedom.
    std::vector<double> a = {85.0, 70.0, 80.0, 75.0, 65.0};
    std::vector<double> b = {83.0, 71.0, 77.0, 75.0, 64.0};
    TTestResult r = paired_ttest(a, b);
    CHECK(r.t == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    // p = I_{2/3}(2, 1/2); the antiderivative of t/sqrt(1-t) gives
    // p = 3/4 * (4/3 - 2*sqrt(1/3) + (2/3)*(1/3)^{3/2}).
    double p_exact =
        0.75 * (4.0 / 3.0 - 2.0 * std::sqrt(1.0 / 3.0) +
                (2.0 / 3.0) * std::pow(1.0 / 3.0, 1.5));
    CHECK(r.p == doctest::Approx(p_exact).epsilon(1e-10));
    CHECK(r.p == doctest::Approx(0.2301996).epsilon(1e-6));

    // Swapping the samples negates t and keeps p.
    TTestResult rs = paired_ttest(b, a);
    CHECK(rs.t == doctest::Approx(-r.t).epsilon(1e-12));
    CHECK(rs.p == doctest::Approx(r.p).epsilon(1e-12));

    // Identical samples: no effect, maximal p, by definition.
    TTestResult same = paired_ttest(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);

    // Constant nonzero difference: infinite statistic, zero p.
    std::vector<double> shifted(a.size());
    for (size_t i = 0; i < a.size(); ++i) shifted[i] = a[i] + 3.0;
    TTestResult up = paired_ttest(shifted, a);
    CHECK(std::isinf(up.t));
    CHECK(up.t > 0.0);
    CHECK(up.p == 0.0);
    TTestResult down = paired_ttest(a, shifted);
    CHECK(std::isinf(down.t));
    CHECK(down.t < 0.0);
    CHECK(down.p == 0.0);

    CHECK_THROWS_AS(paired_ttest({1.0}, {2.0}), ArgumentError);
    CHECK_THROWS_AS(paired_ttest(a, {1.0, 2.0}), ArgumentError);
}

TEST_CASE("evalstats: fold aggregation and JSON reports") {
    MetricReport f1{1.0, 2.0, 3.0, 4.0, 5.0};
    MetricReport f2{3.0, 4.0, 5.0, 6.0, 7.0};
    FoldAggregate agg = aggregate_folds({f1, f2});
    CHECK(agg.mean.r2 == 2.0);
    CHECK(agg.mean.rmse == 3.0);
    CHECK(agg.mean.mae == 4.0);
    CHECK(agg.mean.pearson == 5.0);
    CHECK(agg.mean.spearman == 6.0);
    // Population standard deviation of {v-1, v+1} is exactly 1.
    CHECK(agg.stddev.r2 == 1.0);
    CHECK(agg.stddev.rmse == 1.0);
    CHECK(agg.stddev.mae == 1.0);
    CHECK(agg.stddev.pearson == 1.0);
    CHECK(agg.stddev.spearman == 1.0);

    FoldAggregate single = aggregate_folds({f1});
    CHECK(single.mean.r2 == f1.r2);
    CHECK(single.stddev.r2 == 0.0);
    CHECK(single.stddev.spearman == 0.0);

    CHECK_THROWS_AS(aggregate_folds({}), ArgumentError);

    // JSON round-trips the numbers and ends with a newline.
    std::string js = metric_report_json(f1);
    CHECK(js.back() == '\n');
    auto parsed = nlohmann::json::parse(js);
    CHECK(parsed.at("r2").get<double>() == 1.0);
    CHECK(parsed.at("rmse").get<double>() == 2.0);
    CHECK(parsed.at("mae").get<double>() == 3.0);
    CHECK(parsed.at("pearson").get<double>() == 4.0);
    CHECK(parsed.at("spearman").get<double>() == 5.0);

    std::string fj = fold_aggregate_json(agg, {f1, f2});
    auto fparsed = nlohmann::json::parse(fj);
    CHECK(fparsed.at("mean").at("r2").get<double>() == 2.0);
    CHECK(fparsed.at("stddev").at("mae").get<double>() == 1.0);
    REQUIRE(fparsed.at("folds").size() == 2);
    CHECK(fparsed.at("folds")[1].at("spearman").get<double>() == 7.0);
}

// Regression evaluation statistics: R^2 / RMSE / MAE, Pearson and Spearman
// correlation, deterministic k-fold index splits, paired two-sided t-tests
// with an exact Student-t p-value, and fold aggregation for reports.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cofap/io.hpp"

namespace cofap {

// --- point metrics ---------------------------------------------------------
// All pairwise metrics require y and y_hat of equal, non-zero length
// (ArgumentError otherwise). r2 / pearson / spearman additionally require a
// non-constant y (and x) column and throw UndefinedMetricError when the
// variance in the denominator is zero.

// Coefficient of determination: 1 - sum((y-y_hat)^2) / sum((y-mean(y))^2).
double r2_score(const std::vector<double>& y, const std::vector<double>& y_hat);

// Root-mean-square error.
double rmse(const std::vector<double>& y, const std::vector<double>& y_hat);

// Mean absolute error.
double mae(const std::vector<double>& y, const std::vector<double>& y_hat);

// Sample Pearson correlation coefficient. Requires length >= 2 and both
// columns non-constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Spearman rank correlation: Pearson correlation of average (tie-adjusted)
// ranks. With no ties this equals 1 - 6*sum(d^2) / (n*(n^2-1)).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Average ranks, 1-based; tied values all receive the mean of the rank
// positions they span (the usual "average" tie rule).
std::vector<double> average_ranks(const std::vector<double>& v);

// --- reports ----------------------------------------------------------------

struct MetricReport {
    double r2 = 0, rmse = 0, mae = 0, pearson = 0, spearman = 0;
};

// Computes every metric above for one (y, y_hat) pair.
MetricReport evaluate_predictions(const std::vector<double>& y,
                                  const std::vector<double>& y_hat);

struct FoldAggregate {
    MetricReport mean;
    MetricReport stddev;  // population standard deviation across folds
};

// Mean and standard deviation of each metric across per-fold reports.
// Throws ArgumentError on an empty list.
FoldAggregate aggregate_folds(const std::vector<MetricReport>& folds);

// Single-level JSON object {"r2":..,"rmse":..,"mae":..,"pearson":..,
// "spearman":..} with a trailing newline.
std::string metric_report_json(const MetricReport& report);

// JSON object {"mean": {...}, "stddev": {...}, "folds": [...]} used by the
// stats stage; one row of the published results table per target.
std::string fold_aggregate_json(const FoldAggregate& agg,
                                const std::vector<MetricReport>& folds);

// --- k-fold splits ----------------------------------------------------------

// Partitions indices 0..n-1 into `folds` disjoint groups whose sizes differ
// by at most one. The shuffle is a deterministic function of `seed`: equal
// (n, folds, seed) always produces the identical split. Throws ArgumentError
// if folds < 2 or folds > n.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int folds = 5,
                                                  std::uint64_t seed = 42);

// Same split keyed by structure names: names[i] lands in the fold that the
// index split assigns to i.
std::vector<std::vector<std::string>> kfold_split(
    const std::vector<std::string>& names, int folds = 5, std::uint64_t seed = 42);

// --- paired t-test ----------------------------------------------------------

struct TTestResult {
    double t = 0;
    double p = 1;
};

// Two-sided paired t-test on equal-length samples (length >= 2, else
// ArgumentError). Degenerate cases are defined, not errors: identical
// samples (all differences zero) give (t=0, p=1); zero-variance but nonzero
// differences give t = +/-infinity with p = 0.
TTestResult paired_ttest(const std::vector<double>& a,
                         const std::vector<double>& b);

// Two-sided p-value for a Student-t statistic with `dof` degrees of freedom:
// I_{dof/(dof+t^2)}(dof/2, 1/2). Accurate to ~1e-10.
double t_two_sided_p(double t, double dof);

// Regularized incomplete beta function I_x(a, b), a,b > 0, x in [0,1],
// evaluated by a Lentz continued fraction. Accurate to ~1e-12.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace cofap

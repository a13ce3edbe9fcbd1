#include "cofap/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cofap/rng.hpp"

namespace cofap {
namespace {

void require_paired(const std::vector<double>& y, const std::vector<double>& y_hat,
                    const char* what) {
    if (y.empty()) throw ArgumentError(std::string(what) + ": empty input");
    if (y.size() != y_hat.size()) {
        throw ArgumentError(std::string(what) + ": length mismatch (" +
                            std::to_string(y.size()) + " vs " +
                            std::to_string(y_hat.size()) + ")");
    }
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Centered sum of products sum((x-mean_x) * (y-mean_y)).
double cross_moment(const std::vector<double>& x, double mx,
                    const std::vector<double>& y, double my) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s;
}

}  // namespace

double r2_score(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require_paired(y, y_hat, "r2_score");
    double my = mean_of(y);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    if (ss_tot == 0.0) {
        throw UndefinedMetricError("r2_score: target column is constant");
    }
    return 1.0 - ss_res / ss_tot;
}

double rmse(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require_paired(y, y_hat, "rmse");
    double ss = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        ss += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    }
    return std::sqrt(ss / static_cast<double>(y.size()));
}

double mae(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require_paired(y, y_hat, "mae");
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - y_hat[i]);
    return s / static_cast<double>(y.size());
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    require_paired(x, y, "pearson");
    if (x.size() < 2) throw ArgumentError("pearson: need at least 2 samples");
    double mx = mean_of(x), my = mean_of(y);
    double sxy = cross_moment(x, mx, y, my);
    double sxx = cross_moment(x, mx, x, mx);
    double syy = cross_moment(y, my, y, my);
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedMetricError("pearson: constant input column");
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        // Positions i..j (0-based) share the value; average of 1-based ranks.
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require_paired(x, y, "spearman");
    if (x.size() < 2) throw ArgumentError("spearman: need at least 2 samples");
    try {
        return pearson(average_ranks(x), average_ranks(y));
    } catch (const UndefinedMetricError&) {
        throw UndefinedMetricError("spearman: constant input column");
    }
}

MetricReport evaluate_predictions(const std::vector<double>& y,
                                  const std::vector<double>& y_hat) {
    MetricReport r;
    r.r2 = r2_score(y, y_hat);
    r.rmse = rmse(y, y_hat);
    r.mae = mae(y, y_hat);
    r.pearson = pearson(y, y_hat);
    r.spearman = spearman(y, y_hat);
    return r;
}

FoldAggregate aggregate_folds(const std::vector<MetricReport>& folds) {
    if (folds.empty()) throw ArgumentError("aggregate_folds: no fold reports");
    const double n = static_cast<double>(folds.size());
    auto stats = [&](double MetricReport::* field, double& out_mean, double& out_sd) {
        double m = 0.0;
        for (const auto& f : folds) m += f.*field;
        m /= n;
        double var = 0.0;
        for (const auto& f : folds) var += (f.*field - m) * (f.*field - m);
        out_mean = m;
        out_sd = std::sqrt(var / n);
    };
    FoldAggregate agg;
    stats(&MetricReport::r2, agg.mean.r2, agg.stddev.r2);
    stats(&MetricReport::rmse, agg.mean.rmse, agg.stddev.rmse);
    stats(&MetricReport::mae, agg.mean.mae, agg.stddev.mae);
    stats(&MetricReport::pearson, agg.mean.pearson, agg.stddev.pearson);
    stats(&MetricReport::spearman, agg.mean.spearman, agg.stddev.spearman);
    return agg;
}

namespace {

nlohmann::json report_to_json(const MetricReport& r) {
    return nlohmann::json{{"r2", r.r2},
                          {"rmse", r.rmse},
                          {"mae", r.mae},
                          {"pearson", r.pearson},
                          {"spearman", r.spearman}};
}

}  // namespace

std::string metric_report_json(const MetricReport& report) {
    return report_to_json(report).dump(2) + "\n";
}

std::string fold_aggregate_json(const FoldAggregate& agg,
                                const std::vector<MetricReport>& folds) {
    nlohmann::json j;
    j["mean"] = report_to_json(agg.mean);
    j["stddev"] = report_to_json(agg.stddev);
    j["folds"] = nlohmann::json::array();
    for (const auto& f : folds) j["folds"].push_back(report_to_json(f));
    return j.dump(2) + "\n";
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int folds,
                                                  std::uint64_t seed) {
    if (folds < 2) throw ArgumentError("kfold_split: need at least 2 folds");
    if (static_cast<std::size_t>(folds) > n) {
        throw ArgumentError("kfold_split: more folds (" + std::to_string(folds) +
                            ") than samples (" + std::to_string(n) + ")");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    // First n % folds groups take one extra element.
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
    std::size_t base = n / static_cast<std::size_t>(folds);
    std::size_t extra = n % static_cast<std::size_t>(folds);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < out.size(); ++f) {
        std::size_t len = base + (f < extra ? 1 : 0);
        out[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                      idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return out;
}

std::vector<std::vector<std::string>> kfold_split(
    const std::vector<std::string>& names, int folds, std::uint64_t seed) {
    auto idx_folds = kfold_split(names.size(), folds, seed);
    std::vector<std::vector<std::string>> out(idx_folds.size());
    for (std::size_t f = 0; f < idx_folds.size(); ++f) {
        out[f].reserve(idx_folds[f].size());
        for (std::size_t i : idx_folds[f]) out[f].push_back(names[i]);
    }
    return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw ArgumentError("regularized_incomplete_beta: a, b must be > 0");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
        throw ArgumentError("regularized_incomplete_beta: x must be in [0, 1]");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    // The continued fraction converges quickly for x <= (a+1)/(a+b+2);
    // above that use I_x(a,b) = 1 - I_{1-x}(b,a). Strict, so the mirrored
    // argument can never bounce back (x' > threshold' would need
    // x < threshold) and recursion depth stays at one.
    if (x > (a + 1.0) / (a + b + 2.0)) {
        return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
    }
    // Prefactor x^a (1-x)^b / (a B(a,b)).
    double log_front = a * std::log(x) + b * std::log1p(-x) -
                       (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    double front = std::exp(log_front) / a;
    // Modified Lentz evaluation of the standard continued fraction.
    const double tiny = 1e-300;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        double md = static_cast<double>(m);
        // Even step.
        double num = md * (b - md) * x / ((a + 2.0 * md - 1.0) * (a + 2.0 * md));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        num = -(a + md) * (a + b + md) * x /
              ((a + 2.0 * md) * (a + 2.0 * md + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    return front * h;
}

double t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw ArgumentError("t_two_sided_p: dof must be > 0");
    if (std::isnan(t)) throw ArgumentError("t_two_sided_p: t is NaN");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

TTestResult paired_ttest(const std::vector<double>& a,
                         const std::vector<double>& b) {
    require_paired(a, b, "paired_ttest");
    if (a.size() < 2) throw ArgumentError("paired_ttest: need at least 2 pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double md = mean_of(d);
    double ss = 0.0;
    for (double v : d) ss += (v - md) * (v - md);
    double var = ss / static_cast<double>(n - 1);  // sample variance
    if (var == 0.0) {
        if (md == 0.0) return {0.0, 1.0};  // identical samples
        // Every pair differs by the same nonzero amount: report the sign as
        // an infinite statistic rather than failing.
        double inf = std::numeric_limits<double>::infinity();
        return {md > 0.0 ? inf : -inf, 0.0};
    }
    double t = md / std::sqrt(var / static_cast<double>(n));
    return {t, t_two_sided_p(t, static_cast<double>(n - 1))};
}

}  // namespace cofap

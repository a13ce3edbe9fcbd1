#include "cofap/screening.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cofap {

namespace {

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string bond_from_ends(const std::string& a, const std::string& b) {
    if (a == "C" && b == "C") return "CC";
    const auto is_pair = [&](const char* x, const char* y) {
        return (a == x && b == y) || (a == y && b == x);
    };
    if (is_pair("CH", "N")) return "imine";
    if (is_pair("NH", "CO")) return "amide";
    return "other";
}

double parse_field(const std::string& field, size_t line_no, const std::string& col,
                   bool allow_missing) {
    const std::string s = trim(field);
    if (s.empty()) {
        if (allow_missing) return std::numeric_limits<double>::quiet_NaN();
        throw ParseError("screening csv line " + std::to_string(line_no) + ": column '" +
                         col + "' is empty");
    }
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("screening csv line " + std::to_string(line_no) + ": column '" +
                         col + "' is not a number: '" + s + "'");
    }
}

void fold_window(std::optional<DescriptorWindow>& w, double v) {
    if (std::isnan(v)) return;
    if (!w) {
        w = DescriptorWindow{v, v};
    } else {
        w->lo = std::min(w->lo, v);
        w->hi = std::max(w->hi, v);
    }
}

}  // namespace

void validate_weights(const WeightPair& w) {
    if (w.w_R < 0 || w.w_A < 0)
        throw ArgumentError("weights: w_R and w_A must be non-negative");
    if (std::abs(w.w_R + w.w_A - 1.0) > 1e-9)
        throw ArgumentError("weights: w_R + w_A must equal 1, got " +
                            std::to_string(w.w_R + w.w_A));
}

double selectivity(double N_CH4, double N_H2, double y_CH4, double y_H2) {
    if (N_CH4 < 0 || N_H2 < 0) throw ArgumentError("selectivity: uptakes must be >= 0");
    if (y_CH4 <= 0 || y_CH4 >= 1 || y_H2 <= 0 || y_H2 >= 1)
        throw ArgumentError("selectivity: mole fractions must lie in (0,1)");
    if (N_H2 == 0)
        throw UndefinedMetricError("selectivity undefined: H2 uptake is zero");
    return (N_CH4 / y_CH4) / (N_H2 / y_H2);
}

double working_capacity(double N_ads, double N_des) { return N_ads - N_des; }

double aps(double S, double delta_N) { return S * delta_N; }

double regenerability(double delta_N, double N_ads) {
    if (N_ads <= 0)
        throw UndefinedMetricError("regenerability undefined: adsorption uptake is zero");
    return delta_N / N_ads * 100.0;
}

void derive_metrics(ScreeningRecord& r) {
    if (r.N_ads_CH4 < 0 || r.N_des_CH4 < 0 || r.N_ads_H2 < 0 || r.N_des_H2 < 0)
        throw ArgumentError("record '" + r.name + "': uptakes must be >= 0");
    if (std::abs(r.y_CH4 + r.y_H2 - 1.0) > 1e-9)
        throw ArgumentError("record '" + r.name + "': mole fractions must sum to 1");
    r.S = selectivity(r.N_ads_CH4, r.N_ads_H2, r.y_CH4, r.y_H2);
    r.delta_N = working_capacity(r.N_ads_CH4, r.N_des_CH4);
    r.APS = aps(r.S, r.delta_N);
    r.R_pct = regenerability(r.delta_N, r.N_ads_CH4);
}

PrescreenResult prescreen_filter(const std::vector<ScreeningRecord>& records) {
    PrescreenResult out;
    for (const auto& r : records) {
        if (std::isnan(r.PLD) || std::isnan(r.LCD) || std::isnan(r.S_acc) ||
            std::isnan(r.rho) || std::isnan(r.phi)) {
            ++out.skipped_missing;
            continue;
        }
        if (r.LCD < 20.0 && r.phi < 0.80) out.kept.push_back(r);
    }
    return out;
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
    if (values.empty()) throw ArgumentError("minmax_normalize: empty input");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(values.size(), 0.0);
    if (hi == lo) return out;  // constant column: degenerate rule
    for (size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / (hi - lo);
    return out;
}

double composite_score(double r_norm, double aps_norm, const WeightPair& w) {
    validate_weights(w);
    if (r_norm < -1e-12 || r_norm > 1 + 1e-12 || aps_norm < -1e-12 || aps_norm > 1 + 1e-12)
        throw ArgumentError("composite_score: normalized inputs must lie in [0,1]");
    return w.w_R * r_norm + w.w_A * aps_norm;
}

std::pair<double, double> contribution_rates(double r_norm, double aps_norm,
                                             const WeightPair& w) {
    validate_weights(w);
    const double cr = w.w_R * r_norm, ca = w.w_A * aps_norm;
    const double sum = cr + ca;
    if (sum == 0.0) return {0.5, 0.5};
    return {cr / sum, ca / sum};
}

Ranking rank_records(const std::vector<ScreeningRecord>& records, const WeightPair& w) {
    validate_weights(w);
    std::vector<double> r_col, a_col;
    r_col.reserve(records.size());
    a_col.reserve(records.size());
    for (const auto& r : records) {
        r_col.push_back(r.R_pct);
        a_col.push_back(r.APS);
    }
    const std::vector<double> r_norm = minmax_normalize(r_col);
    const std::vector<double> a_norm = minmax_normalize(a_col);

    Ranking out;
    out.w = w;
    out.entries.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        RankedEntry e;
        e.name = records[i].name;
        e.S_i = composite_score(r_norm[i], a_norm[i], w);
        std::tie(e.rate_R, e.rate_A) = contribution_rates(r_norm[i], a_norm[i], w);
        const CofNameParts parts = parse_cof_name(e.name);
        e.bond = parts.bond;
        e.net = parts.net;
        out.entries.push_back(std::move(e));
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const RankedEntry& a, const RankedEntry& b) {
                  if (a.S_i != b.S_i) return a.S_i > b.S_i;
                  return a.name < b.name;
              });
    return out;
}

std::vector<WeightScanRow> weight_scan(const std::vector<ScreeningRecord>& records,
                                       double step) {
    if (records.size() < 10)
        throw ArgumentError("weight_scan: need at least 10 records, got " +
                            std::to_string(records.size()));
    if (step <= 0 || step > 1) throw ArgumentError("weight_scan: step must lie in (0,1]");
    const int n = static_cast<int>(std::lround(1.0 / step));
    if (std::abs(n * step - 1.0) > 1e-9)
        throw ArgumentError("weight_scan: step must divide 1 evenly");

    const auto top10 = [&](const WeightPair& w) {
        const Ranking ranking = rank_records(records, w);
        std::set<std::string> names;
        for (int i = 0; i < 10; ++i) names.insert(ranking.entries[static_cast<size_t>(i)].name);
        return names;
    };
    const std::set<std::string> baseline = top10({0.5, 0.5});

    std::vector<WeightScanRow> rows;
    rows.reserve(static_cast<size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        WeightScanRow row;
        row.w_R = (i == n) ? 1.0 : i * step;
        row.w_A = 1.0 - row.w_R;
        int shared = 0;
        for (const std::string& name : top10({row.w_R, row.w_A}))
            shared += baseline.count(name) ? 1 : 0;
        row.overlap = shared / 10.0;
        rows.push_back(row);
    }
    return rows;
}

StructureStats structure_stats(const std::vector<RankedEntry>& ranked, int k) {
    if (k < 1) throw ArgumentError("structure_stats: k must be >= 1");
    if (static_cast<int>(ranked.size()) < k)
        throw ArgumentError("structure_stats: need " + std::to_string(k) +
                            " ranked entries, got " + std::to_string(ranked.size()));
    StructureStats stats;
    for (int i = 0; i < k; ++i) {
        const RankedEntry& e = ranked[static_cast<size_t>(i)];
        ++stats.bond[e.bond];
        ++stats.net[e.net];
        const CofNameParts parts = parse_cof_name(e.name);
        ++stats.linker[parts.linker_a];
        ++stats.linker[parts.linker_b];
    }
    return stats;
}

CofNameParts parse_cof_name(const std::string& name) {
    std::vector<std::string> tokens;
    size_t at = 0;
    while (true) {
        const size_t us = name.find('_', at);
        if (us == std::string::npos) {
            tokens.push_back(name.substr(at));
            break;
        }
        tokens.push_back(name.substr(at, us - at));
        at = us + 1;
    }
    if (tokens.size() < 6)
        throw ParseError("cof name '" + name + "': expected at least 6 '_'-separated fields");
    for (size_t i : {size_t{0}, size_t{2}}) {
        if (tokens[i].rfind("linker", 0) != 0 || !all_digits(tokens[i].substr(6)))
            throw ParseError("cof name '" + name + "': expected 'linker<id>', got '" +
                             tokens[i] + "'");
    }
    for (size_t i : {size_t{1}, size_t{3}, size_t{4}}) {
        if (tokens[i].empty())
            throw ParseError("cof name '" + name + "': field " + std::to_string(i + 1) +
                             " is empty");
    }
    if (tokens[5] != "relaxed")
        throw ParseError("cof name '" + name + "': expected 'relaxed', got '" + tokens[5] +
                         "'");
    CofNameParts parts;
    parts.linker_a = tokens[0];
    parts.end_a = tokens[1];
    parts.linker_b = tokens[2];
    parts.end_b = tokens[3];
    parts.net = tokens[4];
    parts.bond = bond_from_ends(parts.end_a, parts.end_b);
    return parts;
}

PerformanceWindows performance_window(const std::vector<ScreeningRecord>& records,
                                      double aps_threshold) {
    PerformanceWindows out;
    for (const auto& r : records) {
        if (r.APS < aps_threshold) continue;
        ++out.qualifiers;
        fold_window(out.pld, r.PLD);
        fold_window(out.lcd, r.LCD);
        fold_window(out.s_acc, r.S_acc);
        fold_window(out.phi, r.phi);
    }
    return out;
}

std::vector<ScreeningRecord> load_screening_csv(const std::string& path) {
    static const std::vector<std::string> kHeader = {
        "name", "N_ads_CH4", "N_des_CH4", "N_ads_H2", "N_des_H2", "y_CH4",
        "y_H2", "PLD",       "LCD",       "S_acc",    "rho",      "phi"};
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    std::vector<ScreeningRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (line_no == 1) {
            for (size_t i = 0; i < kHeader.size(); ++i)
                if (i >= fields.size() || trim(fields[i]) != kHeader[i])
                    throw ParseError("screening csv: expected header column '" + kHeader[i] +
                                     "' at position " + std::to_string(i + 1));
            continue;
        }
        if (fields.size() != kHeader.size())
            throw ParseError("screening csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kHeader.size()) + " fields, got " +
                             std::to_string(fields.size()));
        ScreeningRecord r;
        r.name = trim(fields[0]);
        if (r.name.empty())
            throw ParseError("screening csv line " + std::to_string(line_no) +
                             ": empty name");
        r.N_ads_CH4 = parse_field(fields[1], line_no, "N_ads_CH4", false);
        r.N_des_CH4 = parse_field(fields[2], line_no, "N_des_CH4", false);
        r.N_ads_H2 = parse_field(fields[3], line_no, "N_ads_H2", false);
        r.N_des_H2 = parse_field(fields[4], line_no, "N_des_H2", false);
        r.y_CH4 = parse_field(fields[5], line_no, "y_CH4", false);
        r.y_H2 = parse_field(fields[6], line_no, "y_H2", false);
        r.PLD = parse_field(fields[7], line_no, "PLD", true);
        r.LCD = parse_field(fields[8], line_no, "LCD", true);
        r.S_acc = parse_field(fields[9], line_no, "S_acc", true);
        r.rho = parse_field(fields[10], line_no, "rho", true);
        r.phi = parse_field(fields[11], line_no, "phi", true);
        derive_metrics(r);
        records.push_back(std::move(r));
    }
    return records;
}

std::string ranking_csv(const Ranking& ranking) {
    std::string out = "name,S_i,rate_R,rate_A,bond,net\n";
    for (const auto& e : ranking.entries) {
        out += e.name + ',' + format_fixed(e.S_i, 4) + ',' + format_fixed(e.rate_R, 4) +
               ',' + format_fixed(e.rate_A, 4) + ',' + e.bond + ',' + e.net + '\n';
    }
    return out;
}

std::string weight_scan_csv(const std::vector<WeightScanRow>& rows) {
    std::string out = "w_R,w_A,overlap\n";
    for (const auto& row : rows) {
        out += format_fixed(row.w_R, 4) + ',' + format_fixed(row.w_A, 4) + ',' +
               format_fixed(row.overlap, 4) + '\n';
    }
    return out;
}

std::string structure_stats_json(const StructureStats& stats) {
    nlohmann::json j;
    j["bond"] = stats.bond;
    j["net"] = stats.net;
    j["linker"] = stats.linker;
    return j.dump(2) + "\n";
}

}  // namespace cofap

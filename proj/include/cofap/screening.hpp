// Separation-performance screening: derived metrics (S, delta-N, APS, R%),
// pre-screen filter, min-max normalization, composite scoring with
// adjustable weights, weight-sensitivity scan, contribution rates, top-k
// structure statistics, and performance-window extraction.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cofap/io.hpp"

namespace cofap {

struct ScreeningRecord {
    std::string name;
    // Uptakes in mol/kg at adsorption and desorption pressure, per gas.
    double N_ads_CH4 = 0, N_des_CH4 = 0, N_ads_H2 = 0, N_des_H2 = 0;
    // Feed mole fractions (sum to 1).
    double y_CH4 = 0.5, y_H2 = 0.5;
    // Derived separation metrics (filled by derive_metrics).
    double S = 0, delta_N = 0, APS = 0, R_pct = 0;
    // Structural descriptors: pore limiting / largest cavity diameter (A),
    // accessible surface area (m^2/g), density, porosity. NaN = missing.
    double PLD = 0, LCD = 0, S_acc = 0, rho = 0, phi = 0;
};

struct WeightPair {
    double w_R = 0.5, w_A = 0.5;
};

// Throws ArgumentError unless w_R, w_A >= 0 and w_R + w_A == 1 (1e-9 slack).
void validate_weights(const WeightPair& w);

struct RankedEntry {
    std::string name;
    double S_i = 0, rate_R = 0, rate_A = 0;
    std::string bond, net;
};

struct Ranking {
    WeightPair w;
    std::vector<RankedEntry> entries;  // descending S_i, ties by name
};

struct CofNameParts {
    std::string linker_a, end_a, linker_b, end_b, bond, net;
};

// ------------------------------------------------------------- metric math

// Mixture adsorption selectivity (N_CH4 / y_CH4) / (N_H2 / y_H2).
double selectivity(double N_CH4, double N_H2, double y_CH4, double y_H2);
// delta-N = N_ads - N_des.
double working_capacity(double N_ads, double N_des);
// Adsorbent performance score S * delta-N.
double aps(double S, double delta_N);
// R% = delta-N / N_ads * 100.
double regenerability(double delta_N, double N_ads);

// Threshold separating high-performing frameworks, mol/kg.
constexpr double kApsThreshold = 100.0;

// Validates invariants (uptakes >= 0, mole fractions sum to 1) and fills
// S, delta_N, APS, R_pct from the raw uptakes.
void derive_metrics(ScreeningRecord& r);

// ------------------------------------------------------------------ stages

struct PrescreenResult {
    std::vector<ScreeningRecord> kept;
    int skipped_missing = 0;  // records lacking LCD or phi
};

// Keeps records with LCD < 20 A and phi < 0.80 (both strict).
PrescreenResult prescreen_filter(const std::vector<ScreeningRecord>& records);

// (v - min) / (max - min); a constant column maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& values);

// S_i = w_R * r_norm + w_A * aps_norm. Inputs must lie in [0,1].
double composite_score(double r_norm, double aps_norm, const WeightPair& w);

// contrib = (w_R * r_norm, w_A * aps_norm) normalized to sum 1;
// (0.5, 0.5) when both contributions are zero.
std::pair<double, double> contribution_rates(double r_norm, double aps_norm,
                                             const WeightPair& w);

// Normalizes R% and APS over `records` (the post-prescreen population),
// scores with `w`, and sorts descending by S_i with name tie-break.
Ranking rank_records(const std::vector<ScreeningRecord>& records, const WeightPair& w);

struct WeightScanRow {
    double w_R = 0, w_A = 0, overlap = 0;  // |top10 ^ top10(0.5,0.5)| / 10
};

// One row per w_R in {0, step, ..., 1}; step must divide 1 evenly and the
// input must hold at least 10 records.
std::vector<WeightScanRow> weight_scan(const std::vector<ScreeningRecord>& records,
                                       double step = 0.1);

struct StructureStats {
    std::map<std::string, int> bond, net, linker;
};

// Frequency tables over the top-k entries; each name contributes one bond,
// one net, and two linker ids.
StructureStats structure_stats(const std::vector<RankedEntry>& ranked, int k = 100);

// `linker<id>_<end>_linker<id>_<end>_<net>_relaxed[_...]`; bond is inferred
// from the end-code pair: (C,C) -> CC, {CH,N} -> imine, {NH,CO} -> amide,
// anything else -> other.
CofNameParts parse_cof_name(const std::string& name);

struct DescriptorWindow {
    double lo = 0, hi = 0;
};

struct PerformanceWindows {
    int qualifiers = 0;  // records with APS >= threshold
    std::optional<DescriptorWindow> pld, lcd, s_acc, phi;
};

// Componentwise min/max of PLD, LCD, S_acc, phi over records whose APS
// meets the threshold. No qualifier yields an empty (not erroneous) result.
PerformanceWindows performance_window(const std::vector<ScreeningRecord>& records,
                                      double aps_threshold = kApsThreshold);

// --------------------------------------------------------------------- io

// Header: name,N_ads_CH4,N_des_CH4,N_ads_H2,N_des_H2,y_CH4,y_H2,
//         PLD,LCD,S_acc,rho,phi.  Empty descriptor fields parse as NaN
// (prescreen skips them); empty uptake or mole-fraction fields are errors.
// Derived metrics are computed on load.
std::vector<ScreeningRecord> load_screening_csv(const std::string& path);

// `name,S_i,rate_R,rate_A,bond,net` with fixed 4-decimal formatting, so
// identical inputs yield byte-identical files.
std::string ranking_csv(const Ranking& ranking);

// `w_R,w_A,overlap` rows in grid order, fixed formatting.
std::string weight_scan_csv(const std::vector<WeightScanRow>& rows);

// {"bond": {...}, "net": {...}, "linker": {...}} with sorted keys.
std::string structure_stats_json(const StructureStats& stats);

}  // namespace cofap

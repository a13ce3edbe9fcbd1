// Pipeline orchestration: declarative JSON configuration, descriptor/label
// ingestion, and the six stages (featurize, pretrain x3, fuse-train, predict,
// screen, stats) that turn a directory of CIF files plus descriptor/label
// tables into feature artifacts, frozen checkpoints, predictions, rankings,
// and metric reports. Every artifact is written atomically and carries a
// manifest (config hash, seed, format versions) so identical (config, seed,
// inputs) reproduce identical bytes.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cofap/models.hpp"
#include "cofap/screening.hpp"

namespace cofap {

// Accepted label column names: selectivity and working capacity under both
// swing modes, five single-gas uptakes at 1 bar, and methane at two further
// pressures.
const std::vector<std::string>& label_vocabulary();

struct StageToggles {
    bool featurize = true;
    bool pretrain = true;
    bool fuse_train = true;
    bool predict = true;
    bool screen = true;
    bool stats = true;
};

struct ScreeningOptions {
    std::vector<WeightPair> weights = {{0.5, 0.5}};
    double aps_threshold = kApsThreshold;
    double weight_scan_step = 0.1;
    int stats_top_k = 100;  // clipped to the record count at run time
};

struct StatsOptions {
    int folds = 5;
};

struct PipelineConfig {
    // Input paths. A stage that needs an unset or missing path fails with
    // the path (or config field) named.
    std::string structures_dir;   // *.cif files, one structure each
    std::string descriptors_file; // name,PLD,LCD,S_acc,rho,phi
    std::string labels_file;      // name + columns from label_vocabulary()
    std::string screening_file;   // uptake table for the screen stage
    std::string output_dir;

    StageToggles stages;
    std::uint64_t seed = 42;
    int jobs = 1;                 // worker threads for featurize
    std::string target = "S_CH4_H2_VSA";

    SPcVAEConfig sp;
    PHNNConfig ph;
    BiGCAEConfig big;
    FusionConfig fusion;
    TrainConfig train;            // train.seed defaults to `seed`
    ScreeningOptions screening;
    StatsOptions stats;
};

// Parses and validates a JSON config file. Unknown keys, wrong types, and
// out-of-range values throw ArgumentError naming the field path (e.g.
// "config: train.epochs must be a positive integer"); set input paths must
// exist on disk. Environment variables COFAP_STRUCTURES_DIR,
// COFAP_DESCRIPTORS_FILE, COFAP_LABELS_FILE, COFAP_SCREENING_FILE and
// COFAP_OUTPUT_DIR override the corresponding paths — paths only, so every
// numeric hyperparameter is pinned by the file and recorded in manifests.
PipelineConfig load_pipeline_config(const std::string& path);

// The same parse/validate step on an in-memory document (no env overrides,
// no existence checks) — the canonical form used for hashing.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);

// Canonical JSON rendering of the effective config and its SHA-256; the hash
// is stamped into every artifact manifest.
nlohmann::json pipeline_config_json(const PipelineConfig& cfg);
std::string pipeline_config_hash(const PipelineConfig& cfg);

// --- ingestion ---------------------------------------------------------------

struct Descriptors {
    double PLD = 0, LCD = 0, S_acc = 0, rho = 0, phi = 0;
};

struct DescriptorTable {
    std::map<std::string, Descriptors> rows;
    std::size_t rejected_rows = 0;    // non-finite value or phi outside [0,1]
    std::size_t duplicate_names = 0;  // later occurrence replaced the earlier
};

// CSV with a name column plus the five descriptor columns (any order).
// Missing column -> ParseError naming it. Rows with a non-finite value or
// phi outside [0,1] are rejected and counted; duplicate names keep the last
// occurrence and are counted.
DescriptorTable ingest_descriptors(const std::string& path);

struct LabelTable {
    std::vector<std::string> targets;  // header order
    // target -> (structure name -> value); structures missing a target are
    // simply absent from that target's map.
    std::map<std::string, std::map<std::string, double>> values;
};

// CSV whose header is `name` plus columns drawn from label_vocabulary().
// Unknown column -> ParseError listing the accepted vocabulary; empty file
// -> ParseError. Cells may be empty (sparse targets).
LabelTable ingest_labels(const std::string& path);

// --- feature artifacts -------------------------------------------------------

struct FeatureRow {
    std::string name;
    std::array<double, 18> fingerprint{};
    Descriptors desc;
    std::array<double, 6> chem{};  // C,H,O,N fractions, atom count, density
    std::string sections_ref;      // relative to the features directory
    std::string graph_ref;
    std::map<std::string, double> targets;  // sparse
};

struct FeatureTable {
    std::vector<std::string> target_columns;
    std::vector<FeatureRow> rows;
};

// Reads featurize output (features.csv + chem.csv) back from `features_dir`.
FeatureTable load_feature_table(const std::string& features_dir);

// --- stages ------------------------------------------------------------------

enum class Stage {
    Featurize,
    PretrainSP,
    PretrainPH,
    PretrainBiG,
    FuseTrain,
    Predict,
    Screen,
    Stats,
};

// Accepted names: featurize, pretrain-sp, pretrain-ph, pretrain-big,
// fuse-train, predict, screen, stats. Throws ArgumentError otherwise.
Stage stage_from_name(const std::string& name);

// Parses the command-line weight grid "w_R:w_A[,w_R:w_A...]" (e.g.
// "0.5:0.5,1:0"); every pair must be non-negative and sum to 1.
std::vector<WeightPair> parse_weights_flag(const std::string& text);

// Executes one stage, writing artifacts under cfg.output_dir. Throws
// ArgumentError / ParseError / IoError with the offending field or path in
// the message; never mutates its inputs.
void run_stage(Stage stage, const PipelineConfig& cfg);

// Exception-free wrapper used by the command-line tool: maps "pretrain sp"
// style commands onto stages, prints errors to stderr, and returns a
// process exit status (0 = success).
int run_command(const std::string& command, const PipelineConfig& cfg);

}  // namespace cofap

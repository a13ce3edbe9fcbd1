#include "cofap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cofap/evalstats.hpp"
#include "cofap/homology.hpp"
#include "cofap/nn.hpp"
#include "cofap/sections.hpp"
#include "cofap/sha256.hpp"
#include "cofap/structure.hpp"
#include "cofap/supragraph.hpp"

namespace fsp = std::filesystem;

namespace cofap {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Fixed input scales keeping network inputs O(1). Constants rather than
// fitted statistics, so checkpoints carry no normalization state and every
// stage stays a pure function of (config, seed, inputs).
constexpr double kAtomCountScale = 1.0 / 100.0;  // atoms per cell
constexpr double kPldScale = 1.0 / 50.0;         // A
constexpr double kLcdScale = 1.0 / 50.0;         // A
constexpr double kSaccScale = 1.0 / 5000.0;      // m^2/g
constexpr double kRhoScale = 1.0 / 3.0;          // g/cm^3

constexpr const char* kToolVersion = "cofap 0.1.0";

// Shortest decimal text that round-trips the exact double.
std::string format_full(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << v;
    return os.str();
}

std::string features_dir(const PipelineConfig& cfg) { return cfg.output_dir + "/features"; }
std::string checkpoints_dir(const PipelineConfig& cfg) { return cfg.output_dir + "/checkpoints"; }
std::string predictions_dir(const PipelineConfig& cfg) { return cfg.output_dir + "/predictions"; }
std::string screening_dir(const PipelineConfig& cfg) { return cfg.output_dir + "/screening"; }
std::string stats_dir(const PipelineConfig& cfg) { return cfg.output_dir + "/stats"; }

ordered_json manifest_base(const char* stage, const PipelineConfig& cfg) {
    ordered_json m;
    m["format"] = "cofap-manifest";
    m["version"] = 1;
    m["stage"] = stage;
    m["tool"] = kToolVersion;
    m["seed"] = cfg.seed;
    m["config_sha256"] = pipeline_config_hash(cfg);
    return m;
}

void write_manifest(const std::string& dir, const ordered_json& m) {
    atomic_write_file(dir + "/manifest.json", m.dump(2) + "\n");
}

void require_input(const std::string& value, const char* field) {
    if (value.empty())
        throw ArgumentError(std::string("config: input.") + field +
                            " is required for this stage");
}

void require_artifact(const std::string& path, const std::string& hint) {
    if (!fsp::exists(path))
        throw IoError(hint + ": missing " + path);
}

void check_stage_enabled(bool enabled, const char* name) {
    if (!enabled)
        throw ArgumentError(std::string("config: stages.") + name +
                            " is disabled in this configuration");
}

// ------------------------------------------------------------------ config

[[noreturn]] void cfg_fail(const std::string& path, const std::string& why) {
    throw ArgumentError("config: " + path + " " + why);
}

std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

void check_keys(const json& obj, const std::string& base,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known) cfg_fail(join_path(base, it.key()), "is not a recognized field");
    }
}

const json& need_object(const json& obj, const std::string& path) {
    if (!obj.is_object()) cfg_fail(path, "must be an object");
    return obj;
}

void read_string(const json& obj, const std::string& base, const char* key,
                 std::string& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) cfg_fail(join_path(base, key), "must be a string");
    out = v.get<std::string>();
}

void read_bool(const json& obj, const std::string& base, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) cfg_fail(join_path(base, key), "must be a boolean");
    out = v.get<bool>();
}

void read_pos_int(const json& obj, const std::string& base, const char* key, int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() <= 0)
        cfg_fail(join_path(base, key), "must be a positive integer");
    out = static_cast<int>(v.get<long long>());
}

void read_real(const json& obj, const std::string& base, const char* key, double& out,
               double lo, double hi) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) cfg_fail(join_path(base, key), "must be a number");
    double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi)
        cfg_fail(join_path(base, key), "must be in [" + format_full(lo) + ", " +
                                           format_full(hi) + "]");
    out = x;
}

}  // namespace

const std::vector<std::string>& label_vocabulary() {
    static const std::vector<std::string> v = {
        "S_CH4_H2_VSA", "S_CH4_H2_PSA", "dN_CH4_VSA",  "dN_CH4_PSA",
        "N_CH4_1bar",   "N_H2_1bar",    "N_CO2_1bar",  "N_N2_1bar",
        "N_O2_1bar",    "N_CH4_10bar",  "N_CH4_0.1bar"};
    return v;
}

PipelineConfig pipeline_config_from_json(const json& doc) {
    PipelineConfig cfg;
    need_object(doc, "(root)");
    check_keys(doc, "", {"input", "output_dir", "stages", "seed", "jobs", "target",
                         "models", "train", "screening", "stats"});

    if (doc.contains("input")) {
        const json& in = need_object(doc.at("input"), "input");
        check_keys(in, "input",
                   {"structures_dir", "descriptors_file", "labels_file", "screening_file"});
        read_string(in, "input", "structures_dir", cfg.structures_dir);
        read_string(in, "input", "descriptors_file", cfg.descriptors_file);
        read_string(in, "input", "labels_file", cfg.labels_file);
        read_string(in, "input", "screening_file", cfg.screening_file);
    }
    read_string(doc, "", "output_dir", cfg.output_dir);
    if (cfg.output_dir.empty()) cfg_fail("output_dir", "is required");

    if (doc.contains("stages")) {
        const json& st = need_object(doc.at("stages"), "stages");
        check_keys(st, "stages",
                   {"featurize", "pretrain", "fuse_train", "predict", "screen", "stats"});
        read_bool(st, "stages", "featurize", cfg.stages.featurize);
        read_bool(st, "stages", "pretrain", cfg.stages.pretrain);
        read_bool(st, "stages", "fuse_train", cfg.stages.fuse_train);
        read_bool(st, "stages", "predict", cfg.stages.predict);
        read_bool(st, "stages", "screen", cfg.stages.screen);
        read_bool(st, "stages", "stats", cfg.stages.stats);
    }

    if (doc.contains("seed")) {
        const json& v = doc.at("seed");
        if (!v.is_number_integer() || v.get<long long>() < 0)
            cfg_fail("seed", "must be a non-negative integer");
        cfg.seed = v.get<std::uint64_t>();
    }
    read_pos_int(doc, "", "jobs", cfg.jobs);
    read_string(doc, "", "target", cfg.target);
    const auto& vocab = label_vocabulary();
    if (std::find(vocab.begin(), vocab.end(), cfg.target) == vocab.end()) {
        std::string all;
        for (const auto& t : vocab) all += (all.empty() ? "" : ", ") + t;
        cfg_fail("target", "must be one of: " + all);
    }

    if (doc.contains("models")) {
        const json& m = need_object(doc.at("models"), "models");
        check_keys(m, "models", {"sp", "ph", "big", "fusion"});
        if (m.contains("sp")) {
            const json& sp = need_object(m.at("sp"), "models.sp");
            // Raster geometry (9 planes, 2 channels, 64x64) and the 6-wide
            // chemical descriptor are pinned by the feature-file format and
            // not configurable here.
            check_keys(sp, "models.sp", {"latent_dim", "conv_channels", "fused_channels",
                                         "dropout", "alpha_elbo", "beta_reg"});
            read_pos_int(sp, "models.sp", "latent_dim", cfg.sp.latent_dim);
            if (sp.contains("conv_channels")) {
                const json& cc = sp.at("conv_channels");
                if (!cc.is_array() || cc.size() != 4)
                    cfg_fail("models.sp.conv_channels", "must be an array of 4 integers");
                std::vector<int> ch;
                for (size_t i = 0; i < cc.size(); ++i) {
                    if (!cc[i].is_number_integer() || cc[i].get<long long>() <= 0)
                        cfg_fail("models.sp.conv_channels[" + std::to_string(i) + "]",
                                 "must be a positive integer");
                    ch.push_back(static_cast<int>(cc[i].get<long long>()));
                }
                cfg.sp.conv_channels = ch;
            }
            read_pos_int(sp, "models.sp", "fused_channels", cfg.sp.fused_channels);
            read_real(sp, "models.sp", "dropout", cfg.sp.dropout, 0.0, 0.999);
            read_real(sp, "models.sp", "alpha_elbo", cfg.sp.alpha_elbo, 0.0, 1e6);
            read_real(sp, "models.sp", "beta_reg", cfg.sp.beta_reg, 0.0, 1e6);
        }
        if (m.contains("ph")) {
            const json& ph = need_object(m.at("ph"), "models.ph");
            check_keys(ph, "models.ph", {"hidden", "dropout"});
            read_pos_int(ph, "models.ph", "hidden", cfg.ph.hidden);
            read_real(ph, "models.ph", "dropout", cfg.ph.dropout, 0.0, 0.999);
        }
        if (m.contains("big")) {
            const json& bg = need_object(m.at("big"), "models.big");
            check_keys(bg, "models.big",
                       {"encoder_dim", "latent_dim", "decoder_dim", "projection_dim", "tau",
                        "alpha_recon", "beta_contrastive", "huber_delta"});
            read_pos_int(bg, "models.big", "encoder_dim", cfg.big.encoder_dim);
            read_pos_int(bg, "models.big", "latent_dim", cfg.big.latent_dim);
            read_pos_int(bg, "models.big", "decoder_dim", cfg.big.decoder_dim);
            read_pos_int(bg, "models.big", "projection_dim", cfg.big.projection_dim);
            read_real(bg, "models.big", "tau", cfg.big.tau, 1e-6, 1e3);
            read_real(bg, "models.big", "alpha_recon", cfg.big.alpha_recon, 0.0, 1e6);
            read_real(bg, "models.big", "beta_contrastive", cfg.big.beta_contrastive, 0.0, 1e6);
            read_real(bg, "models.big", "huber_delta", cfg.big.huber_delta, 1e-9, 1e6);
        }
        if (m.contains("fusion")) {
            const json& fu = need_object(m.at("fusion"), "models.fusion");
            check_keys(fu, "models.fusion", {"fusion_dim", "heads", "head_hidden",
                                             "attn_dropout", "main_weight", "fusion_weight"});
            read_pos_int(fu, "models.fusion", "fusion_dim", cfg.fusion.fusion_dim);
            read_pos_int(fu, "models.fusion", "heads", cfg.fusion.heads);
            read_pos_int(fu, "models.fusion", "head_hidden", cfg.fusion.head_hidden);
            read_real(fu, "models.fusion", "attn_dropout", cfg.fusion.attn_dropout, 0.0, 0.999);
            read_real(fu, "models.fusion", "main_weight", cfg.fusion.main_weight, 0.0, 1e6);
            read_real(fu, "models.fusion", "fusion_weight", cfg.fusion.fusion_weight, 0.0, 1e6);
            if (cfg.fusion.fusion_dim % cfg.fusion.heads != 0)
                cfg_fail("models.fusion.heads", "must divide fusion_dim");
        }
    }

    cfg.train.seed = cfg.seed;
    if (doc.contains("train")) {
        const json& tr = need_object(doc.at("train"), "train");
        check_keys(tr, "train",
                   {"epochs", "batch_size", "lr", "patience", "min_delta", "seed"});
        read_pos_int(tr, "train", "epochs", cfg.train.epochs);
        read_pos_int(tr, "train", "batch_size", cfg.train.batch_size);
        read_real(tr, "train", "lr", cfg.train.lr, 1e-12, 1e3);
        read_pos_int(tr, "train", "patience", cfg.train.patience);
        read_real(tr, "train", "min_delta", cfg.train.min_delta, 0.0, 1e6);
        if (tr.contains("seed")) {
            const json& v = tr.at("seed");
            if (!v.is_number_integer() || v.get<long long>() < 0)
                cfg_fail("train.seed", "must be a non-negative integer");
            cfg.train.seed = v.get<std::uint64_t>();
        }
    }

    if (doc.contains("screening")) {
        const json& sc = need_object(doc.at("screening"), "screening");
        check_keys(sc, "screening",
                   {"weights", "aps_threshold", "weight_scan_step", "stats_top_k"});
        if (sc.contains("weights")) {
            const json& ws = sc.at("weights");
            if (!ws.is_array() || ws.empty())
                cfg_fail("screening.weights", "must be a non-empty array of [w_R, w_A] pairs");
            cfg.screening.weights.clear();
            for (size_t i = 0; i < ws.size(); ++i) {
                const std::string p = "screening.weights[" + std::to_string(i) + "]";
                const json& pair = ws[i];
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() ||
                    !pair[1].is_number())
                    cfg_fail(p, "must be a [w_R, w_A] number pair");
                WeightPair w{pair[0].get<double>(), pair[1].get<double>()};
                try {
                    validate_weights(w);
                } catch (const ArgumentError& e) {
                    cfg_fail(p, e.what());
                }
                cfg.screening.weights.push_back(w);
            }
        }
        read_real(sc, "screening", "aps_threshold", cfg.screening.aps_threshold, 0.0, 1e12);
        read_real(sc, "screening", "weight_scan_step", cfg.screening.weight_scan_step,
                  1e-9, 1.0);
        read_pos_int(sc, "screening", "stats_top_k", cfg.screening.stats_top_k);
    }

    if (doc.contains("stats")) {
        const json& st = need_object(doc.at("stats"), "stats");
        check_keys(st, "stats", {"folds"});
        read_pos_int(st, "stats", "folds", cfg.stats.folds);
        if (cfg.stats.folds < 2) cfg_fail("stats.folds", "must be at least 2");
    }

    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    PipelineConfig cfg = pipeline_config_from_json(doc);

    // Input paths written in the file are relative to the file itself, so a
    // config travels with its dataset; output_dir stays invocation-relative.
    const fsp::path base = fsp::absolute(fsp::path(path)).parent_path();
    auto resolve = [&base](std::string& p) {
        if (!p.empty() && fsp::path(p).is_relative())
            p = (base / p).lexically_normal().string();
    };
    resolve(cfg.structures_dir);
    resolve(cfg.descriptors_file);
    resolve(cfg.labels_file);
    resolve(cfg.screening_file);

    // Environment overrides, paths only; taken verbatim (invocation-relative).
    auto env_override = [](const char* var, std::string& out) {
        const char* v = std::getenv(var);
        if (v != nullptr && *v != '\0') out = v;
    };
    env_override("COFAP_STRUCTURES_DIR", cfg.structures_dir);
    env_override("COFAP_DESCRIPTORS_FILE", cfg.descriptors_file);
    env_override("COFAP_LABELS_FILE", cfg.labels_file);
    env_override("COFAP_SCREENING_FILE", cfg.screening_file);
    env_override("COFAP_OUTPUT_DIR", cfg.output_dir);

    if (!cfg.structures_dir.empty() && !fsp::is_directory(cfg.structures_dir))
        cfg_fail("input.structures_dir", "does not exist: " + cfg.structures_dir);
    auto check_file = [](const std::string& p, const char* field) {
        if (!p.empty() && !fsp::is_regular_file(p))
            cfg_fail(std::string("input.") + field, "does not exist: " + p);
    };
    check_file(cfg.descriptors_file, "descriptors_file");
    check_file(cfg.labels_file, "labels_file");
    check_file(cfg.screening_file, "screening_file");
    return cfg;
}

json pipeline_config_json(const PipelineConfig& cfg) {
    json j;
    j["input"] = {{"structures_dir", cfg.structures_dir},
                  {"descriptors_file", cfg.descriptors_file},
                  {"labels_file", cfg.labels_file},
                  {"screening_file", cfg.screening_file}};
    // output_dir, like jobs, is omitted: artifact bytes do not depend on where
    // they are written, so relocating a run must not change its config hash.
    j["stages"] = {{"featurize", cfg.stages.featurize}, {"pretrain", cfg.stages.pretrain},
                   {"fuse_train", cfg.stages.fuse_train}, {"predict", cfg.stages.predict},
                   {"screen", cfg.stages.screen},         {"stats", cfg.stages.stats}};
    j["seed"] = cfg.seed;
    // jobs is deliberately omitted: it is an execution-resource knob that never
    // changes artifact content, so it must not perturb the config hash.
    j["target"] = cfg.target;
    j["models"]["sp"] = {{"planes", cfg.sp.planes},
                         {"channels", cfg.sp.channels},
                         {"image_size", cfg.sp.image_size},
                         {"latent_dim", cfg.sp.latent_dim},
                         {"desc_dim", cfg.sp.desc_dim},
                         {"conv_channels", cfg.sp.conv_channels},
                         {"fused_channels", cfg.sp.fused_channels},
                         {"dropout", cfg.sp.dropout},
                         {"alpha_elbo", cfg.sp.alpha_elbo},
                         {"beta_reg", cfg.sp.beta_reg}};
    j["models"]["ph"] = {{"topo_dim", cfg.ph.topo_dim},
                         {"struct_dim", cfg.ph.struct_dim},
                         {"hidden", cfg.ph.hidden},
                         {"dropout", cfg.ph.dropout}};
    j["models"]["big"] = {{"encoder_dim", cfg.big.encoder_dim},
                          {"latent_dim", cfg.big.latent_dim},
                          {"decoder_dim", cfg.big.decoder_dim},
                          {"projection_dim", cfg.big.projection_dim},
                          {"tau", cfg.big.tau},
                          {"alpha_recon", cfg.big.alpha_recon},
                          {"beta_contrastive", cfg.big.beta_contrastive},
                          {"huber_delta", cfg.big.huber_delta}};
    j["models"]["fusion"] = {{"fusion_dim", cfg.fusion.fusion_dim},
                             {"heads", cfg.fusion.heads},
                             {"head_hidden", cfg.fusion.head_hidden},
                             {"attn_dropout", cfg.fusion.attn_dropout},
                             {"main_weight", cfg.fusion.main_weight},
                             {"fusion_weight", cfg.fusion.fusion_weight}};
    j["train"] = {{"epochs", cfg.train.epochs},   {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},           {"patience", cfg.train.patience},
                  {"min_delta", cfg.train.min_delta}, {"seed", cfg.train.seed}};
    json ws = json::array();
    for (const auto& w : cfg.screening.weights) ws.push_back({w.w_R, w.w_A});
    j["screening"] = {{"weights", ws},
                      {"aps_threshold", cfg.screening.aps_threshold},
                      {"weight_scan_step", cfg.screening.weight_scan_step},
                      {"stats_top_k", cfg.screening.stats_top_k}};
    j["stats"] = {{"folds", cfg.stats.folds}};
    return j;
}

std::string pipeline_config_hash(const PipelineConfig& cfg) {
    return sha256_hex(pipeline_config_json(cfg).dump());
}

// --------------------------------------------------------------- ingestion

DescriptorTable ingest_descriptors(const std::string& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("descriptors '" + path + "': empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    const std::vector<std::string> wanted = {"name", "PLD", "LCD", "S_acc", "rho", "phi"};
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const auto& w : wanted)
        if (!col.count(w))
            throw ParseError("descriptors '" + path + "': missing column '" + w + "'");

    DescriptorTable table;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("descriptors '" + path + "' line " + std::to_string(line_no) +
                             ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        std::string name = trim(fields[col["name"]]);
        if (name.empty())
            throw ParseError("descriptors '" + path + "' line " + std::to_string(line_no) +
                             ": empty name");
        auto parse_val = [&](const char* key) {
            const std::string raw = trim(fields[col[key]]);
            try {
                size_t used = 0;
                double v = std::stod(raw, &used);
                if (used != raw.size()) throw std::invalid_argument(raw);
                return v;
            } catch (const std::exception&) {
                throw ParseError("descriptors '" + path + "' line " + std::to_string(line_no) +
                                 ": column '" + key + "' is not a number: '" + raw + "'");
            }
        };
        Descriptors d;
        d.PLD = parse_val("PLD");
        d.LCD = parse_val("LCD");
        d.S_acc = parse_val("S_acc");
        d.rho = parse_val("rho");
        d.phi = parse_val("phi");
        bool finite = std::isfinite(d.PLD) && std::isfinite(d.LCD) && std::isfinite(d.S_acc) &&
                      std::isfinite(d.rho) && std::isfinite(d.phi);
        if (!finite || d.phi < 0.0 || d.phi > 1.0) {
            ++table.rejected_rows;
            continue;
        }
        if (table.rows.count(name)) {
            ++table.duplicate_names;
            std::cerr << "warning: duplicate descriptor row for '" << name
                      << "' (keeping the last occurrence)\n";
        }
        table.rows[name] = d;
    }
    return table;
}

LabelTable ingest_labels(const std::string& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line).empty())
        throw ParseError("labels '" + path + "': empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    if (header.empty() || header[0] != "name")
        throw ParseError("labels '" + path + "': first column must be 'name'");
    const auto& vocab = label_vocabulary();
    LabelTable table;
    for (size_t i = 1; i < header.size(); ++i) {
        if (std::find(vocab.begin(), vocab.end(), header[i]) == vocab.end()) {
            std::string all;
            for (const auto& t : vocab) all += (all.empty() ? "" : ", ") + t;
            throw ParseError("labels '" + path + "': unknown column '" + header[i] +
                             "'; accepted targets: " + all);
        }
        if (std::find(table.targets.begin(), table.targets.end(), header[i]) !=
            table.targets.end())
            throw ParseError("labels '" + path + "': duplicate column '" + header[i] + "'");
        table.targets.push_back(header[i]);
        table.values[header[i]] = {};
    }
    if (table.targets.empty())
        throw ParseError("labels '" + path + "': no target columns");

    size_t line_no = 1, rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("labels '" + path + "' line " + std::to_string(line_no) +
                             ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        std::string name = trim(fields[0]);
        if (name.empty())
            throw ParseError("labels '" + path + "' line " + std::to_string(line_no) +
                             ": empty name");
        ++rows;
        for (size_t i = 1; i < header.size(); ++i) {
            std::string raw = trim(fields[i]);
            if (raw.empty()) continue;  // sparse target
            double v;
            try {
                size_t used = 0;
                v = std::stod(raw, &used);
                if (used != raw.size() || !std::isfinite(v)) throw std::invalid_argument(raw);
            } catch (const std::exception&) {
                throw ParseError("labels '" + path + "' line " + std::to_string(line_no) +
                                 ": column '" + header[i] + "' is not a finite number: '" +
                                 raw + "'");
            }
            table.values[header[i]][name] = v;
        }
    }
    if (rows == 0) throw ParseError("labels '" + path + "': no data rows");
    return table;
}

// --------------------------------------------------------------- featurize

namespace {

struct FeaturizeResult {
    std::string name;
    TopoFingerprint fingerprint{};
    std::array<double, 6> chem{};
    bool has_descriptors = false;
};

std::array<double, 6> chem_descriptors(const CrystalStructure& s) {
    double counts[4] = {0, 0, 0, 0};
    for (const auto& site : s.sites) {
        switch (site.element) {
            case Element::C: counts[0] += 1; break;
            case Element::H: counts[1] += 1; break;
            case Element::O: counts[2] += 1; break;
            case Element::N: counts[3] += 1; break;
            default: break;
        }
    }
    double n = static_cast<double>(s.sites.size());
    return {counts[0] / n, counts[1] / n, counts[2] / n, counts[3] / n, n, s.density()};
}

void stage_featurize(const PipelineConfig& cfg) {
    require_input(cfg.structures_dir, "structures_dir");
    require_input(cfg.descriptors_file, "descriptors_file");

    std::vector<fsp::path> cif_paths;
    for (const auto& entry : fsp::directory_iterator(cfg.structures_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".cif")
            cif_paths.push_back(entry.path());
    std::sort(cif_paths.begin(), cif_paths.end());
    if (cif_paths.empty())
        throw ArgumentError("featurize: no .cif files in " + cfg.structures_dir);

    DescriptorTable descriptors = ingest_descriptors(cfg.descriptors_file);
    LabelTable labels;
    if (!cfg.labels_file.empty()) labels = ingest_labels(cfg.labels_file);

    const std::string out = features_dir(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<FeaturizeResult> results(cif_paths.size());
    const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cif_paths.size())));
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&](int tid) {
        try {
            for (size_t i = static_cast<size_t>(tid); i < cif_paths.size();
                 i += static_cast<size_t>(jobs)) {
                FeaturizeResult& r = results[i];
                r.name = cif_paths[i].stem().string();
                if (!descriptors.rows.count(r.name)) continue;  // no pore descriptors
                r.has_descriptors = true;

                CrystalStructure s = parse_cif_file(cif_paths[i].string());
                s.name = r.name;  // the file name is the join key

                SectionSet sections = featurize_sections(s);
                write_section_set(sections, out + "/sections/" + r.name + ".f32", r.name);

                r.fingerprint = topo_fingerprint(s);
                r.chem = chem_descriptors(s);

                Supragraph g = featurize_supragraph(s);
                atomic_write_file(out + "/graphs/" + r.name + ".json",
                                  supragraph_to_json(g).dump(2) + "\n");
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    if (jobs == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int tjob = 0; tjob < jobs; ++tjob) pool.emplace_back(worker, tjob);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Assemble the tables in sorted (slot) order, independent of scheduling.
    std::string feat_csv = "name";
    for (int i = 0; i < 18; ++i)
        feat_csv += ",fp" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    feat_csv += ",PLD,LCD,S_acc,rho,phi,sections,graph";
    for (const auto& t : labels.targets) feat_csv += "," + t;
    feat_csv += "\n";
    std::string chem_csv = "name,frac_C,frac_H,frac_O,frac_N,atoms,density\n";

    size_t featurized = 0;
    std::vector<std::string> skipped;
    for (const auto& r : results) {
        if (!r.has_descriptors) {
            skipped.push_back(r.name);
            continue;
        }
        ++featurized;
        const Descriptors& d = descriptors.rows.at(r.name);
        feat_csv += r.name;
        for (double v : r.fingerprint) feat_csv += "," + format_full(v);
        feat_csv += "," + format_full(d.PLD) + "," + format_full(d.LCD) + "," +
                    format_full(d.S_acc) + "," + format_full(d.rho) + "," + format_full(d.phi);
        feat_csv += ",sections/" + r.name + ".f32,graphs/" + r.name + ".json";
        for (const auto& t : labels.targets) {
            auto it = labels.values.at(t).find(r.name);
            feat_csv += ",";
            if (it != labels.values.at(t).end()) feat_csv += format_full(it->second);
        }
        feat_csv += "\n";
        chem_csv += r.name;
        for (double v : r.chem) chem_csv += "," + format_full(v);
        chem_csv += "\n";
    }
    if (featurized == 0)
        throw ArgumentError("featurize: no structure has a descriptor row; "
                            "check that CIF file names match the descriptor names");
    atomic_write_file(out + "/features.csv", feat_csv);
    atomic_write_file(out + "/chem.csv", chem_csv);

    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    std::cerr << "featurize: " << featurized << " structures in " << format_fixed(secs, 2)
              << " s (" << format_fixed(secs > 0 ? featurized / secs : 0.0, 1)
              << " structures/s)\n";

    ordered_json m = manifest_base("featurize", cfg);
    m["inputs"] = {{"structures_dir", cfg.structures_dir},
                   {"descriptors_file", cfg.descriptors_file},
                   {"labels_file", cfg.labels_file}};
    m["counts"] = {{"cif_files", cif_paths.size()},
                   {"featurized", featurized},
                   {"skipped_no_descriptors", skipped.size()},
                   {"descriptor_rows_rejected", descriptors.rejected_rows},
                   {"descriptor_duplicates", descriptors.duplicate_names}};
    m["skipped"] = skipped;
    m["targets"] = labels.targets;
    m["outputs"] = {"features.csv", "chem.csv", "sections/", "graphs/"};
    write_manifest(out, m);
}

}  // namespace

FeatureTable load_feature_table(const std::string& dir) {
    const std::string feat_path = dir + "/features.csv";
    require_artifact(feat_path, "feature table");
    require_artifact(dir + "/chem.csv", "feature table");

    // chem.csv: name -> 6 values.
    std::map<std::string, std::array<double, 6>> chem;
    {
        std::istringstream in(read_text_file(dir + "/chem.csv"));
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 7)
                throw ParseError("feature table '" + dir + "/chem.csv': malformed row");
            std::array<double, 6> v{};
            for (int i = 0; i < 6; ++i) v[static_cast<size_t>(i)] = std::stod(f[i + 1]);
            chem[trim(f[0])] = v;
        }
    }

    std::istringstream in(read_text_file(feat_path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError("feature table '" + feat_path + "': empty");
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    constexpr size_t kFixed = 1 + 18 + 5 + 2;  // name, fingerprint, descriptors, refs
    if (header.size() < kFixed || header[0] != "name" || header[19] != "PLD" ||
        header[24] != "sections" || header[25] != "graph")
        throw ParseError("feature table '" + feat_path + "': unexpected header");

    FeatureTable table;
    for (size_t i = kFixed; i < header.size(); ++i) table.target_columns.push_back(header[i]);

    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw ParseError("feature table '" + feat_path + "': malformed row '" +
                             (f.empty() ? "" : f[0]) + "'");
        FeatureRow row;
        row.name = trim(f[0]);
        for (int i = 0; i < 18; ++i) row.fingerprint[static_cast<size_t>(i)] = std::stod(f[1 + i]);
        row.desc.PLD = std::stod(f[19]);
        row.desc.LCD = std::stod(f[20]);
        row.desc.S_acc = std::stod(f[21]);
        row.desc.rho = std::stod(f[22]);
        row.desc.phi = std::stod(f[23]);
        row.sections_ref = trim(f[24]);
        row.graph_ref = trim(f[25]);
        for (size_t i = kFixed; i < header.size(); ++i) {
            std::string raw = trim(f[i]);
            if (!raw.empty()) row.targets[header[i]] = std::stod(raw);
        }
        auto it = chem.find(row.name);
        if (it == chem.end())
            throw ParseError("feature table '" + dir + "': no chem.csv row for '" + row.name +
                             "'");
        row.chem = it->second;
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty())
        throw ParseError("feature table '" + feat_path + "': no data rows");
    return table;
}

// ---------------------------------------------------------------- training

namespace {

Tensor sp_desc_tensor(const FeatureRow& row) {
    return Tensor({6}, {row.chem[0], row.chem[1], row.chem[2], row.chem[3],
                        row.chem[4] * kAtomCountScale, row.chem[5]});
}

Tensor ph_desc_tensor(const FeatureRow& row) {
    return Tensor({5}, {row.desc.PLD * kPldScale, row.desc.LCD * kLcdScale,
                        row.desc.S_acc * kSaccScale, row.desc.rho * kRhoScale, row.desc.phi});
}

Tensor planes_tensor(const std::string& dir, const FeatureRow& row) {
    SectionSet set = read_section_set(dir + "/" + row.sections_ref);
    Tensor t({kSectionPlanes, 2, kSectionSize, kSectionSize});
    size_t off = 0;
    for (const auto& img : set.images) {
        for (float v : img.atom) t.data[off++] = v;
        for (float v : img.bond) t.data[off++] = v;
    }
    return t;
}

GraphTensors graph_for_row(const std::string& dir, const FeatureRow& row) {
    json doc;
    const std::string path = dir + "/" + row.graph_ref;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ParseError("graph '" + path + "': " + e.what());
    }
    return graph_tensors(supragraph_from_json(doc));
}

// Rows that carry the configured target, in table order.
std::vector<size_t> labeled_rows(const FeatureTable& table, const std::string& target) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < table.rows.size(); ++i)
        if (table.rows[i].targets.count(target)) idx.push_back(i);
    return idx;
}

// Deterministic hold-out: fold 0 of a seed-keyed k-fold split validates,
// the remaining folds train. Every stage derives the same split from
// (n, seed), so fuse-train validates on the same structures pretraining did.
std::pair<std::vector<int>, std::vector<int>> train_val_split(size_t n, std::uint64_t seed) {
    if (n < 2)
        throw ArgumentError("training requires at least 2 labeled structures, got " +
                            std::to_string(n));
    int folds = static_cast<int>(std::min<size_t>(5, n));
    auto split = kfold_split(n, folds, seed);
    std::vector<int> val(split[0].begin(), split[0].end());
    std::vector<int> train;
    for (size_t f = 1; f < split.size(); ++f)
        train.insert(train.end(), split[f].begin(), split[f].end());
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

json history_json(const TrainHistory& h) {
    return json{{"train_loss", h.train_loss},
                {"val_loss", h.val_loss},
                {"best_epoch", h.best_epoch},
                {"stopped_epoch", h.stopped_epoch}};
}

json checkpoint_extra(const PipelineConfig& cfg, const char* branch, const TrainHistory& h,
                      size_t n_train, size_t n_val) {
    return json{{"branch", branch},
                {"target", cfg.target},
                {"config_sha256", pipeline_config_hash(cfg)},
                {"samples", {{"train", n_train}, {"val", n_val}}},
                {"history", history_json(h)}};
}

void log_history(const char* branch, const TrainHistory& h) {
    std::cerr << branch << ": stopped at epoch " << h.stopped_epoch << ", best epoch "
              << h.best_epoch << ", best val loss "
              << (h.best_epoch >= 1 ? format_full(h.val_loss[static_cast<size_t>(h.best_epoch) - 1])
                                    : "n/a")
              << "\n";
}

void stage_pretrain(Stage stage, const PipelineConfig& cfg) {
    FeatureTable table = load_feature_table(features_dir(cfg));
    auto rows = labeled_rows(table, cfg.target);
    if (rows.size() < 2)
        throw ArgumentError("pretrain: need at least 2 structures labeled with '" + cfg.target +
                            "', found " + std::to_string(rows.size()));
    auto [train_idx, val_idx] = train_val_split(rows.size(), cfg.train.seed);
    const std::string fdir = features_dir(cfg);
    const std::string cdir = checkpoints_dir(cfg);
    Rng init_rng(cfg.train.seed);

    if (stage == Stage::PretrainSP) {
        std::vector<SPSample> data;
        data.reserve(rows.size());
        for (size_t i : rows) {
            const FeatureRow& r = table.rows[i];
            data.push_back({planes_tensor(fdir, r), sp_desc_tensor(r), r.targets.at(cfg.target)});
        }
        SPcVAE model(cfg.sp, init_rng);
        TrainHistory h = train_spcvae(model, data, train_idx, val_idx, cfg.train);
        log_history("pretrain sp", h);
        save_checkpoint(cdir + "/sp.json", "sp-cvae", cfg.train.seed, model.parameters(),
                        checkpoint_extra(cfg, "sp", h, train_idx.size(), val_idx.size()),
                        model.buffers());
    } else if (stage == Stage::PretrainPH) {
        std::vector<PHSample> data;
        data.reserve(rows.size());
        for (size_t i : rows) {
            const FeatureRow& r = table.rows[i];
            Tensor topo({18});
            std::copy(r.fingerprint.begin(), r.fingerprint.end(), topo.data.begin());
            data.push_back({topo, ph_desc_tensor(r), r.targets.at(cfg.target)});
        }
        PHNN model(cfg.ph, init_rng);
        TrainHistory h = train_phnn(model, data, train_idx, val_idx, cfg.train);
        log_history("pretrain ph", h);
        save_checkpoint(cdir + "/ph.json", "ph-nn", cfg.train.seed, model.parameters(),
                        checkpoint_extra(cfg, "ph", h, train_idx.size(), val_idx.size()),
                        model.buffers());
    } else {
        std::vector<GraphSample> data;
        data.reserve(rows.size());
        for (size_t i : rows) {
            const FeatureRow& r = table.rows[i];
            data.push_back({graph_for_row(fdir, r), r.targets.at(cfg.target)});
        }
        BiGCAE model(cfg.big, init_rng);
        TrainHistory h = train_bigcae(model, data, train_idx, val_idx, cfg.train);
        log_history("pretrain big", h);
        save_checkpoint(cdir + "/big.json", "big-cae", cfg.train.seed, model.parameters(),
                        checkpoint_extra(cfg, "big", h, train_idx.size(), val_idx.size()),
                        model.buffers());
    }
}

// The three frozen branches rebuilt from their checkpoints.
struct Branches {
    SPcVAE sp;
    PHNN ph;
    BiGCAE big;
};

Branches load_branches(const PipelineConfig& cfg, const char* stage_name) {
    const std::string cdir = checkpoints_dir(cfg);
    for (const char* f : {"sp.json", "ph.json", "big.json"})
        require_artifact(cdir + "/" + f, std::string(stage_name) +
                                             ": missing checkpoint (run the matching pretrain "
                                             "stage first)");
    Rng rng(cfg.train.seed);
    Branches b{SPcVAE(cfg.sp, rng), PHNN(cfg.ph, rng), BiGCAE(cfg.big, rng)};
    load_checkpoint(cdir + "/sp.json", "sp-cvae", b.sp.parameters(), b.sp.buffers());
    load_checkpoint(cdir + "/ph.json", "ph-nn", b.ph.parameters(), b.ph.buffers());
    load_checkpoint(cdir + "/big.json", "big-cae", b.big.parameters(), b.big.buffers());
    return b;
}

// Eval-mode branch outputs for one structure (deterministic: eps = 0, no
// dropout; the rng is never consumed).
FusionSample branch_outputs(Branches& b, const std::string& fdir, const FeatureRow& row) {
    Rng rng(0);
    FusionSample s;
    {
        Tape t;
        Tensor planes = planes_tensor(fdir, row);
        Tensor batched({1, kSectionPlanes, 2, kSectionSize, kSectionSize}, planes.data);
        Tensor desc({1, 6}, sp_desc_tensor(row).data);
        auto out = b.sp.forward(t, batched, desc, false, rng);
        s.sp_feature = t.value(out.feature);
        s.sp_yhat = t.value(out.y_hat)[0];
    }
    {
        Tape t;
        Tensor topo({1, 18});
        std::copy(row.fingerprint.begin(), row.fingerprint.end(), topo.data.begin());
        Tensor desc({1, 5}, ph_desc_tensor(row).data);
        auto out = b.ph.forward(t, topo, desc, false, rng);
        s.ph_feature = t.value(out.feature);
    }
    {
        Tape t;
        auto out = b.big.forward(t, graph_for_row(fdir, row));
        s.big_feature = t.value(out.latent);
    }
    return s;
}

void stage_fuse_train(const PipelineConfig& cfg) {
    FeatureTable table = load_feature_table(features_dir(cfg));
    auto rows = labeled_rows(table, cfg.target);
    if (rows.size() < 2)
        throw ArgumentError("fuse-train: need at least 2 structures labeled with '" +
                            cfg.target + "', found " + std::to_string(rows.size()));

    const std::string cdir = checkpoints_dir(cfg);
    Branches branches = load_branches(cfg, "fuse-train");

    const std::string fdir = features_dir(cfg);
    std::vector<FusionSample> data;
    data.reserve(rows.size());
    for (size_t i : rows) {
        FusionSample s = branch_outputs(branches, fdir, table.rows[i]);
        s.y = table.rows[i].targets.at(cfg.target);
        data.push_back(std::move(s));
    }

    auto [train_idx, val_idx] = train_val_split(rows.size(), cfg.train.seed);
    Rng rng(cfg.train.seed);
    FusionModel model(cfg.fusion, branches.sp.feature_width(), branches.ph.feature_width(),
                      branches.big.feature_width(), rng);
    TrainHistory h = train_fusion(model, data, train_idx, val_idx, cfg.train);
    log_history("fuse-train", h);

    json extra = checkpoint_extra(cfg, "fusion", h, train_idx.size(), val_idx.size());
    extra["gate_alpha"] = model.gate_alpha();
    extra["frozen"] = {
        {"sp", {{"path", "sp.json"}, {"blob_sha256", checkpoint_blob_hash(cdir + "/sp.json")}}},
        {"ph", {{"path", "ph.json"}, {"blob_sha256", checkpoint_blob_hash(cdir + "/ph.json")}}},
        {"big",
         {{"path", "big.json"}, {"blob_sha256", checkpoint_blob_hash(cdir + "/big.json")}}}};
    save_checkpoint(cdir + "/fusion.json", "fusion", cfg.train.seed, model.parameters(), extra,
                    model.buffers());
}

void stage_predict(const PipelineConfig& cfg) {
    FeatureTable table = load_feature_table(features_dir(cfg));
    const std::string cdir = checkpoints_dir(cfg);
    require_artifact(cdir + "/fusion.json", "predict: missing checkpoint");
    Branches branches = load_branches(cfg, "predict");
    Rng rng(cfg.train.seed);
    FusionModel fusion(cfg.fusion, branches.sp.feature_width(), branches.ph.feature_width(),
                       branches.big.feature_width(), rng);
    json fusion_manifest =
        load_checkpoint(cdir + "/fusion.json", "fusion", fusion.parameters(), fusion.buffers());

    const std::string fdir = features_dir(cfg);
    std::string csv = "name,y_true,y_pred\n";
    Rng eval_rng(0);
    for (const FeatureRow& row : table.rows) {
        FusionSample s = branch_outputs(branches, fdir, row);
        Tape t;
        auto out = fusion.forward_one(t, s.sp_feature, s.sp_yhat, s.ph_feature, s.big_feature,
                                      false, eval_rng);
        double y_pred = t.value(out.y_final)[0];
        csv += row.name + ",";
        auto it = row.targets.find(cfg.target);
        if (it != row.targets.end()) csv += format_full(it->second);
        csv += "," + format_full(y_pred) + "\n";
    }
    const std::string pdir = predictions_dir(cfg);
    atomic_write_file(pdir + "/" + cfg.target + ".csv", csv);

    ordered_json m = manifest_base("predict", cfg);
    m["target"] = cfg.target;
    m["counts"] = {{"structures", table.rows.size()}};
    m["checkpoints"] = {{"sp", checkpoint_blob_hash(cdir + "/sp.json")},
                        {"ph", checkpoint_blob_hash(cdir + "/ph.json")},
                        {"big", checkpoint_blob_hash(cdir + "/big.json")},
                        {"fusion", checkpoint_blob_hash(cdir + "/fusion.json")}};
    m["gate_alpha"] = fusion_manifest.value("gate_alpha", fusion.gate_alpha());
    m["outputs"] = {cfg.target + ".csv"};
    write_manifest(pdir, m);
}

// ------------------------------------------------------------------ screen

std::string weight_file_name(const WeightPair& w) {
    return "ranking_wR" + format_fixed(w.w_R, 2) + "_wA" + format_fixed(w.w_A, 2) + ".csv";
}

void stage_screen(const PipelineConfig& cfg) {
    require_input(cfg.screening_file, "screening_file");
    std::vector<ScreeningRecord> records = load_screening_csv(cfg.screening_file);
    const std::string sdir = screening_dir(cfg);

    // The uptake table holds post-simulation candidates, so every record is
    // ranked; the descriptor pre-screen is reported alongside for reference.
    PrescreenResult pre = prescreen_filter(records);

    std::vector<std::string> outputs;
    Ranking baseline;
    for (const WeightPair& w : cfg.screening.weights) {
        Ranking r = rank_records(records, w);
        if (outputs.empty()) baseline = r;
        const std::string fname = weight_file_name(w);
        atomic_write_file(sdir + "/" + fname, ranking_csv(r));
        outputs.push_back(fname);
    }

    if (records.size() >= 10) {
        auto scan = weight_scan(records, cfg.screening.weight_scan_step);
        atomic_write_file(sdir + "/weight_scan.csv", weight_scan_csv(scan));
        outputs.push_back("weight_scan.csv");
    } else {
        std::cerr << "screen: " << records.size()
                  << " records; skipping the weight scan (needs 10)\n";
    }

    int top_k = std::min<int>(cfg.screening.stats_top_k,
                              static_cast<int>(baseline.entries.size()));
    StructureStats stats = structure_stats(baseline.entries, top_k);
    atomic_write_file(sdir + "/structure_stats.json", structure_stats_json(stats));
    outputs.push_back("structure_stats.json");

    PerformanceWindows win = performance_window(records, cfg.screening.aps_threshold);
    ordered_json wj;
    wj["aps_threshold"] = cfg.screening.aps_threshold;
    wj["qualifiers"] = win.qualifiers;
    auto window_json = [](const std::optional<DescriptorWindow>& w) -> json {
        if (!w) return nullptr;
        return json{{"lo", w->lo}, {"hi", w->hi}};
    };
    wj["PLD"] = window_json(win.pld);
    wj["LCD"] = window_json(win.lcd);
    wj["S_acc"] = window_json(win.s_acc);
    wj["phi"] = window_json(win.phi);
    atomic_write_file(sdir + "/performance_windows.json", wj.dump(2) + "\n");
    outputs.push_back("performance_windows.json");

    ordered_json m = manifest_base("screen", cfg);
    m["inputs"] = {{"screening_file", cfg.screening_file}};
    m["counts"] = {{"records", records.size()},
                   {"prescreen_pass", pre.kept.size()},
                   {"prescreen_skipped_missing", pre.skipped_missing},
                   {"ranking_top_k", top_k}};
    json ws = json::array();
    for (const auto& w : cfg.screening.weights) ws.push_back({w.w_R, w.w_A});
    m["weights"] = ws;
    m["outputs"] = outputs;
    write_manifest(sdir, m);
}

// ------------------------------------------------------------------- stats

void stage_stats(const PipelineConfig& cfg) {
    const std::string pred_path = predictions_dir(cfg) + "/" + cfg.target + ".csv";
    require_artifact(pred_path, "stats: missing predictions (run predict first)");

    std::istringstream in(read_text_file(pred_path));
    std::string line;
    std::getline(in, line);
    if (trim(line) != "name,y_true,y_pred")
        throw ParseError("stats: unexpected predictions header in " + pred_path);
    std::vector<std::string> names;
    std::vector<double> y, y_hat;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 3)
            throw ParseError("stats: malformed predictions row in " + pred_path);
        if (trim(f[1]).empty()) continue;  // unlabeled structure
        names.push_back(trim(f[0]));
        y.push_back(std::stod(f[1]));
        y_hat.push_back(std::stod(f[2]));
    }
    if (y.size() < 2)
        throw ArgumentError("stats: need at least 2 labeled predictions, found " +
                            std::to_string(y.size()));

    MetricReport overall = evaluate_predictions(y, y_hat);
    auto folds = kfold_split(y.size(), cfg.stats.folds, cfg.seed);
    std::vector<MetricReport> fold_reports;
    for (const auto& fold : folds) {
        std::vector<double> fy, fyh;
        for (size_t i : fold) {
            fy.push_back(y[i]);
            fyh.push_back(y_hat[i]);
        }
        fold_reports.push_back(evaluate_predictions(fy, fyh));
    }
    FoldAggregate agg = aggregate_folds(fold_reports);

    auto report_json = [](const MetricReport& r) {
        return json{{"r2", r.r2},
                    {"rmse", r.rmse},
                    {"mae", r.mae},
                    {"pearson", r.pearson},
                    {"spearman", r.spearman}};
    };
    ordered_json out;
    out["target"] = cfg.target;
    out["n"] = y.size();
    out["overall"] = report_json(overall);
    out["cv"] = {{"folds", folds.size()},
                 {"mean", report_json(agg.mean)},
                 {"stddev", report_json(agg.stddev)}};
    json per_fold = json::array();
    for (const auto& r : fold_reports) per_fold.push_back(report_json(r));
    out["cv"]["per_fold"] = per_fold;
    const std::string sdir = stats_dir(cfg);
    atomic_write_file(sdir + "/" + cfg.target + "_metrics.json", out.dump(2) + "\n");

    ordered_json m = manifest_base("stats", cfg);
    m["target"] = cfg.target;
    m["counts"] = {{"predictions", y.size()}, {"folds", folds.size()}};
    m["outputs"] = {cfg.target + "_metrics.json"};
    write_manifest(sdir, m);
}

}  // namespace

// ---------------------------------------------------------------- dispatch

Stage stage_from_name(const std::string& name) {
    if (name == "featurize") return Stage::Featurize;
    if (name == "pretrain-sp") return Stage::PretrainSP;
    if (name == "pretrain-ph") return Stage::PretrainPH;
    if (name == "pretrain-big") return Stage::PretrainBiG;
    if (name == "fuse-train") return Stage::FuseTrain;
    if (name == "predict") return Stage::Predict;
    if (name == "screen") return Stage::Screen;
    if (name == "stats") return Stage::Stats;
    throw ArgumentError("unknown command '" + name +
                        "'; expected featurize, pretrain-{sp|ph|big}, fuse-train, predict, "
                        "screen, or stats");
}

std::vector<WeightPair> parse_weights_flag(const std::string& text) {
    std::vector<WeightPair> out;
    std::istringstream in(text);
    std::string pair_text;
    while (std::getline(in, pair_text, ',')) {
        pair_text = trim(pair_text);
        size_t colon = pair_text.find(':');
        if (colon == std::string::npos)
            throw ArgumentError("weights: expected w_R:w_A, got '" + pair_text + "'");
        WeightPair w;
        try {
            size_t used = 0;
            w.w_R = std::stod(pair_text.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument(pair_text);
            std::string rest = pair_text.substr(colon + 1);
            w.w_A = std::stod(rest, &used);
            if (used != rest.size()) throw std::invalid_argument(pair_text);
        } catch (const std::exception&) {
            throw ArgumentError("weights: '" + pair_text + "' is not a number pair");
        }
        validate_weights(w);
        out.push_back(w);
    }
    if (out.empty()) throw ArgumentError("weights: no pairs given");
    return out;
}

void run_stage(Stage stage, const PipelineConfig& cfg) {
    if (cfg.output_dir.empty()) throw ArgumentError("config: output_dir is required");
    switch (stage) {
        case Stage::Featurize:
            check_stage_enabled(cfg.stages.featurize, "featurize");
            stage_featurize(cfg);
            break;
        case Stage::PretrainSP:
        case Stage::PretrainPH:
        case Stage::PretrainBiG:
            check_stage_enabled(cfg.stages.pretrain, "pretrain");
            stage_pretrain(stage, cfg);
            break;
        case Stage::FuseTrain:
            check_stage_enabled(cfg.stages.fuse_train, "fuse_train");
            stage_fuse_train(cfg);
            break;
        case Stage::Predict:
            check_stage_enabled(cfg.stages.predict, "predict");
            stage_predict(cfg);
            break;
        case Stage::Screen:
            check_stage_enabled(cfg.stages.screen, "screen");
            stage_screen(cfg);
            break;
        case Stage::Stats:
            check_stage_enabled(cfg.stages.stats, "stats");
            stage_stats(cfg);
            break;
    }
}

int run_command(const std::string& command, const PipelineConfig& cfg) {
    try {
        std::string name = command;
        std::replace(name.begin(), name.end(), ' ', '-');
        run_stage(stage_from_name(name), cfg);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cofap

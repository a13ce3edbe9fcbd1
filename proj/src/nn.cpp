#include "cofap/nn.hpp"

#include <cmath>
#include <filesystem>

#include "cofap/sha256.hpp"

namespace cofap {

namespace fsp = std::filesystem;

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / std::max(1, fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
}

void xavier_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / std::max(1, fan_in + fan_out));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
}

Dense::Dense(int in, int out, Rng& rng, bool relu_gain)
    : W(Tensor({in, out})), b(Tensor({out})) {
    if (relu_gain) kaiming_uniform(W.value, in, rng);
    else xavier_uniform(W.value, in, out, rng);
}

Conv2d::Conv2d(int in, int out, int k, int stride_, int pad_, Rng& rng)
    : W(Tensor({out, in, k, k})), b(Tensor({out})), stride(stride_), pad(pad_) {
    kaiming_uniform(W.value, in * k * k, rng);
}

ConvTranspose2d::ConvTranspose2d(int in, int out, int k, int stride_, int pad_,
                                 int output_padding_, Rng& rng)
    : W(Tensor({in, out, k, k})), b(Tensor({out})), stride(stride_), pad(pad_),
      output_padding(output_padding_) {
    kaiming_uniform(W.value, in * k * k, rng);
}

Conv1d::Conv1d(int in, int out, int k, int stride_, int pad_, Rng& rng)
    : W(Tensor({out, in, k})), b(Tensor({out})), stride(stride_), pad(pad_) {
    kaiming_uniform(W.value, in * k, rng);
}

BatchNorm::BatchNorm(int channels)
    : gamma(Tensor::full({channels}, 1.0)), beta(Tensor({channels})),
      running_mean(Tensor({channels})), running_var(Tensor::full({channels}, 1.0)) {}

Tensor make_dropout_mask(const std::vector<int>& shape, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ArgumentError("dropout: rate must be in [0, 1)");
    const double keep = 1.0 - rate;
    Tensor mask(shape);
    for (double& v : mask.data) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return mask;
}

Val dropout(Tape& t, Val x, double rate, bool train, Rng& rng) {
    if (!train || rate == 0.0) return x;
    return dropout_with_mask(t, x, make_dropout_mask(t.value(x).shape, rate, rng));
}

Val dropout_with_mask(Tape& t, Val x, const Tensor& mask) {
    if (!t.value(x).same_shape(mask))
        throw ShapeError("dropout: mask " + mask.shape_string() + " vs input " +
                         t.value(x).shape_string());
    return t.mul(x, t.constant(mask));
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr_ <= 0.0) throw ArgumentError("adam: learning rate must be positive");
    for (Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
    ++step_count_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        if (!p->value.same_shape(m_[i]) || !p->grad.same_shape(m_[i]))
            throw ArgumentError("adam: optimizer state does not match parameter shapes");
        for (size_t k = 0; k < p->value.numel(); ++k) {
            double g = p->grad.data[k];
            m_[i].data[k] = beta1_ * m_[i].data[k] + (1.0 - beta1_) * g;
            v_[i].data[k] = beta2_ * v_[i].data[k] + (1.0 - beta2_) * g * g;
            double mhat = m_[i].data[k] / c1;
            double vhat = v_[i].data[k] / c2;
            p->value.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

std::string blob_path_for(const std::string& json_path, const std::string& blob_name) {
    return (fsp::path(json_path).parent_path() / blob_name).string();
}

// Parameters and buffers share the table/blob layout; merge them into one
// (name, tensor) view, parameters first.
std::vector<std::pair<std::string, Tensor*>> merged_entries(const NamedParams& params,
                                                            const NamedBuffers& buffers) {
    std::vector<std::pair<std::string, Tensor*>> entries;
    entries.reserve(params.size() + buffers.size());
    for (const auto& [name, p] : params) entries.emplace_back(name, &p->value);
    for (const auto& [name, t] : buffers) entries.emplace_back(name, t);
    return entries;
}

}  // namespace

void save_checkpoint(const std::string& json_path, const std::string& kind, uint64_t seed,
                     const NamedParams& params, const nlohmann::json& extra,
                     const NamedBuffers& buffers) {
    const auto entries = merged_entries(params, buffers);
    std::vector<double> blob;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, t] : entries) {
        table.push_back({{"name", name}, {"shape", t->shape}});
        blob.insert(blob.end(), t->data.begin(), t->data.end());
    }
    std::string bytes = f32_blob_bytes(blob);
    std::string blob_name = fsp::path(json_path).stem().string() + ".bin";

    nlohmann::json manifest;
    manifest["format"] = "cofap-checkpoint";
    manifest["version"] = 1;
    manifest["kind"] = kind;
    manifest["seed"] = seed;
    manifest["parameters"] = table;
    manifest["blob"] = blob_name;
    manifest["blob_sha256"] = sha256_hex(bytes);
    if (!extra.is_null())
        for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();

    atomic_write_file(blob_path_for(json_path, blob_name), bytes);
    atomic_write_file(json_path, manifest.dump(2) + "\n");
}

nlohmann::json load_checkpoint(const std::string& json_path, const std::string& kind,
                               const NamedParams& params, const NamedBuffers& buffers) {
    const auto entries = merged_entries(params, buffers);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint '" + json_path + "': invalid manifest: " + e.what());
    }
    if (manifest.value("format", "") != "cofap-checkpoint")
        throw ParseError("checkpoint '" + json_path + "': not a checkpoint manifest");
    if (manifest.value("kind", "") != kind)
        throw IoError("checkpoint '" + json_path + "': kind '" +
                      manifest.value("kind", std::string("?")) + "', expected '" + kind + "'");

    const auto& table = manifest.at("parameters");
    if (table.size() != entries.size())
        throw IoError("checkpoint '" + json_path + "': has " + std::to_string(table.size()) +
                      " parameters, model needs " + std::to_string(entries.size()));
    for (size_t i = 0; i < entries.size(); ++i) {
        std::string name = table[i].at("name").get<std::string>();
        auto shape = table[i].at("shape").get<std::vector<int>>();
        if (name != entries[i].first || shape != entries[i].second->shape)
            throw IoError("checkpoint '" + json_path + "': parameter " + std::to_string(i) +
                          " is " + name + Tensor::shape_string(shape) + ", model expects " +
                          entries[i].first + Tensor::shape_string(entries[i].second->shape));
    }

    std::string bytes = read_text_file(blob_path_for(json_path, manifest.at("blob")));
    if (sha256_hex(bytes) != manifest.at("blob_sha256").get<std::string>())
        throw IoError("checkpoint '" + json_path + "': parameter blob hash mismatch");
    std::vector<double> blob = f32_blob_parse(bytes);
    size_t total = 0;
    for (const auto& [name, t] : entries) total += t->numel();
    if (blob.size() != total)
        throw IoError("checkpoint '" + json_path + "': blob holds " +
                      std::to_string(blob.size()) + " values, expected " + std::to_string(total));
    size_t off = 0;
    for (const auto& [name, t] : entries) {
        std::copy(blob.begin() + static_cast<long>(off),
                  blob.begin() + static_cast<long>(off + t->numel()), t->data.begin());
        off += t->numel();
    }
    for (const auto& [name, p] : params) p->zero_grad();
    return manifest;
}

std::string checkpoint_blob_hash(const std::string& json_path) {
    nlohmann::json manifest = nlohmann::json::parse(read_text_file(json_path));
    return sha256_hex(read_text_file(blob_path_for(json_path, manifest.at("blob"))));
}

}  // namespace cofap

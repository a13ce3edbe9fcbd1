// Layer bundles, seeded initialization, the Adam optimizer, inverted dropout,
// and the checkpoint format (JSON manifest + little-endian f32 blob).
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cofap/tape.hpp"

namespace cofap {

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng);          // ReLU stacks
void xavier_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng);  // attention projections

struct Dense {
    Parameter W, b;  // W is (in, out): y = x W + b

    Dense() = default;
    Dense(int in, int out, Rng& rng, bool relu_gain = true);
    Val operator()(Tape& t, Val x) { return t.add_bias(t.matmul(x, t.param(W)), t.param(b)); }
};

struct Conv2d {
    Parameter W, b;  // W (out, in, k, k)
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int in, int out, int k, int stride, int pad, Rng& rng);
    Val operator()(Tape& t, Val x) {
        return t.conv2d(x, t.param(W), t.param(b), stride, pad);
    }
};

struct ConvTranspose2d {
    Parameter W, b;  // W (in, out, k, k)
    int stride = 1, pad = 0, output_padding = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in, int out, int k, int stride, int pad, int output_padding, Rng& rng);
    Val operator()(Tape& t, Val x) {
        return t.conv_transpose2d(x, t.param(W), t.param(b), stride, pad, output_padding);
    }
};

struct Conv1d {
    Parameter W, b;  // W (out, in, k)
    int stride = 1, pad = 0;

    Conv1d() = default;
    Conv1d(int in, int out, int k, int stride, int pad, Rng& rng);
    Val operator()(Tape& t, Val x) {
        return t.conv1d(x, t.param(W), t.param(b), stride, pad);
    }
};

struct BatchNorm {
    Parameter gamma, beta;
    Tensor running_mean, running_var;

    BatchNorm() = default;
    explicit BatchNorm(int channels);
    Val operator()(Tape& t, Val x, bool train) {
        return t.batchnorm(x, t.param(gamma), t.param(beta), running_mean, running_var, train);
    }
};

// Inverted dropout: 0 or 1/keep entries so the expected value matches the
// input. Eval mode (train = false) is the identity.
Tensor make_dropout_mask(const std::vector<int>& shape, double rate, Rng& rng);
Val dropout(Tape& t, Val x, double rate, bool train, Rng& rng);
// Deterministic variant with a caller-supplied mask (used by gradient checks).
Val dropout_with_mask(Tape& t, Val x, const Tensor& mask);

class Adam {
  public:
    explicit Adam(std::vector<Parameter*> params, double lr = 1e-3, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);
    void zero_grad();
    void step();  // consumes Parameter::grad

  private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long step_count_ = 0;
};

using NamedParams = std::vector<std::pair<std::string, Parameter*>>;
// Non-trainable model state stored alongside parameters (e.g. batch-norm
// running statistics).
using NamedBuffers = std::vector<std::pair<std::string, Tensor*>>;

// Manifest (.json) + f32 little-endian blob (sibling .bin). The manifest
// records the parameter table, seed, kind tag, and the blob's SHA-256.
// Buffers are appended to the same table and blob after the parameters.
void save_checkpoint(const std::string& json_path, const std::string& kind, uint64_t seed,
                     const NamedParams& params, const nlohmann::json& extra = nlohmann::json(),
                     const NamedBuffers& buffers = {});
// Validates kind, the full shape table, and the blob hash before loading.
nlohmann::json load_checkpoint(const std::string& json_path, const std::string& kind,
                               const NamedParams& params, const NamedBuffers& buffers = {});
// Content hash of the stored parameter blob (freeze verification).
std::string checkpoint_blob_hash(const std::string& json_path);

}  // namespace cofap

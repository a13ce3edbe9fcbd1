// Reverse-mode differentiation on a per-step tape. Operations append nodes in
// topological order; backward() sweeps the nodes in reverse and accumulates
// gradients into the registered Parameters. A tape is built fresh for every
// optimization step and freed wholesale with it.
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "cofap/tensor.hpp"

namespace cofap {

struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor t) : value(std::move(t)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Handle to a tape node.
struct Val {
    int id = -1;
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Val constant(Tensor t);
    Val param(Parameter& p);  // registering the same Parameter twice yields the same node

    const Tensor& value(Val v) const { return nodes_[check(v)].value; }
    const Tensor& grad(Val v) const;  // valid after backward()

    // Seeds d(loss)/d(loss) = 1, sweeps the graph, then adds each parameter
    // node's gradient into its Parameter::grad.
    void backward(Val loss);

    // Elementwise and linear algebra
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);
    Val scale(Val a, double s);
    Val exp(Val a);
    Val relu(Val a);
    Val matmul(Val a, Val b);       // (N,K) x (K,M)
    Val add_bias(Val x, Val bias);  // (N,D) + (D,) per row
    Val broadcast_row(Val x, int rows);  // (1,D) -> (rows,D)
    Val concat_cols(const std::vector<Val>& xs);
    Val reshape(Val a, std::vector<int> shape);
    Val mean_groups(Val x, int group);  // (G*B,D) -> (B,D), consecutive rows averaged
    Val transpose_12(Val x);            // (A,B,C) -> (A,C,B)
    Val mean_rows(Val x) { return mean_groups(x, value(x).shape[0]); }
    Val sum(Val x);   // -> (1,)
    Val mean(Val x);  // -> (1,)
    Val softmax_rows(Val x);

    // Convolution family (kernel k, stride s, padding p)
    Val conv2d(Val x, Val w, Val b, int stride, int pad);  // x (N,C,H,W), w (O,C,k,k)
    Val conv_transpose2d(Val x, Val w, Val b, int stride, int pad,
                         int output_padding);              // w (C,O,k,k)
    Val conv1d(Val x, Val w, Val b, int stride, int pad);  // x (N,C,L), w (O,C,k)

    // Normalization / regularization. Running buffers are updated in train
    // mode only and are not differentiated through.
    Val batchnorm(Val x, Val gamma, Val beta, Tensor& running_mean, Tensor& running_var,
                  bool train, double momentum = 0.1, double eps = 1e-5);

    // Fused scaled dot-product multi-head attention with output projection.
    // q (Nq,D), k/v (Nk,D), wo (D,D); optional prob_mask (heads,Nq,Nk) holds
    // 0 or 1/keep entries (inverted dropout on the attention probabilities).
    Val attention(Val q, Val k, Val v, Val wo, int heads, Val prob_mask = {});

    // Distribution / loss vocabulary
    Val reparameterize(Val mu, Val logvar, const Tensor& eps);  // mu + exp(logvar/2) * eps
    Val kl_gaussian(Val mu, Val logvar);                        // 0.5 * sum(mu^2+e^lv-1-lv)
    Val mse(Val a, Val b);
    Val mae(Val a, Val b);
    Val huber(Val y, Val yhat, double delta);
    // NT-Xent with internal L2 normalization; positive[i] is i's positive index.
    Val contrastive(Val z, const std::vector<int>& positive, double tau);

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_ready = false;
        std::function<void()> backprop;  // reads this node's grad, accumulates into inputs
    };

    int check(Val v) const {
        if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw ArgumentError("tape: value handle does not belong to this tape");
        return v.id;
    }
    Val make(Tensor value, const std::vector<Val>& inputs, std::function<void()> backprop);
    Tensor& grad_buffer(int id);
    bool needs_grad(Val v) const { return nodes_[v.id].requires_grad; }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_node_;
    std::vector<std::pair<Parameter*, int>> params_;

    friend struct TapeTestAccess;
};

}  // namespace cofap

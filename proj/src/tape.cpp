#include "cofap/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Dense>

namespace cofap {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// Column layout shared by the convolution family:
//   cols[(c,kh,kw), (hc,wc)] <-> img[c, hc*sh - ph + kh, wc*sw - pw + kw]
// Positions falling outside the image read as zero / are dropped on scatter.
void im2col(const double* img, int C, int Hi, int Wi, int kh, int kw, int sh, int sw, int ph,
            int pw, int Hc, int Wc, double* cols) {
    const int P = Hc * Wc;
    int r = 0;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j, ++r) {
                double* dst = cols + static_cast<size_t>(r) * P;
                for (int hc = 0; hc < Hc; ++hc) {
                    int hi = hc * sh - ph + i;
                    if (hi < 0 || hi >= Hi) {
                        std::fill(dst + hc * Wc, dst + (hc + 1) * Wc, 0.0);
                        continue;
                    }
                    const double* src = img + (static_cast<size_t>(c) * Hi + hi) * Wi;
                    for (int wc = 0; wc < Wc; ++wc) {
                        int wi = wc * sw - pw + j;
                        dst[hc * Wc + wc] = (wi >= 0 && wi < Wi) ? src[wi] : 0.0;
                    }
                }
            }
}

void col2im_add(const double* cols, int C, int Hi, int Wi, int kh, int kw, int sh, int sw, int ph,
                int pw, int Hc, int Wc, double* img) {
    const int P = Hc * Wc;
    int r = 0;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j, ++r) {
                const double* src = cols + static_cast<size_t>(r) * P;
                for (int hc = 0; hc < Hc; ++hc) {
                    int hi = hc * sh - ph + i;
                    if (hi < 0 || hi >= Hi) continue;
                    double* dst = img + (static_cast<size_t>(c) * Hi + hi) * Wi;
                    for (int wc = 0; wc < Wc; ++wc) {
                        int wi = wc * sw - pw + j;
                        if (wi >= 0 && wi < Wi) dst[wi] += src[hc * Wc + wc];
                    }
                }
            }
}

void softmax_row(const double* x, int n, double* out) {
    double mx = *std::max_element(x, x + n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(x[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace

Val Tape::make(Tensor value, const std::vector<Val>& inputs, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    for (Val v : inputs) n.requires_grad = n.requires_grad || nodes_[check(v)].requires_grad;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_ready = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Val v) const {
    const Node& n = nodes_[check(v)];
    if (!n.grad_ready) throw ArgumentError("tape: gradient not computed for this value");
    return n.grad;
}

Val Tape::constant(Tensor t) { return make(std::move(t), {}, nullptr); }

Val Tape::param(Parameter& p) {
    auto it = param_node_.find(&p);
    if (it != param_node_.end()) return {it->second};
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    int id = static_cast<int>(nodes_.size()) - 1;
    param_node_[&p] = id;
    params_.emplace_back(&p, id);
    return {id};
}

void Tape::backward(Val loss) {
    int lid = check(loss);
    if (nodes_[lid].value.numel() != 1)
        throw ArgumentError("backward: loss must be a scalar");
    grad_buffer(lid).data[0] = 1.0;
    for (int i = lid; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad_ready && n.backprop) n.backprop();
    }
    for (auto& [p, id] : params_) {
        if (!nodes_[id].grad_ready) continue;
        const Tensor& g = nodes_[id].grad;
        for (size_t k = 0; k < g.numel(); ++k) p->grad.data[k] += g.data[k];
    }
}

Val Tape::add(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError("add: " + ta.shape_string() + " vs " + tb.shape_string());
    Tensor out = ta;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a, b}, [this, a, b, oid] {
        const Tensor& g = nodes_[oid].grad;
        for (Val in : {a, b}) {
            if (!needs_grad(in)) continue;
            Tensor& gi = grad_buffer(in.id);
            for (size_t i = 0; i < g.numel(); ++i) gi.data[i] += g.data[i];
        }
    });
}

Val Tape::sub(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError("sub: " + ta.shape_string() + " vs " + tb.shape_string());
    Tensor out = ta;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] -= tb.data[i];
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a, b}, [this, a, b, oid] {
        const Tensor& g = nodes_[oid].grad;
        if (needs_grad(a)) {
            Tensor& ga = grad_buffer(a.id);
            for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (needs_grad(b)) {
            Tensor& gb = grad_buffer(b.id);
            for (size_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

Val Tape::mul(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError("mul: " + ta.shape_string() + " vs " + tb.shape_string());
    Tensor out = ta;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a, b}, [this, a, b, oid] {
        const Tensor& g = nodes_[oid].grad;
        if (needs_grad(a)) {
            Tensor& ga = grad_buffer(a.id);
            const Tensor& vb = nodes_[b.id].value;
            for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * vb.data[i];
        }
        if (needs_grad(b)) {
            Tensor& gb = grad_buffer(b.id);
            const Tensor& va = nodes_[a.id].value;
            for (size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * va.data[i];
        }
    });
}

Val Tape::scale(Val a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a}, [this, a, s, oid] {
        const Tensor& g = nodes_[oid].grad;
        Tensor& ga = grad_buffer(a.id);
        for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += s * g.data[i];
    });
}

Val Tape::exp(Val a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::exp(v);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a}, [this, a, oid] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& y = nodes_[oid].value;
        Tensor& ga = grad_buffer(a.id);
        for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * y.data[i];
    });
}

Val Tape::relu(Val a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::max(0.0, v);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a}, [this, a, oid] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& x = nodes_[a.id].value;
        Tensor& ga = grad_buffer(a.id);
        for (size_t i = 0; i < g.numel(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    });
}

Val Tape::matmul(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
        throw ShapeError("matmul: " + ta.shape_string() + " x " + tb.shape_string());
    const int N = ta.shape[0], K = ta.shape[1], M = tb.shape[1];
    Tensor out({N, M});
    MMap(out.data.data(), N, M).noalias() =
        CMap(ta.data.data(), N, K) * CMap(tb.data.data(), K, M);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a, b}, [this, a, b, oid, N, K, M] {
        const Tensor& g = nodes_[oid].grad;
        CMap gm(g.data.data(), N, M);
        if (needs_grad(a)) {
            MMap(grad_buffer(a.id).data.data(), N, K).noalias() +=
                gm * CMap(nodes_[b.id].value.data.data(), K, M).transpose();
        }
        if (needs_grad(b)) {
            MMap(grad_buffer(b.id).data.data(), K, M).noalias() +=
                CMap(nodes_[a.id].value.data.data(), N, K).transpose() * gm;
        }
    });
}

Val Tape::add_bias(Val x, Val bias) {
    const Tensor &tx = value(x), &tb = value(bias);
    if (tx.shape.size() != 2 || tb.numel() != static_cast<size_t>(tx.shape[1]))
        throw ShapeError("add_bias: " + tx.shape_string() + " + " + tb.shape_string());
    const int N = tx.shape[0], D = tx.shape[1];
    Tensor out = tx;
    for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) out.data[static_cast<size_t>(n) * D + d] += tb.data[d];
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x, bias}, [this, x, bias, oid, N, D] {
        const Tensor& g = nodes_[oid].grad;
        if (needs_grad(x)) {
            Tensor& gx = grad_buffer(x.id);
            for (size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
        }
        if (needs_grad(bias)) {
            Tensor& gb = grad_buffer(bias.id);
            for (int n = 0; n < N; ++n)
                for (int d = 0; d < D; ++d) gb.data[d] += g.data[static_cast<size_t>(n) * D + d];
        }
    });
}

Val Tape::broadcast_row(Val x, int rows) {
    const Tensor& tx = value(x);
    if (tx.shape.size() != 2 || tx.shape[0] != 1 || rows <= 0)
        throw ShapeError("broadcast_row: need (1,D) input, got " + tx.shape_string());
    const int D = tx.shape[1];
    Tensor out({rows, D});
    for (int n = 0; n < rows; ++n)
        std::copy(tx.data.begin(), tx.data.end(), out.data.begin() + static_cast<size_t>(n) * D);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x}, [this, x, oid, rows, D] {
        const Tensor& g = nodes_[oid].grad;
        Tensor& gx = grad_buffer(x.id);
        for (int n = 0; n < rows; ++n)
            for (int d = 0; d < D; ++d) gx.data[d] += g.data[static_cast<size_t>(n) * D + d];
    });
}

Val Tape::concat_cols(const std::vector<Val>& xs) {
    if (xs.empty()) throw ArgumentError("concat_cols: no inputs");
    const int N = value(xs[0]).shape[0];
    int D = 0;
    for (Val v : xs) {
        const Tensor& t = value(v);
        if (t.shape.size() != 2 || t.shape[0] != N)
            throw ShapeError("concat_cols: row mismatch at " + t.shape_string());
        D += t.shape[1];
    }
    Tensor out({N, D});
    int off = 0;
    for (Val v : xs) {
        const Tensor& t = value(v);
        const int d = t.shape[1];
        for (int n = 0; n < N; ++n)
            std::copy(t.data.begin() + static_cast<size_t>(n) * d,
                      t.data.begin() + static_cast<size_t>(n + 1) * d,
                      out.data.begin() + static_cast<size_t>(n) * D + off);
        off += d;
    }
    int oid = static_cast<int>(nodes_.size());
    std::vector<Val> inputs = xs;
    return make(std::move(out), inputs, [this, inputs, oid, N, D] {
        const Tensor& g = nodes_[oid].grad;
        int off = 0;
        for (Val v : inputs) {
            const int d = nodes_[v.id].value.shape[1];
            if (needs_grad(v)) {
                Tensor& gv = grad_buffer(v.id);
                for (int n = 0; n < N; ++n)
                    for (int j = 0; j < d; ++j)
                        gv.data[static_cast<size_t>(n) * d + j] +=
                            g.data[static_cast<size_t>(n) * D + off + j];
            }
            off += d;
        }
    });
}

Val Tape::reshape(Val a, std::vector<int> shape) {
    const Tensor& ta = value(a);
    if (Tensor::count(shape) != ta.numel())
        throw ShapeError("reshape: " + ta.shape_string() + " -> " + Tensor::shape_string(shape));
    Tensor out(std::move(shape), ta.data);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {a}, [this, a, oid] {
        const Tensor& g = nodes_[oid].grad;
        Tensor& ga = grad_buffer(a.id);
        for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
    });
}

Val Tape::transpose_12(Val x) {
    const Tensor& tx = value(x);
    if (tx.shape.size() != 3)
        throw ShapeError("transpose_12: want rank 3, got " + tx.shape_string());
    const int A = tx.shape[0], B = tx.shape[1], C = tx.shape[2];
    Tensor out({A, C, B});
    for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                out.data[(static_cast<size_t>(a) * C + c) * B + b] =
                    tx.data[(static_cast<size_t>(a) * B + b) * C + c];
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x}, [this, x, A, B, C, oid] {
        const Tensor& g = nodes_[oid].grad;
        Tensor& gx = grad_buffer(x.id);
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    gx.data[(static_cast<size_t>(a) * B + b) * C + c] +=
                        g.data[(static_cast<size_t>(a) * C + c) * B + b];
    });
}

Val Tape::mean_groups(Val x, int group) {
    const Tensor& tx = value(x);
    if (tx.shape.size() != 2 || group <= 0 || tx.shape[0] % group != 0)
        throw ShapeError("mean_groups: rows of " + tx.shape_string() + " not divisible by " +
                         std::to_string(group));
    const int B = tx.shape[0] / group, D = tx.shape[1];
    Tensor out({B, D});
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < group; ++k)
            for (int d = 0; d < D; ++d)
                out.data[static_cast<size_t>(b) * D + d] +=
                    tx.data[(static_cast<size_t>(b) * group + k) * D + d] / group;
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x}, [this, x, oid, B, D, group] {
        const Tensor& g = nodes_[oid].grad;
        Tensor& gx = grad_buffer(x.id);
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < group; ++k)
                for (int d = 0; d < D; ++d)
                    gx.data[(static_cast<size_t>(b) * group + k) * D + d] +=
                        g.data[static_cast<size_t>(b) * D + d] / group;
    });
}

Val Tape::sum(Val x) {
    const Tensor& tx = value(x);
    double s = 0.0;
    for (double v : tx.data) s += v;
    int oid = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(s), {x}, [this, x, oid] {
        double g = nodes_[oid].grad.data[0];
        Tensor& gx = grad_buffer(x.id);
        for (double& v : gx.data) v += g;
    });
}

Val Tape::mean(Val x) { return scale(sum(x), 1.0 / static_cast<double>(value(x).numel())); }

Val Tape::softmax_rows(Val x) {
    const Tensor& tx = value(x);
    if (tx.shape.size() != 2) throw ShapeError("softmax: need rank 2, got " + tx.shape_string());
    const int N = tx.shape[0], D = tx.shape[1];
    Tensor out({N, D});
    for (int n = 0; n < N; ++n)
        softmax_row(tx.data.data() + static_cast<size_t>(n) * D, D,
                    out.data.data() + static_cast<size_t>(n) * D);
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x}, [this, x, oid, N, D] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& p = nodes_[oid].value;
        Tensor& gx = grad_buffer(x.id);
        for (int n = 0; n < N; ++n) {
            const size_t base = static_cast<size_t>(n) * D;
            double dot = 0.0;
            for (int d = 0; d < D; ++d) dot += g.data[base + d] * p.data[base + d];
            for (int d = 0; d < D; ++d)
                gx.data[base + d] += p.data[base + d] * (g.data[base + d] - dot);
        }
    });
}

namespace {
struct ConvDims {
    int N, C, H, W;      // input image
    int O, kh, kw;       // kernel
    int sh, sw, ph, pw;  // stride / padding
    int Ho, Wo;          // output image
};
}  // namespace

// Shared implementation for conv1d (as height-1 conv2d) and conv2d.
static ConvDims conv_dims(const char* op, const Tensor& x, const Tensor& w, const Tensor& b,
                          int sh, int sw, int ph, int pw) {
    if (x.shape.size() != 4 || w.shape.size() != 4 || x.shape[1] != w.shape[1])
        throw ShapeError(std::string(op) + ": input " + x.shape_string() + " vs kernel " +
                         w.shape_string());
    ConvDims d;
    d.N = x.shape[0];
    d.C = x.shape[1];
    d.H = x.shape[2];
    d.W = x.shape[3];
    d.O = w.shape[0];
    d.kh = w.shape[2];
    d.kw = w.shape[3];
    d.sh = sh;
    d.sw = sw;
    d.ph = ph;
    d.pw = pw;
    if (b.numel() != static_cast<size_t>(d.O))
        throw ShapeError(std::string(op) + ": bias " + b.shape_string() + " vs " +
                         std::to_string(d.O) + " output channels");
    d.Ho = (d.H + 2 * ph - d.kh) / sh + 1;
    d.Wo = (d.W + 2 * pw - d.kw) / sw + 1;
    if (d.H + 2 * ph < d.kh || d.W + 2 * pw < d.kw)
        throw ShapeError(std::string(op) + ": kernel larger than padded input");
    return d;
}

Val Tape::conv2d(Val x, Val w, Val b, int stride, int pad) {
    const ConvDims d = conv_dims("conv2d", value(x), value(w), value(b), stride, stride, pad, pad);
    const int CKK = d.C * d.kh * d.kw, P = d.Ho * d.Wo;
    Tensor out({d.N, d.O, d.Ho, d.Wo});
    std::vector<double> cols(static_cast<size_t>(CKK) * P);
    const Tensor &tx = value(x), &tw = value(w), &tb = value(b);
    for (int n = 0; n < d.N; ++n) {
        im2col(tx.data.data() + static_cast<size_t>(n) * d.C * d.H * d.W, d.C, d.H, d.W, d.kh,
               d.kw, d.sh, d.sw, d.ph, d.pw, d.Ho, d.Wo, cols.data());
        MMap on(out.data.data() + static_cast<size_t>(n) * d.O * P, d.O, P);
        on.noalias() = CMap(tw.data.data(), d.O, CKK) * CMap(cols.data(), CKK, P);
        for (int o = 0; o < d.O; ++o) on.row(o).array() += tb.data[o];
    }
    int oid = static_cast<int>(nodes_.size());
    return make(std::move(out), {x, w, b}, [this, x, w, b, oid, d, CKK, P] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& tx = nodes_[x.id].value;
        const Tensor& tw = nodes_[w.id].value;
        std::vector<double> cols(static_cast<size_t>(CKK) * P);
        for (int n = 0; n < d.N; ++n) {
            CMap gn(g.data.data() + static_cast<size_t>(n) * d.O * P, d.O, P);
            if (needs_grad(b)) {
                Tensor& gb = grad_buffer(b.id);
                for (int o = 0; o < d.O; ++o) gb.data[o] += gn.row(o).sum();
            }
            if (needs_grad(w)) {
                im2col(tx.data.data() + static_cast<size_t>(n) * d.C * d.H * d.W, d.C, d.H, d.W,
                       d.kh, d.kw, d.sh, d.sw, d.ph, d.pw, d.Ho, d.Wo, cols.data());
                MMap(grad_buffer(w.id).data.data(), d.O, CKK).noalias() +=
                    gn * CMap(cols.data(), CKK, P).transpose();
            }
            if (needs_grad(x)) {
                MMap(cols.data(), CKK, P).noalias() =
                    CMap(tw.data.data(), d.O, CKK).transpose() * gn;
                col2im_add(cols.data(), d.C, d.H, d.W, d.kh, d.kw, d.sh, d.sw, d.ph, d.pw, d.Ho,
                           d.Wo,
                           grad_buffer(x.id).data.data() + static_cast<size_t>(n) * d.C * d.H * d.W);
            }
        }
    });
}

Val Tape::conv_transpose2d(Val x, Val w, Val b, int stride, int pad, int output_padding) {
    const Tensor &tx = value(x), &tw = value(w), &tb = value(b);
    if (tx.shape.size() != 4 || tw.shape.size() != 4 || tx.shape[1] != tw.shape[0])
        throw ShapeError("conv_transpose2d: input " + tx.shape_string() + " vs kernel " +
                         tw.shape_string());
    const int N = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
    const int O = tw.shape[1], k = tw.shape[2];
    if (tw.shape[3] != k) throw ShapeError("conv_transpose2d: kernel must be square");
    if (tb.numel() != static_cast<size_t>(O))
        throw ShapeError("conv_transpose2d: bias " + tb.shape_string());
    if (output_padding < 0 || output_padding >= stride)
        throw ArgumentError("conv_transpose2d: output_padding must be in [0, stride)");
    const int Ho = (H - 1) * stride - 2 * pad + k + output_padding;
    const int Wo = (W - 1) * stride - 2 * pad + k + output_padding;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv_transpose2d: empty output");
    const int OKK = O * k * k, P = H * W;

    Tensor out({N, O, Ho, Wo});
    std::vector<double> cols(static_cast<size_t>(OKK) * P);
    for (int n = 0; n < N; ++n) {
        MMap(cols.data(), OKK, P).noalias() =
            CMap(tw.data.data(), C, OKK).transpose() *
            CMap(tx.data.data() + static_cast<size_t>(n) * C * P, C, P);
        double* on = out.data.data() + static_cast<size_t>(n) * O * Ho * Wo;
        col2im_add(cols.data(), O, Ho, Wo, k, k, stride, stride, pad, pad, H, W, on);
        for (int o = 0; o < O; ++o) {
            double* ch = on + static_cast<size_t>(o) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) ch[i] += tb.data[o];
        }
    }
    int oid = static_cast<int>(nodes_.size());
    const int s = stride, p = pad;
    return make(std::move(out), {x, w, b}, [this, x, w, b, oid, N, C, O, H, W, Ho, Wo, k, s, p,
                                            OKK, P] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& tx = nodes_[x.id].value;
        const Tensor& tw = nodes_[w.id].value;
        std::vector<double> dcols(static_cast<size_t>(OKK) * P);
        for (int n = 0; n < N; ++n) {
            const double* gn = g.data.data() + static_cast<size_t>(n) * O * Ho * Wo;
            if (needs_grad(b)) {
                Tensor& gb = grad_buffer(b.id);
                for (int o = 0; o < O; ++o) {
                    const double* ch = gn + static_cast<size_t>(o) * Ho * Wo;
                    for (int i = 0; i < Ho * Wo; ++i) gb.data[o] += ch[i];
                }
            }
            im2col(gn, O, Ho, Wo, k, k, s, s, p, p, H, W, dcols.data());
            if (needs_grad(w)) {
                MMap(grad_buffer(w.id).data.data(), C, OKK).noalias() +=
                    CMap(tx.data.data() + static_cast<size_t>(n) * C * P, C, P) *
                    CMap(dcols.data(), OKK, P).transpose();
            }
            if (needs_grad(x)) {
                MMap(grad_buffer(x.id).data.data() + static_cast<size_t>(n) * C * P, C, P)
                    .noalias() += CMap(tw.data.data(), C, OKK) * CMap(dcols.data(), OKK, P);
            }
        }
    });
}

Val Tape::conv1d(Val x, Val w, Val b, int stride, int pad) {
    const std::vector<int> xs = value(x).shape, ws = value(w).shape;
    if (xs.size() != 3 || ws.size() != 3)
        throw ShapeError("conv1d: input " + Tensor::shape_string(xs) + " vs kernel " +
                         Tensor::shape_string(ws));
    Val x4 = reshape(x, {xs[0], xs[1], 1, xs[2]});
    Val w4 = reshape(w, {ws[0], ws[1], 1, ws[2]});
    const ConvDims d = conv_dims("conv1d", value(x4), value(w4), value(b), 1, stride, 0, pad);
    // Height-1 conv2d reuses the same kernels and backward pieces.
    const int CKK = d.C * d.kw, P = d.Wo;
    Tensor out({d.N, d.O, 1, d.Wo});
    std::vector<double> cols(static_cast<size_t>(CKK) * P);
    const Tensor& tb = value(b);
    for (int n = 0; n < d.N; ++n) {
        im2col(value(x4).data.data() + static_cast<size_t>(n) * d.C * d.W, d.C, 1, d.W, 1, d.kw, 1,
               d.sw, 0, d.pw, 1, d.Wo, cols.data());
        MMap on(out.data.data() + static_cast<size_t>(n) * d.O * P, d.O, P);
        on.noalias() = CMap(value(w4).data.data(), d.O, CKK) * CMap(cols.data(), CKK, P);
        for (int o = 0; o < d.O; ++o) on.row(o).array() += tb.data[o];
    }
    int oid = static_cast<int>(nodes_.size());
    Val y4 = make(std::move(out), {x4, w4, b}, [this, x4, w4, b, oid, d, CKK, P] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& txv = nodes_[x4.id].value;
        const Tensor& twv = nodes_[w4.id].value;
        std::vector<double> cols(static_cast<size_t>(CKK) * P);
        for (int n = 0; n < d.N; ++n) {
            CMap gn(g.data.data() + static_cast<size_t>(n) * d.O * P, d.O, P);
            if (needs_grad(b)) {
                Tensor& gb = grad_buffer(b.id);
                for (int o = 0; o < d.O; ++o) gb.data[o] += gn.row(o).sum();
            }
            if (needs_grad(w4)) {
                im2col(txv.data.data() + static_cast<size_t>(n) * d.C * d.W, d.C, 1, d.W, 1, d.kw,
                       1, d.sw, 0, d.pw, 1, d.Wo, cols.data());
                MMap(grad_buffer(w4.id).data.data(), d.O, CKK).noalias() +=
                    gn * CMap(cols.data(), CKK, P).transpose();
            }
            if (needs_grad(x4)) {
                MMap(cols.data(), CKK, P).noalias() =
                    CMap(twv.data.data(), d.O, CKK).transpose() * gn;
                col2im_add(cols.data(), d.C, 1, d.W, 1, d.kw, 1, d.sw, 0, d.pw, 1, d.Wo,
                           grad_buffer(x4.id).data.data() + static_cast<size_t>(n) * d.C * d.W);
            }
        }
    });
    return reshape(y4, {d.N, d.O, d.Wo});
}

Val Tape::batchnorm(Val x, Val gamma, Val beta, Tensor& running_mean, Tensor& running_var,
                    bool train, double momentum, double eps) {
    const Tensor& tx = value(x);
    if (tx.shape.size() != 2 && tx.shape.size() != 4)
        throw ShapeError("batchnorm: need rank 2 or 4, got " + tx.shape_string());
    const int N = tx.shape[0], C = tx.shape[1];
    const int inner = tx.shape.size() == 4 ? tx.shape[2] * tx.shape[3] : 1;
    const size_t m = static_cast<size_t>(N) * inner;  // elements per channel
    if (value(gamma).numel() != static_cast<size_t>(C) ||
        value(beta).numel() != static_cast<size_t>(C) ||
        running_mean.numel() != static_cast<size_t>(C) ||
        running_var.numel() != static_cast<size_t>(C))
        throw ShapeError("batchnorm: channel parameter size mismatch for " + tx.shape_string());

    auto idx = [C, inner](int n, int c, int i) {
        return (static_cast<size_t>(n) * C + c) * inner + i;
    };
    std::vector<double> mean_c(static_cast<size_t>(C)), inv_std(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        double mu, var;
        if (train) {
            double s = 0.0;
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < inner; ++i) s += tx.data[idx(n, c, i)];
            mu = s / static_cast<double>(m);
            double v = 0.0;
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < inner; ++i) {
                    double d = tx.data[idx(n, c, i)] - mu;
                    v += d * d;
                }
            var = v / static_cast<double>(m);  // biased, matching normalization
            running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mu;
            running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * var;
        } else {
            mu = running_mean.data[c];
            var = running_var.data[c];
        }
        mean_c[c] = mu;
        inv_std[c] = 1.0 / std::sqrt(var + eps);
    }

    auto xhat = std::make_shared<Tensor>(tx.shape);
    Tensor out(tx.shape);
    const Tensor &tg = value(gamma), &tb = value(beta);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < inner; ++i) {
                size_t at = idx(n, c, i);
                double h = (tx.data[at] - mean_c[c]) * inv_std[c];
                xhat->data[at] = h;
                out.data[at] = tg.data[c] * h + tb.data[c];
            }

    int oid = static_cast<int>(nodes_.size());
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    return make(std::move(out), {x, gamma, beta},
                [this, x, gamma, beta, oid, N, C, inner, m, train, xhat, istd, idx] {
        const Tensor& g = nodes_[oid].grad;
        const Tensor& tg = nodes_[gamma.id].value;
        if (needs_grad(gamma)) {
            Tensor& gg = grad_buffer(gamma.id);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < inner; ++i)
                        gg.data[c] += g.data[idx(n, c, i)] * xhat->data[idx(n, c, i)];
        }
        if (needs_grad(beta)) {
            Tensor& gb = grad_buffer(beta.id);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < inner; ++i) gb.data[c] += g.data[idx(n, c, i)];
        }
        if (!needs_grad(x)) return;
        Tensor& gx = grad_buffer(x.id);
        if (!train) {  // running stats are constants
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < inner; ++i)
                        gx.data[idx(n, c, i)] += g.data[idx(n, c, i)] * tg.data[c] * (*istd)[c];
            return;
        }
        for (int c = 0; c < C; ++c) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < inner; ++i) {
                    double dh = g.data[idx(n, c, i)] * tg.data[c];
                    sum_dh += dh;
                    sum_dh_h += dh * xhat->data[idx(n, c, i)];
                }
            const double inv_m = 1.0 / static_cast<double>(m);
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < inner; ++i) {
                    size_t at = idx(n, c, i);
                    double dh = g.data[at] * tg.data[c];
                    gx.data[at] +=
                        (*istd)[c] * (dh - inv_m * sum_dh - xhat->data[at] * inv_m * sum_dh_h);
                }
        }
    });
}

Val Tape::attention(Val q, Val k, Val v, Val wo, int heads, Val prob_mask) {
    const Tensor &tq = value(q), &tk = value(k), &tv = value(v), &tw = value(wo);
    if (tq.shape.size() != 2 || tk.shape.size() != 2 || tv.shape.size() != 2)
        throw ShapeError("attention: Q/K/V must be rank 2");
    const int Nq = tq.shape[0], D = tq.shape[1], Nk = tk.shape[0];
    if (tk.shape[1] != D || tv.shape[0] != Nk || tv.shape[1] != D)
        throw ShapeError("attention: K " + tk.shape_string() + " / V " + tv.shape_string() +
                         " incompatible with Q " + tq.shape_string());
    if (tw.shape != std::vector<int>{D, D})
        throw ShapeError("attention: output projection must be (D,D)");
    if (heads <= 0 || D % heads != 0)
        throw ArgumentError("attention: model dim " + std::to_string(D) +
                            " not divisible by heads " + std::to_string(heads));
    const int dk = D / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
    const bool masked = prob_mask.id >= 0;
    if (masked) require_shape(value(prob_mask), {heads, Nq, Nk}, "attention mask");

    auto probs = std::make_shared<Tensor>(std::vector<int>{heads, Nq, Nk});
    auto concat = std::make_shared<Tensor>(std::vector<int>{Nq, D});
    CMap Q(tq.data.data(), Nq, D), K(tk.data.data(), Nk, D), V(tv.data.data(), Nk, D);
    for (int h = 0; h < heads; ++h) {
        RowMat S = sc * (Q.middleCols(h * dk, dk) * K.middleCols(h * dk, dk).transpose());
        MMap A(probs->data.data() + static_cast<size_t>(h) * Nq * Nk, Nq, Nk);
        for (int r = 0; r < Nq; ++r) softmax_row(S.row(r).data(), Nk, A.row(r).data());
        RowMat Aeff = A;
        if (masked)
            Aeff.array() *=
                CMap(value(prob_mask).data.data() + static_cast<size_t>(h) * Nq * Nk, Nq, Nk)
                    .array();
        MMap(concat->data.data(), Nq, D).middleCols(h * dk, dk).noalias() =
            Aeff * V.middleCols(h * dk, dk);
    }
    Tensor out({Nq, D});
    MMap(out.data.data(), Nq, D).noalias() =
        CMap(concat->data.data(), Nq, D) * CMap(tw.data.data(), D, D);

    int oid = static_cast<int>(nodes_.size());
    std::vector<Val> inputs = {q, k, v, wo};
    if (masked) inputs.push_back(prob_mask);
    return make(std::move(out), inputs,
                [this, q, k, v, wo, prob_mask, oid, Nq, Nk, D, heads, dk, sc, masked, probs,
                 concat] {
        const Tensor& g = nodes_[oid].grad;
        CMap G(g.data.data(), Nq, D);
        CMap Wo(nodes_[wo.id].value.data.data(), D, D);
        if (needs_grad(wo)) {
            MMap(grad_buffer(wo.id).data.data(), D, D).noalias() +=
                CMap(concat->data.data(), Nq, D).transpose() * G;
        }
        RowMat dO = G * Wo.transpose();  // (Nq, D)
        CMap Q(nodes_[q.id].value.data.data(), Nq, D);
        CMap K(nodes_[k.id].value.data.data(), Nk, D);
        CMap V(nodes_[v.id].value.data.data(), Nk, D);
        for (int h = 0; h < heads; ++h) {
            CMap A(probs->data.data() + static_cast<size_t>(h) * Nq * Nk, Nq, Nk);
            RowMat dOh = dO.middleCols(h * dk, dk);
            RowMat Aeff = A;
            if (masked)
                Aeff.array() *= CMap(nodes_[prob_mask.id].value.data.data() +
                                         static_cast<size_t>(h) * Nq * Nk,
                                     Nq, Nk)
                                    .array();
            if (needs_grad(v)) {
                MMap(grad_buffer(v.id).data.data(), Nk, D).middleCols(h * dk, dk).noalias() +=
                    Aeff.transpose() * dOh;
            }
            RowMat dAeff = dOh * V.middleCols(h * dk, dk).transpose();  // (Nq, Nk)
            if (masked && needs_grad(prob_mask)) {
                MMap(grad_buffer(prob_mask.id).data.data() + static_cast<size_t>(h) * Nq * Nk, Nq,
                     Nk)
                    .array() += (dAeff.array() * RowMat(A).array());
            }
            RowMat dA = dAeff;
            if (masked)
                dA.array() *= CMap(nodes_[prob_mask.id].value.data.data() +
                                       static_cast<size_t>(h) * Nq * Nk,
                                   Nq, Nk)
                                  .array();
            RowMat dS(Nq, Nk);
            for (int r = 0; r < Nq; ++r) {
                double dot = (dA.row(r).array() * A.row(r).array()).sum();
                dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
            }
            if (needs_grad(q)) {
                MMap(grad_buffer(q.id).data.data(), Nq, D).middleCols(h * dk, dk).noalias() +=
                    sc * (dS * K.middleCols(h * dk, dk));
            }
            if (needs_grad(k)) {
                MMap(grad_buffer(k.id).data.data(), Nk, D).middleCols(h * dk, dk).noalias() +=
                    sc * (dS.transpose() * Q.middleCols(h * dk, dk));
            }
        }
    });
}

Val Tape::reparameterize(Val mu, Val logvar, const Tensor& eps) {
    const Tensor &tm = value(mu), &tl = value(logvar);
    if (!tm.same_shape(tl) || !tm.same_shape(eps))
        throw ShapeError("reparameterize: mu " + tm.shape_string() + ", logvar " +
                         tl.shape_string() + ", eps " + eps.shape_string());
    Tensor out = tm;
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] += std::exp(0.5 * tl.data[i]) * eps.data[i];
    int oid = static_cast<int>(nodes_.size());
    auto e = std::make_shared<Tensor>(eps);
    return make(std::move(out), {mu, logvar}, [this, mu, logvar, oid, e] {
        const Tensor& g = nodes_[oid].grad;
        if (needs_grad(mu)) {
            Tensor& gm = grad_buffer(mu.id);
            for (size_t i = 0; i < g.numel(); ++i) gm.data[i] += g.data[i];
        }
        if (needs_grad(logvar)) {
            Tensor& gl = grad_buffer(logvar.id);
            const Tensor& tl = nodes_[logvar.id].value;
            for (size_t i = 0; i < g.numel(); ++i)
                gl.data[i] += g.data[i] * e->data[i] * 0.5 * std::exp(0.5 * tl.data[i]);
        }
    });
}

Val Tape::kl_gaussian(Val mu, Val logvar) {
    const Tensor &tm = value(mu), &tl = value(logvar);
    if (!tm.same_shape(tl))
        throw ShapeError("kl_gaussian: mu " + tm.shape_string() + " vs logvar " +
                         tl.shape_string());
    double s = 0.0;
    for (size_t i = 0; i < tm.numel(); ++i)
        s += tm.data[i] * tm.data[i] + std::exp(tl.data[i]) - 1.0 - tl.data[i];
    int oid = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(0.5 * s), {mu, logvar}, [this, mu, logvar, oid] {
        double g = nodes_[oid].grad.data[0];
        const Tensor& tm = nodes_[mu.id].value;
        const Tensor& tl = nodes_[logvar.id].value;
        if (needs_grad(mu)) {
            Tensor& gm = grad_buffer(mu.id);
            for (size_t i = 0; i < tm.numel(); ++i) gm.data[i] += g * tm.data[i];
        }
        if (needs_grad(logvar)) {
            Tensor& gl = grad_buffer(logvar.id);
            for (size_t i = 0; i < tl.numel(); ++i)
                gl.data[i] += g * 0.5 * (std::exp(tl.data[i]) - 1.0);
        }
    });
}

Val Tape::mse(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError("mse: " + ta.shape_string() + " vs " + tb.shape_string());
    const double inv_m = 1.0 / static_cast<double>(ta.numel());
    double s = 0.0;
    for (size_t i = 0; i < ta.numel(); ++i) {
        double d = ta.data[i] - tb.data[i];
        s += d * d;
    }
    int oid = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(s * inv_m), {a, b}, [this, a, b, oid, inv_m] {
        double g = nodes_[oid].grad.data[0];
        const Tensor& ta = nodes_[a.id].value;
        const Tensor& tb = nodes_[b.id].value;
        for (size_t i = 0; i < ta.numel(); ++i) {
            double d = 2.0 * inv_m * g * (ta.data[i] - tb.data[i]);
            if (needs_grad(a)) grad_buffer(a.id).data[i] += d;
            if (needs_grad(b)) grad_buffer(b.id).data[i] -= d;
        }
    });
}

Val Tape::mae(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (!ta.same_shape(tb))
        throw ShapeError("mae: " + ta.shape_string() + " vs " + tb.shape_string());
    const double inv_m = 1.0 / static_cast<double>(ta.numel());
    double s = 0.0;
    for (size_t i = 0; i < ta.numel(); ++i) s += std::abs(ta.data[i] - tb.data[i]);
    int oid = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(s * inv_m), {a, b}, [this, a, b, oid, inv_m] {
        double g = nodes_[oid].grad.data[0];
        const Tensor& ta = nodes_[a.id].value;
        const Tensor& tb = nodes_[b.id].value;
        for (size_t i = 0; i < ta.numel(); ++i) {
            double d = ta.data[i] - tb.data[i];
            double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (needs_grad(a)) grad_buffer(a.id).data[i] += inv_m * g * sgn;
            if (needs_grad(b)) grad_buffer(b.id).data[i] -= inv_m * g * sgn;
        }
    });
}

Val Tape::huber(Val y, Val yhat, double delta) {
    if (delta <= 0.0) throw ArgumentError("huber: delta must be positive");
    const Tensor &ty = value(y), &th = value(yhat);
    if (!ty.same_shape(th))
        throw ShapeError("huber: " + ty.shape_string() + " vs " + th.shape_string());
    const double inv_m = 1.0 / static_cast<double>(ty.numel());
    double s = 0.0;
    for (size_t i = 0; i < ty.numel(); ++i) {
        double d = std::abs(th.data[i] - ty.data[i]);
        s += d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
    }
    int oid = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(s * inv_m), {y, yhat}, [this, y, yhat, oid, delta, inv_m] {
        double g = nodes_[oid].grad.data[0];
        const Tensor& ty = nodes_[y.id].value;
        const Tensor& th = nodes_[yhat.id].value;
        for (size_t i = 0; i < ty.numel(); ++i) {
            double d = th.data[i] - ty.data[i];
            double dd = std::abs(d) <= delta ? d : delta * (d > 0.0 ? 1.0 : -1.0);
            if (needs_grad(yhat)) grad_buffer(yhat.id).data[i] += inv_m * g * dd;
            if (needs_grad(y)) grad_buffer(y.id).data[i] -= inv_m * g * dd;
        }
    });
}

Val Tape::contrastive(Val z, const std::vector<int>& positive, double tau) {
    const Tensor& tz = value(z);
    if (tz.shape.size() != 2) throw ShapeError("contrastive_loss: need (N,D) embeddings");
    const int N = tz.shape[0], D = tz.shape[1];
    if (tau <= 0.0) throw ArgumentError("contrastive_loss: tau must be positive");
    if (N < 2) throw ArgumentError("contrastive_loss: need at least two embeddings");
    if (static_cast<int>(positive.size()) != N)
        throw ArgumentError("contrastive_loss: one positive index per embedding required");
    for (int i = 0; i < N; ++i)
        if (positive[i] < 0 || positive[i] >= N || positive[i] == i)
            throw ArgumentError("contrastive_loss: element " + std::to_string(i) +
                                " has no valid positive");

    auto u = std::make_shared<Tensor>(std::vector<int>{N, D});
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        double nn = 0.0;
        for (int d = 0; d < D; ++d) {
            double x = tz.data[static_cast<size_t>(i) * D + d];
            nn += x * x;
        }
        nn = std::max(std::sqrt(nn), 1e-12);
        (*norms)[i] = nn;
        for (int d = 0; d < D; ++d)
            u->data[static_cast<size_t>(i) * D + d] = tz.data[static_cast<size_t>(i) * D + d] / nn;
    }
    // Row-stable NT-Xent: p_ij = softmax over j != i of (u_i . u_j)/tau.
    auto probs = std::make_shared<Tensor>(std::vector<int>{N, N});
    double loss = 0.0;
    std::vector<double> logits(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        double mx = -1e300;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            double l = 0.0;
            for (int d = 0; d < D; ++d)
                l += u->data[static_cast<size_t>(i) * D + d] *
                     u->data[static_cast<size_t>(j) * D + d];
            logits[j] = l / tau;
            mx = std::max(mx, logits[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            sum += std::exp(logits[j] - mx);
        }
        double lse = mx + std::log(sum);
        loss += lse - logits[positive[i]];
        for (int j = 0; j < N; ++j)
            probs->data[static_cast<size_t>(i) * N + j] =
                (j == i) ? 0.0 : std::exp(logits[j] - lse);
    }
    loss /= static_cast<double>(N);

    int oid = static_cast<int>(nodes_.size());
    auto pos = std::make_shared<std::vector<int>>(positive);
    return make(Tensor::scalar(loss), {z}, [this, z, oid, N, D, tau, u, norms, probs, pos] {
        double g = nodes_[oid].grad.data[0];
        Tensor& gz = grad_buffer(z.id);
        const double c = g / (static_cast<double>(N) * tau);
        // dL/du_i = sum_j (G_ij + G_ji) u_j with G_ij = c (p_ij - [j == pos(i)])
        std::vector<double> du(static_cast<size_t>(N) * D, 0.0);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                if (j == i) continue;
                double gij = c * (probs->data[static_cast<size_t>(i) * N + j] -
                                  ((*pos)[i] == j ? 1.0 : 0.0));
                for (int d = 0; d < D; ++d) {
                    du[static_cast<size_t>(i) * D + d] +=
                        gij * u->data[static_cast<size_t>(j) * D + d];
                    du[static_cast<size_t>(j) * D + d] +=
                        gij * u->data[static_cast<size_t>(i) * D + d];
                }
            }
        // Through the normalization: dz = (du - (du . u) u) / ||z||.
        for (int i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int d = 0; d < D; ++d)
                dot += du[static_cast<size_t>(i) * D + d] * u->data[static_cast<size_t>(i) * D + d];
            for (int d = 0; d < D; ++d)
                gz.data[static_cast<size_t>(i) * D + d] +=
                    (du[static_cast<size_t>(i) * D + d] -
                     dot * u->data[static_cast<size_t>(i) * D + d]) /
                    (*norms)[i];
        }
    });
}

}  // namespace cofap

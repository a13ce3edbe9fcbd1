#include "cofap/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cofap {

namespace {

// Copies a rank-1 (or single-row) tensor into a (1, want) row, validating the
// element count.
Tensor as_row(const Tensor& v, int want, const std::string& what) {
    if (v.numel() != static_cast<size_t>(want))
        throw ShapeError(what + ": want " + std::to_string(want) + " values, got " +
                         v.shape_string());
    return Tensor({1, want}, v.data);
}

}  // namespace

// ------------------------------------------------------------ EarlyStopper

EarlyStopper::EarlyStopper(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
    if (patience < 1) throw ArgumentError("early stop: patience must be >= 1");
    if (min_delta < 0) throw ArgumentError("early stop: min delta must be >= 0");
}

bool EarlyStopper::observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_ - min_delta_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        since_ = 0;
        return false;
    }
    return ++since_ >= patience_;
}

// ----------------------------------------------------------------- SPcVAE

SPcVAE::SPcVAE(SPcVAEConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    if (cfg_.planes < 3 || (cfg_.planes - 3) % 2 != 0)
        throw ArgumentError("sp-cvae: plane count must fit the k=3 s=2 fusion conv");
    if (cfg_.image_size < 16 || cfg_.image_size % 16 != 0)
        throw ArgumentError("sp-cvae: image size must be a positive multiple of 16");
    if (cfg_.conv_channels.size() != 4)
        throw ArgumentError("sp-cvae: encoder wants exactly 4 conv channel counts");
    const auto& cc = cfg_.conv_channels;
    int in_ch = cfg_.channels;
    for (int c : cc) {
        enc_.emplace_back(in_ch, c, 3, 2, 1, rng);
        in_ch = c;
    }
    final_spatial_ = cfg_.image_size / 16;
    flat_ = cc.back() * final_spatial_ * final_spatial_;
    mu_ = Dense(flat_, cfg_.latent_dim, rng);
    logvar_ = Dense(flat_, cfg_.latent_dim, rng);
    dec_in_ = Dense(cfg_.latent_dim, flat_, rng);
    dec_.emplace_back(cc[3], cc[2], 3, 2, 1, 1, rng);
    dec_.emplace_back(cc[2], cc[1], 3, 2, 1, 1, rng);
    dec_.emplace_back(cc[1], cc[0], 3, 2, 1, 1, rng);
    dec_.emplace_back(cc[0], cfg_.channels, 3, 2, 1, 1, rng);
    fuse_ = Conv1d(cfg_.latent_dim, cfg_.fused_channels, 3, 2, 0, rng);
    desc1_ = Dense(cfg_.desc_dim, 64, rng);
    desc2_ = Dense(64, 32, rng);
    const int fused_len = (cfg_.planes - 3) / 2 + 1;
    feature_width_ = cfg_.fused_channels * fused_len + cfg_.latent_dim + 32;
    head_ = Dense(feature_width_, 1, rng);
}

SPcVAE::Output SPcVAE::forward(Tape& t, const Tensor& planes, const Tensor& desc, bool train,
                               Rng& rng) {
    const int S = cfg_.image_size;
    if (planes.shape.size() != 5 || planes.shape[1] != cfg_.planes ||
        planes.shape[2] != cfg_.channels || planes.shape[3] != S || planes.shape[4] != S)
        throw ShapeError("sp-cvae: section set is " + planes.shape_string() + ", want (B," +
                         std::to_string(cfg_.planes) + "," + std::to_string(cfg_.channels) +
                         "," + std::to_string(S) + "," + std::to_string(S) + ")");
    const int B = planes.shape[0];
    if (desc.shape != std::vector<int>{B, cfg_.desc_dim})
        throw ShapeError("sp-cvae: descriptors are " + desc.shape_string() + ", want (" +
                         std::to_string(B) + "," + std::to_string(cfg_.desc_dim) + ")");

    const int BP = B * cfg_.planes;
    Val h = t.reshape(t.constant(planes), {BP, cfg_.channels, S, S});
    for (auto& conv : enc_) h = t.relu(conv(t, h));
    h = t.reshape(h, {BP, flat_});
    Val mu = mu_(t, h);
    Val logvar = logvar_(t, h);
    Tensor eps = train ? Tensor::randn({BP, cfg_.latent_dim}, rng)
                       : Tensor({BP, cfg_.latent_dim});
    Val z = t.reparameterize(mu, logvar, eps);

    Val g = t.reshape(t.relu(dec_in_(t, z)),
                      {BP, cfg_.conv_channels.back(), final_spatial_, final_spatial_});
    for (size_t i = 0; i + 1 < dec_.size(); ++i) g = t.relu(dec_[i](t, g));
    Val recon = dec_.back()(t, g);  // linear output layer

    // Plane-wise latents fused along the plane axis, plus their mean.
    Val z_planes = t.transpose_12(t.reshape(z, {B, cfg_.planes, cfg_.latent_dim}));
    const int fused_len = (cfg_.planes - 3) / 2 + 1;
    Val fused = t.reshape(fuse_(t, z_planes), {B, cfg_.fused_channels * fused_len});
    Val z_bar = t.mean_groups(z, cfg_.planes);
    Val d = t.relu(desc2_(t, t.relu(desc1_(t, t.constant(desc)))));
    Val feature = t.concat_cols({fused, z_bar, d});
    Val y_hat = head_(t, dropout(t, feature, cfg_.dropout, train, rng));
    return {recon, mu, logvar, feature, y_hat};
}

Val SPcVAE::loss(Tape& t, const Output& out, const Tensor& planes, const Tensor& y) const {
    const int BP = planes.shape[0] * cfg_.planes;
    Val x = t.reshape(t.constant(planes),
                      {BP, cfg_.channels, cfg_.image_size, cfg_.image_size});
    Val rec = t.mse(out.recon, x);
    // KL is summed over latent dims; normalize by pixel count so both ELBO
    // terms are per-pixel averages.
    Val kl = t.scale(t.kl_gaussian(out.mu, out.logvar),
                     1.0 / static_cast<double>(planes.numel()));
    Val elbo = t.add(rec, kl);
    Val reg = t.mae(out.y_hat, t.constant(y));
    return t.add(t.scale(elbo, cfg_.alpha_elbo), t.scale(reg, cfg_.beta_reg));
}

NamedParams SPcVAE::parameters() {
    NamedParams ps;
    for (size_t i = 0; i < enc_.size(); ++i) {
        ps.emplace_back("enc" + std::to_string(i + 1) + ".W", &enc_[i].W);
        ps.emplace_back("enc" + std::to_string(i + 1) + ".b", &enc_[i].b);
    }
    ps.emplace_back("mu.W", &mu_.W);
    ps.emplace_back("mu.b", &mu_.b);
    ps.emplace_back("logvar.W", &logvar_.W);
    ps.emplace_back("logvar.b", &logvar_.b);
    ps.emplace_back("dec_in.W", &dec_in_.W);
    ps.emplace_back("dec_in.b", &dec_in_.b);
    for (size_t i = 0; i < dec_.size(); ++i) {
        ps.emplace_back("dec" + std::to_string(i + 1) + ".W", &dec_[i].W);
        ps.emplace_back("dec" + std::to_string(i + 1) + ".b", &dec_[i].b);
    }
    ps.emplace_back("fuse.W", &fuse_.W);
    ps.emplace_back("fuse.b", &fuse_.b);
    ps.emplace_back("desc1.W", &desc1_.W);
    ps.emplace_back("desc1.b", &desc1_.b);
    ps.emplace_back("desc2.W", &desc2_.W);
    ps.emplace_back("desc2.b", &desc2_.b);
    ps.emplace_back("head.W", &head_.W);
    ps.emplace_back("head.b", &head_.b);
    return ps;
}

// ------------------------------------------------------------------- PHNN

PHNN::PHNN(PHNNConfig cfg, Rng& rng)
    : cfg_(cfg),
      t1_(cfg.topo_dim, cfg.hidden, rng),
      t2_(cfg.hidden, cfg.hidden, rng),
      s1_(cfg.struct_dim, cfg.hidden, rng),
      s2_(cfg.hidden, cfg.hidden, rng),
      head_(2 * cfg.hidden, 1, rng),
      bn_t1_(cfg.hidden),
      bn_t2_(cfg.hidden),
      bn_s1_(cfg.hidden),
      bn_s2_(cfg.hidden) {
    if (cfg.topo_dim != 18 || cfg.struct_dim != 5)
        throw ArgumentError("ph-nn: inputs are the 18-value fingerprint plus 5 descriptors");
    if (cfg.hidden < 1) throw ArgumentError("ph-nn: hidden width must be positive");
}

PHNN::Output PHNN::forward(Tape& t, const Tensor& topo, const Tensor& desc, bool train,
                           Rng& rng) {
    if (topo.shape.size() != 2 || topo.shape[1] != cfg_.topo_dim)
        throw ShapeError("ph-nn: fingerprint batch is " + topo.shape_string() + ", want (B," +
                         std::to_string(cfg_.topo_dim) + ")");
    if (desc.shape != std::vector<int>{topo.shape[0], cfg_.struct_dim})
        throw ShapeError("ph-nn: descriptor batch is " + desc.shape_string() + ", want (" +
                         std::to_string(topo.shape[0]) + "," +
                         std::to_string(cfg_.struct_dim) + ")");
    Val a = t.constant(topo);
    a = dropout(t, t.relu(bn_t1_(t, t1_(t, a), train)), cfg_.dropout, train, rng);
    a = dropout(t, t.relu(bn_t2_(t, t2_(t, a), train)), cfg_.dropout, train, rng);
    Val b = t.constant(desc);
    b = dropout(t, t.relu(bn_s1_(t, s1_(t, b), train)), cfg_.dropout, train, rng);
    b = dropout(t, t.relu(bn_s2_(t, s2_(t, b), train)), cfg_.dropout, train, rng);
    Val feature = t.concat_cols({a, b});
    Val y_hat = head_(t, feature);
    return {feature, y_hat};
}

Val PHNN::loss(Tape& t, const Output& out, const Tensor& y) const {
    return t.mae(out.y_hat, t.constant(y));
}

NamedParams PHNN::parameters() {
    NamedParams ps;
    auto dense = [&](const std::string& n, Dense& d) {
        ps.emplace_back(n + ".W", &d.W);
        ps.emplace_back(n + ".b", &d.b);
    };
    auto bn = [&](const std::string& n, BatchNorm& m) {
        ps.emplace_back(n + ".gamma", &m.gamma);
        ps.emplace_back(n + ".beta", &m.beta);
    };
    dense("topo1", t1_);
    bn("topo1.bn", bn_t1_);
    dense("topo2", t2_);
    bn("topo2.bn", bn_t2_);
    dense("struct1", s1_);
    bn("struct1.bn", bn_s1_);
    dense("struct2", s2_);
    bn("struct2.bn", bn_s2_);
    dense("head", head_);
    return ps;
}

NamedBuffers PHNN::buffers() {
    NamedBuffers bs;
    auto bn = [&](const std::string& n, BatchNorm& m) {
        bs.emplace_back(n + ".running_mean", &m.running_mean);
        bs.emplace_back(n + ".running_var", &m.running_var);
    };
    bn("topo1.bn", bn_t1_);
    bn("topo2.bn", bn_t2_);
    bn("struct1.bn", bn_s1_);
    bn("struct2.bn", bn_s2_);
    return bs;
}

// ----------------------------------------------------------------- BiGCAE

GraphTensors graph_tensors(const Supragraph& g) {
    if (g.linkage_nodes.empty())
        throw ArgumentError("big-cae: supragraph '" + g.name + "' has no linkage nodes");
    if (g.linker_nodes.empty())
        throw ArgumentError("big-cae: supragraph '" + g.name + "' has no linker nodes");
    GraphTensors out{Tensor({static_cast<int>(g.linkage_nodes.size()), kLinkageFeatureDim}),
                     Tensor({static_cast<int>(g.linker_nodes.size()), kLinkerFeatureDim})};
    for (size_t i = 0; i < g.linkage_nodes.size(); ++i) {
        const auto& f = g.linkage_nodes[i].features;
        if (f.size() != kLinkageFeatureDim)
            throw ShapeError("big-cae: linkage node feature width " + std::to_string(f.size()));
        std::copy(f.begin(), f.end(), out.linkage.data.begin() + i * kLinkageFeatureDim);
    }
    for (size_t i = 0; i < g.linker_nodes.size(); ++i) {
        const auto& f = g.linker_nodes[i].features;
        if (f.size() != kLinkerFeatureDim)
            throw ShapeError("big-cae: linker node feature width " + std::to_string(f.size()));
        std::copy(f.begin(), f.end(), out.linker.data.begin() + i * kLinkerFeatureDim);
    }
    return out;
}

GraphTensors perturb_graph(const GraphTensors& g, double noise, Rng& rng) {
    GraphTensors out = g;
    for (double& v : out.linkage.data) v += noise * rng.normal();
    for (double& v : out.linker.data) v += noise * rng.normal();
    return out;
}

BiGCAE::BiGCAE(BiGCAEConfig cfg, Rng& rng)
    : cfg_(cfg),
      lk_self1_(kLinkageFeatureDim, cfg.encoder_dim, rng),
      lk_cross1_(kLinkerFeatureDim, cfg.encoder_dim, rng),
      lr_self1_(kLinkerFeatureDim, cfg.encoder_dim, rng),
      lr_cross1_(kLinkageFeatureDim, cfg.encoder_dim, rng),
      lk_self2_(cfg.encoder_dim, cfg.encoder_dim, rng),
      lk_cross2_(cfg.encoder_dim, cfg.encoder_dim, rng),
      lr_self2_(cfg.encoder_dim, cfg.encoder_dim, rng),
      lr_cross2_(cfg.encoder_dim, cfg.encoder_dim, rng),
      proj1_(2 * cfg.encoder_dim, cfg.encoder_dim, rng),
      proj2_(cfg.encoder_dim, cfg.latent_dim, rng),
      dec1_(cfg.latent_dim, cfg.decoder_dim, rng),
      dec2_(cfg.decoder_dim, kLinkageFeatureDim + kLinkerFeatureDim, rng),
      cont1_(cfg.latent_dim, cfg.projection_dim, rng),
      cont2_(cfg.projection_dim, cfg.projection_dim, rng),
      reg_(cfg.latent_dim, 1, rng) {
    if (cfg.tau <= 0) throw ArgumentError("big-cae: temperature must be positive");
}

BiGCAE::Output BiGCAE::forward(Tape& t, const GraphTensors& g) {
    if (g.linkage.shape.size() != 2 || g.linkage.shape[1] != kLinkageFeatureDim)
        throw ShapeError("big-cae: linkage rows are " + g.linkage.shape_string());
    if (g.linker.shape.size() != 2 || g.linker.shape[1] != kLinkerFeatureDim)
        throw ShapeError("big-cae: linker rows are " + g.linker.shape_string());
    const int n1 = g.linkage.shape[0], n2 = g.linker.shape[0];

    Val lk = t.constant(g.linkage), lr = t.constant(g.linker);
    Val mlk = t.mean_rows(lk), mlr = t.mean_rows(lr);
    // Complete-bipartite message passing: the cross message every node
    // receives is the mean over the opposite class.
    Val h1k = t.relu(t.add(lk_self1_(t, lk), t.broadcast_row(lk_cross1_(t, mlr), n1)));
    Val h1r = t.relu(t.add(lr_self1_(t, lr), t.broadcast_row(lr_cross1_(t, mlk), n2)));
    Val h2k = t.relu(
        t.add(lk_self2_(t, h1k), t.broadcast_row(lk_cross2_(t, t.mean_rows(h1r)), n1)));
    Val h2r = t.relu(
        t.add(lr_self2_(t, h1r), t.broadcast_row(lr_cross2_(t, t.mean_rows(h1k)), n2)));

    Val pooled = t.concat_cols({t.mean_rows(h2k), t.mean_rows(h2r)});
    Val latent = proj2_(t, t.relu(proj1_(t, pooled)));
    Val recon = dec2_(t, t.relu(dec1_(t, latent)));
    Val summary = t.concat_cols({mlk, mlr});
    Val projection = cont2_(t, t.relu(cont1_(t, latent)));
    Val y_hat = reg_(t, latent);
    return {latent, recon, summary, projection, y_hat};
}

Val BiGCAE::batch_loss(Tape& t, const std::vector<Output>& outputs, const Tensor& y) const {
    if (outputs.size() < 2 || outputs.size() % 2 != 0)
        throw ArgumentError("big-cae: batch loss wants paired views (even count >= 2)");
    const int V = static_cast<int>(outputs.size()), N = V / 2;
    if (y.shape != std::vector<int>{N, 1})
        throw ShapeError("big-cae: targets are " + y.shape_string() + ", want (" +
                         std::to_string(N) + ",1)");

    std::vector<Val> projs, recons, summaries, preds;
    for (const Output& o : outputs) {
        projs.push_back(o.projection);
        recons.push_back(o.recon);
        summaries.push_back(o.summary);
        preds.push_back(o.y_hat);
    }
    const int pd = cfg_.projection_dim;
    const int rd = kLinkageFeatureDim + kLinkerFeatureDim;
    Val z = t.reshape(t.concat_cols(projs), {V, pd});
    std::vector<int> pos(static_cast<size_t>(V));
    for (int i = 0; i < N; ++i) {
        pos[static_cast<size_t>(2 * i)] = 2 * i + 1;
        pos[static_cast<size_t>(2 * i + 1)] = 2 * i;
    }
    Val contrast = t.contrastive(z, pos, cfg_.tau);
    Val rec = t.huber(t.reshape(t.concat_cols(summaries), {V, rd}),
                      t.reshape(t.concat_cols(recons), {V, rd}), cfg_.huber_delta);
    Tensor y2({V, 1});
    for (int i = 0; i < N; ++i)
        y2.data[static_cast<size_t>(2 * i)] = y2.data[static_cast<size_t>(2 * i + 1)] =
            y.data[static_cast<size_t>(i)];
    Val reg = t.mae(t.reshape(t.concat_cols(preds), {V, 1}), t.constant(y2));
    return t.add(t.add(t.scale(contrast, cfg_.beta_contrastive), t.scale(rec, cfg_.alpha_recon)),
                 reg);
}

NamedParams BiGCAE::parameters() {
    NamedParams ps;
    auto dense = [&](const std::string& n, Dense& d) {
        ps.emplace_back(n + ".W", &d.W);
        ps.emplace_back(n + ".b", &d.b);
    };
    dense("linkage_self1", lk_self1_);
    dense("linkage_cross1", lk_cross1_);
    dense("linker_self1", lr_self1_);
    dense("linker_cross1", lr_cross1_);
    dense("linkage_self2", lk_self2_);
    dense("linkage_cross2", lk_cross2_);
    dense("linker_self2", lr_self2_);
    dense("linker_cross2", lr_cross2_);
    dense("proj1", proj1_);
    dense("proj2", proj2_);
    dense("dec1", dec1_);
    dense("dec2", dec2_);
    dense("contrast1", cont1_);
    dense("contrast2", cont2_);
    dense("regress", reg_);
    return ps;
}

// ------------------------------------------------------------- FusionModel

FusionModel::FusionModel(FusionConfig cfg, int sp_dim, int ph_dim, int big_dim, Rng& rng)
    : cfg_(cfg),
      sp_dim_(sp_dim),
      ph_dim_(ph_dim),
      big_dim_(big_dim),
      sp_proj_(sp_dim, cfg.fusion_dim, rng, /*relu_gain=*/false),
      ph_proj_(ph_dim, cfg.fusion_dim, rng, /*relu_gain=*/false),
      big_proj_(big_dim, cfg.fusion_dim, rng, /*relu_gain=*/false),
      wo_(Tensor({cfg.fusion_dim, cfg.fusion_dim})),
      head1_(cfg.fusion_dim, cfg.head_hidden, rng),
      head2_(cfg.head_hidden, 1, rng),
      gate_(Tensor({2})) {  // zero logits: alpha starts at 0.5
    if (cfg.fusion_dim % cfg.heads != 0)
        throw ArgumentError("fusion: heads must divide the fusion dim");
    xavier_uniform(wo_.value, cfg.fusion_dim, cfg.fusion_dim, rng);
}

FusionModel::Output FusionModel::forward_one(Tape& t, const Tensor& sp_feature, double sp_yhat,
                                             const Tensor& ph_feature, const Tensor& big_feature,
                                             bool train, Rng& rng) {
    Val q = sp_proj_(t, t.constant(as_row(sp_feature, sp_dim_, "fusion: sp feature")));
    Val k1 = ph_proj_(t, t.constant(as_row(ph_feature, ph_dim_, "fusion: ph feature")));
    Val k2 = big_proj_(t, t.constant(as_row(big_feature, big_dim_, "fusion: big feature")));
    Val kv = t.reshape(t.concat_cols({k1, k2}), {2, cfg_.fusion_dim});
    Val mask{};
    if (train && cfg_.attn_dropout > 0.0)
        mask = t.constant(make_dropout_mask({cfg_.heads, 1, 2}, cfg_.attn_dropout, rng));
    Val h = t.add(t.attention(q, kv, kv, t.param(wo_), cfg_.heads, mask), q);  // residual
    Val y_fusion = head2_(t, t.relu(head1_(t, h)));

    Val gate = t.softmax_rows(t.reshape(t.param(gate_), {1, 2}));
    Val both = t.reshape(t.concat_cols({t.constant(Tensor({1, 1}, {sp_yhat})), y_fusion}),
                         {2, 1});
    Val y_final = t.matmul(gate, both);
    Val alpha = t.matmul(gate, t.constant(Tensor({2, 1}, {1.0, 0.0})));
    return {y_final, y_fusion, alpha};
}

double FusionModel::gate_alpha() const {
    const double a = gate_.value.data[0], b = gate_.value.data[1];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return ea / (ea + eb);
}

NamedParams FusionModel::parameters() {
    NamedParams ps;
    auto dense = [&](const std::string& n, Dense& d) {
        ps.emplace_back(n + ".W", &d.W);
        ps.emplace_back(n + ".b", &d.b);
    };
    dense("sp_proj", sp_proj_);
    dense("ph_proj", ph_proj_);
    dense("big_proj", big_proj_);
    ps.emplace_back("attn_out.W", &wo_);
    dense("head1", head1_);
    dense("head2", head2_);
    ps.emplace_back("gate", &gate_);
    return ps;
}

// ------------------------------------------------------------- train loops

namespace {

std::vector<Tensor> snapshot(const NamedParams& ps, const NamedBuffers& bs) {
    std::vector<Tensor> vals;
    vals.reserve(ps.size() + bs.size());
    for (const auto& [name, p] : ps) vals.push_back(p->value);
    for (const auto& [name, t] : bs) vals.push_back(*t);
    return vals;
}

void restore(const NamedParams& ps, const NamedBuffers& bs, const std::vector<Tensor>& snap) {
    for (size_t i = 0; i < ps.size(); ++i) {
        ps[i].second->value = snap[i];
        ps[i].second->zero_grad();
    }
    for (size_t i = 0; i < bs.size(); ++i) *bs[i].second = snap[ps.size() + i];
}

// Shared epoch driver: shuffles the train split each epoch, evaluates the
// validation loss, applies early stopping, and restores the best-validation
// parameters (and buffers) when done.
template <class TrainEpochFn, class ValLossFn>
TrainHistory run_training(const NamedParams& params, const NamedBuffers& buffers,
                          const TrainConfig& tc, const std::vector<int>& train_idx,
                          const std::vector<int>& val_idx, TrainEpochFn train_epoch,
                          ValLossFn val_loss) {
    if (train_idx.empty() || val_idx.empty())
        throw ArgumentError("train: train and validation splits must be non-empty");
    if (tc.batch_size < 1) throw ArgumentError("train: batch size must be >= 1");
    std::vector<Parameter*> raw;
    raw.reserve(params.size());
    for (const auto& [name, p] : params) raw.push_back(p);
    Adam opt(raw, tc.lr);
    Rng rng(tc.seed);
    EarlyStopper stopper(tc.patience, tc.min_delta);
    TrainHistory history;
    std::vector<Tensor> best = snapshot(params, buffers);
    std::vector<int> order = train_idx;
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        rng.shuffle(order);
        history.train_loss.push_back(train_epoch(opt, order, rng));
        history.val_loss.push_back(val_loss());
        history.stopped_epoch = epoch;
        bool stop = stopper.observe(history.val_loss.back());
        if (stopper.best_epoch() == epoch) best = snapshot(params, buffers);
        if (stop) break;
    }
    history.best_epoch = stopper.best_epoch();
    restore(params, buffers, best);
    return history;
}

template <class Fn>
double batched_mean(const std::vector<int>& idx, int batch_size, Fn body) {
    double total = 0.0;
    for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(batch_size)) {
        size_t end = std::min(idx.size(), at + static_cast<size_t>(batch_size));
        std::vector<int> batch(idx.begin() + static_cast<long>(at),
                               idx.begin() + static_cast<long>(end));
        total += body(batch) * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace

TrainHistory train_spcvae(SPcVAE& model, const std::vector<SPSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc) {
    const auto& cfg = model.config();
    auto gather = [&](const std::vector<int>& batch, Tensor& planes, Tensor& desc, Tensor& y) {
        const int B = static_cast<int>(batch.size());
        planes = Tensor({B, cfg.planes, cfg.channels, cfg.image_size, cfg.image_size});
        desc = Tensor({B, cfg.desc_dim});
        y = Tensor({B, 1});
        const size_t per = planes.numel() / static_cast<size_t>(B);
        for (int i = 0; i < B; ++i) {
            const SPSample& s = data[static_cast<size_t>(batch[static_cast<size_t>(i)])];
            if (s.planes.numel() != per)
                throw ShapeError("sp-cvae: sample section set is " + s.planes.shape_string());
            std::copy(s.planes.data.begin(), s.planes.data.end(),
                      planes.data.begin() + static_cast<size_t>(i) * per);
            if (s.desc.numel() != static_cast<size_t>(cfg.desc_dim))
                throw ShapeError("sp-cvae: sample descriptors are " + s.desc.shape_string());
            std::copy(s.desc.data.begin(), s.desc.data.end(),
                      desc.data.begin() + static_cast<size_t>(i) * cfg.desc_dim);
            y.data[static_cast<size_t>(i)] = s.y;
        }
    };
    auto run_batch = [&](const std::vector<int>& batch, bool train, Rng& rng, Adam* opt) {
        Tensor planes, desc, y;
        gather(batch, planes, desc, y);
        Tape t;
        auto out = model.forward(t, planes, desc, train, rng);
        Val loss = model.loss(t, out, planes, y);
        double value = t.value(loss).data[0];
        if (opt) {
            opt->zero_grad();
            t.backward(loss);
            opt->step();
        }
        return value;
    };
    Rng eval_rng(tc.seed + 1);  // unused in eval mode, forward wants one
    return run_training(
        model.parameters(), model.buffers(), tc, train_idx, val_idx,
        [&](Adam& opt, const std::vector<int>& order, Rng& rng) {
            return batched_mean(order, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, true, rng, &opt);
            });
        },
        [&] {
            return batched_mean(val_idx, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, false, eval_rng, nullptr);
            });
        });
}

TrainHistory train_phnn(PHNN& model, const std::vector<PHSample>& data,
                        const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                        const TrainConfig& tc) {
    const auto& cfg = model.config();
    auto gather = [&](const std::vector<int>& batch, Tensor& topo, Tensor& desc, Tensor& y) {
        const int B = static_cast<int>(batch.size());
        topo = Tensor({B, cfg.topo_dim});
        desc = Tensor({B, cfg.struct_dim});
        y = Tensor({B, 1});
        for (int i = 0; i < B; ++i) {
            const PHSample& s = data[static_cast<size_t>(batch[static_cast<size_t>(i)])];
            if (s.topo.numel() != static_cast<size_t>(cfg.topo_dim) ||
                s.desc.numel() != static_cast<size_t>(cfg.struct_dim))
                throw ShapeError("ph-nn: sample with fingerprint " + s.topo.shape_string() +
                                 ", descriptors " + s.desc.shape_string());
            std::copy(s.topo.data.begin(), s.topo.data.end(),
                      topo.data.begin() + static_cast<size_t>(i) * cfg.topo_dim);
            std::copy(s.desc.data.begin(), s.desc.data.end(),
                      desc.data.begin() + static_cast<size_t>(i) * cfg.struct_dim);
            y.data[static_cast<size_t>(i)] = s.y;
        }
    };
    auto run_batch = [&](const std::vector<int>& batch, bool train, Rng& rng, Adam* opt) {
        Tensor topo, desc, y;
        gather(batch, topo, desc, y);
        Tape t;
        auto out = model.forward(t, topo, desc, train, rng);
        Val loss = model.loss(t, out, y);
        double value = t.value(loss).data[0];
        if (opt) {
            opt->zero_grad();
            t.backward(loss);
            opt->step();
        }
        return value;
    };
    Rng eval_rng(tc.seed + 1);
    return run_training(
        model.parameters(), model.buffers(), tc, train_idx, val_idx,
        [&](Adam& opt, const std::vector<int>& order, Rng& rng) {
            return batched_mean(order, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, true, rng, &opt);
            });
        },
        [&] {
            return batched_mean(val_idx, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, false, eval_rng, nullptr);
            });
        });
}

TrainHistory train_bigcae(BiGCAE& model, const std::vector<GraphSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc) {
    auto run_batch = [&](const std::vector<int>& batch, bool train, Rng& rng, Adam* opt) {
        Tape t;
        std::vector<BiGCAE::Output> outs;
        Tensor y({static_cast<int>(batch.size()), 1});
        for (size_t i = 0; i < batch.size(); ++i) {
            const GraphSample& s = data[static_cast<size_t>(batch[i])];
            // Two stochastic views in training; clean duplicates in eval so
            // the validation loss is deterministic.
            GraphTensors v1 = train ? perturb_graph(s.graph, 0.05, rng) : s.graph;
            GraphTensors v2 = train ? perturb_graph(s.graph, 0.05, rng) : s.graph;
            outs.push_back(model.forward(t, v1));
            outs.push_back(model.forward(t, v2));
            y.data[i] = s.y;
        }
        Val loss = model.batch_loss(t, outs, y);
        double value = t.value(loss).data[0];
        if (opt) {
            opt->zero_grad();
            t.backward(loss);
            opt->step();
        }
        return value;
    };
    Rng eval_rng(tc.seed + 1);
    // NT-Xent needs at least two graphs per batch for cross-sample negatives.
    const int min_batch = std::max(tc.batch_size, 2);
    return run_training(
        model.parameters(), model.buffers(), tc, train_idx, val_idx,
        [&](Adam& opt, const std::vector<int>& order, Rng& rng) {
            return batched_mean(order, min_batch, [&](const std::vector<int>& b) {
                return run_batch(b, true, rng, &opt);
            });
        },
        [&] {
            return batched_mean(val_idx, min_batch, [&](const std::vector<int>& b) {
                return run_batch(b, false, eval_rng, nullptr);
            });
        });
}

TrainHistory train_fusion(FusionModel& model, const std::vector<FusionSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc) {
    const auto& cfg = model.config();
    auto run_batch = [&](const std::vector<int>& batch, bool train, Rng& rng, Adam* opt) {
        Tape t;
        std::vector<Val> finals, fusions;
        Tensor y({1, static_cast<int>(batch.size())});
        for (size_t i = 0; i < batch.size(); ++i) {
            const FusionSample& s = data[static_cast<size_t>(batch[i])];
            auto out = model.forward_one(t, s.sp_feature, s.sp_yhat, s.ph_feature,
                                         s.big_feature, train, rng);
            finals.push_back(out.y_final);
            fusions.push_back(out.y_fusion);
            y.data[i] = s.y;
        }
        Val yt = t.constant(y);
        Val loss = t.add(t.scale(t.mae(t.concat_cols(finals), yt), cfg.main_weight),
                         t.scale(t.mae(t.concat_cols(fusions), yt), cfg.fusion_weight));
        double value = t.value(loss).data[0];
        if (opt) {
            opt->zero_grad();
            t.backward(loss);
            opt->step();
        }
        return value;
    };
    Rng eval_rng(tc.seed + 1);
    return run_training(
        model.parameters(), model.buffers(), tc, train_idx, val_idx,
        [&](Adam& opt, const std::vector<int>& order, Rng& rng) {
            return batched_mean(order, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, true, rng, &opt);
            });
        },
        [&] {
            return batched_mean(val_idx, tc.batch_size, [&](const std::vector<int>& b) {
                return run_batch(b, false, eval_rng, nullptr);
            });
        });
}

}  // namespace cofap

#pragma once
// The four networks of the pipeline and their training loops:
//
//   SPcVAE      - conditional VAE over the 9-plane section raster plus scalar
//                 chemical descriptors; emits a 192-wide structural feature
//                 (32 plane-fused + 128 mean latent + 32 descriptor).
//   PHNN        - two MLP towers over the 18-value persistence fingerprint
//                 and the 5 global pore descriptors; 256-wide feature.
//   BiGCAE      - contrastive autoencoder over the bipartite linkage/linker
//                 graph; 64-wide latent.
//   FusionModel - cross-attention over frozen branch features (SP supplies
//                 the query, the other branches keys/values) with a learnable
//                 softmax gate blending the SP prediction and the fusion head.
//
// Training uses Adam with early stopping on validation loss (patience 10,
// min delta 1e-3) and keeps the best-validation parameters.

#include <cstdint>
#include <string>
#include <vector>

#include "cofap/nn.hpp"
#include "cofap/supragraph.hpp"

namespace cofap {

struct SPcVAEConfig {
    int planes = 9;    // section planes per structure
    int channels = 2;  // atom / bond rasters
    int image_size = 64;
    int latent_dim = 128;
    int desc_dim = 6;  // C,H,O,N fractions + atom count + density
    std::vector<int> conv_channels = {32, 64, 128, 256};
    int fused_channels = 8;  // 1D conv over the plane axis; 8 ch x len 4 = 32
    double dropout = 0.3;
    double alpha_elbo = 1.0;
    double beta_reg = 1.0;
};

struct PHNNConfig {
    int topo_dim = 18;
    int struct_dim = 5;
    int hidden = 128;
    double dropout = 0.1;
};

struct BiGCAEConfig {
    int encoder_dim = 128;
    int latent_dim = 64;
    int decoder_dim = 128;
    int projection_dim = 64;
    double tau = 0.1;              // contrastive temperature
    double alpha_recon = 0.1;      // Huber reconstruction weight
    double beta_contrastive = 1.0;
    double huber_delta = 1.0;
};

struct FusionConfig {
    int fusion_dim = 128;
    int heads = 8;
    int head_hidden = 64;  // hidden width of the fusion regression head
    double attn_dropout = 0.1;
    double main_weight = 1.0;    // weight of the blended-prediction loss
    double fusion_weight = 0.1;  // weight of the fusion-head auxiliary loss
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double lr = 1e-3;
    int patience = 10;
    double min_delta = 0.001;
    uint64_t seed = 42;
};

// Stops after `patience` consecutive epochs without an improvement of more
// than `min_delta` over the best validation loss seen so far.
class EarlyStopper {
  public:
    EarlyStopper(int patience, double min_delta);
    bool observe(double val_loss);  // returns true when training should stop
    int best_epoch() const { return best_epoch_; }
    int epoch() const { return epoch_; }
    double best() const { return best_; }

  private:
    int patience_;
    double min_delta_;
    double best_;
    int best_epoch_ = 0, epoch_ = 0, since_ = 0;
};

struct TrainHistory {
    std::vector<double> train_loss, val_loss;  // one entry per epoch run
    int best_epoch = 0;                        // 1-based epoch of best val loss
    int stopped_epoch = 0;                     // last epoch that actually ran
};

// ---------------------------------------------------------------- SP-cVAE

class SPcVAE {
  public:
    SPcVAE(SPcVAEConfig cfg, Rng& rng);

    struct Output {
        Val recon;    // (B*planes, channels, S, S)
        Val mu;       // (B*planes, latent)
        Val logvar;   // (B*planes, latent)
        Val feature;  // (B, feature_width)
        Val y_hat;    // (B, 1)
    };

    // planes: (B, planes, channels, S, S); desc: (B, desc_dim).
    // Eval mode samples with eps = 0, so it is deterministic.
    Output forward(Tape& t, const Tensor& planes, const Tensor& desc, bool train, Rng& rng);
    // alpha * (pixel-mean reconstruction MSE + pixel-normalized KL) +
    // beta * MAE(y_hat, y)
    Val loss(Tape& t, const Output& out, const Tensor& planes, const Tensor& y) const;

    int feature_width() const { return feature_width_; }
    NamedParams parameters();
    NamedBuffers buffers() { return {}; }
    const SPcVAEConfig& config() const { return cfg_; }

  private:
    SPcVAEConfig cfg_;
    int final_spatial_, flat_, feature_width_;
    std::vector<Conv2d> enc_;
    Dense mu_, logvar_, dec_in_;
    std::vector<ConvTranspose2d> dec_;
    Conv1d fuse_;
    Dense desc1_, desc2_, head_;
};

// ----------------------------------------------------------------- PH-NN

class PHNN {
  public:
    PHNN(PHNNConfig cfg, Rng& rng);

    struct Output {
        Val feature;  // (B, 2*hidden)
        Val y_hat;    // (B, 1)
    };

    Output forward(Tape& t, const Tensor& topo, const Tensor& desc, bool train, Rng& rng);
    Val loss(Tape& t, const Output& out, const Tensor& y) const;  // MAE

    int feature_width() const { return 2 * cfg_.hidden; }
    NamedParams parameters();
    NamedBuffers buffers();  // batch-norm running statistics
    const PHNNConfig& config() const { return cfg_; }

  private:
    PHNNConfig cfg_;
    Dense t1_, t2_, s1_, s2_, head_;
    BatchNorm bn_t1_, bn_t2_, bn_s1_, bn_s2_;
};

// ---------------------------------------------------------------- BiG-CAE

// Node-feature rows for one bipartite graph.
struct GraphTensors {
    Tensor linkage;  // (n_linkage, kLinkageFeatureDim)
    Tensor linker;   // (n_linker, kLinkerFeatureDim)
};

GraphTensors graph_tensors(const Supragraph& g);  // throws on an empty node class
// Augmented view: Gaussian feature noise, identity-preserving.
GraphTensors perturb_graph(const GraphTensors& g, double noise, Rng& rng);

class BiGCAE {
  public:
    BiGCAE(BiGCAEConfig cfg, Rng& rng);

    struct Output {
        Val latent;      // (1, latent_dim)
        Val recon;       // (1, 30) decoder output
        Val summary;     // (1, 30) pooled raw-feature target (constant)
        Val projection;  // (1, projection_dim) contrastive embedding
        Val y_hat;       // (1, 1)
    };

    Output forward(Tape& t, const GraphTensors& g);
    // beta * NT-Xent over stacked projections + alpha * Huber(recon, summary)
    // + MAE(y_hat, y). `outputs` holds the 2N views (pairs adjacent), `y` is
    // (N, 1) with one target per graph (both views share it).
    Val batch_loss(Tape& t, const std::vector<Output>& outputs, const Tensor& y) const;

    int feature_width() const { return cfg_.latent_dim; }
    NamedParams parameters();
    NamedBuffers buffers() { return {}; }
    const BiGCAEConfig& config() const { return cfg_; }

  private:
    BiGCAEConfig cfg_;
    Dense lk_self1_, lk_cross1_, lr_self1_, lr_cross1_;
    Dense lk_self2_, lk_cross2_, lr_self2_, lr_cross2_;
    Dense proj1_, proj2_, dec1_, dec2_, cont1_, cont2_, reg_;
};

// ----------------------------------------------------------------- fusion

class FusionModel {
  public:
    FusionModel(FusionConfig cfg, int sp_dim, int ph_dim, int big_dim, Rng& rng);

    struct Output {
        Val y_final;   // (1, 1) gated blend
        Val y_fusion;  // (1, 1) attention-head prediction
        Val alpha;     // (1, 1) gate weight on the SP prediction
    };

    Output forward_one(Tape& t, const Tensor& sp_feature, double sp_yhat,
                       const Tensor& ph_feature, const Tensor& big_feature, bool train,
                       Rng& rng);
    double gate_alpha() const;  // current softmax(gate)[0]

    NamedParams parameters();
    NamedBuffers buffers() { return {}; }
    const FusionConfig& config() const { return cfg_; }

  private:
    FusionConfig cfg_;
    int sp_dim_, ph_dim_, big_dim_;
    Dense sp_proj_, ph_proj_, big_proj_;
    Parameter wo_;  // attention output projection (fusion_dim, fusion_dim)
    Dense head1_, head2_;
    Parameter gate_;  // 2 logits, softmax-normalized to (alpha, 1-alpha)
};

// ------------------------------------------------------------- train loops

struct SPSample {
    Tensor planes;  // (planes, channels, S, S)
    Tensor desc;    // (desc_dim)
    double y = 0.0;
};

struct PHSample {
    Tensor topo;  // (topo_dim)
    Tensor desc;  // (struct_dim)
    double y = 0.0;
};

struct GraphSample {
    GraphTensors graph;
    double y = 0.0;
};

struct FusionSample {
    Tensor sp_feature, ph_feature, big_feature;
    double sp_yhat = 0.0;
    double y = 0.0;
};

TrainHistory train_spcvae(SPcVAE& model, const std::vector<SPSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc);
TrainHistory train_phnn(PHNN& model, const std::vector<PHSample>& data,
                        const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                        const TrainConfig& tc);
TrainHistory train_bigcae(BiGCAE& model, const std::vector<GraphSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc);
TrainHistory train_fusion(FusionModel& model, const std::vector<FusionSample>& data,
                          const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                          const TrainConfig& tc);

}  // namespace cofap

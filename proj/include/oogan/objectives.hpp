#pragma once

#include <vector>

#include "oogan/latent.hpp"
#include "oogan/tensor.hpp"

namespace oogan::objectives {

struct LossWeights {
    double lambda_mi = 1.0;   // MI reconstruction term
    double gamma_ce = 1.0;    // one-hot cross-entropy term
    double ortho_weight = 1.0;
    void validate() const;
};

/// Q output for a batch. In deterministic mode c_hat = sigmoid(logits); in
/// probabilistic mode c_hat holds mu (also sigmoid-bounded), sigma the
/// clamped positive scales, and logits the pre-sigmoid mu_logits (the CE term
/// always consumes pre-sigmoid values).
struct QPrediction {
    bool probabilistic = false;
    Tensor c_hat;   // [B,d]
    Tensor logits;  // [B,d]
    Tensor sigma;   // [B,d], probabilistic only
};

/// mean relu(1 - real) + mean relu(1 + fake). Optional per-score gradients.
double hinge_d_loss(const std::vector<double>& real_scores,
                    const std::vector<double>& fake_scores,
                    std::vector<double>* grad_real = nullptr,
                    std::vector<double>* grad_fake = nullptr);

/// -mean(fake_scores)
double g_adv_loss(const std::vector<double>& fake_scores,
                  std::vector<double>* grad_fake = nullptr);

/// Mean absolute error between c_hat and c (deterministic mode only).
double mi_loss_det(const QPrediction& pred, const Tensor& c, Tensor* d_c_hat = nullptr);

/// Mean Gaussian NLL: log(sigma) + (c-mu)^2/(2 sigma^2) + 0.5 log(2 pi).
double mi_loss_prob(const QPrediction& pred, const Tensor& c, Tensor* d_mu = nullptr,
                    Tensor* d_sigma = nullptr);

/// Mean over batch of -log softmax(logits)[hot]; every row of c must be
/// exactly one-hot.
double onehot_ce_loss(const QPrediction& pred, const Tensor& c, Tensor* d_logits = nullptr);

/// Kernel vectors grouped by layer: kernels[layer][group] is one flattened
/// kernel. Value = sum over layers of (mean |cos| over unordered within-layer
/// pairs). Zero-norm kernels contribute 0 to their pairs. The signed variant
/// drops the absolute value.
using KernelLayers = std::vector<std::vector<std::vector<double>>>;
double orthogonal_reg(const KernelLayers& kernels, bool signed_mode = false,
                      KernelLayers* grads = nullptr);

struct MiTerms {
    double total = 0.0;  // lambda*mi (+ gamma*ce on one-hot iterations)
    double mi = 0.0;     // unweighted reconstruction term
    double ce = 0.0;     // unweighted CE (0 when not evaluated)
};

/// Combined MI-step objective per the alternation kind. Gradients (already
/// weighted) are accumulated into the optional outputs: d_c_hat_or_mu pairs
/// with pred.c_hat, d_sigma with pred.sigma, d_logits with pred.logits.
MiTerms total_mi_objective(const QPrediction& pred, const Tensor& c, latent::CodeKind kind,
                           const LossWeights& weights, Tensor* d_c_hat_or_mu = nullptr,
                           Tensor* d_sigma = nullptr, Tensor* d_logits = nullptr);

}  // namespace oogan::objectives

#pragma once

#include <vector>

#include "oogan/nn.hpp"
#include "oogan/objectives.hpp"
#include "oogan/rng.hpp"

namespace oogan {

struct CriticConfig {
    int d = 10;
    int img_size = 64;
    int img_channels = 3;
    std::vector<int> trunk_channels;  // [stem width, block widths...]; empty -> default
    int q_branch_level = 0;           // block index after which Q branches; 0 -> the 8x8 block
    bool q_probabilistic = false;
    bool spectral_norm = true;
    int q_group_width = 0;  // per-group input channels; 0 -> round(branch_ch/d)
    double init_sd = 0.02;

    static std::vector<int> default_trunk(int img_size);
    CriticConfig resolved() const;
    int blocks() const { return static_cast<int>(trunk_channels.size()) - 1; }
};

/// Gradient of a loss w.r.t. the fields of a QPrediction; empty tensors mean
/// zero. d_c_hat pairs with c_hat (mu in probabilistic mode), d_logits with
/// the pre-sigmoid logits, d_sigma with sigma.
struct QGrad {
    Tensor d_c_hat;
    Tensor d_logits;
    Tensor d_sigma;
};

/// Discriminator trunk with a realness head, plus the Q feature extractor
/// branching at an 8x8 activation: 1x1 projection to d groups of equal
/// width, two grouped convolutions (the orthogonally regularized set), and a
/// grouped 1x1 head emitting per-dimension outputs (1 logit in deterministic
/// mode; mu_logit and log_sigma in probabilistic mode).
struct Critic {
    CriticConfig cfg;  // resolved

    nn::Conv2d stem;
    std::vector<nn::Conv2d> block_convs;
    std::vector<nn::BatchNorm2d> block_bns;
    std::vector<nn::LeakyReLU> block_acts;
    std::vector<nn::AvgPool2x2> block_pools;
    nn::Conv2d realness;

    std::vector<nn::AvgPool2x2> q_prepools;  // bring the branch tap down to 8x8
    nn::Conv2d q_proj;    // 1x1: branch_ch -> m*d
    nn::Conv2d q_conv_a;  // 3x3 grouped, m*d -> d
    nn::Conv2d q_conv_b;  // 4x4 grouped, d -> d (8->4 pooled input -> 1x1)
    nn::Conv2d q_head;    // 1x1 grouped, d -> d * outputs_per_dim
    nn::LeakyReLU q_act_a, q_act_b;
    nn::AvgPool2x2 q_pool_a;

    static Critic build(const CriticConfig& config, Rng& rng);

    std::vector<double> discriminate(const Tensor& x, bool train);
    objectives::QPrediction extract_code(const Tensor& x, bool train);

    /// Backward through realness head + full trunk; returns d(loss)/d(x).
    Tensor backward_d(const std::vector<double>& grad_scores);
    /// Backward through the Q head + shared trunk; returns d(loss)/d(x).
    Tensor backward_q(const QGrad& grad);

    /// The orthogonally regularized kernel set: one flattened vector per
    /// group for each of the two grouped conv layers.
    objectives::KernelLayers q_grouped_kernels() const;
    /// Adds w * grads (matching q_grouped_kernels layout) into the grouped
    /// conv weight gradients.
    void accumulate_q_kernel_grads(const objectives::KernelLayers& grads, double w);

    void params(std::vector<nn::Param*>& out);          // everything
    void params_d(std::vector<nn::Param*>& out);        // trunk + realness head
    void params_q_exclusive(std::vector<nn::Param*>& out);
    void params_trunk_shared(std::vector<nn::Param*>& out);
    void buffers(std::vector<nn::Buffer*>& out);
    void zero_grads();
    /// One power-iteration step on every spectral-normalized conv.
    void sn_power_iteration_all(int steps);
    std::vector<nn::Conv2d*> all_convs();

    /// Branch activation of the most recent forward (either path) — the
    /// shared features both heads consume; kept for weight-sharing checks.
    Tensor shared_cache_;

    int branch_level_ = 0;   // blocks [0, branch_level_) are shared with Q
    int outputs_per_dim_ = 1;

    // caches for the probabilistic-head backward
    Tensor head_out_cache_;  // raw q_head output [B, od, 1, 1]
    objectives::QPrediction pred_cache_;

private:
    Tensor forward_shared(const Tensor& x, bool train);
    Tensor backward_shared(Tensor g);
};

}  // namespace oogan

#pragma once

#include <string>
#include <vector>

#include "oogan/rng.hpp"
#include "oogan/tensor.hpp"

namespace oogan::nn {

/// Trainable parameter: value, accumulated gradient, and per-parameter Adam
/// moments. Keeping the moments here lets each training phase update an
/// explicit parameter list (masked steps), which is what realizes the
/// separate optimizer stores for D, G and Q.
struct Param {
    std::string name;
    Tensor w, g, m, v;
    long steps = 0;

    void init_shape(std::vector<int> shape) {
        w = Tensor(shape);
        g = Tensor(shape);
        m = Tensor(shape);
        v = Tensor(std::move(shape));
    }
    void zero_grad() { g.zero_(); }
};

/// Non-trainable persistent state (batch-norm running stats, spectral-norm
/// power-iteration vectors). Saved in checkpoints, never updated by Adam.
struct Buffer {
    std::string name;
    Tensor w;
};

void adam_step(const std::vector<Param*>& params, double lr, double beta1, double beta2,
               double eps = 1e-8);

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

/// 2-D convolution with optional channel groups and optional spectral
/// normalization of the weight viewed as a [out_ch, (in_ch/groups)*k*k]
/// matrix. forward(train=true) advances the power iteration by one step
/// before use; eval forwards reuse the current state.
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0, groups = 1;
    bool has_bias = true;
    Param weight, bias;

    bool sn = false;
    Buffer sn_u, sn_v;

    static Conv2d make(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad,
                       int groups, bool bias, Rng& rng, double init_sd = 0.02);

    void enable_spectral_norm(Rng& rng);
    void sn_power_iteration(int steps);
    /// sigma = u^T W v with the current state vectors.
    double sn_sigma() const;

    int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }

    Tensor forward(const Tensor& x, bool train);
    /// Accumulates weight/bias gradients, returns gradient w.r.t. input.
    Tensor backward(const Tensor& gout);

    void params(std::vector<Param*>& out);
    void buffers(std::vector<Buffer*>& out);

    // cached by forward for the matching backward
    Tensor x_cache_;
    double sigma_cache_ = 1.0;
};

struct Linear {
    int in_f = 0, out_f = 0;
    bool has_bias = true;
    Param weight, bias;  // weight [out,in]

    static Linear make(const std::string& name, int in_f, int out_f, bool bias, Rng& rng,
                       double init_sd = 0.02);

    Tensor forward(const Tensor& x);  // [B,in] -> [B,out]
    Tensor backward(const Tensor& gout);

    void params(std::vector<Param*>& out);

    Tensor x_cache_;
};

struct BatchNorm2d {
    int ch = 0;
    double eps = 1e-5, momentum = 0.1;
    Param gamma, beta;
    Buffer running_mean, running_var;

    static BatchNorm2d make(const std::string& name, int ch);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gout);  // train-mode only

    void params(std::vector<Param*>& out);
    void buffers(std::vector<Buffer*>& out);

    Tensor xhat_cache_;
    std::vector<double> invstd_cache_;
    bool last_train_ = false;
};

struct LeakyReLU {
    double slope = 0.1;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout) const;
    Tensor x_cache_;
};

struct Sigmoid {
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout) const;
    Tensor y_cache_;
};

/// 2x2 average pooling with stride 2 (spatial dims assumed even).
struct AvgPool2x2 {
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout) const;
    std::vector<int> in_shape_;
};

/// Bilinear 2x upsampling, half-pixel centers (align_corners=false).
struct BilinearUp2 {
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout) const;
    std::vector<int> in_shape_;
};

// stateless helpers used by loss plumbing
Tensor sigmoid(const Tensor& x);

}  // namespace oogan::nn

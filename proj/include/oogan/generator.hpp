#pragma once

#include <vector>

#include "oogan/nn.hpp"
#include "oogan/rng.hpp"

namespace oogan {

struct GeneratorConfig {
    int d = 10;
    int n_z = 100;
    int img_size = 64;
    int img_channels = 3;
    int seed_channels = 0;            // 0 -> channel_schedule[0]
    std::vector<int> channel_schedule;  // empty -> default for img_size
    bool competefree = true;            // false: plain (c,z)-concat stem ablation
    double init_sd = 0.02;

    static std::vector<int> default_schedule(int img_size);
    /// Resolved copy with defaults filled in; throws invalid_argument when
    /// inconsistent (img_size not a power of two >= 16, schedule length not
    /// log2(img_size)-1, seed_channels disagreeing with the schedule head).
    GeneratorConfig resolved() const;
};

/// The OOGAN generator. c is projected to a 4x4 seed map and added to a
/// learned constant; after the first bilinear upsample (8x8), z enters
/// additively through a sigmoid mask derived from c; the remaining trunk is
/// [conv 3x3, batch-norm, leaky-relu, bilinear up] blocks ending in a
/// sigmoid-bounded image. With competefree=false the input block is replaced
/// by a plain concatenation stem and no z injection (ablation baseline).
struct Generator {
    GeneratorConfig cfg;  // resolved

    nn::Linear seed_proj;      // d -> C0*16
    nn::Param learned_const;   // [C0,4,4]
    nn::Linear mask_proj;      // d -> C0 (injection gate, sigmoid)
    nn::Linear z_proj;         // n_z -> C0*64
    nn::Linear concat_stem;    // (d+n_z) -> C0*16, ablation only

    nn::BilinearUp2 up_seed;
    std::vector<nn::Conv2d> convs;
    std::vector<nn::BatchNorm2d> bns;
    std::vector<nn::LeakyReLU> acts;
    std::vector<nn::BilinearUp2> ups;
    nn::Conv2d final_conv;
    nn::Sigmoid out_act, mask_act;

    static Generator build(const GeneratorConfig& config, Rng& rng);

    /// Training-path forward; caches activations for backward().
    Tensor forward(const Tensor& c, const Tensor& z, bool train);
    /// Accumulates parameter gradients from d(loss)/d(output).
    void backward(const Tensor& d_out);

    /// Public sampling op: validates inputs (c in [0,1], matching batch
    /// sizes) and runs an eval-mode forward.
    Tensor generate(const Tensor& c, const Tensor& z);

    /// One image per entry of `values`: c_base with c[dim] swapped, fixed z.
    Tensor latent_traversal(const std::vector<double>& c_base, const std::vector<double>& z,
                            int dim, const std::vector<double>& values);

    void params(std::vector<nn::Param*>& out);
    void buffers(std::vector<nn::Buffer*>& out);
    void zero_grads();

    // forward caches
    Tensor mask_cache_, zfeat_cache_;
    int last_batch_ = 0;
};

}  // namespace oogan

#include "oogan/critic.hpp"

#include <cmath>
#include <stdexcept>

namespace oogan {

namespace {
bool power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }
int log2i(int x) {
    int l = 0;
    while ((1 << l) < x) ++l;
    return l;
}
constexpr double kSigmaLo = 1e-3, kSigmaHi = 10.0;
}  // namespace

std::vector<int> CriticConfig::default_trunk(int img_size) {
    static const std::vector<int> widest = {128, 256, 256, 512};
    int blocks = log2i(img_size) - 2;  // ends at a 4x4 map
    if (blocks < 2 || blocks > static_cast<int>(widest.size()))
        throw std::invalid_argument("CriticConfig: no default trunk for img_size " +
                                    std::to_string(img_size));
    std::vector<int> t = {64};
    t.insert(t.end(), widest.end() - blocks, widest.end());
    return t;
}

CriticConfig CriticConfig::resolved() const {
    CriticConfig r = *this;
    if (r.d <= 0) throw std::invalid_argument("CriticConfig: d must be positive");
    if (r.img_channels != 1 && r.img_channels != 3)
        throw std::invalid_argument("CriticConfig: img_channels must be 1 or 3");
    if (!power_of_two(r.img_size) || r.img_size < 16)
        throw std::invalid_argument("CriticConfig: img_size must be a power of two >= 16");
    if (r.trunk_channels.empty()) r.trunk_channels = default_trunk(r.img_size);
    int blocks = log2i(r.img_size) - 2;
    if (static_cast<int>(r.trunk_channels.size()) != blocks + 1)
        throw std::invalid_argument("CriticConfig: trunk_channels must list stem + " +
                                    std::to_string(blocks) + " block widths");
    for (int c : r.trunk_channels)
        if (c <= 0) throw std::invalid_argument("CriticConfig: nonpositive trunk width");

    if (r.q_branch_level == 0) r.q_branch_level = log2i(r.img_size) - 3;  // 8x8 map
    if (r.q_branch_level < 1 || r.q_branch_level >= blocks)
        throw std::invalid_argument(
            "CriticConfig: q_branch_level must leave at least one discriminator-only block");
    int branch_spatial = r.img_size >> r.q_branch_level;
    if (branch_spatial < 8)
        throw std::invalid_argument("CriticConfig: Q branch activation smaller than 8x8");

    int branch_ch = r.trunk_channels[static_cast<size_t>(r.q_branch_level)];
    if (r.q_group_width == 0)
        r.q_group_width = std::max(1, (branch_ch + r.d / 2) / r.d);  // nearest multiple of d
    if (r.init_sd <= 0) throw std::invalid_argument("CriticConfig: init_sd must be positive");
    return r;
}

Critic Critic::build(const CriticConfig& config, Rng& rng) {
    Critic c;
    c.cfg = config.resolved();
    const auto& tch = c.cfg.trunk_channels;
    double sd = c.cfg.init_sd;
    int blocks = c.cfg.blocks();
    c.branch_level_ = c.cfg.q_branch_level;

    c.stem = nn::Conv2d::make("d.stem", c.cfg.img_channels, tch[0], 1, 1, 0, 1, true, rng, sd);
    for (int i = 0; i < blocks; ++i) {
        c.block_convs.push_back(nn::Conv2d::make("d.block" + std::to_string(i), tch[i], tch[i + 1],
                                                 3, 1, 1, 1, true, rng, sd));
        c.block_bns.push_back(nn::BatchNorm2d::make("d.bn" + std::to_string(i), tch[i + 1]));
    }
    c.block_acts.resize(static_cast<size_t>(blocks));
    c.block_pools.resize(static_cast<size_t>(blocks));
    c.realness = nn::Conv2d::make("d.realness", tch.back(), 1, 4, 1, 0, 1, true, rng, sd);

    int branch_ch = tch[static_cast<size_t>(c.branch_level_)];
    int branch_spatial = c.cfg.img_size >> c.branch_level_;
    int prepools = log2i(branch_spatial) - 3;  // down to 8x8
    c.q_prepools.resize(static_cast<size_t>(prepools));

    int m = c.cfg.q_group_width, d = c.cfg.d;
    c.outputs_per_dim_ = c.cfg.q_probabilistic ? 2 : 1;
    c.q_proj = nn::Conv2d::make("q.proj", branch_ch, m * d, 1, 1, 0, 1, true, rng, sd);
    c.q_conv_a = nn::Conv2d::make("q.group_a", m * d, d, 3, 1, 1, d, true, rng, sd);
    c.q_conv_b = nn::Conv2d::make("q.group_b", d, d, 4, 2, 0, d, true, rng, sd);
    c.q_head =
        nn::Conv2d::make("q.head", d, d * c.outputs_per_dim_, 1, 1, 0, d, true, rng, sd);

    if (c.cfg.spectral_norm)
        for (nn::Conv2d* cv : c.all_convs()) cv->enable_spectral_norm(rng);
    return c;
}

std::vector<nn::Conv2d*> Critic::all_convs() {
    std::vector<nn::Conv2d*> out = {&stem};
    for (auto& b : block_convs) out.push_back(&b);
    out.push_back(&realness);
    out.push_back(&q_proj);
    out.push_back(&q_conv_a);
    out.push_back(&q_conv_b);
    out.push_back(&q_head);
    return out;
}

void Critic::sn_power_iteration_all(int steps) {
    if (!cfg.spectral_norm) return;
    for (nn::Conv2d* cv : all_convs()) cv->sn_power_iteration(steps);
}

Tensor Critic::forward_shared(const Tensor& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != cfg.img_channels || x.dim(2) != cfg.img_size ||
        x.dim(3) != cfg.img_size)
        throw std::invalid_argument("Critic: input shape " + shape_string(x.shape) +
                                    " does not match config");
    Tensor h = stem.forward(x, train);
    for (int i = 0; i < branch_level_; ++i) {
        h = block_convs[static_cast<size_t>(i)].forward(h, train);
        h = block_bns[static_cast<size_t>(i)].forward(h, train);
        h = block_acts[static_cast<size_t>(i)].forward(h);
        h = block_pools[static_cast<size_t>(i)].forward(h);
    }
    shared_cache_ = h;
    return h;
}

Tensor Critic::backward_shared(Tensor g) {
    for (int i = branch_level_ - 1; i >= 0; --i) {
        g = block_pools[static_cast<size_t>(i)].backward(g);
        g = block_acts[static_cast<size_t>(i)].backward(g);
        g = block_bns[static_cast<size_t>(i)].backward(g);
        g = block_convs[static_cast<size_t>(i)].backward(g);
    }
    return stem.backward(g);
}

std::vector<double> Critic::discriminate(const Tensor& x, bool train) {
    Tensor h = forward_shared(x, train);
    int blocks = cfg.blocks();
    for (int i = branch_level_; i < blocks; ++i) {
        h = block_convs[static_cast<size_t>(i)].forward(h, train);
        h = block_bns[static_cast<size_t>(i)].forward(h, train);
        h = block_acts[static_cast<size_t>(i)].forward(h);
        h = block_pools[static_cast<size_t>(i)].forward(h);
    }
    h = realness.forward(h, train);  // [B,1,1,1]
    std::vector<double> scores(static_cast<size_t>(h.dim(0)));
    for (int n = 0; n < h.dim(0); ++n) scores[static_cast<size_t>(n)] = h[n];
    return scores;
}

Tensor Critic::backward_d(const std::vector<double>& grad_scores) {
    int B = static_cast<int>(grad_scores.size());
    Tensor g({B, 1, 1, 1});
    for (int n = 0; n < B; ++n) g[n] = grad_scores[static_cast<size_t>(n)];
    Tensor h = realness.backward(g);
    for (int i = cfg.blocks() - 1; i >= branch_level_; --i) {
        h = block_pools[static_cast<size_t>(i)].backward(h);
        h = block_acts[static_cast<size_t>(i)].backward(h);
        h = block_bns[static_cast<size_t>(i)].backward(h);
        h = block_convs[static_cast<size_t>(i)].backward(h);
    }
    return backward_shared(std::move(h));
}

objectives::QPrediction Critic::extract_code(const Tensor& x, bool train) {
    Tensor h = forward_shared(x, train);
    for (auto& p : q_prepools) h = p.forward(h);
    h = q_proj.forward(h, train);           // [B, m*d, 8, 8]
    h = q_conv_a.forward(h, train);         // [B, d, 8, 8]
    h = q_act_a.forward(h);
    h = q_pool_a.forward(h);                // [B, d, 4, 4]
    h = q_conv_b.forward(h, train);         // [B, d, 1, 1]
    h = q_act_b.forward(h);
    h = q_head.forward(h, train);           // [B, d*opd, 1, 1]
    head_out_cache_ = h;

    int B = h.dim(0), d = cfg.d;
    objectives::QPrediction pred;
    pred.probabilistic = cfg.q_probabilistic;
    pred.logits = Tensor({B, d});
    pred.c_hat = Tensor({B, d});
    if (pred.probabilistic) pred.sigma = Tensor({B, d});
    for (int n = 0; n < B; ++n)
        for (int j = 0; j < d; ++j) {
            if (pred.probabilistic) {
                double mu_logit = h.at(n, 2 * j, 0, 0);
                double log_sigma = h.at(n, 2 * j + 1, 0, 0);
                pred.logits.at(n, j) = mu_logit;
                pred.c_hat.at(n, j) = 1.0 / (1.0 + std::exp(-mu_logit));
                pred.sigma.at(n, j) =
                    std::min(kSigmaHi, std::max(kSigmaLo, std::exp(log_sigma)));
            } else {
                double logit = h.at(n, j, 0, 0);
                pred.logits.at(n, j) = logit;
                pred.c_hat.at(n, j) = 1.0 / (1.0 + std::exp(-logit));
            }
        }
    pred_cache_ = pred;
    return pred;
}

Tensor Critic::backward_q(const QGrad& grad) {
    const objectives::QPrediction& pred = pred_cache_;
    if (pred.c_hat.empty()) throw std::logic_error("Critic: backward_q before extract_code");
    int B = pred.c_hat.dim(0), d = cfg.d;
    Tensor gh({B, d * outputs_per_dim_, 1, 1});
    for (int n = 0; n < B; ++n)
        for (int j = 0; j < d; ++j) {
            double g_pre = 0.0;
            double ch = pred.c_hat.at(n, j);
            double dsig = ch * (1.0 - ch);  // d sigmoid(t)/dt
            if (!grad.d_c_hat.empty()) g_pre += grad.d_c_hat.at(n, j) * dsig;
            if (!grad.d_logits.empty()) g_pre += grad.d_logits.at(n, j);
            if (pred.probabilistic) {
                gh.at(n, 2 * j, 0, 0) = g_pre;
                if (!grad.d_sigma.empty()) {
                    double sg = pred.sigma.at(n, j);
                    // d sigma/d log_sigma = sigma inside the clamp, 0 at the rails
                    double pass = (sg > kSigmaLo && sg < kSigmaHi) ? sg : 0.0;
                    gh.at(n, 2 * j + 1, 0, 0) = grad.d_sigma.at(n, j) * pass;
                }
            } else {
                gh.at(n, j, 0, 0) = g_pre;
            }
        }

    Tensor g = q_head.backward(gh);
    g = q_act_b.backward(g);
    g = q_conv_b.backward(g);
    g = q_pool_a.backward(g);
    g = q_act_a.backward(g);
    g = q_conv_a.backward(g);
    g = q_proj.backward(g);
    for (auto it = q_prepools.rbegin(); it != q_prepools.rend(); ++it) g = it->backward(g);
    return backward_shared(std::move(g));
}

objectives::KernelLayers Critic::q_grouped_kernels() const {
    objectives::KernelLayers layers(2);
    int d = cfg.d;
    const Tensor& wa = q_conv_a.weight.w;  // [d, m, 3, 3]
    const Tensor& wb = q_conv_b.weight.w;  // [d, 1, 4, 4]
    int64_t la = wa.numel() / d, lb = wb.numel() / d;
    layers[0].resize(static_cast<size_t>(d));
    layers[1].resize(static_cast<size_t>(d));
    for (int g = 0; g < d; ++g) {
        layers[0][static_cast<size_t>(g)].assign(wa.data() + g * la, wa.data() + (g + 1) * la);
        layers[1][static_cast<size_t>(g)].assign(wb.data() + g * lb, wb.data() + (g + 1) * lb);
    }
    return layers;
}

void Critic::accumulate_q_kernel_grads(const objectives::KernelLayers& grads, double w) {
    int d = cfg.d;
    Tensor& ga = q_conv_a.weight.g;
    Tensor& gb = q_conv_b.weight.g;
    int64_t la = ga.numel() / d, lb = gb.numel() / d;
    for (int g = 0; g < d; ++g) {
        for (int64_t i = 0; i < la; ++i)
            ga[g * la + i] += w * grads[0][static_cast<size_t>(g)][static_cast<size_t>(i)];
        for (int64_t i = 0; i < lb; ++i)
            gb[g * lb + i] += w * grads[1][static_cast<size_t>(g)][static_cast<size_t>(i)];
    }
}

void Critic::params_trunk_shared(std::vector<nn::Param*>& out) {
    stem.params(out);
    for (int i = 0; i < branch_level_; ++i) {
        block_convs[static_cast<size_t>(i)].params(out);
        block_bns[static_cast<size_t>(i)].params(out);
    }
}

void Critic::params_d(std::vector<nn::Param*>& out) {
    params_trunk_shared(out);
    for (int i = branch_level_; i < cfg.blocks(); ++i) {
        block_convs[static_cast<size_t>(i)].params(out);
        block_bns[static_cast<size_t>(i)].params(out);
    }
    realness.params(out);
}

void Critic::params_q_exclusive(std::vector<nn::Param*>& out) {
    q_proj.params(out);
    q_conv_a.params(out);
    q_conv_b.params(out);
    q_head.params(out);
}

void Critic::params(std::vector<nn::Param*>& out) {
    params_d(out);
    params_q_exclusive(out);
}

void Critic::buffers(std::vector<nn::Buffer*>& out) {
    for (nn::Conv2d* cv : all_convs()) cv->buffers(out);
    for (auto& bn : block_bns) bn.buffers(out);
}

void Critic::zero_grads() {
    std::vector<nn::Param*> ps;
    params(ps);
    for (auto* p : ps) p->zero_grad();
}

}  // namespace oogan

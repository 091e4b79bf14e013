#include "oogan/generator.hpp"

#include <stdexcept>

namespace oogan {

namespace {
bool power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }
int log2i(int x) {
    int l = 0;
    while ((1 << l) < x) ++l;
    return l;
}
}  // namespace

std::vector<int> GeneratorConfig::default_schedule(int img_size) {
    static const std::vector<int> widest = {512, 512, 256, 256, 128, 64};
    int levels = log2i(img_size) - 1;  // e.g. 64 -> 5
    if (levels < 2 || levels > static_cast<int>(widest.size()))
        throw std::invalid_argument("GeneratorConfig: no default schedule for img_size " +
                                    std::to_string(img_size));
    return {widest.end() - levels, widest.end()};
}

GeneratorConfig GeneratorConfig::resolved() const {
    GeneratorConfig r = *this;
    if (r.d <= 0 || r.n_z <= 0) throw std::invalid_argument("GeneratorConfig: d and n_z must be positive");
    if (r.img_channels != 1 && r.img_channels != 3)
        throw std::invalid_argument("GeneratorConfig: img_channels must be 1 or 3");
    if (!power_of_two(r.img_size) || r.img_size < 16)
        throw std::invalid_argument("GeneratorConfig: img_size must be a power of two >= 16");
    if (r.channel_schedule.empty()) r.channel_schedule = default_schedule(r.img_size);
    int levels = log2i(r.img_size) - 1;
    if (static_cast<int>(r.channel_schedule.size()) != levels)
        throw std::invalid_argument("GeneratorConfig: channel_schedule length " +
                                    std::to_string(r.channel_schedule.size()) + " != log2(img)-1 = " +
                                    std::to_string(levels));
    for (int cch : r.channel_schedule)
        if (cch <= 0) throw std::invalid_argument("GeneratorConfig: nonpositive channel width");
    if (r.seed_channels == 0) r.seed_channels = r.channel_schedule[0];
    if (r.seed_channels != r.channel_schedule[0])
        throw std::invalid_argument("GeneratorConfig: seed_channels must equal channel_schedule[0]");
    if (r.init_sd <= 0) throw std::invalid_argument("GeneratorConfig: init_sd must be positive");
    return r;
}

Generator Generator::build(const GeneratorConfig& config, Rng& rng) {
    Generator g;
    g.cfg = config.resolved();
    const auto& sched = g.cfg.channel_schedule;
    int C0 = sched[0];
    double sd = g.cfg.init_sd;

    if (g.cfg.competefree) {
        g.seed_proj = nn::Linear::make("g.seed_proj", g.cfg.d, C0 * 16, true, rng, sd);
        g.learned_const.name = "g.learned_const";
        g.learned_const.init_shape({C0, 4, 4});
        rng.fill_normal(g.learned_const.w.data(), g.learned_const.w.numel(), 0.0, sd);
        g.mask_proj = nn::Linear::make("g.mask_proj", g.cfg.d, C0, true, rng, sd);
        g.z_proj = nn::Linear::make("g.z_proj", g.cfg.n_z, C0 * 64, true, rng, sd);
    } else {
        g.concat_stem =
            nn::Linear::make("g.concat_stem", g.cfg.d + g.cfg.n_z, C0 * 16, true, rng, sd);
    }

    int blocks = static_cast<int>(sched.size()) - 1;
    for (int i = 0; i < blocks; ++i) {
        g.convs.push_back(nn::Conv2d::make("g.conv" + std::to_string(i), sched[i], sched[i + 1], 3,
                                           1, 1, 1, true, rng, sd));
        g.bns.push_back(nn::BatchNorm2d::make("g.bn" + std::to_string(i), sched[i + 1]));
    }
    g.acts.resize(static_cast<size_t>(blocks));
    g.ups.resize(static_cast<size_t>(blocks > 0 ? blocks - 1 : 0));
    g.final_conv =
        nn::Conv2d::make("g.final_conv", sched.back(), g.cfg.img_channels, 3, 1, 1, 1, true, rng, sd);
    return g;
}

Tensor Generator::forward(const Tensor& c, const Tensor& z, bool train) {
    if (c.rank() != 2 || z.rank() != 2)
        throw std::invalid_argument("Generator: c and z must be [B,d] and [B,n_z]");
    if (c.dim(0) != z.dim(0))
        throw std::invalid_argument("Generator: batch size mismatch (c " + shape_string(c.shape) +
                                    ", z " + shape_string(z.shape) + ")");
    if (c.dim(1) != cfg.d || z.dim(1) != cfg.n_z)
        throw std::invalid_argument("Generator: latent width mismatch");
    int B = c.dim(0);
    last_batch_ = B;
    int C0 = cfg.channel_schedule[0];

    Tensor x;
    if (cfg.competefree) {
        Tensor seed = seed_proj.forward(c).reshaped({B, C0, 4, 4});
        for (int n = 0; n < B; ++n)
            for (int64_t i = 0; i < learned_const.w.numel(); ++i)
                seed[static_cast<int64_t>(n) * learned_const.w.numel() + i] += learned_const.w[i];
        x = up_seed.forward(seed);  // [B,C0,8,8]

        mask_cache_ = mask_act.forward(mask_proj.forward(c));  // [B,C0]
        zfeat_cache_ = z_proj.forward(z).reshaped({B, C0, 8, 8});
        for (int n = 0; n < B; ++n)
            for (int ch = 0; ch < C0; ++ch) {
                double m = mask_cache_.at(n, ch);
                double* xa = x.data() + (static_cast<int64_t>(n) * C0 + ch) * 64;
                const double* zf = zfeat_cache_.data() + (static_cast<int64_t>(n) * C0 + ch) * 64;
                for (int i = 0; i < 64; ++i) xa[i] += m * zf[i];
            }
    } else {
        Tensor cz({B, cfg.d + cfg.n_z});
        for (int n = 0; n < B; ++n) {
            for (int j = 0; j < cfg.d; ++j) cz.at(n, j) = c.at(n, j);
            for (int j = 0; j < cfg.n_z; ++j) cz.at(n, cfg.d + j) = z.at(n, j);
        }
        Tensor seed = concat_stem.forward(cz).reshaped({B, C0, 4, 4});
        x = up_seed.forward(seed);
    }

    int blocks = static_cast<int>(convs.size());
    for (int i = 0; i < blocks; ++i) {
        x = convs[static_cast<size_t>(i)].forward(x, train);
        x = bns[static_cast<size_t>(i)].forward(x, train);
        x = acts[static_cast<size_t>(i)].forward(x);
        if (i + 1 < blocks) x = ups[static_cast<size_t>(i)].forward(x);
    }
    x = final_conv.forward(x, train);
    return out_act.forward(x);
}

void Generator::backward(const Tensor& d_out) {
    Tensor g = out_act.backward(d_out);
    g = final_conv.backward(g);
    int blocks = static_cast<int>(convs.size());
    for (int i = blocks - 1; i >= 0; --i) {
        if (i + 1 < blocks) g = ups[static_cast<size_t>(i)].backward(g);
        g = acts[static_cast<size_t>(i)].backward(g);
        g = bns[static_cast<size_t>(i)].backward(g);
        g = convs[static_cast<size_t>(i)].backward(g);
    }
    // g: [B, C0, 8, 8]
    int B = last_batch_;
    int C0 = cfg.channel_schedule[0];
    if (cfg.competefree) {
        Tensor d_zfeat({B, C0, 8, 8});
        Tensor d_mask({B, C0});
        for (int n = 0; n < B; ++n)
            for (int ch = 0; ch < C0; ++ch) {
                double m = mask_cache_.at(n, ch);
                const double* gp = g.data() + (static_cast<int64_t>(n) * C0 + ch) * 64;
                const double* zf = zfeat_cache_.data() + (static_cast<int64_t>(n) * C0 + ch) * 64;
                double* dz = d_zfeat.data() + (static_cast<int64_t>(n) * C0 + ch) * 64;
                double acc = 0;
                for (int i = 0; i < 64; ++i) {
                    dz[i] = m * gp[i];
                    acc += gp[i] * zf[i];
                }
                d_mask.at(n, ch) = acc;
            }
        z_proj.backward(d_zfeat.reshaped({B, C0 * 64}));
        mask_proj.backward(mask_act.backward(d_mask));

        Tensor d_seed = up_seed.backward(g);  // [B,C0,4,4]
        for (int n = 0; n < B; ++n)
            for (int64_t i = 0; i < learned_const.w.numel(); ++i)
                learned_const.g[i] += d_seed[static_cast<int64_t>(n) * learned_const.w.numel() + i];
        seed_proj.backward(d_seed.reshaped({B, C0 * 16}));
    } else {
        Tensor d_seed = up_seed.backward(g);
        concat_stem.backward(d_seed.reshaped({B, C0 * 16}));
    }
}

Tensor Generator::generate(const Tensor& c, const Tensor& z) {
    if (c.rank() != 2 || z.rank() != 2 || c.dim(0) != z.dim(0))
        throw std::invalid_argument("generate: mismatched batch sizes");
    for (int64_t i = 0; i < c.numel(); ++i)
        if (!(c[i] >= 0.0 && c[i] <= 1.0))
            throw std::invalid_argument("generate: control code entries must lie in [0,1]");
    for (int64_t i = 0; i < z.numel(); ++i)
        if (!std::isfinite(z[i])) throw std::invalid_argument("generate: non-finite noise entry");
    return forward(c, z, false);
}

Tensor Generator::latent_traversal(const std::vector<double>& c_base,
                                   const std::vector<double>& z, int dim,
                                   const std::vector<double>& values) {
    if (static_cast<int>(c_base.size()) != cfg.d || static_cast<int>(z.size()) != cfg.n_z)
        throw std::invalid_argument("latent_traversal: base code / noise width mismatch");
    if (dim < 0 || dim >= cfg.d)
        throw std::invalid_argument("latent_traversal: dim " + std::to_string(dim) +
                                    " out of range for d=" + std::to_string(cfg.d));
    if (values.empty()) throw std::invalid_argument("latent_traversal: empty value sweep");
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("latent_traversal: values must lie in [0,1]");
    int K = static_cast<int>(values.size());
    Tensor c({K, cfg.d}), zz({K, cfg.n_z});
    for (int r = 0; r < K; ++r) {
        for (int j = 0; j < cfg.d; ++j) c.at(r, j) = c_base[static_cast<size_t>(j)];
        c.at(r, dim) = values[static_cast<size_t>(r)];
        for (int j = 0; j < cfg.n_z; ++j) zz.at(r, j) = z[static_cast<size_t>(j)];
    }
    return generate(c, zz);
}

void Generator::params(std::vector<nn::Param*>& out) {
    if (cfg.competefree) {
        seed_proj.params(out);
        out.push_back(&learned_const);
        mask_proj.params(out);
        z_proj.params(out);
    } else {
        concat_stem.params(out);
    }
    for (auto& cconv : convs) cconv.params(out);
    for (auto& bn : bns) bn.params(out);
    final_conv.params(out);
}

void Generator::buffers(std::vector<nn::Buffer*>& out) {
    for (auto& cconv : convs) cconv.buffers(out);
    for (auto& bn : bns) bn.buffers(out);
    final_conv.buffers(out);
}

void Generator::zero_grads() {
    std::vector<nn::Param*> ps;
    params(ps);
    for (auto* p : ps) p->zero_grad();
}

}  // namespace oogan

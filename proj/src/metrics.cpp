#include "oogan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "oogan/latent.hpp"
#include "oogan/objectives.hpp"

namespace oogan::metrics {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Sample standard deviation; 0 for fewer than two values.
double sd_of(const std::vector<double>& xs) {
    size_t n = xs.size();
    if (n < 2) return 0.0;
    double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(n - 1));
}

double logsumexp(const std::vector<double>& xs) {
    double mx = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

std::string MetricReport::to_text() const {
    runio::KvMap kv;
    runio::kv_set(kv, "name", name);
    runio::kv_set(kv, "score", fmt(score));
    runio::kv_set(kv, "dispersion", fmt(dispersion));
    runio::kv_set(kv, "n_samples", std::to_string(n_samples));
    for (const auto& [k, v] : config_echo) runio::kv_set(kv, "cfg." + k, v);
    return runio::format_kv_text(kv);
}

std::string MetricReport::csv_header() { return "name,score,dispersion,n_samples"; }

std::string MetricReport::csv_row() const {
    return name + "," + fmt(score) + "," + fmt(dispersion) + "," + std::to_string(n_samples);
}

// ---------------------------------------------------------------------------
// extractors
// ---------------------------------------------------------------------------

Tensor IdentityExtractor::features(const Tensor& images) {
    if (images.rank() < 2) throw std::invalid_argument("IdentityExtractor: batched input required");
    int B = images.dim(0);
    int64_t per = images.numel() / B;
    if (per != dim_)
        throw std::invalid_argument("IdentityExtractor: image has " + std::to_string(per) +
                                    " elements, extractor declared " + std::to_string(dim_));
    return images.reshaped({B, static_cast<int>(per)});
}

ConvExtractor ConvExtractor::build(int img_size, int img_channels,
                                   const std::vector<int64_t>& factor_sizes, Rng& rng) {
    if (img_size < 8 || img_size % 4 != 0)
        throw std::invalid_argument("ConvExtractor: img_size must be a multiple of 4, >= 8");
    ConvExtractor e;
    e.img_size = img_size;
    e.img_channels = img_channels;
    e.factor_sizes = factor_sizes;
    e.conv1 = nn::Conv2d::make("px.conv1", img_channels, 16, 3, 1, 1, 1, true, rng, 0.05);
    e.conv2 = nn::Conv2d::make("px.conv2", 16, 32, 3, 1, 1, 1, true, rng, 0.05);
    int side = img_size / 4;
    e.fc = nn::Linear::make("px.fc", 32 * side * side, e.feat_dim, true, rng, 0.05);
    for (size_t f = 0; f < factor_sizes.size(); ++f)
        e.heads.push_back(nn::Linear::make("px.head" + std::to_string(f), e.feat_dim,
                                           static_cast<int>(factor_sizes[f]), true, rng, 0.05));
    return e;
}

Tensor ConvExtractor::forward_features(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != img_channels || x.dim(2) != img_size || x.dim(3) != img_size)
        throw std::invalid_argument("ConvExtractor: input shape " + shape_string(x.shape) +
                                    " does not match the extractor");
    Tensor h = pool1.forward(act1.forward(conv1.forward(x, false)));
    h = pool2.forward(act2.forward(conv2.forward(h, false)));
    int B = h.dim(0);
    flat_cache_ = h.reshaped({B, static_cast<int>(h.numel() / B)});
    return act_fc.forward(fc.forward(flat_cache_));
}

Tensor ConvExtractor::features(const Tensor& images) { return forward_features(images); }

void ConvExtractor::params(std::vector<nn::Param*>& out) {
    conv1.params(out);
    conv2.params(out);
    fc.params(out);
    for (auto& head : heads) head.params(out);
}

double ConvExtractor::train_on(const data::FactorDataset& ds, long steps, int batch, Rng& rng) {
    if (ds.H != img_size || ds.W != img_size || ds.serve_ch != img_channels)
        throw std::invalid_argument("ConvExtractor: dataset geometry does not match the extractor");
    if (ds.factor_sizes != factor_sizes)
        throw std::invalid_argument("ConvExtractor: dataset factors do not match the extractor");
    if (batch < 2 || steps < 1)
        throw std::invalid_argument("ConvExtractor: need batch >= 2 and steps >= 1");

    std::vector<nn::Param*> ps;
    params(ps);
    double last_loss = 0.0;
    for (long s = 0; s < steps; ++s) {
        std::vector<int64_t> idx(static_cast<size_t>(batch));
        for (auto& i : idx) i = rng.randint(ds.N);
        Tensor x = ds.get_batch(idx);
        Tensor feat = forward_features(x);

        for (nn::Param* p : ps) p->zero_grad();
        Tensor d_feat(feat.shape);
        last_loss = 0.0;
        for (size_t f = 0; f < heads.size(); ++f) {
            Tensor logits = heads[f].forward(feat);
            Tensor onehot({batch, static_cast<int>(factor_sizes[f])});
            for (int n = 0; n < batch; ++n)
                onehot.at(n, static_cast<int>(ds.factor_class(idx[static_cast<size_t>(n)],
                                                              static_cast<int>(f)))) = 1.0;
            objectives::QPrediction pred;
            pred.logits = logits;
            pred.c_hat = logits;  // shape carrier only; CE reads logits
            Tensor d_logits;
            last_loss += objectives::onehot_ce_loss(pred, onehot, &d_logits);
            d_feat.add_(heads[f].backward(d_logits));
        }
        Tensor d_flat = fc.backward(act_fc.backward(d_feat));
        std::vector<int> pooled_shape = pool2.in_shape_;
        pooled_shape[2] /= 2;
        pooled_shape[3] /= 2;
        Tensor d_h = d_flat.reshaped(pooled_shape);
        Tensor d2 = conv2.backward(act2.backward(pool2.backward(d_h)));
        conv1.backward(act1.backward(pool1.backward(d2)));
        nn::adam_step(ps, 1e-3, 0.9, 0.999);
    }
    return last_loss;
}

// ---------------------------------------------------------------------------
// perceptual diversity
// ---------------------------------------------------------------------------

MetricReport perceptual_diversity(const GenFn& gen, PerceptualExtractor& V,
                                  const DiversityOptions& opt, Rng& rng) {
    if (opt.d < 2) throw std::invalid_argument("perceptual_diversity: d must be at least 2");
    if (opt.n < 1) throw std::invalid_argument("perceptual_diversity: n must be at least 1");
    if (opt.n_z < 0) throw std::invalid_argument("perceptual_diversity: n_z must be nonnegative");

    const double lo = opt.literal_k ? -opt.k : 0.0;
    const double hi = opt.literal_k ? opt.k : 1.0;

    std::vector<double> scores;
    scores.reserve(static_cast<size_t>(opt.n));
    for (int r = 0; r < opt.n; ++r) {
        std::vector<double> c(static_cast<size_t>(opt.d));
        for (double& x : c) x = rng.uniform01();
        int i = rng.randint(opt.d);
        int j = rng.randint(opt.d - 1);
        if (j >= i) ++j;

        Tensor cb({2, opt.d});
        for (int a = 0; a < opt.d; ++a) cb.at(0, a) = cb.at(1, a) = c[static_cast<size_t>(a)];
        cb.at(0, i) = lo;
        cb.at(0, j) = hi;
        cb.at(1, i) = hi;
        cb.at(1, j) = lo;

        Tensor zb({2, opt.n_z});
        for (int a = 0; a < opt.n_z; ++a) zb.at(0, a) = zb.at(1, a) = rng.normal();

        Tensor feats = V.features(gen(cb, zb));
        if (feats.rank() != 2 || feats.dim(0) != 2)
            throw std::invalid_argument("perceptual_diversity: extractor must emit [2,F]");
        int F = feats.dim(1);
        double l1 = 0.0;
        for (int a = 0; a < F; ++a) l1 += std::fabs(feats.at(0, a) - feats.at(1, a));
        scores.push_back(l1 / static_cast<double>(F));
    }

    MetricReport rep;
    rep.name = "pdiv";
    rep.score = mean_of(scores);
    rep.dispersion = sd_of(scores);
    rep.n_samples = opt.n;
    runio::kv_set(rep.config_echo, "d", std::to_string(opt.d));
    runio::kv_set(rep.config_echo, "n_z", std::to_string(opt.n_z));
    runio::kv_set(rep.config_echo, "k", fmt(opt.k));
    runio::kv_set(rep.config_echo, "literal_k", opt.literal_k ? "true" : "false");
    runio::kv_set(rep.config_echo, "feature_dim", std::to_string(V.feature_dim()));
    return rep;
}

// ---------------------------------------------------------------------------
// Kim-style factor classification score
// ---------------------------------------------------------------------------

namespace {

/// Encode rows of the dataset in bounded chunks.
Tensor encode_indices(const EncodeFn& encoder, const data::FactorDataset& ds,
                      const std::vector<int64_t>& indices) {
    const size_t chunk = 256;
    Tensor out;
    int d_enc = 0;
    for (size_t at = 0; at < indices.size(); at += chunk) {
        size_t hi = std::min(indices.size(), at + chunk);
        std::vector<int64_t> part(indices.begin() + static_cast<long>(at),
                                  indices.begin() + static_cast<long>(hi));
        Tensor codes = encoder(ds.get_batch(part));
        if (codes.rank() != 2 || codes.dim(0) != static_cast<int>(part.size()))
            throw std::invalid_argument("kim_score: encoder must emit [B,d]");
        if (out.empty()) {
            d_enc = codes.dim(1);
            out = Tensor({static_cast<int>(indices.size()), d_enc});
        }
        for (size_t r = 0; r < part.size(); ++r)
            for (int c = 0; c < d_enc; ++c)
                out.at(static_cast<int>(at + r), c) = codes.at(static_cast<int>(r), c);
    }
    return out;
}

}  // namespace

MetricReport kim_score(const EncodeFn& encoder, const data::FactorDataset& ds,
                       const KimOptions& opt, Rng& rng) {
    if (ds.F() < 2) throw std::invalid_argument("kim_score: need at least 2 factors");
    for (int64_t s : ds.factor_sizes)
        if (s < 2) throw std::invalid_argument("kim_score: every factor needs >= 2 classes");
    if (opt.L < 2) throw std::invalid_argument("kim_score: L must be at least 2");
    if (opt.votes < 1) throw std::invalid_argument("kim_score: votes must be at least 1");

    // global per-dimension stds over the dataset (or a large subsample)
    std::vector<int64_t> all(static_cast<size_t>(ds.N));
    std::iota(all.begin(), all.end(), 0);
    if (ds.N > opt.std_subsample) {
        rng.shuffle(all);
        all.resize(static_cast<size_t>(opt.std_subsample));
    }
    Tensor enc = encode_indices(encoder, ds, all);
    const int d_enc = enc.dim(1);
    const int M = enc.dim(0);
    std::vector<double> stds(static_cast<size_t>(d_enc));
    for (int c = 0; c < d_enc; ++c) {
        double m = 0.0;
        for (int r = 0; r < M; ++r) m += enc.at(r, c);
        m /= M;
        double var = 0.0;
        for (int r = 0; r < M; ++r) var += (enc.at(r, c) - m) * (enc.at(r, c) - m);
        stds[static_cast<size_t>(c)] = std::sqrt(var / M);
    }
    double max_std = *std::max_element(stds.begin(), stds.end());
    if (max_std <= 0.0)
        throw std::runtime_error(
            "kim_score: degenerate encoder - every output dimension has zero variance");
    std::vector<int> kept;
    for (int c = 0; c < d_enc; ++c)
        if (stds[static_cast<size_t>(c)] >= opt.collapse_threshold * max_std) kept.push_back(c);

    // votes: the least-varying normalized dimension claims the fixed factor
    const int total = 2 * opt.votes;
    std::vector<int> vote_dim(static_cast<size_t>(total)), vote_f(static_cast<size_t>(total));
    for (int v = 0; v < total; ++v) {
        int f = rng.randint(ds.F());
        Tensor imgs = data::fixed_factor_batch(ds, f, opt.L, rng);
        Tensor codes = encoder(imgs);
        if (codes.rank() != 2 || codes.dim(0) != opt.L || codes.dim(1) != d_enc)
            throw std::invalid_argument("kim_score: encoder must emit [L,d]");
        int best = kept.front();
        double best_var = 0.0;
        bool first = true;
        for (int c : kept) {
            double m = 0.0;
            for (int r = 0; r < opt.L; ++r) m += codes.at(r, c);
            m /= opt.L;
            double var = 0.0;
            for (int r = 0; r < opt.L; ++r) var += (codes.at(r, c) - m) * (codes.at(r, c) - m);
            var /= opt.L * stds[static_cast<size_t>(c)] * stds[static_cast<size_t>(c)];
            if (first || var < best_var) {
                best = c;
                best_var = var;
                first = false;
            }
        }
        vote_dim[static_cast<size_t>(v)] = best;
        vote_f[static_cast<size_t>(v)] = f;
    }

    // majority map on the first half, accuracy on the second
    std::vector<std::vector<long>> counts(static_cast<size_t>(d_enc),
                                          std::vector<long>(static_cast<size_t>(ds.F()), 0));
    for (int v = 0; v < opt.votes; ++v)
        counts[static_cast<size_t>(vote_dim[static_cast<size_t>(v)])]
              [static_cast<size_t>(vote_f[static_cast<size_t>(v)])]++;
    std::vector<int> assign(static_cast<size_t>(d_enc), 0);
    for (int c = 0; c < d_enc; ++c) {
        const auto& row = counts[static_cast<size_t>(c)];
        assign[static_cast<size_t>(c)] = static_cast<int>(
            std::max_element(row.begin(), row.end()) - row.begin());
    }
    std::vector<double> hits;
    hits.reserve(static_cast<size_t>(opt.votes));
    for (int v = opt.votes; v < total; ++v)
        hits.push_back(assign[static_cast<size_t>(vote_dim[static_cast<size_t>(v)])] ==
                               vote_f[static_cast<size_t>(v)]
                           ? 1.0
                           : 0.0);

    MetricReport rep;
    rep.name = "kim";
    rep.score = mean_of(hits);
    rep.dispersion = sd_of(hits);
    rep.n_samples = opt.votes;
    runio::kv_set(rep.config_echo, "votes_per_half", std::to_string(opt.votes));
    runio::kv_set(rep.config_echo, "L", std::to_string(opt.L));
    runio::kv_set(rep.config_echo, "encoder_dim", std::to_string(d_enc));
    runio::kv_set(rep.config_echo, "kept_dims", std::to_string(kept.size()));
    runio::kv_set(rep.config_echo, "collapse_threshold", fmt(opt.collapse_threshold));
    return rep;
}

// ---------------------------------------------------------------------------
// total correlation
// ---------------------------------------------------------------------------

double tc_estimate(const Tensor& mu, const Tensor& sigma, const Tensor& z, int64_t N) {
    if (mu.rank() != 2 || !mu.same_shape(sigma) || !mu.same_shape(z))
        throw std::invalid_argument("tc_estimate: mu/sigma/z must share a [B,d] shape");
    const int B = mu.dim(0), d = mu.dim(1);
    if (B < 2) throw std::invalid_argument("tc_estimate: need a batch of at least 2");
    if (N < B) throw std::invalid_argument("tc_estimate: dataset size N must be >= batch size");
    for (double s : sigma.v)
        if (!(s > 0.0)) throw std::invalid_argument("tc_estimate: sigma must be positive");
    if (d == 1) return 0.0;

    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    // log N(z_ij | mu_kj, sigma_kj) for every (i,k,j)
    auto log_pdf = [&](int i, int k, int j) {
        double s = sigma.at(k, j);
        double t = (z.at(i, j) - mu.at(k, j)) / s;
        return -std::log(s) - kHalfLog2Pi - 0.5 * t * t;
    };

    // minibatch-stratified weights: the sample's own posterior stands in for
    // itself (1/N); the other B-1 posteriors each represent (N-1)/(N(B-1))
    const double log_w_self = -std::log(static_cast<double>(N));
    const double log_w_other = std::log(static_cast<double>(N - 1)) -
                               std::log(static_cast<double>(N)) -
                               std::log(static_cast<double>(B - 1));

    double total = 0.0;
    std::vector<double> joint_terms(static_cast<size_t>(B));
    std::vector<double> dim_terms(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        double sum_dims = 0.0;
        for (int k = 0; k < B; ++k) joint_terms[static_cast<size_t>(k)] = 0.0;
        for (int j = 0; j < d; ++j) {
            for (int k = 0; k < B; ++k) {
                double lp = log_pdf(i, k, j);
                joint_terms[static_cast<size_t>(k)] += lp;
                dim_terms[static_cast<size_t>(k)] = lp + (k == i ? log_w_self : log_w_other);
            }
            sum_dims += logsumexp(dim_terms);
        }
        for (int k = 0; k < B; ++k)
            joint_terms[static_cast<size_t>(k)] += (k == i ? log_w_self : log_w_other);
        total += logsumexp(joint_terms) - sum_dims;
    }
    return total / static_cast<double>(B);
}

// ---------------------------------------------------------------------------
// probes
// ---------------------------------------------------------------------------

std::pair<double, double> onehot_l1_probe(Generator& gen, Critic& critic, int n, Rng& rng) {
    if (critic.cfg.q_probabilistic)
        throw std::logic_error("onehot_l1_probe: requires a deterministic Q head");
    if (gen.cfg.d != critic.cfg.d)
        throw std::invalid_argument("onehot_l1_probe: generator and critic disagree on d");
    if (n < 1) throw std::invalid_argument("onehot_l1_probe: n must be at least 1");

    auto run = [&](latent::CodeKind kind) {
        double abs_sum = 0.0;
        int64_t count = 0;
        int done = 0;
        while (done < n) {
            int B = std::min(64, n - done);
            Tensor c = latent::sample_code_batch(B, gen.cfg.d, kind, rng);
            Tensor z = latent::sample_noise_batch(B, gen.cfg.n_z, rng);
            Tensor imgs = gen.forward(c, z, false);
            objectives::QPrediction pred = critic.extract_code(imgs, false);
            for (int64_t i = 0; i < c.numel(); ++i) abs_sum += std::fabs(pred.c_hat[i] - c[i]);
            count += c.numel();
            done += B;
        }
        return abs_sum / static_cast<double>(count);
    };
    double uniform = run(latent::CodeKind::continuous);
    double onehot = run(latent::CodeKind::one_hot);
    return {uniform, onehot};
}

double q_cosine_report(const Critic& critic) {
    objectives::KernelLayers kernels = critic.q_grouped_kernels();
    if (kernels.empty()) return 0.0;
    return objectives::orthogonal_reg(kernels) / static_cast<double>(kernels.size());
}

}  // namespace oogan::metrics

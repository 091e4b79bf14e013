#include "oogan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "oogan/npz.hpp"

namespace oogan {

namespace {

constexpr const char* kCheckpointFormat = "oogan-ckpt-v1";

std::string join_ints(const std::vector<int>& xs) {
    std::string out;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stoi(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

/// Full-precision float formatting so logged values round-trip bitwise.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void collect_params(TrainState& st, std::vector<nn::Param*>& out) {
    st.gen.params(out);
    st.critic.params(out);
}

void collect_buffers(TrainState& st, std::vector<nn::Buffer*>& out) {
    st.gen.buffers(out);
    st.critic.buffers(out);
}

Tensor with_instance_noise(const Tensor& x, double sigma, Rng& rng) {
    if (sigma <= 0.0) return x;
    Tensor out = x;
    for (double& v : out.v) v += sigma * rng.normal();
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (d < 1) throw std::invalid_argument("config: d must be at least 1");
    if (n_z < 1) throw std::invalid_argument("config: n_z must be at least 1");
    if (batch < 2) throw std::invalid_argument("config: batch must be at least 2");
    if (iters < 1) throw std::invalid_argument("config: iters must be at least 1");
    if (lr_d <= 0 || lr_g <= 0) throw std::invalid_argument("config: learning rates must be positive");
    if (lambda_mi < 0 || gamma_ce < 0 || ortho_weight < 0)
        throw std::invalid_argument("config: loss weights must be nonnegative");
    if (instance_noise_sigma0 < 0)
        throw std::invalid_argument("config: instance_noise_sigma0 must be nonnegative");
    if (log_every < 1) throw std::invalid_argument("config: log_every must be at least 1");
    if (snapshot_every < 0) throw std::invalid_argument("config: snapshot_every must be nonnegative");
    schedule().validate();
    generator_config().resolved();
    critic_config().resolved();
}

GeneratorConfig TrainConfig::generator_config() const {
    GeneratorConfig g;
    g.d = d;
    g.n_z = n_z;
    g.img_size = img_size;
    g.img_channels = img_channels;
    g.channel_schedule = g_channels;
    g.competefree = competefree;
    return g;
}

CriticConfig TrainConfig::critic_config() const {
    CriticConfig c;
    c.d = d;
    c.img_size = img_size;
    c.img_channels = img_channels;
    c.trunk_channels = d_channels;
    c.q_probabilistic = q_probabilistic;
    c.spectral_norm = spectral_norm;
    return c;
}

latent::SamplingSchedule TrainConfig::schedule() const {
    return latent::SamplingSchedule{onehot_period, onehot_phase};
}

runio::KvMap TrainConfig::to_kv() const {
    runio::KvMap kv;
    auto put = [&](const char* k, const std::string& v) { runio::kv_set(kv, k, v); };
    put("d", std::to_string(d));
    put("n_z", std::to_string(n_z));
    put("img_size", std::to_string(img_size));
    put("img_channels", std::to_string(img_channels));
    put("g_channels", join_ints(g_channels));
    put("d_channels", join_ints(d_channels));
    put("q_probabilistic", q_probabilistic ? "true" : "false");
    put("spectral_norm", spectral_norm ? "true" : "false");
    put("competefree", competefree ? "true" : "false");
    put("mi_updates_trunk", mi_updates_trunk ? "true" : "false");
    put("iters", std::to_string(iters));
    put("batch", std::to_string(batch));
    put("lr_d", fmt(lr_d));
    put("lr_g", fmt(lr_g));
    put("beta1", fmt(beta1));
    put("beta2", fmt(beta2));
    put("lambda_mi", fmt(lambda_mi));
    put("gamma_ce", fmt(gamma_ce));
    put("ortho_weight", fmt(ortho_weight));
    put("disable_onehot", disable_onehot ? "true" : "false");
    put("onehot_period", std::to_string(onehot_period));
    put("onehot_phase", std::to_string(onehot_phase));
    put("instance_noise_sigma0", fmt(instance_noise_sigma0));
    put("anneal_end", std::to_string(anneal_end));
    put("seed", std::to_string(seed));
    put("log_every", std::to_string(log_every));
    put("snapshot_every", std::to_string(snapshot_every));
    put("strict_deterministic", strict_deterministic ? "true" : "false");
    return kv;
}

TrainConfig TrainConfig::from_kv(const runio::KvMap& kv) {
    TrainConfig c;
    auto geti = [&](const char* k, int dflt) {
        std::string v = runio::kv_get(kv, k);
        return v.empty() ? dflt : std::stoi(v);
    };
    auto getl = [&](const char* k, long dflt) {
        std::string v = runio::kv_get(kv, k);
        return v.empty() ? dflt : std::stol(v);
    };
    auto getd = [&](const char* k, double dflt) {
        std::string v = runio::kv_get(kv, k);
        return v.empty() ? dflt : std::stod(v);
    };
    auto getb = [&](const char* k, bool dflt) {
        std::string v = runio::kv_get(kv, k);
        if (v.empty()) return dflt;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw std::invalid_argument(std::string("config: boolean key '") + k +
                                    "' has value '" + v + "'");
    };
    c.d = geti("d", c.d);
    c.n_z = geti("n_z", c.n_z);
    c.img_size = geti("img_size", c.img_size);
    c.img_channels = geti("img_channels", c.img_channels);
    c.g_channels = split_ints(runio::kv_get(kv, "g_channels"));
    c.d_channels = split_ints(runio::kv_get(kv, "d_channels"));
    c.q_probabilistic = getb("q_probabilistic", c.q_probabilistic);
    c.spectral_norm = getb("spectral_norm", c.spectral_norm);
    c.competefree = getb("competefree", c.competefree);
    c.mi_updates_trunk = getb("mi_updates_trunk", c.mi_updates_trunk);
    c.iters = getl("iters", c.iters);
    c.batch = geti("batch", c.batch);
    c.lr_d = getd("lr_d", c.lr_d);
    c.lr_g = getd("lr_g", c.lr_g);
    c.beta1 = getd("beta1", c.beta1);
    c.beta2 = getd("beta2", c.beta2);
    c.lambda_mi = getd("lambda_mi", c.lambda_mi);
    c.gamma_ce = getd("gamma_ce", c.gamma_ce);
    c.ortho_weight = getd("ortho_weight", c.ortho_weight);
    c.disable_onehot = getb("disable_onehot", c.disable_onehot);
    c.onehot_period = geti("onehot_period", c.onehot_period);
    c.onehot_phase = geti("onehot_phase", c.onehot_phase);
    c.instance_noise_sigma0 = getd("instance_noise_sigma0", c.instance_noise_sigma0);
    c.anneal_end = getl("anneal_end", c.anneal_end);
    c.seed = static_cast<unsigned long long>(
        std::stoull(runio::kv_get(kv, "seed", std::to_string(c.seed))));
    c.log_every = getl("log_every", c.log_every);
    c.snapshot_every = getl("snapshot_every", c.snapshot_every);
    c.strict_deterministic = getb("strict_deterministic", c.strict_deterministic);
    return c;
}

// ---------------------------------------------------------------------------
// state
// ---------------------------------------------------------------------------

TrainState init_train(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.rng = Rng(cfg.seed);
    st.gen = Generator::build(cfg.generator_config(), st.rng);
    st.critic = Critic::build(cfg.critic_config(), st.rng);
    st.iteration = 0;
    return st;
}

double instance_noise_sigma(const TrainConfig& cfg, long iteration) {
    if (iteration < 1) throw std::invalid_argument("instance_noise_sigma: iteration must be >= 1");
    const double anneal = static_cast<double>(cfg.anneal_end_effective());
    double frac = 1.0 - static_cast<double>(iteration) / anneal;
    return cfg.instance_noise_sigma0 * std::max(0.0, frac);
}

void train_step(TrainState& st, const Tensor& real_batch) {
    const TrainConfig& cfg = st.cfg;
    if (real_batch.rank() != 4 || real_batch.dim(0) != cfg.batch ||
        real_batch.dim(1) != cfg.img_channels || real_batch.dim(2) != cfg.img_size ||
        real_batch.dim(3) != cfg.img_size)
        throw std::invalid_argument("train_step: real batch shape " +
                                    shape_string(real_batch.shape) +
                                    " does not match the configured model");
    for (double v : real_batch.v)
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("train_step: real batch pixels must lie in [0,1]");

    const long iter = st.iteration + 1;
    const int B = cfg.batch;

    latent::CodeKind kind = cfg.disable_onehot
                                ? latent::CodeKind::continuous
                                : latent::schedule_kind(cfg.schedule(), iter);
    Tensor c = latent::sample_code_batch(B, cfg.d, kind, st.rng);
    Tensor z = latent::sample_noise_batch(B, cfg.n_z, st.rng);
    const double sigma_t = instance_noise_sigma(cfg, iter);

    objectives::LossWeights weights;
    weights.lambda_mi = cfg.lambda_mi;
    weights.gamma_ce = cfg.gamma_ce;
    weights.ortho_weight = cfg.ortho_weight;

    // --- discriminator update (hinge) -------------------------------------
    st.gen.zero_grads();
    st.critic.zero_grads();
    Tensor fake = st.gen.forward(c, z, /*train=*/true);
    Tensor real_noisy = with_instance_noise(real_batch, sigma_t, st.rng);
    Tensor fake_noisy = with_instance_noise(fake, sigma_t, st.rng);

    // the hinge separates over real and fake scores, so each trunk pass can
    // run its backward immediately while its caches are fresh
    std::vector<double> real_scores = st.critic.discriminate(real_noisy, true);
    std::vector<double> fake_scores_detached;
    {
        std::vector<double> grad_real(static_cast<size_t>(B), 0.0);
        for (int i = 0; i < B; ++i)
            if (real_scores[static_cast<size_t>(i)] < 1.0)
                grad_real[static_cast<size_t>(i)] = -1.0 / B;
        st.critic.backward_d(grad_real);
    }
    fake_scores_detached = st.critic.discriminate(fake_noisy, true);
    {
        std::vector<double> grad_fake(static_cast<size_t>(B), 0.0);
        for (int i = 0; i < B; ++i)
            if (fake_scores_detached[static_cast<size_t>(i)] > -1.0)
                grad_fake[static_cast<size_t>(i)] = 1.0 / B;
        st.critic.backward_d(grad_fake);
    }
    double loss_d = objectives::hinge_d_loss(real_scores, fake_scores_detached);
    {
        std::vector<nn::Param*> d_params;
        st.critic.params_d(d_params);
        nn::adam_step(d_params, cfg.lr_d, cfg.beta1, cfg.beta2);
    }

    // --- generator adversarial update (fresh forward) ---------------------
    st.gen.zero_grads();
    st.critic.zero_grads();
    Tensor fake_g = st.gen.forward(c, z, true);
    Tensor fake_g_noisy = with_instance_noise(fake_g, sigma_t, st.rng);
    std::vector<double> g_scores = st.critic.discriminate(fake_g_noisy, true);
    std::vector<double> grad_scores;
    double loss_g = objectives::g_adv_loss(g_scores, &grad_scores);
    Tensor d_fake = st.critic.backward_d(grad_scores);
    st.gen.backward(d_fake);  // additive noise is identity for the gradient
    {
        std::vector<nn::Param*> g_params;
        st.gen.params(g_params);
        nn::adam_step(g_params, cfg.lr_g, cfg.beta1, cfg.beta2);
    }

    // --- mutual-information update (G and Q; realness head untouched) -----
    st.gen.zero_grads();
    st.critic.zero_grads();
    Tensor fake_q = st.gen.forward(c, z, true);
    objectives::QPrediction pred = st.critic.extract_code(fake_q, true);
    Tensor d_chat, d_sigma, d_logits;
    objectives::MiTerms terms =
        objectives::total_mi_objective(pred, c, kind, weights, &d_chat, &d_sigma, &d_logits);

    double ortho_val = 0.0;
    {
        objectives::KernelLayers kernels = st.critic.q_grouped_kernels();
        if (cfg.ortho_weight > 0.0) {
            objectives::KernelLayers kernel_grads;
            ortho_val = objectives::orthogonal_reg(kernels, false, &kernel_grads);
            st.critic.accumulate_q_kernel_grads(kernel_grads, cfg.ortho_weight);
        } else {
            ortho_val = objectives::orthogonal_reg(kernels);
        }
    }

    QGrad qgrad;
    qgrad.d_c_hat = d_chat;
    qgrad.d_sigma = d_sigma;
    qgrad.d_logits = d_logits;
    Tensor d_fake_q = st.critic.backward_q(qgrad);
    st.gen.backward(d_fake_q);
    {
        std::vector<nn::Param*> mi_params;
        st.gen.params(mi_params);
        st.critic.params_q_exclusive(mi_params);
        if (cfg.mi_updates_trunk) st.critic.params_trunk_shared(mi_params);
        nn::adam_step(mi_params, cfg.lr_g, cfg.beta1, cfg.beta2);
    }

    StepStats s;
    s.loss_d = loss_d;
    s.loss_g = loss_g;
    s.loss_mi_cont = terms.mi;
    s.loss_ce = terms.ce;
    s.ortho = ortho_val;
    s.q_cos = ortho_val / static_cast<double>(st.critic.q_grouped_kernels().size());
    s.sigma_t = sigma_t;
    s.onehot_iter = (kind == latent::CodeKind::one_hot);

    const bool finite = std::isfinite(s.loss_d) && std::isfinite(s.loss_g) &&
                        std::isfinite(s.loss_mi_cont) && std::isfinite(s.loss_ce) &&
                        std::isfinite(s.ortho);
    st.iteration = iter;
    st.last = s;
    if (!finite) {
        std::string where;
        if (!st.diagnostic_dir.empty()) {
            where = st.diagnostic_dir + "/abort_iter" + std::to_string(iter) + ".ckpt";
            save_checkpoint(st, where);
        }
        throw std::runtime_error(
            "train_step: non-finite loss at iteration " + std::to_string(iter) + " (d=" +
            fmt(s.loss_d) + " g=" + fmt(s.loss_g) + " mi=" + fmt(s.loss_mi_cont) + ")" +
            (where.empty() ? "" : "; diagnostic snapshot written to " + where));
    }
}

// ---------------------------------------------------------------------------
// run loop
// ---------------------------------------------------------------------------

std::string metrics_csv_header() {
    return "iter,loss_d,loss_g,loss_mi_cont,loss_ce,ortho_reg,q_cos,sigma_t";
}

std::string metrics_csv_row(long iteration, const StepStats& s) {
    return std::to_string(iteration) + "," + fmt(s.loss_d) + "," + fmt(s.loss_g) + "," +
           fmt(s.loss_mi_cont) + "," + fmt(s.loss_ce) + "," + fmt(s.ortho) + "," +
           fmt(s.q_cos) + "," + fmt(s.sigma_t);
}

TrainResult train(const TrainConfig& cfg, const data::FactorDataset& ds,
                  const std::string& run_dir) {
    cfg.validate();
    if (ds.N <= 0) throw std::invalid_argument("train: empty dataset");
    if (ds.serve_ch != cfg.img_channels || ds.H != cfg.img_size || ds.W != cfg.img_size)
        throw std::invalid_argument(
            "train: dataset serves " + std::to_string(ds.H) + "x" + std::to_string(ds.W) + "x" +
            std::to_string(ds.serve_ch) + " but the model wants " + std::to_string(cfg.img_size) +
            "x" + std::to_string(cfg.img_size) + "x" + std::to_string(cfg.img_channels));

    // config echo lands before any training work
    runio::write_kv_file(run_dir + "/config.txt", cfg.to_kv());

    TrainState st = init_train(cfg);
    st.diagnostic_dir = run_dir;
    data::BatchIterator batches(ds, cfg.batch, st.rng, /*shuffle=*/true);

    const std::string metrics_path = run_dir + "/metrics.csv";
    std::ofstream log(metrics_path, std::ios::trunc);
    if (!log) throw std::runtime_error(metrics_path + ": cannot open");
    log << metrics_csv_header() << "\n";

    std::string final_ckpt = run_dir + "/checkpoints/final.ckpt";
    for (long i = 0; i < cfg.iters; ++i) {
        Tensor batch = batches.next();
        train_step(st, batch);
        if (st.iteration % cfg.log_every == 0) {
            log << metrics_csv_row(st.iteration, st.last) << "\n";
            log.flush();
            if (!log) throw std::runtime_error(metrics_path + ": write failure");
        }
        if (cfg.snapshot_every > 0 && st.iteration % cfg.snapshot_every == 0 &&
            st.iteration < cfg.iters) {
            char name[64];
            std::snprintf(name, sizeof(name), "iter%08ld.ckpt", st.iteration);
            save_checkpoint(st, run_dir + "/checkpoints/" + name);
        }
    }
    save_checkpoint(st, final_ckpt);
    return TrainResult{final_ckpt, metrics_path};
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const TrainState& st, const std::string& path) {
    TrainState& mut = const_cast<TrainState&>(st);  // params() is non-const plumbing
    std::vector<nn::Param*> params;
    std::vector<nn::Buffer*> buffers;
    collect_params(mut, params);
    collect_buffers(mut, buffers);

    std::set<std::string> seen;
    npz::Archive a;
    for (nn::Param* p : params) {
        if (!seen.insert(p->name).second)
            throw std::logic_error("checkpoint: duplicate parameter name " + p->name);
        std::vector<int64_t> shape(p->w.shape.begin(), p->w.shape.end());
        a["p:" + p->name + ":w"] = npz::make_f64(shape, p->w.v);
        a["p:" + p->name + ":m"] = npz::make_f64(shape, p->m.v);
        a["p:" + p->name + ":v"] = npz::make_f64(shape, p->v.v);
        a["p:" + p->name + ":steps"] = npz::make_i64({1}, {static_cast<int64_t>(p->steps)});
    }
    for (nn::Buffer* b : buffers) {
        if (!seen.insert("buf:" + b->name).second)
            throw std::logic_error("checkpoint: duplicate buffer name " + b->name);
        std::vector<int64_t> shape(b->w.shape.begin(), b->w.shape.end());
        a["b:" + b->name] = npz::make_f64(shape, b->w.v);
    }
    npz::save_npz(path, a);

    runio::KvMap meta;
    runio::kv_set(meta, "format", kCheckpointFormat);
    runio::kv_set(meta, "iteration", std::to_string(st.iteration));
    runio::kv_set(meta, "rng", st.rng.serialize());
    runio::kv_set(meta, "rng_digest", std::to_string(st.rng.digest()));
    for (const auto& [k, v] : st.cfg.to_kv()) runio::kv_set(meta, "cfg." + k, v);
    runio::write_kv_file(path + ".meta", meta);
}

TrainState load_checkpoint(const std::string& path) {
    runio::KvMap meta = runio::read_kv_file(path + ".meta");
    std::string format = runio::kv_get(meta, "format");
    if (format != kCheckpointFormat)
        throw std::runtime_error(path + ": checkpoint format '" + format + "' not supported (want " +
                                 kCheckpointFormat + ")");

    runio::KvMap cfg_kv;
    for (const auto& [k, v] : meta)
        if (k.rfind("cfg.", 0) == 0) runio::kv_set(cfg_kv, k.substr(4), v);
    TrainConfig cfg = TrainConfig::from_kv(cfg_kv);

    TrainState st = init_train(cfg);
    st.iteration = std::stol(runio::kv_get(meta, "iteration", "0"));
    st.rng = Rng::deserialize(runio::kv_get(meta, "rng"));
    const std::string want_digest = runio::kv_get(meta, "rng_digest");
    if (!want_digest.empty() && want_digest != std::to_string(st.rng.digest()))
        throw std::runtime_error(path + ": rng state fails its digest check (corrupt sidecar?)");

    npz::Archive a = npz::load_npz(path);
    std::vector<nn::Param*> params;
    std::vector<nn::Buffer*> buffers;
    collect_params(st, params);
    collect_buffers(st, buffers);

    auto fetch = [&](const std::string& key) -> npz::Array& {
        auto it = a.find(key);
        if (it == a.end()) throw std::runtime_error(path + ": checkpoint missing array " + key);
        return it->second;
    };
    auto load_into = [&](const std::string& key, Tensor& t) {
        npz::Array& arr = fetch(key);
        std::vector<int64_t> want(t.shape.begin(), t.shape.end());
        if (arr.shape != want)
            throw std::runtime_error(path + ": array " + key + " has the wrong shape");
        t.v = arr.as_f64();
    };
    size_t used = 0;
    for (nn::Param* p : params) {
        load_into("p:" + p->name + ":w", p->w);
        load_into("p:" + p->name + ":m", p->m);
        load_into("p:" + p->name + ":v", p->v);
        p->steps = static_cast<long>(fetch("p:" + p->name + ":steps").as_i64()[0]);
        used += 4;
    }
    for (nn::Buffer* b : buffers) {
        load_into("b:" + b->name, b->w);
        used += 1;
    }
    if (used != a.size())
        throw std::runtime_error(path + ": checkpoint holds " + std::to_string(a.size()) +
                                 " arrays but the model consumes " + std::to_string(used));
    return st;
}

}  // namespace oogan

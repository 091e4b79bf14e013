#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oogan/data.hpp"
#include "oogan/image_io.hpp"
#include "oogan/latent.hpp"
#include "oogan/metrics.hpp"
#include "oogan/runio.hpp"
#include "oogan/trainer.hpp"

namespace {

using namespace oogan;

constexpr const char* kDspritesUrl =
    "https://github.com/google-deepmind/dsprites-dataset/raw/master/"
    "dsprites_ndarray_co1sh3sc6or40x32y32_64x64.npz";

std::string default_data_dir() {
    const char* env = std::getenv("OOGAN_DATA_DIR");
    return env && *env ? env : ".";
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string tok = s.substr(pos, comma - pos);
        try {
            size_t used = 0;
            int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse integer list entry '" + tok + "'");
        }
        pos = comma + 1;
    }
    return out;
}

/// Loads or synthesizes the dataset a command runs against, checking that its
/// geometry matches the model.
data::FactorDataset resolve_dataset(const std::string& kind, std::string data_path,
                                    const std::string& spec_text, int img_size, int img_channels,
                                    uint64_t seed) {
    data::FactorDataset ds;
    if (kind == "synth") {
        if (!data_path.empty()) {
            ds = data::load_dataset(data_path);
        } else {
            data::SynthSpec spec = data::parse_synth_spec(spec_text);
            spec.img_size = img_size;
            Rng r(seed);
            ds = data::synth_factors(spec, r);
        }
    } else if (kind == "dsprites") {
        if (data_path.empty()) data_path = default_data_dir() + "/dsprites.npz";
        if (img_size != 32 && img_size != 64)
            throw std::invalid_argument("dsprites serves 64px (or 32px downsampled); img_size " +
                                        std::to_string(img_size) + " is not available");
        data::DspritesOptions opt;
        opt.downsample32 = (img_size == 32);
        opt.replicate3 = (img_channels == 3);
        ds = data::load_dsprites(data_path, opt);
    } else {
        throw std::invalid_argument("unknown dataset '" + kind + "' (want dsprites or synth)");
    }
    if (ds.H != img_size || ds.W != img_size)
        throw std::invalid_argument("dataset images are " + std::to_string(ds.H) + "x" +
                                    std::to_string(ds.W) + " but the model wants " +
                                    std::to_string(img_size) + "x" + std::to_string(img_size));
    if (ds.serve_ch != img_channels) {
        if (ds.stored_ch == 1 && img_channels == 3)
            ds.serve_ch = 3;
        else
            throw std::invalid_argument("dataset serves " + std::to_string(ds.serve_ch) +
                                        " channels but the model wants " +
                                        std::to_string(img_channels));
    }
    return ds;
}

/// Renders the rows-by-steps traversal grid shared by `traverse` and the
/// end-of-training summary image.
void write_traversal_grid(Generator& gen, const std::vector<int>& dims, int steps,
                          uint64_t z_seed, const std::string& path) {
    if (steps < 2) throw std::invalid_argument("traverse: steps must be at least 2");
    if (dims.empty()) throw std::invalid_argument("traverse: need at least one dim");
    std::vector<double> values(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t)
        values[static_cast<size_t>(t)] = static_cast<double>(t) / (steps - 1);
    std::vector<double> c_base(static_cast<size_t>(gen.cfg.d), 0.5);
    Rng zr(z_seed);
    std::vector<double> z(static_cast<size_t>(gen.cfg.n_z));
    for (double& v : z) v = zr.normal();

    Tensor all({static_cast<int>(dims.size()) * steps, gen.cfg.img_channels, gen.cfg.img_size,
                gen.cfg.img_size});
    int64_t per_img = static_cast<int64_t>(gen.cfg.img_channels) * gen.cfg.img_size *
                      gen.cfg.img_size;
    int64_t at = 0;
    for (int dim : dims) {
        Tensor row = gen.latent_traversal(c_base, z, dim, values);
        std::copy(row.v.begin(), row.v.end(), all.v.begin() + at);
        at += per_img * steps;
    }
    Tensor grid = image_io::tile_grid(all, static_cast<int>(dims.size()), steps, 2, 1.0);
    image_io::write_png(path, grid);
}

void emit_reports(const std::vector<metrics::MetricReport>& reports, const std::string& out_dir,
                  long iteration) {
    for (const auto& r : reports) std::cout << r.to_text() << std::endl;
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir + "/reports");
    const std::string csv_path = out_dir + "/reports/metrics.csv";
    bool fresh = !runio::file_exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw std::runtime_error(csv_path + ": cannot open");
    if (fresh) csv << metrics::MetricReport::csv_header() << "\n";
    for (const auto& r : reports) {
        csv << r.csv_row() << "\n";
        std::string stem = iteration >= 0 ? r.name + "_iter" + std::to_string(iteration) : r.name;
        runio::write_file(out_dir + "/reports/" + stem + ".txt", r.to_text());
    }
}

uint64_t fnv1a(const uint8_t* data, size_t len) {
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

/// Ground-truth encoder for metric self-tests: maps each dataset image (by
/// pixel content) back to its normalized factor classes, plus a tiny
/// deterministic dither so no dimension is ever exactly constant globally.
metrics::EncodeFn make_oracle_encoder(const data::FactorDataset& ds) {
    auto table = std::make_shared<std::map<std::vector<uint8_t>, std::vector<double>>>();
    const size_t plane = static_cast<size_t>(ds.H) * ds.W;
    for (int64_t n = 0; n < ds.N; ++n) {
        const uint8_t* px = ds.images.data() + static_cast<size_t>(n) * ds.stored_ch * plane;
        std::vector<uint8_t> key(px, px + plane);  // first stored channel
        std::vector<double> code(static_cast<size_t>(ds.F()));
        for (int f = 0; f < ds.F(); ++f)
            code[static_cast<size_t>(f)] = (ds.factor_class(n, f) + 0.5) /
                                           static_cast<double>(ds.factor_sizes[static_cast<size_t>(f)]);
        (*table)[std::move(key)] = std::move(code);
    }
    int F = ds.F();
    return [table, F, plane](const Tensor& images) {
        int B = images.dim(0);
        int64_t stride = images.numel() / B;
        Tensor out({B, F});
        std::vector<uint8_t> key(plane);
        for (int n = 0; n < B; ++n) {
            const double* px = images.data() + static_cast<int64_t>(n) * stride;
            for (size_t i = 0; i < plane; ++i)
                key[i] = static_cast<uint8_t>(std::lround(px[i] * 255.0));
            auto it = table->find(key);
            if (it == table->end())
                throw std::runtime_error("oracle encoder: image not found in the dataset");
            uint64_t h = fnv1a(key.data(), key.size());
            for (int f = 0; f < F; ++f) {
                uint64_t hf = h ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(f + 1));
                double dither = static_cast<double>(hf >> 11) * 0x1.0p-53;
                out.at(n, f) = it->second[static_cast<size_t>(f)] + 1e-4 * dither;
            }
        }
        return out;
    };
}

// ---------------------------------------------------------------------------
// command argument bundles
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_file, dataset = "synth", out, data_path, spec, q_mode = "det";
    unsigned long long seed = 1;
    long iters = 0;
    int batch = 0;
    double lambda = 0, gamma = 0, ortho_weight = 0;
    int onehot_period = 0;
    long log_every = 0, snapshot_every = 0;
    bool no_onehot = false, no_ortho = false, no_competefree = false, force = false;

    CLI::Option *seed_o = nullptr, *iters_o = nullptr, *batch_o = nullptr, *lambda_o = nullptr,
                *gamma_o = nullptr, *ortho_o = nullptr, *period_o = nullptr, *qmode_o = nullptr,
                *log_o = nullptr, *snap_o = nullptr;
};

struct TraverseArgs {
    std::string ckpt, dims, out = "traversal.png";
    int steps = 8;
    unsigned long long z_seed = 1;
};

struct EvalArgs {
    std::string metric, ckpt, dataset = "synth", data_path, spec, out, extractor = "identity";
    long n = 0;
    unsigned long long seed = 1;
    bool oracle_encoder = false, literal_k = false;
    double k = 1.0;
    long extractor_steps = 300;
    int repeats = 10;
    CLI::Option* n_o = nullptr;
};

struct FetchArgs {
    std::string out, url = kDspritesUrl, sha256;
};

struct SynthArgs {
    std::string spec, out = "synth.npz";
    unsigned long long seed = 1;
    int img_size = 32;
};

struct VerifyArgs {
    std::string path;
};

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_file.empty()) cfg = TrainConfig::from_kv(runio::read_kv_file(a.config_file));
    if (a.seed_o->count()) cfg.seed = a.seed;
    if (a.iters_o->count()) cfg.iters = a.iters;
    if (a.batch_o->count()) cfg.batch = a.batch;
    if (a.lambda_o->count()) cfg.lambda_mi = a.lambda;
    if (a.gamma_o->count()) cfg.gamma_ce = a.gamma;
    if (a.ortho_o->count()) cfg.ortho_weight = a.ortho_weight;
    if (a.period_o->count()) cfg.onehot_period = a.onehot_period;
    if (a.qmode_o->count()) cfg.q_probabilistic = (a.q_mode == "prob");
    if (a.log_o->count()) cfg.log_every = a.log_every;
    if (a.snap_o->count()) cfg.snapshot_every = a.snapshot_every;
    if (a.no_onehot) cfg.disable_onehot = true;
    if (a.no_ortho) cfg.ortho_weight = 0.0;
    if (a.no_competefree) cfg.competefree = false;
    cfg.validate();

    data::FactorDataset ds = resolve_dataset(a.dataset, a.data_path, a.spec, cfg.img_size,
                                             cfg.img_channels, cfg.seed);
    runio::prepare_run_dir(a.out, a.force);
    TrainResult res = train(cfg, ds, a.out);

    // summary traversal for eyeballing the run
    TrainState st = load_checkpoint(res.checkpoint_path);
    std::vector<int> dims(static_cast<size_t>(cfg.d));
    std::iota(dims.begin(), dims.end(), 0);
    std::string grid = a.out + "/traversals/iter" + std::to_string(st.iteration) + ".png";
    write_traversal_grid(st.gen, dims, 8, cfg.seed, grid);

    std::cout << "checkpoint = " << res.checkpoint_path << "\n"
              << "metrics = " << res.metrics_path << "\n"
              << "traversal = " << grid << std::endl;
    return 0;
}

int cmd_traverse(const TraverseArgs& a) {
    TrainState st = load_checkpoint(a.ckpt);
    std::vector<int> dims;
    if (a.dims.empty()) {
        dims.resize(static_cast<size_t>(st.cfg.d));
        std::iota(dims.begin(), dims.end(), 0);
    } else {
        dims = parse_int_list(a.dims);
    }
    write_traversal_grid(st.gen, dims, a.steps, a.z_seed, a.out);
    std::cout << "traversal = " << a.out << std::endl;
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    Rng rng(a.seed);
    std::vector<metrics::MetricReport> reports;
    long iteration = -1;

    auto need_ckpt = [&]() -> TrainState {
        if (a.ckpt.empty())
            throw std::invalid_argument("eval --metric " + a.metric + " needs --ckpt");
        TrainState st = load_checkpoint(a.ckpt);
        iteration = st.iteration;
        return st;
    };

    if (a.metric == "cosq") {
        metrics::MetricReport rep;
        rep.name = "cosq";
        if (!a.ckpt.empty()) {
            TrainState st = load_checkpoint(a.ckpt);
            iteration = st.iteration;
            rep.score = metrics::q_cosine_report(st.critic);
            runio::kv_set(rep.config_echo, "d", std::to_string(st.cfg.d));
        } else {
            TrainConfig cfg;
            cfg.seed = a.seed;
            Rng r(cfg.seed);
            Critic critic = Critic::build(cfg.critic_config(), r);
            rep.score = metrics::q_cosine_report(critic);
            runio::kv_set(rep.config_echo, "d", std::to_string(cfg.d));
            runio::kv_set(rep.config_echo, "fresh", "true");
        }
        rep.n_samples = 1;
        reports.push_back(rep);
    } else if (a.metric == "kim") {
        metrics::KimOptions opt;
        if (a.n_o->count()) opt.votes = static_cast<int>(a.n);
        metrics::EncodeFn encoder;
        data::FactorDataset ds;
        if (a.oracle_encoder) {
            // the byte-exact oracle has no model to match, so a stored
            // archive is taken at whatever geometry it has
            if (a.dataset == "synth" && !a.data_path.empty()) {
                ds = data::load_dataset(a.data_path);
            } else {
                int img = a.dataset == "dsprites" ? 64 : 32;
                ds = resolve_dataset(a.dataset, a.data_path, a.spec, img, 1, a.seed);
            }
            encoder = make_oracle_encoder(ds);
        } else {
            TrainState st = need_ckpt();
            ds = resolve_dataset(a.dataset, a.data_path, a.spec, st.cfg.img_size,
                                 st.cfg.img_channels, a.seed);
            auto shared = std::make_shared<TrainState>(std::move(st));
            encoder = [shared](const Tensor& imgs) {
                return shared->critic.extract_code(imgs, false).c_hat;
            };
        }
        reports.push_back(metrics::kim_score(encoder, ds, opt, rng));
    } else if (a.metric == "pdiv") {
        TrainState st = need_ckpt();
        metrics::DiversityOptions opt;
        opt.n = a.n_o->count() ? static_cast<int>(a.n) : 1000;
        opt.d = st.cfg.d;
        opt.n_z = st.cfg.n_z;
        opt.k = a.k;
        opt.literal_k = a.literal_k;
        metrics::GenFn gen = [&st](const Tensor& c, const Tensor& z) {
            return st.gen.forward(c, z, false);
        };
        int flat = st.cfg.img_channels * st.cfg.img_size * st.cfg.img_size;
        if (a.extractor == "identity") {
            metrics::IdentityExtractor V(flat);
            reports.push_back(metrics::perceptual_diversity(gen, V, opt, rng));
        } else if (a.extractor == "conv") {
            data::FactorDataset ds = resolve_dataset(a.dataset, a.data_path, a.spec,
                                                     st.cfg.img_size, st.cfg.img_channels, a.seed);
            Rng vr(a.seed ^ 0x517cc1b727220a95ull);
            metrics::ConvExtractor V = metrics::ConvExtractor::build(
                st.cfg.img_size, st.cfg.img_channels, ds.factor_sizes, vr);
            V.train_on(ds, a.extractor_steps, 32, vr);
            reports.push_back(metrics::perceptual_diversity(gen, V, opt, rng));
        } else {
            throw std::invalid_argument("unknown extractor '" + a.extractor +
                                        "' (want identity or conv)");
        }
    } else if (a.metric == "tc") {
        TrainState st = need_ckpt();
        if (!st.cfg.q_probabilistic)
            throw std::invalid_argument(
                "tc needs a probabilistic Q head; this checkpoint was trained with --q-mode det");
        data::FactorDataset ds = resolve_dataset(a.dataset, a.data_path, a.spec, st.cfg.img_size,
                                                 st.cfg.img_channels, a.seed);
        int B = a.n_o->count() ? static_cast<int>(a.n) : 256;
        if (B > ds.N) throw std::invalid_argument("tc batch exceeds the dataset size");
        std::vector<int64_t> all(static_cast<size_t>(ds.N));
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> values;
        for (int r = 0; r < a.repeats; ++r) {
            rng.shuffle(all);
            std::vector<int64_t> idx(all.begin(), all.begin() + B);
            objectives::QPrediction pred = st.critic.extract_code(ds.get_batch(idx), false);
            Tensor z(pred.c_hat.shape);
            for (int64_t i = 0; i < z.numel(); ++i)
                z[i] = pred.c_hat[i] + pred.sigma[i] * rng.normal();
            values.push_back(metrics::tc_estimate(pred.c_hat, pred.sigma, z, ds.N));
        }
        metrics::MetricReport rep;
        rep.name = "tc";
        double m = 0;
        for (double v : values) m += v;
        rep.score = m / values.size();
        double var = 0;
        for (double v : values) var += (v - rep.score) * (v - rep.score);
        rep.dispersion = values.size() > 1 ? std::sqrt(var / (values.size() - 1)) : 0.0;
        rep.n_samples = a.repeats;
        runio::kv_set(rep.config_echo, "batch", std::to_string(B));
        runio::kv_set(rep.config_echo, "dataset_size", std::to_string(ds.N));
        reports.push_back(rep);
    } else if (a.metric == "l1probe") {
        TrainState st = need_ckpt();
        int n = a.n_o->count() ? static_cast<int>(a.n) : 1024;
        auto [uniform, onehot] = metrics::onehot_l1_probe(st.gen, st.critic, n, rng);
        for (auto [name, score] : {std::pair<const char*, double>{"l1probe_uniform", uniform},
                                   {"l1probe_onehot", onehot}}) {
            metrics::MetricReport rep;
            rep.name = name;
            rep.score = score;
            rep.n_samples = n;
            reports.push_back(rep);
        }
    } else {
        throw std::invalid_argument("unknown metric '" + a.metric +
                                    "' (want kim, pdiv, tc, cosq or l1probe)");
    }

    emit_reports(reports, a.out, iteration);
    return 0;
}

int cmd_fetch(const FetchArgs& a) {
    std::string out = a.out.empty() ? default_data_dir() + "/dsprites.npz" : a.out;
    std::filesystem::path parent = std::filesystem::path(out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::cout << "fetching " << a.url << std::endl;
    runio::download(a.url, out);
    std::string digest = runio::sha256_file(out);
    std::cout << "sha256 = " << digest << "\n";
    if (!a.sha256.empty() && digest != a.sha256)
        throw std::runtime_error("checksum mismatch: downloaded " + digest + ", expected " +
                                 a.sha256);
    data::FactorDataset ds = data::load_dsprites(out);
    std::cout << "ok: N=" << ds.N << " " << ds.H << "x" << ds.W << " F=" << ds.F() << "\n"
              << "path = " << out << std::endl;
    return 0;
}

int cmd_synth(const SynthArgs& a) {
    data::SynthSpec spec = data::parse_synth_spec(a.spec);
    spec.img_size = a.img_size;
    Rng r(a.seed);
    data::FactorDataset ds = data::synth_factors(spec, r);
    data::save_dataset(a.out, ds);
    std::cout << "wrote " << a.out << ": N=" << ds.N << " " << ds.H << "x" << ds.W << " factors=";
    for (size_t f = 0; f < spec.factors.size(); ++f)
        std::cout << (f ? "," : "") << spec.factors[f].kind << ":" << spec.factors[f].classes;
    std::cout << std::endl;
    return 0;
}

int cmd_verify(const VerifyArgs& a) {
    data::FactorDataset ds = data::load_dataset(a.path);
    ds.validate();
    std::cout << "ok: N=" << ds.N << " " << ds.H << "x" << ds.W << " ch=" << ds.stored_ch
              << " F=" << ds.F() << (ds.is_grid() ? " (full factorial grid)" : "") << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oogan: training and evaluation for an unsupervised disentanglement GAN"};
    app.require_subcommand(1);

    TrainArgs ta;
    CLI::App* train_c = app.add_subcommand("train", "Train a model into a run directory");
    train_c->add_option("--config", ta.config_file, "key = value config file (flags win)");
    ta.seed_o = train_c->add_option("--seed", ta.seed, "master seed");
    ta.iters_o = train_c->add_option("--iters", ta.iters, "training iterations");
    ta.batch_o = train_c->add_option("--batch", ta.batch, "batch size");
    ta.lambda_o = train_c->add_option("--lambda", ta.lambda, "MI reconstruction weight");
    ta.gamma_o = train_c->add_option("--gamma", ta.gamma, "one-hot cross-entropy weight");
    ta.ortho_o = train_c->add_option("--ortho-weight", ta.ortho_weight, "orthogonality weight");
    ta.period_o = train_c->add_option("--onehot-period", ta.onehot_period,
                                      "iterations per one-hot cycle");
    ta.qmode_o = train_c->add_option("--q-mode", ta.q_mode, "Q head output mode")
                     ->check(CLI::IsMember({"det", "prob"}));
    train_c->add_flag("--no-onehot", ta.no_onehot, "sample c continuously on every iteration");
    train_c->add_flag("--no-ortho", ta.no_ortho, "disable the orthogonality penalty");
    train_c->add_flag("--no-competefree", ta.no_competefree,
                      "plain concat input block (ablation baseline)");
    train_c->add_option("--dataset", ta.dataset, "dataset kind")
        ->check(CLI::IsMember({"dsprites", "synth"}));
    train_c->add_option("--data", ta.data_path, "dataset archive path");
    train_c->add_option("--spec", ta.spec, "synthetic dataset factor spec");
    ta.log_o = train_c->add_option("--log-every", ta.log_every, "CSV row cadence");
    ta.snap_o = train_c->add_option("--snapshot-every", ta.snapshot_every, "checkpoint cadence");
    train_c->add_option("--out", ta.out, "run directory")->required();
    train_c->add_flag("--force", ta.force, "replace an existing run directory");

    TraverseArgs va;
    CLI::App* trav_c = app.add_subcommand("traverse", "Render a latent traversal grid");
    trav_c->add_option("--ckpt", va.ckpt, "checkpoint path")->required();
    trav_c->add_option("--dims", va.dims, "comma-separated dims (default: all)");
    trav_c->add_option("--steps", va.steps, "sweep steps per dim");
    trav_c->add_option("--z-seed", va.z_seed, "seed for the fixed noise vector");
    trav_c->add_option("--out", va.out, "output PNG path");

    EvalArgs ea;
    CLI::App* eval_c = app.add_subcommand("eval", "Evaluate a metric");
    eval_c->add_option("--metric", ea.metric, "metric name")
        ->required()
        ->check(CLI::IsMember({"kim", "pdiv", "tc", "cosq", "l1probe"}));
    eval_c->add_option("--ckpt", ea.ckpt, "checkpoint path");
    eval_c->add_option("--dataset", ea.dataset, "dataset kind")
        ->check(CLI::IsMember({"dsprites", "synth"}));
    eval_c->add_option("--data", ea.data_path, "dataset archive path");
    eval_c->add_option("--spec", ea.spec, "synthetic dataset factor spec");
    ea.n_o = eval_c->add_option("--n", ea.n, "samples / votes / batch (metric-specific)");
    eval_c->add_option("--seed", ea.seed, "evaluation seed");
    eval_c->add_option("--out", ea.out, "run directory to append reports into");
    eval_c->add_flag("--oracle-encoder", ea.oracle_encoder,
                     "kim: use the ground-truth factor encoder");
    eval_c->add_option("--extractor", ea.extractor, "pdiv feature extractor")
        ->check(CLI::IsMember({"identity", "conv"}));
    eval_c->add_option("--extractor-steps", ea.extractor_steps, "pdiv conv extractor train steps");
    eval_c->add_flag("--literal-k", ea.literal_k, "pdiv: probe at -k/+k instead of the 0/1 ends");
    eval_c->add_option("--k", ea.k, "pdiv probe magnitude for --literal-k");
    eval_c->add_option("--repeats", ea.repeats, "tc: number of estimation repeats");

    CLI::App* data_c = app.add_subcommand("data", "Dataset management");
    data_c->require_subcommand(1);
    FetchArgs fa;
    CLI::App* fetch_c = data_c->add_subcommand("fetch-dsprites", "Download the dSprites archive");
    fetch_c->add_option("--out", fa.out, "destination path (default: $OOGAN_DATA_DIR/dsprites.npz)");
    fetch_c->add_option("--url", fa.url, "source URL");
    fetch_c->add_option("--sha256", fa.sha256, "expected content hash");
    SynthArgs sa;
    CLI::App* synth_c = data_c->add_subcommand("synth", "Write a synthetic factor dataset");
    synth_c->add_option("--spec", sa.spec, "factor spec, e.g. x=8,y=8,size=4,brightness=4");
    synth_c->add_option("--seed", sa.seed, "generation seed");
    synth_c->add_option("--img-size", sa.img_size, "image side length");
    synth_c->add_option("--out", sa.out, "output archive path");
    VerifyArgs ya;
    CLI::App* verify_c = data_c->add_subcommand("verify", "Validate a dataset archive");
    verify_c->add_option("path", ya.path, "archive to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train_c) return cmd_train(ta);
        if (*trav_c) return cmd_traverse(va);
        if (*eval_c) return cmd_eval(ea);
        if (*fetch_c) return cmd_fetch(fa);
        if (*synth_c) return cmd_synth(sa);
        if (*verify_c) return cmd_verify(ya);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

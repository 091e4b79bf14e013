#include "doctest.h"
#include "oogan/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "oogan/runio.hpp"

using namespace oogan;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.d = 3;
    cfg.n_z = 4;
    cfg.img_size = 16;
    cfg.img_channels = 1;
    cfg.g_channels = {4, 3, 3};
    cfg.d_channels = {6, 8, 10};
    cfg.batch = 4;
    cfg.iters = 10;
    cfg.seed = 77;
    return cfg;
}

data::FactorDataset tiny_dataset() {
    data::SynthSpec spec = data::parse_synth_spec("x=2,y=2,size=2,brightness=2");
    spec.img_size = 16;
    Rng rng(1);
    return data::synth_factors(spec, rng);
}

std::string fresh_dir(const std::string& tag) {
    std::string path = "/tmp/oogan_trainer_" + tag;
    std::filesystem::remove_all(path);
    runio::prepare_run_dir(path, false);
    return path;
}

/// Bitwise equality of every trainable value, every optimizer moment and
/// every persistent buffer between two states.
void require_states_identical(TrainState& a, TrainState& b) {
    std::vector<nn::Param*> pa, pb;
    a.gen.params(pa);
    a.critic.params(pa);
    b.gen.params(pb);
    b.critic.params(pb);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->name == pb[i]->name);
        REQUIRE(pa[i]->w.v == pb[i]->w.v);
        REQUIRE(pa[i]->m.v == pb[i]->m.v);
        REQUIRE(pa[i]->v.v == pb[i]->v.v);
        REQUIRE(pa[i]->steps == pb[i]->steps);
    }
    std::vector<nn::Buffer*> ba, bb;
    a.gen.buffers(ba);
    a.critic.buffers(ba);
    b.gen.buffers(bb);
    b.critic.buffers(bb);
    REQUIRE(ba.size() == bb.size());
    for (size_t i = 0; i < ba.size(); ++i) {
        REQUIRE(ba[i]->name == bb[i]->name);
        REQUIRE(ba[i]->w.v == bb[i]->w.v);
    }
    CHECK(a.iteration == b.iteration);
    CHECK(a.rng.digest() == b.rng.digest());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs fn, which must throw std::runtime_error, and returns the message.
template <typename Fn>
std::string runtime_error_message(Fn&& fn) {
    try {
        fn();
    } catch (const std::runtime_error& e) {
        return e.what();
    }
    FAIL("expected a runtime_error");
    return "";
}

}  // namespace

TEST_CASE("a full run populates the run directory") {
    TrainConfig cfg = tiny_config();
    cfg.snapshot_every = 4;
    data::FactorDataset ds = tiny_dataset();
    std::string dir = fresh_dir("run");

    TrainResult res = train(cfg, ds, dir);
    CHECK(res.checkpoint_path == dir + "/checkpoints/final.ckpt");
    CHECK(runio::file_exists(dir + "/config.txt"));
    CHECK(runio::file_exists(dir + "/checkpoints/iter00000004.ckpt"));
    CHECK(runio::file_exists(dir + "/checkpoints/iter00000008.ckpt"));

    // the config echo restores the exact configuration
    TrainConfig echoed = TrainConfig::from_kv(runio::read_kv_file(dir + "/config.txt"));
    CHECK(echoed.to_kv() == cfg.to_kv());

    // header + one row per iteration at log_every = 1
    std::string log = slurp(res.metrics_path);
    CHECK(log.rfind(metrics_csv_header() + "\n", 0) == 0);
    int rows = -1;  // discount the header
    for (char ch : log)
        if (ch == '\n') ++rows;
    CHECK(rows == 10);

    TrainState st = load_checkpoint(res.checkpoint_path);
    CHECK(st.iteration == 10);
    CHECK(st.cfg.to_kv() == cfg.to_kv());
}

TEST_CASE("identical seeds give byte-identical training logs") {
    TrainConfig cfg = tiny_config();
    cfg.iters = 6;
    data::FactorDataset ds = tiny_dataset();
    std::string d1 = fresh_dir("rep1");
    std::string d2 = fresh_dir("rep2");
    TrainResult r1 = train(cfg, ds, d1);
    TrainResult r2 = train(cfg, ds, d2);
    CHECK(slurp(r1.metrics_path) == slurp(r2.metrics_path));

    TrainState a = load_checkpoint(r1.checkpoint_path);
    TrainState b = load_checkpoint(r2.checkpoint_path);
    require_states_identical(a, b);
}

TEST_CASE("save/load resumes the exact trajectory") {
    TrainConfig cfg = tiny_config();
    data::FactorDataset ds = tiny_dataset();

    // the batch sequence is driven externally so both runs see the same data
    auto batch_for = [&](long step) {
        std::vector<int64_t> idx;
        for (int i = 0; i < cfg.batch; ++i) idx.push_back((step * cfg.batch + i) % ds.N);
        return ds.get_batch(idx);
    };

    TrainState contiguous = init_train(cfg);
    for (long s = 0; s < 8; ++s) train_step(contiguous, batch_for(s));

    TrainState first = init_train(cfg);
    for (long s = 0; s < 3; ++s) train_step(first, batch_for(s));
    std::string dir = fresh_dir("resume");
    std::string ckpt = dir + "/checkpoints/mid.ckpt";
    save_checkpoint(first, ckpt);

    TrainState resumed = load_checkpoint(ckpt);
    require_states_identical(first, resumed);
    for (long s = 3; s < 8; ++s) train_step(resumed, batch_for(s));

    require_states_identical(contiguous, resumed);
}

TEST_CASE("each phase updates exactly its own parameter set") {
    TrainConfig cfg = tiny_config();
    data::FactorDataset ds = tiny_dataset();
    TrainState st = init_train(cfg);
    train_step(st, ds.get_batch({0, 1, 2, 3}));

    // Adam's per-parameter step counter records how many phases touched each
    // parameter: trunk + realness belong to the discriminator update alone,
    // Q-exclusive weights to the MI update alone, generator weights to the
    // adversarial and MI updates.
    std::vector<nn::Param*> d_side, q_only, gen_ps, trunk;
    st.critic.params_d(d_side);
    st.critic.params_q_exclusive(q_only);
    st.critic.params_trunk_shared(trunk);
    st.gen.params(gen_ps);
    for (nn::Param* p : d_side) CHECK(p->steps == 1);
    for (nn::Param* p : q_only) CHECK(p->steps == 1);
    for (nn::Param* p : gen_ps) CHECK(p->steps == 2);

    // letting the MI step refine the shared trunk doubles its step count
    TrainConfig cfg2 = tiny_config();
    cfg2.mi_updates_trunk = true;
    TrainState st2 = init_train(cfg2);
    train_step(st2, ds.get_batch({0, 1, 2, 3}));
    std::vector<nn::Param*> trunk2;
    st2.critic.params_trunk_shared(trunk2);
    REQUIRE(!trunk2.empty());
    for (nn::Param* p : trunk2) CHECK(p->steps == 2);
}

TEST_CASE("cross-entropy only fires on one-hot iterations") {
    TrainConfig cfg = tiny_config();
    data::FactorDataset ds = tiny_dataset();
    Tensor batch = ds.get_batch({0, 1, 2, 3});

    TrainState st = init_train(cfg);
    train_step(st, batch);
    CHECK(st.last.onehot_iter);
    CHECK(st.last.loss_ce > 0.0);
    train_step(st, batch);
    CHECK(!st.last.onehot_iter);
    CHECK(st.last.loss_ce == 0.0);

    TrainConfig plain = tiny_config();
    plain.disable_onehot = true;
    TrainState st2 = init_train(plain);
    train_step(st2, batch);
    CHECK(!st2.last.onehot_iter);
    CHECK(st2.last.loss_ce == 0.0);
}

TEST_CASE("per-step stats are internally consistent") {
    TrainConfig cfg = tiny_config();
    data::FactorDataset ds = tiny_dataset();
    TrainState st = init_train(cfg);
    train_step(st, ds.get_batch({0, 1, 2, 3}));

    CHECK(st.last.sigma_t == instance_noise_sigma(cfg, 1));
    CHECK(st.last.q_cos == doctest::Approx(st.last.ortho / 2.0).epsilon(1e-14));
    CHECK(std::isfinite(st.last.loss_d));
    CHECK(std::isfinite(st.last.loss_g));
    CHECK(st.last.ortho > 0.0);  // random kernels are never exactly orthogonal
}

TEST_CASE("instance noise anneals linearly to zero at the midpoint") {
    TrainConfig cfg = tiny_config();
    cfg.iters = 100;
    cfg.instance_noise_sigma0 = 0.1;
    CHECK(cfg.anneal_end_effective() == 50);
    CHECK(instance_noise_sigma(cfg, 1) == doctest::Approx(0.1 * (1.0 - 1.0 / 50)).epsilon(1e-15));
    CHECK(instance_noise_sigma(cfg, 25) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(instance_noise_sigma(cfg, 50) == 0.0);
    CHECK(instance_noise_sigma(cfg, 80) == 0.0);

    cfg.anneal_end = 10;
    CHECK(instance_noise_sigma(cfg, 5) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK_THROWS_AS(instance_noise_sigma(cfg, 0), std::invalid_argument);
}

TEST_CASE("config validation rejects broken settings") {
    data::FactorDataset ds = tiny_dataset();

    TrainConfig bad = tiny_config();
    bad.batch = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = tiny_config();
    bad.lambda_mi = -0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = tiny_config();
    bad.onehot_period = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = tiny_config();
    bad.g_channels = {4, 3};  // wrong length for 16px
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    // dataset/model geometry mismatch is caught before any training work
    TrainConfig cfg = tiny_config();
    data::SynthSpec spec32 = data::parse_synth_spec("x=2,y=2,size=2,brightness=2");
    Rng r(1);
    data::FactorDataset ds32 = data::synth_factors(spec32, r);  // 32px
    CHECK_THROWS_AS(train(cfg, ds32, "/tmp/oogan_trainer_never"), std::invalid_argument);

    // wrong batch shape at the step level
    TrainState st = init_train(cfg);
    CHECK_THROWS_AS(train_step(st, Tensor({4, 1, 8, 8})), std::invalid_argument);
}

TEST_CASE("checkpoint loading verifies format, digest and shapes") {
    TrainConfig cfg = tiny_config();
    TrainState st = init_train(cfg);
    data::FactorDataset ds = tiny_dataset();
    train_step(st, ds.get_batch({0, 1, 2, 3}));

    std::string dir = fresh_dir("ckpt");
    std::string path = dir + "/checkpoints/a.ckpt";
    save_checkpoint(st, path);

    // foreign format tag
    runio::KvMap meta = runio::read_kv_file(path + ".meta");
    runio::KvMap bad_format = meta;
    runio::kv_set(bad_format, "format", "oogan-ckpt-v999");
    runio::write_kv_file(path + ".meta", bad_format);
    std::string msg = runtime_error_message([&] { load_checkpoint(path); });
    CHECK(msg.find("not supported") != std::string::npos);
    CHECK(msg.find("oogan-ckpt-v999") != std::string::npos);

    // corrupted rng state
    runio::KvMap bad_digest = meta;
    runio::kv_set(bad_digest, "rng_digest", "12345");
    runio::write_kv_file(path + ".meta", bad_digest);
    msg = runtime_error_message([&] { load_checkpoint(path); });
    CHECK(msg.find("digest") != std::string::npos);

    // intact metadata loads again
    runio::write_kv_file(path + ".meta", meta);
    TrainState back = load_checkpoint(path);
    require_states_identical(st, back);

    // a model mismatch (different widths under the same names) fails shape checks
    runio::KvMap wrong_cfg = meta;
    runio::kv_set(wrong_cfg, "cfg.g_channels", "6,5,5");
    runio::write_kv_file(path + ".meta", wrong_cfg);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("non-finite losses abort with a diagnostic snapshot") {
    TrainConfig cfg = tiny_config();
    TrainState st = init_train(cfg);
    std::string dir = fresh_dir("abort");
    st.diagnostic_dir = dir;
    st.critic.realness.weight.w.v[0] = std::numeric_limits<double>::quiet_NaN();

    data::FactorDataset ds = tiny_dataset();
    CHECK_THROWS_WITH_AS(train_step(st, ds.get_batch({0, 1, 2, 3})),
                         doctest::Contains("non-finite"), std::runtime_error);
    CHECK(runio::file_exists(dir + "/abort_iter1.ckpt"));
}

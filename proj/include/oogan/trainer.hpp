#pragma once

#include <string>
#include <vector>

#include "oogan/critic.hpp"
#include "oogan/data.hpp"
#include "oogan/generator.hpp"
#include "oogan/latent.hpp"
#include "oogan/objectives.hpp"
#include "oogan/rng.hpp"
#include "oogan/runio.hpp"

namespace oogan {

struct TrainConfig {
    // model
    int d = 10;
    int n_z = 100;
    int img_size = 32;
    int img_channels = 1;
    std::vector<int> g_channels;  // empty -> generator default for img_size
    std::vector<int> d_channels;  // empty -> critic default for img_size
    bool q_probabilistic = false;
    bool spectral_norm = true;
    bool competefree = true;
    bool mi_updates_trunk = false;  // include shared trunk weights in the MI step

    // optimization
    long iters = 50000;
    int batch = 64;
    double lr_d = 2e-4, lr_g = 2e-4;
    double beta1 = 0.5, beta2 = 0.999;
    double lambda_mi = 1.0, gamma_ce = 1.0, ortho_weight = 1.0;
    bool disable_onehot = false;
    int onehot_period = 2, onehot_phase = 1;
    double instance_noise_sigma0 = 0.1;
    long anneal_end = 0;  // 0 -> iters/2

    // run plumbing
    unsigned long long seed = 1;
    long log_every = 1;
    long snapshot_every = 0;  // 0 -> final checkpoint only
    bool strict_deterministic = true;

    void validate() const;
    runio::KvMap to_kv() const;
    static TrainConfig from_kv(const runio::KvMap& kv);

    GeneratorConfig generator_config() const;
    CriticConfig critic_config() const;
    latent::SamplingSchedule schedule() const;
    long anneal_end_effective() const { return anneal_end > 0 ? anneal_end : iters / 2; }
};

/// Per-iteration scalars, logged to the metrics CSV.
struct StepStats {
    double loss_d = 0, loss_g = 0, loss_mi_cont = 0, loss_ce = 0;
    double ortho = 0, q_cos = 0, sigma_t = 0;
    bool onehot_iter = false;
};

struct TrainState {
    TrainConfig cfg;
    Generator gen;
    Critic critic;
    Rng rng;
    long iteration = 0;  // completed iterations
    StepStats last;
    /// When nonempty, a non-finite loss dumps a checkpoint here before the
    /// abort is raised.
    std::string diagnostic_dir;
};

TrainState init_train(const TrainConfig& cfg);

/// sigma_t = sigma0 * max(0, 1 - iteration/anneal_end); the additive noise is
/// applied to discriminator inputs only.
double instance_noise_sigma(const TrainConfig& cfg, long iteration);

/// One full training iteration: discriminator hinge update, generator
/// adversarial update, then the mutual-information update on the generator
/// and the Q-exclusive weights.
void train_step(TrainState& st, const Tensor& real_batch);

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_path;
};

/// Runs cfg.iters steps over the dataset inside run_dir (which must exist):
/// echoes the resolved config before the first step, appends the metrics CSV,
/// writes periodic + final checkpoints.
TrainResult train(const TrainConfig& cfg, const data::FactorDataset& ds,
                  const std::string& run_dir);

void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path);

/// Header + formatting for the metrics CSV; shared with tests so the layout
/// stays pinned in one place.
std::string metrics_csv_header();
std::string metrics_csv_row(long iteration, const StepStats& s);

}  // namespace oogan

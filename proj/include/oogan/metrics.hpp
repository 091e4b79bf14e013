#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "oogan/critic.hpp"
#include "oogan/data.hpp"
#include "oogan/generator.hpp"
#include "oogan/nn.hpp"
#include "oogan/rng.hpp"
#include "oogan/runio.hpp"
#include "oogan/tensor.hpp"

namespace oogan::metrics {

/// One evaluated metric: a score, its spread over repeats, and enough
/// configuration echo to reproduce the number.
struct MetricReport {
    std::string name;
    double score = 0.0;
    double dispersion = 0.0;  // std over repeats (0 for single-pass metrics)
    long n_samples = 0;
    runio::KvMap config_echo;

    std::string to_text() const;
    std::string csv_row() const;
    static std::string csv_header();
};

/// Sampler closure: ([B,d] codes, [B,n_z] noise) -> [B,ch,H,W] images.
using GenFn = std::function<Tensor(const Tensor& c, const Tensor& z)>;
/// Encoder closure: [B,ch,H,W] images -> [B,d] codes.
using EncodeFn = std::function<Tensor(const Tensor& images)>;

// ---------------------------------------------------------------------------
// feature extractors
// ---------------------------------------------------------------------------

/// Image -> feature-vector map used by the diversity score. Must be
/// deterministic and is never updated while scoring.
struct PerceptualExtractor {
    virtual ~PerceptualExtractor() = default;
    virtual int feature_dim() const = 0;
    virtual Tensor features(const Tensor& images) = 0;  // [B,...] -> [B,F]
};

/// Flattens pixels directly; the oracle extractor for hand-checkable scores.
struct IdentityExtractor : PerceptualExtractor {
    explicit IdentityExtractor(int dim) : dim_(dim) {}
    int feature_dim() const override { return dim_; }
    Tensor features(const Tensor& images) override;

  private:
    int dim_;
};

/// Small convolutional attribute classifier trained on a factor dataset; the
/// penultimate activations are the perceptual features. A desk-scale stand-in
/// for a pretrained deep feature network.
struct ConvExtractor : PerceptualExtractor {
    int img_size = 0, img_channels = 0;
    int feat_dim = 64;
    std::vector<int64_t> factor_sizes;

    nn::Conv2d conv1, conv2;
    nn::LeakyReLU act1, act2, act_fc;
    nn::AvgPool2x2 pool1, pool2;
    nn::Linear fc;
    std::vector<nn::Linear> heads;  // one classifier head per factor

    static ConvExtractor build(int img_size, int img_channels,
                               const std::vector<int64_t>& factor_sizes, Rng& rng);

    /// Minibatch Adam training of the attribute heads; also reports the final
    /// step's total cross-entropy (handy for smoke checks).
    double train_on(const data::FactorDataset& ds, long steps, int batch, Rng& rng);

    int feature_dim() const override { return feat_dim; }
    Tensor features(const Tensor& images) override;

    void params(std::vector<nn::Param*>& out);

  private:
    Tensor forward_features(const Tensor& x);
    Tensor flat_cache_;
};

// ---------------------------------------------------------------------------
// scores
// ---------------------------------------------------------------------------

struct DiversityOptions {
    int n = 1000;       // repeats
    int d = 10;         // control-code width
    int n_z = 100;      // noise width (0: the sampler receives an empty z)
    double k = 1.0;     // probe magnitude in literal mode
    bool literal_k = false;  // true: probe at -k/+k; false: at the 0/1 range ends
};

/// Diversity under single-dimension code swaps: per repeat, draw c uniform
/// and two distinct dims i,j; build the probe pair (c with [i] low,[j] high)
/// vs (the swap), render both with one shared z, and average the mean-L1
/// feature distance. Dispersion is the std over repeats.
MetricReport perceptual_diversity(const GenFn& gen, PerceptualExtractor& V,
                                  const DiversityOptions& opt, Rng& rng);

struct KimOptions {
    int votes = 800;  // per half: `votes` fit + `votes` eval
    int L = 100;      // images per vote
    int64_t std_subsample = 10000;      // encodings used for the global stds
    double collapse_threshold = 0.05;   // of the max per-dimension std
};

/// Majority-vote factor classification from the least-varying encoder
/// dimension, after per-dimension std normalization and collapsed-dimension
/// removal. Score is the held-out vote accuracy.
MetricReport kim_score(const EncodeFn& encoder, const data::FactorDataset& ds,
                       const KimOptions& opt, Rng& rng);

/// Total-correlation estimate from a minibatch of Gaussian posteriors
/// (mu/sigma [B,d]) with one sample z per row, using minibatch-stratified
/// importance weights for the aggregate densities. N is the dataset size the
/// batch was drawn from. Exact (equals the full empirical mixture) at B = N.
double tc_estimate(const Tensor& mu, const Tensor& sigma, const Tensor& z, int64_t N);

/// Mean |Q(G(c,z)) - c| over n fresh samples, separately for uniform c and
/// one-hot c. Deterministic-Q models only; evaluation mode, no gradients.
std::pair<double, double> onehot_l1_probe(Generator& gen, Critic& critic, int n, Rng& rng);

/// Mean pairwise |cos| over the grouped Q kernels: the orthogonality penalty
/// value divided by the layer count, i.e. one mean over all pairs.
double q_cosine_report(const Critic& critic);

}  // namespace oogan::metrics

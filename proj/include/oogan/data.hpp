#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oogan/rng.hpp"
#include "oogan/tensor.hpp"

namespace oogan::data {

/// Images paired with ground-truth factor classes. Pixels are stored as bytes
/// and served as floats in [0,1]; layout is [N, ch, H, W] contiguous. When
/// serve_channels exceeds the stored channel count the single stored plane is
/// replicated on the way out (grayscale-to-RGB without tripling memory).
struct FactorDataset {
    std::string name;
    int H = 0, W = 0;
    int stored_ch = 1, serve_ch = 1;
    int64_t N = 0;
    std::vector<uint8_t> images;          // N * stored_ch * H * W
    std::vector<int64_t> factor_classes;  // N * F, row-major
    std::vector<int64_t> factor_sizes;    // F entries

    int F() const { return static_cast<int>(factor_sizes.size()); }
    int64_t factor_class(int64_t n, int f) const {
        return factor_classes[static_cast<size_t>(n) * factor_sizes.size() +
                              static_cast<size_t>(f)];
    }
    /// True when N equals the full factorial product of factor_sizes.
    bool is_grid() const;

    Tensor get_image(int64_t n) const;                          // [1,ch,H,W]
    Tensor get_batch(const std::vector<int64_t>& indices) const;  // [B,ch,H,W]

    /// Checks the structural invariants (sizes, class ranges); throws
    /// invalid_argument with a diagnostic naming the first violation.
    void validate() const;

    /// Indices of images whose factor f has class cls. Built lazily on first
    /// use, then cached (datasets are immutable after load).
    const std::vector<int64_t>& stratum(int f, int64_t cls) const;

  private:
    mutable std::vector<std::vector<std::vector<int64_t>>> strata_;
};

struct DspritesOptions {
    bool downsample32 = false;  // 2x2 box-average the 64px images down to 32px
    bool replicate3 = false;    // serve 3 identical channels
};

/// Reads the official dSprites archive (keys `imgs`, `latents_classes`),
/// drops the constant color factor, verifies the pixels are binary.
FactorDataset load_dsprites(const std::string& path, const DspritesOptions& opt = {});

struct SynthFactor {
    std::string kind;  // one of: x, y, size, brightness
    int classes = 0;
};

struct SynthSpec {
    std::vector<SynthFactor> factors;
    int img_size = 32;
    int64_t cap = 1 << 20;  // refuse factorial grids larger than this

    static SynthSpec defaults();  // x=8, y=8, size=4, brightness=4 at 32px
};

/// Parses "x=8,y=8,size=4,brightness=4" (names from the known renderer set,
/// each count >= 2). Empty string -> defaults.
SynthSpec parse_synth_spec(const std::string& text);

/// Renders one image per factor combination: a bright square on black whose
/// position, side length and intensity are the factors.
FactorDataset synth_factors(const SynthSpec& spec, Rng& rng);

/// Kim-metric sampling: picks a random class for factor f, then L images from
/// that stratum — without replacement when the stratum has at least L members,
/// with replacement otherwise.
Tensor fixed_factor_batch(const FactorDataset& ds, int f, int L, Rng& rng);

/// Epoch-shuffled minibatch stream; the trailing partial batch is dropped.
/// Holds a reference to an external Rng so a checkpointed trainer can replay
/// the exact sequence.
class BatchIterator {
  public:
    BatchIterator(const FactorDataset& ds, int B, Rng& rng, bool shuffle);
    Tensor next();
    int64_t batches_per_epoch() const { return ds_->N / B_; }
    int64_t epoch() const { return epoch_; }

  private:
    void start_epoch();
    const FactorDataset* ds_;
    int B_;
    Rng* rng_;
    bool shuffle_;
    std::vector<int64_t> order_;
    int64_t cursor_ = 0;
    int64_t epoch_ = -1;
};

/// Archive interchange in the dSprites layout: `imgs` (u8, [N,H,W] or
/// [N,H,W,ch]), `latents_classes` (i64 [N,F]), `factor_sizes` (i64 [F]).
void save_dataset(const std::string& path, const FactorDataset& ds);
FactorDataset load_dataset(const std::string& path);

}  // namespace oogan::data

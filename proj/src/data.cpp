#include "oogan/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oogan/npz.hpp"

namespace oogan::data {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

// ---------------------------------------------------------------------------
// FactorDataset
// ---------------------------------------------------------------------------

bool FactorDataset::is_grid() const {
    int64_t prod = 1;
    for (int64_t s : factor_sizes) prod *= s;
    return prod == N;
}

Tensor FactorDataset::get_image(int64_t n) const { return get_batch({n}); }

Tensor FactorDataset::get_batch(const std::vector<int64_t>& indices) const {
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int64_t per_img = stored_ch * plane;
    Tensor out({static_cast<int>(indices.size()), serve_ch, H, W});
    double* dst = out.data();
    for (int64_t n : indices) {
        if (n < 0 || n >= N)
            fail(name + ": image index " + std::to_string(n) + " out of range [0," +
                 std::to_string(N) + ")");
        const uint8_t* src = images.data() + n * per_img;
        for (int c = 0; c < serve_ch; ++c) {
            const uint8_t* p = src + (c < stored_ch ? c : 0) * plane;
            for (int64_t i = 0; i < plane; ++i) *dst++ = p[i] / 255.0;
        }
    }
    return out;
}

void FactorDataset::validate() const {
    const int f_count = F();
    if (N <= 0) fail(name + ": empty dataset");
    if (H <= 0 || W <= 0 || stored_ch <= 0 || serve_ch < stored_ch)
        fail(name + ": bad image geometry " + std::to_string(H) + "x" + std::to_string(W) + "x" +
             std::to_string(stored_ch));
    if (static_cast<int64_t>(images.size()) != N * stored_ch * H * W)
        fail(name + ": image buffer holds " + std::to_string(images.size()) +
             " bytes, expected " + std::to_string(N * stored_ch * H * W));
    if (f_count == 0) fail(name + ": no factors");
    if (static_cast<int64_t>(factor_classes.size()) != N * f_count)
        fail(name + ": factor_classes holds " + std::to_string(factor_classes.size()) +
             " entries, expected " + std::to_string(N * f_count));
    for (int f = 0; f < f_count; ++f)
        if (factor_sizes[static_cast<size_t>(f)] < 1)
            fail(name + ": factor " + std::to_string(f) + " has nonpositive class count");
    for (int64_t n = 0; n < N; ++n)
        for (int f = 0; f < f_count; ++f) {
            int64_t cls = factor_class(n, f);
            if (cls < 0 || cls >= factor_sizes[static_cast<size_t>(f)])
                fail(name + ": image " + std::to_string(n) + " factor " + std::to_string(f) +
                     " class " + std::to_string(cls) + " outside [0," +
                     std::to_string(factor_sizes[static_cast<size_t>(f)]) + ")");
        }
}

const std::vector<int64_t>& FactorDataset::stratum(int f, int64_t cls) const {
    if (f < 0 || f >= F()) fail(name + ": factor index " + std::to_string(f) + " out of range");
    if (cls < 0 || cls >= factor_sizes[static_cast<size_t>(f)])
        fail(name + ": class " + std::to_string(cls) + " out of range for factor " +
             std::to_string(f));
    if (strata_.empty()) {
        strata_.resize(factor_sizes.size());
        for (int ff = 0; ff < F(); ++ff)
            strata_[static_cast<size_t>(ff)].resize(
                static_cast<size_t>(factor_sizes[static_cast<size_t>(ff)]));
        for (int64_t n = 0; n < N; ++n)
            for (int ff = 0; ff < F(); ++ff)
                strata_[static_cast<size_t>(ff)][static_cast<size_t>(factor_class(n, ff))]
                    .push_back(n);
    }
    return strata_[static_cast<size_t>(f)][static_cast<size_t>(cls)];
}

// ---------------------------------------------------------------------------
// dSprites
// ---------------------------------------------------------------------------

FactorDataset load_dsprites(const std::string& path, const DspritesOptions& opt) {
    npz::Archive a = npz::load_npz(path);
    for (const char* key : {"imgs", "latents_classes"})
        if (!a.count(key))
            throw std::runtime_error(path + ": missing key '" + key +
                                     "' (not a dSprites archive?)");

    npz::Array& imgs = a.at("imgs");
    npz::Array& classes = a.at("latents_classes");
    if (imgs.shape.size() != 3 || imgs.shape[1] != imgs.shape[2])
        throw std::runtime_error(path + ": 'imgs' has shape " +
                                 std::to_string(imgs.shape.size()) + "-d, expected [N,H,H]");
    if (classes.shape.size() != 2 || classes.shape[0] != imgs.shape[0])
        throw std::runtime_error(path + ": 'latents_classes' rows do not match 'imgs'");
    const int64_t n_all = imgs.shape[0];
    const int src_hw = static_cast<int>(imgs.shape[1]);
    const int f_all = static_cast<int>(classes.shape[1]);
    if (f_all < 2) throw std::runtime_error(path + ": fewer than 2 latent columns");

    std::vector<uint8_t> raw = imgs.as_u8();
    for (size_t i = 0; i < raw.size(); ++i)
        if (raw[i] > 1)
            throw std::runtime_error(path + ": pixel " + std::to_string(i) + " has value " +
                                     std::to_string(int(raw[i])) + ", expected binary {0,1}");

    std::vector<int64_t> cls = classes.as_i64();
    // the first column is a constant color; confirm, then drop it
    for (int64_t n = 0; n < n_all; ++n)
        if (cls[static_cast<size_t>(n) * f_all] != cls[0])
            throw std::runtime_error(path + ": first latent column is not constant at row " +
                                     std::to_string(n) + "; refusing to drop it");

    FactorDataset ds;
    ds.name = "dsprites";
    ds.N = n_all;
    ds.stored_ch = 1;
    ds.serve_ch = opt.replicate3 ? 3 : 1;

    const int f_kept = f_all - 1;
    ds.factor_classes.resize(static_cast<size_t>(n_all) * f_kept);
    ds.factor_sizes.assign(static_cast<size_t>(f_kept), 0);
    for (int64_t n = 0; n < n_all; ++n)
        for (int f = 0; f < f_kept; ++f) {
            int64_t c = cls[static_cast<size_t>(n) * f_all + f + 1];
            ds.factor_classes[static_cast<size_t>(n) * f_kept + f] = c;
            ds.factor_sizes[static_cast<size_t>(f)] =
                std::max(ds.factor_sizes[static_cast<size_t>(f)], c + 1);
        }

    if (opt.downsample32) {
        if (src_hw % 2 != 0)
            throw std::runtime_error(path + ": cannot box-downsample odd size " +
                                     std::to_string(src_hw));
        const int hw = src_hw / 2;
        ds.H = ds.W = hw;
        ds.images.resize(static_cast<size_t>(n_all) * hw * hw);
        for (int64_t n = 0; n < n_all; ++n) {
            const uint8_t* src = raw.data() + n * src_hw * src_hw;
            uint8_t* dst = ds.images.data() + n * hw * hw;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    int s = src[(2 * y) * src_hw + 2 * x] + src[(2 * y) * src_hw + 2 * x + 1] +
                            src[(2 * y + 1) * src_hw + 2 * x] +
                            src[(2 * y + 1) * src_hw + 2 * x + 1];
                    dst[y * hw + x] = static_cast<uint8_t>((s * 255 + 2) / 4);
                }
        }
        // the full-resolution copy is large; drop it before validate()
        raw.clear();
        raw.shrink_to_fit();
    } else {
        ds.H = ds.W = src_hw;
        ds.images = std::move(raw);
        for (uint8_t& p : ds.images) p = p ? 255 : 0;
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// synthetic factor dataset
// ---------------------------------------------------------------------------

SynthSpec SynthSpec::defaults() {
    SynthSpec s;
    s.factors = {{"x", 8}, {"y", 8}, {"size", 4}, {"brightness", 4}};
    return s;
}

SynthSpec parse_synth_spec(const std::string& text) {
    if (text.empty()) return SynthSpec::defaults();
    SynthSpec spec;
    spec.factors.clear();
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        std::string item = text.substr(pos, comma - pos);
        size_t eq = item.find('=');
        if (eq == std::string::npos)
            fail("synth spec item '" + item + "': expected name=count");
        std::string kind = item.substr(0, eq);
        int count = 0;
        try {
            count = std::stoi(item.substr(eq + 1));
        } catch (const std::exception&) {
            fail("synth spec item '" + item + "': count is not an integer");
        }
        if (kind != "x" && kind != "y" && kind != "size" && kind != "brightness")
            fail("synth spec: unknown factor '" + kind +
                 "' (known: x, y, size, brightness)");
        if (count < 2) fail("synth spec: factor '" + kind + "' needs at least 2 classes");
        for (const SynthFactor& f : spec.factors)
            if (f.kind == kind) fail("synth spec: factor '" + kind + "' appears twice");
        spec.factors.push_back({kind, count});
        pos = comma + 1;
    }
    if (spec.factors.empty()) fail("synth spec: no factors given");
    return spec;
}

FactorDataset synth_factors(const SynthSpec& spec, Rng& rng) {
    (void)rng;  // the square renderer is fully deterministic
    if (spec.factors.empty()) fail("synth_factors: no factors");
    if (spec.img_size < 8) fail("synth_factors: image size too small");
    int64_t total = 1;
    for (const SynthFactor& f : spec.factors) {
        if (f.classes < 2)
            fail("synth_factors: factor '" + f.kind + "' needs at least 2 classes");
        total *= f.classes;
        if (total > spec.cap)
            fail("synth_factors: factorial grid exceeds cap (" + std::to_string(spec.cap) + ")");
    }

    const int S = spec.img_size;
    FactorDataset ds;
    ds.name = "synth";
    ds.H = ds.W = S;
    ds.stored_ch = ds.serve_ch = 1;
    ds.N = total;
    ds.images.assign(static_cast<size_t>(total) * S * S, 0);
    ds.factor_sizes.reserve(spec.factors.size());
    for (const SynthFactor& f : spec.factors) ds.factor_sizes.push_back(f.classes);
    ds.factor_classes.resize(static_cast<size_t>(total) * spec.factors.size());

    std::vector<int64_t> cls(spec.factors.size(), 0);
    for (int64_t n = 0; n < total; ++n) {
        // factor values for this grid point (defaults when a kind is absent)
        double xc = 0.5, yc = 0.5;
        int size_cls = 1, size_classes = 4;
        int bright_cls = 3, bright_classes = 4;
        int x_classes = 1, y_classes = 1;
        int64_t x_cls = 0, y_cls = 0;
        for (size_t f = 0; f < spec.factors.size(); ++f) {
            const SynthFactor& sf = spec.factors[f];
            ds.factor_classes[static_cast<size_t>(n) * spec.factors.size() + f] = cls[f];
            if (sf.kind == "x") {
                x_cls = cls[f];
                x_classes = sf.classes;
            } else if (sf.kind == "y") {
                y_cls = cls[f];
                y_classes = sf.classes;
            } else if (sf.kind == "size") {
                size_cls = static_cast<int>(cls[f]);
                size_classes = sf.classes;
            } else {
                bright_cls = static_cast<int>(cls[f]);
                bright_classes = sf.classes;
            }
        }
        xc = (static_cast<double>(x_cls) + 0.5) / x_classes;
        yc = (static_cast<double>(y_cls) + 0.5) / y_classes;

        // side length from S/8 up to ~S/3; intensity strictly positive so the
        // support mask is brightness-invariant
        int side = S / 8 + size_cls * std::max(1, S / (4 * std::max(1, size_classes - 1)));
        side = std::min(side, S - 2);
        int left = static_cast<int>(std::lround(xc * S - side / 2.0));
        int top = static_cast<int>(std::lround(yc * S - side / 2.0));
        left = std::clamp(left, 0, S - side);
        top = std::clamp(top, 0, S - side);
        uint8_t val = static_cast<uint8_t>(255.0 * (bright_cls + 1) / bright_classes);

        uint8_t* img = ds.images.data() + n * S * S;
        for (int y = top; y < top + side; ++y)
            for (int x = left; x < left + side; ++x) img[y * S + x] = val;

        // advance the odometer over factor classes
        for (int f = static_cast<int>(spec.factors.size()) - 1; f >= 0; --f) {
            if (++cls[static_cast<size_t>(f)] <
                spec.factors[static_cast<size_t>(f)].classes)
                break;
            cls[static_cast<size_t>(f)] = 0;
        }
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// sampling helpers
// ---------------------------------------------------------------------------

Tensor fixed_factor_batch(const FactorDataset& ds, int f, int L, Rng& rng) {
    if (L < 2) fail("fixed_factor_batch: batch size must be at least 2");
    if (f < 0 || f >= ds.F())
        fail("fixed_factor_batch: factor index " + std::to_string(f) + " out of range");
    int64_t cls = rng.randint(ds.factor_sizes[static_cast<size_t>(f)]);
    const std::vector<int64_t>& pool = ds.stratum(f, cls);
    if (pool.empty())
        fail("fixed_factor_batch: no images with factor " + std::to_string(f) + " class " +
             std::to_string(cls));

    std::vector<int64_t> picks(static_cast<size_t>(L));
    if (static_cast<int64_t>(pool.size()) >= L) {
        std::vector<int64_t> copy = pool;
        rng.shuffle(copy);
        std::copy(copy.begin(), copy.begin() + L, picks.begin());
    } else {
        for (int i = 0; i < L; ++i)
            picks[static_cast<size_t>(i)] = pool[static_cast<size_t>(
                rng.randint(static_cast<int64_t>(pool.size())))];
    }
    return ds.get_batch(picks);
}

BatchIterator::BatchIterator(const FactorDataset& ds, int B, Rng& rng, bool shuffle)
    : ds_(&ds), B_(B), rng_(&rng), shuffle_(shuffle) {
    if (B <= 0) fail("batch_iterator: batch size must be positive");
    if (B > ds.N)
        fail("batch_iterator: batch size " + std::to_string(B) + " exceeds dataset size " +
             std::to_string(ds.N));
    order_.resize(static_cast<size_t>(ds.N));
    for (int64_t i = 0; i < ds.N; ++i) order_[static_cast<size_t>(i)] = i;
    start_epoch();
}

void BatchIterator::start_epoch() {
    ++epoch_;
    cursor_ = 0;
    if (shuffle_) rng_->shuffle(order_);
}

Tensor BatchIterator::next() {
    if (cursor_ + B_ > ds_->N) start_epoch();  // drop the trailing partial batch
    std::vector<int64_t> idx(order_.begin() + cursor_, order_.begin() + cursor_ + B_);
    cursor_ += B_;
    return ds_->get_batch(idx);
}

// ---------------------------------------------------------------------------
// archive interchange
// ---------------------------------------------------------------------------

void save_dataset(const std::string& path, const FactorDataset& ds) {
    npz::Archive a;
    npz::Array imgs;
    imgs.descr = "|u1";
    if (ds.stored_ch == 1)
        imgs.shape = {ds.N, ds.H, ds.W};
    else
        imgs.shape = {ds.N, ds.H, ds.W, ds.stored_ch};
    // internal layout is [N,ch,H,W]; archives use trailing channels
    if (ds.stored_ch == 1) {
        imgs.raw = ds.images;
    } else {
        imgs.raw.resize(ds.images.size());
        const int64_t plane = static_cast<int64_t>(ds.H) * ds.W;
        for (int64_t n = 0; n < ds.N; ++n)
            for (int64_t i = 0; i < plane; ++i)
                for (int c = 0; c < ds.stored_ch; ++c)
                    imgs.raw[static_cast<size_t>((n * plane + i) * ds.stored_ch + c)] =
                        ds.images[static_cast<size_t>((n * ds.stored_ch + c) * plane + i)];
    }
    a["imgs"] = std::move(imgs);
    a["latents_classes"] = npz::make_i64({ds.N, ds.F()}, ds.factor_classes);
    a["factor_sizes"] =
        npz::make_i64({static_cast<int64_t>(ds.factor_sizes.size())}, ds.factor_sizes);
    npz::save_npz(path, a);
}

FactorDataset load_dataset(const std::string& path) {
    npz::Archive a = npz::load_npz(path);
    for (const char* key : {"imgs", "latents_classes"})
        if (!a.count(key)) throw std::runtime_error(path + ": missing key '" + key + "'");

    npz::Array& imgs = a.at("imgs");
    npz::Array& classes = a.at("latents_classes");
    if (imgs.shape.size() != 3 && imgs.shape.size() != 4)
        throw std::runtime_error(path + ": 'imgs' must be [N,H,W] or [N,H,W,ch]");
    if (classes.shape.size() != 2 || classes.shape[0] != imgs.shape[0])
        throw std::runtime_error(path + ": 'latents_classes' rows do not match 'imgs'");

    FactorDataset ds;
    ds.name = path;
    ds.N = imgs.shape[0];
    ds.H = static_cast<int>(imgs.shape[1]);
    ds.W = static_cast<int>(imgs.shape[2]);
    ds.stored_ch = imgs.shape.size() == 4 ? static_cast<int>(imgs.shape[3]) : 1;
    ds.serve_ch = ds.stored_ch;
    std::vector<uint8_t> raw = imgs.as_u8();
    if (ds.stored_ch == 1) {
        ds.images = std::move(raw);
    } else {
        ds.images.resize(raw.size());
        const int64_t plane = static_cast<int64_t>(ds.H) * ds.W;
        for (int64_t n = 0; n < ds.N; ++n)
            for (int64_t i = 0; i < plane; ++i)
                for (int c = 0; c < ds.stored_ch; ++c)
                    ds.images[static_cast<size_t>((n * ds.stored_ch + c) * plane + i)] =
                        raw[static_cast<size_t>((n * plane + i) * ds.stored_ch + c)];
    }
    ds.factor_classes = classes.as_i64();

    if (a.count("factor_sizes")) {
        ds.factor_sizes = a.at("factor_sizes").as_i64();
    } else {
        const int f_count = static_cast<int>(classes.shape[1]);
        ds.factor_sizes.assign(static_cast<size_t>(f_count), 0);
        for (int64_t n = 0; n < ds.N; ++n)
            for (int f = 0; f < f_count; ++f) {
                int64_t c = ds.factor_classes[static_cast<size_t>(n) * f_count + f];
                ds.factor_sizes[static_cast<size_t>(f)] =
                    std::max(ds.factor_sizes[static_cast<size_t>(f)], c + 1);
            }
    }
    ds.validate();
    return ds;
}

}  // namespace oogan::data

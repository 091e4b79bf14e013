#include "doctest.h"
#include "oogan/data.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

using namespace oogan;
using namespace oogan::data;

namespace {

/// Maps each rendered image back to its dataset row; the synthetic renderer
/// produces pairwise-distinct images so the lookup is exact.
std::map<std::vector<uint8_t>, int64_t> image_index(const FactorDataset& ds) {
    std::map<std::vector<uint8_t>, int64_t> out;
    size_t per = static_cast<size_t>(ds.stored_ch) * ds.H * ds.W;
    for (int64_t n = 0; n < ds.N; ++n) {
        const uint8_t* px = ds.images.data() + static_cast<size_t>(n) * per;
        out[std::vector<uint8_t>(px, px + per)] = n;
    }
    return out;
}

std::vector<uint8_t> batch_row_bytes(const Tensor& batch, int row) {
    int64_t per = batch.numel() / batch.dim(0);
    std::vector<uint8_t> key(static_cast<size_t>(per));
    for (int64_t i = 0; i < per; ++i)
        key[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::lround(batch[row * per + i] * 255.0));
    return key;
}

}  // namespace

TEST_CASE("default synthetic dataset is a full 1024-image grid") {
    Rng rng(1);
    FactorDataset ds = synth_factors(SynthSpec::defaults(), rng);
    CHECK(ds.N == 1024);
    CHECK(ds.H == 32);
    CHECK(ds.W == 32);
    CHECK(ds.stored_ch == 1);
    REQUIRE(ds.factor_sizes == std::vector<int64_t>{8, 8, 4, 4});
    CHECK(ds.is_grid());
    ds.validate();

    // every factor combination appears exactly once
    std::set<std::vector<int64_t>> combos;
    for (int64_t n = 0; n < ds.N; ++n) {
        std::vector<int64_t> row;
        for (int f = 0; f < ds.F(); ++f) row.push_back(ds.factor_class(n, f));
        combos.insert(row);
    }
    CHECK(combos.size() == 1024);

    // the renderer never produces duplicate images at the default spec
    CHECK(image_index(ds).size() == 1024);
}

TEST_CASE("synthetic generation is deterministic per seed") {
    Rng a(7), b(7), c(8);
    FactorDataset d1 = synth_factors(SynthSpec::defaults(), a);
    FactorDataset d2 = synth_factors(SynthSpec::defaults(), b);
    CHECK(d1.images == d2.images);
    CHECK(d1.factor_classes == d2.factor_classes);
    // the images themselves are procedural, so another seed matches too;
    // the guarantee under test is bitwise stability of the whole pipeline
    FactorDataset d3 = synth_factors(SynthSpec::defaults(), c);
    CHECK(d1.images == d3.images);
}

TEST_CASE("brightness only rescales the square, never moves it") {
    Rng rng(3);
    FactorDataset ds = synth_factors(SynthSpec::defaults(), rng);
    // find pairs differing only in the brightness class
    int bright_f = 3;
    std::map<std::vector<int64_t>, std::vector<int64_t>> groups;
    for (int64_t n = 0; n < ds.N; ++n) {
        std::vector<int64_t> key;
        for (int f = 0; f < ds.F(); ++f)
            if (f != bright_f) key.push_back(ds.factor_class(n, f));
        groups[key].push_back(n);
    }
    size_t per = static_cast<size_t>(ds.H) * ds.W;
    int checked = 0;
    for (const auto& [key, members] : groups) {
        REQUIRE(members.size() == 4);
        const uint8_t* base = ds.images.data() + static_cast<size_t>(members[0]) * per;
        for (size_t m = 1; m < members.size(); ++m) {
            const uint8_t* other = ds.images.data() + static_cast<size_t>(members[m]) * per;
            bool differs = false;
            for (size_t i = 0; i < per; ++i) {
                CHECK((base[i] == 0) == (other[i] == 0));  // identical support mask
                if (base[i] != other[i]) differs = true;
            }
            CHECK(differs);  // intensities really change
        }
        if (++checked == 8) break;
    }
}

TEST_CASE("factor spec parsing") {
    SynthSpec s = parse_synth_spec("x=4,y=4,size=2,brightness=3");
    REQUIRE(s.factors.size() == 4);
    CHECK(s.factors[0].kind == "x");
    CHECK(s.factors[0].classes == 4);
    CHECK(s.factors[3].kind == "brightness");
    CHECK(s.factors[3].classes == 3);

    SynthSpec dflt = parse_synth_spec("");
    REQUIRE(dflt.factors.size() == 4);
    CHECK(dflt.factors[0].classes == 8);

    CHECK_THROWS_AS(parse_synth_spec("x=4,waviness=3"), std::invalid_argument);
    CHECK_THROWS_AS(parse_synth_spec("x=4,x=5"), std::invalid_argument);
    CHECK_THROWS_AS(parse_synth_spec("x=1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_synth_spec("x="), std::invalid_argument);

    Rng rng(1);
    SynthSpec huge = parse_synth_spec("x=256,y=256,size=16,brightness=16");
    huge.cap = 1 << 20;
    CHECK_THROWS_AS(synth_factors(huge, rng), std::invalid_argument);
}

TEST_CASE("fixed-factor batches hold the chosen factor constant") {
    Rng rng(5);
    FactorDataset ds = synth_factors(SynthSpec::defaults(), rng);
    auto index = image_index(ds);

    for (int f = 0; f < ds.F(); ++f) {
        Tensor batch = fixed_factor_batch(ds, f, 24, rng);
        REQUIRE(batch.dim(0) == 24);
        int64_t cls = -1;
        std::set<std::vector<int64_t>> other_combos;
        for (int r = 0; r < 24; ++r) {
            auto it = index.find(batch_row_bytes(batch, r));
            REQUIRE(it != index.end());
            int64_t got = ds.factor_class(it->second, f);
            if (cls < 0) cls = got;
            CHECK(got == cls);  // stratification: the fixed factor never moves
            std::vector<int64_t> rest;
            for (int g = 0; g < ds.F(); ++g)
                if (g != f) rest.push_back(ds.factor_class(it->second, g));
            other_combos.insert(rest);
        }
        CHECK(other_combos.size() > 1);  // the unfixed factors vary
    }
}

TEST_CASE("fixed-factor batches larger than the stratum repeat members") {
    Rng rng(6);
    // x=2,y=2 sizes: stratum for x has 2*2*2 = 8 members
    SynthSpec spec = parse_synth_spec("x=2,y=2,size=2,brightness=2");
    FactorDataset ds = synth_factors(spec, rng);
    auto index = image_index(ds);

    Tensor batch = fixed_factor_batch(ds, 0, 20, rng);
    REQUIRE(batch.dim(0) == 20);
    std::set<std::vector<uint8_t>> distinct;
    for (int r = 0; r < 20; ++r) distinct.insert(batch_row_bytes(batch, r));
    CHECK(distinct.size() <= 8);  // duplicates necessarily present
    CHECK(distinct.size() >= 2);
    CHECK_THROWS_AS(fixed_factor_batch(ds, 0, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(fixed_factor_batch(ds, 9, 4, rng), std::invalid_argument);
}

TEST_CASE("batch iterator covers each epoch exactly once") {
    Rng rng(9);
    FactorDataset ds = synth_factors(SynthSpec::defaults(), rng);

    Rng it_rng(42);
    BatchIterator it(ds, 64, it_rng, true);
    CHECK(it.batches_per_epoch() == 16);

    auto index = image_index(ds);
    std::set<int64_t> seen;
    for (int b = 0; b < 16; ++b) {
        Tensor batch = it.next();
        REQUIRE(batch.dim(0) == 64);
        CHECK(it.epoch() == 0);
        for (int r = 0; r < 64; ++r) {
            for (int64_t i = r * batch.numel() / 64; i < (r + 1) * batch.numel() / 64; ++i) {
                REQUIRE(batch[i] >= 0.0);
                REQUIRE(batch[i] <= 1.0);
            }
            auto found = index.find(batch_row_bytes(batch, r));
            REQUIRE(found != index.end());
            seen.insert(found->second);
        }
    }
    CHECK(seen.size() == 1024);  // a full shuffled epoch touches every image once
    it.next();
    CHECK(it.epoch() == 1);
}

TEST_CASE("batch iterator is deterministic and honors shuffle=false") {
    Rng rng(9);
    FactorDataset ds = synth_factors(SynthSpec::defaults(), rng);

    Rng r1(3), r2(3);
    BatchIterator a(ds, 32, r1, true);
    BatchIterator b(ds, 32, r2, true);
    for (int i = 0; i < 40; ++i) {
        Tensor x = a.next(), y = b.next();
        REQUIRE(x.v == y.v);
    }

    Rng r3(1);
    BatchIterator plain(ds, 32, r3, false);
    Tensor first = plain.next();
    auto index = image_index(ds);
    for (int r = 0; r < 32; ++r) {
        auto it = index.find(batch_row_bytes(first, r));
        REQUIRE(it != index.end());
        CHECK(it->second == r);  // storage order
    }

    Rng r4(1);
    CHECK_THROWS_AS(BatchIterator(ds, 2048, r4, true), std::invalid_argument);
}

TEST_CASE("dataset archives round-trip through save and load") {
    Rng rng(11);
    SynthSpec spec = parse_synth_spec("x=3,y=3,size=2,brightness=2");
    FactorDataset ds = synth_factors(spec, rng);

    std::string path = "/tmp/oogan_test_dataset.npz";
    save_dataset(path, ds);
    FactorDataset back = load_dataset(path);
    CHECK(back.N == ds.N);
    CHECK(back.H == ds.H);
    CHECK(back.W == ds.W);
    CHECK(back.images == ds.images);
    CHECK(back.factor_classes == ds.factor_classes);
    CHECK(back.factor_sizes == ds.factor_sizes);
    back.validate();
    std::remove(path.c_str());
}

TEST_CASE("dataset validation names structural violations") {
    Rng rng(12);
    SynthSpec spec = parse_synth_spec("x=2,y=2,size=2,brightness=2");
    FactorDataset ds = synth_factors(spec, rng);
    ds.validate();

    FactorDataset bad = ds;
    bad.factor_classes[5] = 99;  // out of the declared class range
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    FactorDataset trunc = ds;
    trunc.images.pop_back();
    CHECK_THROWS_AS(trunc.validate(), std::invalid_argument);

    FactorDataset mism = ds;
    mism.factor_sizes.pop_back();
    CHECK_THROWS_AS(mism.validate(), std::invalid_argument);
}

TEST_CASE("served batches replicate grayscale to three channels on request") {
    Rng rng(13);
    SynthSpec spec = parse_synth_spec("x=2,y=2,size=2,brightness=2");
    FactorDataset ds = synth_factors(spec, rng);
    ds.serve_ch = 3;
    Tensor batch = ds.get_batch({0, 5});
    REQUIRE(batch.dim(1) == 3);
    int hw = ds.H * ds.W;
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < hw; ++i) {
            double p0 = batch[(n * 3 + 0) * hw + i];
            CHECK(batch[(n * 3 + 1) * hw + i] == p0);
            CHECK(batch[(n * 3 + 2) * hw + i] == p0);
        }
}

#include "doctest.h"
#include "gradcheck.hpp"
#include "oogan/nn.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

using namespace oogan;
using nn::Conv2d;

namespace {

// direct convolution, used as the oracle for the im2col implementation
Tensor conv_ref(const Conv2d& c, const Tensor& x, const Tensor& w) {
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int OH = c.out_h(H), OW = c.out_h(W);
    const int icg = c.in_ch / c.groups, ocg = c.out_ch / c.groups;
    Tensor y({B, c.out_ch, OH, OW});
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < c.out_ch; ++oc) {
            const int g = oc / ocg;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = c.has_bias ? c.bias.w.v[static_cast<size_t>(oc)] : 0.0;
                    for (int ic = 0; ic < icg; ++ic)
                        for (int ky = 0; ky < c.k; ++ky)
                            for (int kx = 0; kx < c.k; ++kx) {
                                const int iy = oy * c.stride - c.pad + ky;
                                const int ix = ox * c.stride - c.pad + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x.at(b, g * icg + ic, iy, ix) *
                                       w.at(oc, ic, ky, kx);
                            }
                    y.at(b, oc, oy, ox) = acc;
                }
        }
    return y;
}

void fill_rand(Tensor& t, Rng& rng, double scale = 1.0) {
    for (double& x : t.v) x = scale * rng.normal();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution") {
    Rng rng(11);
    struct Case {
        int in_ch, out_ch, k, stride, pad, groups, h;
    };
    const Case cases[] = {
        {3, 5, 3, 1, 1, 1, 6},   // padded same conv
        {4, 6, 3, 2, 1, 2, 8},   // strided grouped
        {6, 6, 3, 1, 1, 6, 5},   // depthwise-style groups
        {2, 3, 1, 1, 0, 1, 4},   // 1x1
        {3, 2, 4, 2, 0, 1, 8},   // 4x4 valid stride 2
        {4, 1, 4, 1, 0, 1, 4},   // 4x4 valid collapse to 1x1
    };
    for (const Case& cs : cases) {
        CAPTURE(cs.in_ch);
        CAPTURE(cs.out_ch);
        CAPTURE(cs.k);
        Conv2d c = Conv2d::make("c", cs.in_ch, cs.out_ch, cs.k, cs.stride, cs.pad, cs.groups,
                                true, rng);
        Tensor x({2, cs.in_ch, cs.h, cs.h});
        fill_rand(x, rng);
        Tensor y = c.forward(x, false);
        Tensor yref = conv_ref(c, x, c.weight.w);
        CHECK(max_abs_diff(y, yref) < 1e-12);
    }
}

TEST_CASE("conv2d backward gradcheck") {
    Rng rng(5);
    Conv2d c = Conv2d::make("c", 4, 4, 3, 1, 1, 2, true, rng, 0.3);
    Tensor x0({2, 4, 5, 5});
    fill_rand(x0, rng, 0.5);
    Tensor gy({2, 4, 5, 5});
    fill_rand(gy, rng, 0.5);

    // analytic gradients
    c.weight.zero_grad();
    c.bias.zero_grad();
    Tensor y = c.forward(x0, false);
    Tensor gx = c.backward(gy);

    auto dot_loss = [&](Conv2d& cc, const Tensor& x) {
        Tensor yy = cc.forward(x, false);
        double s = 0;
        for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy.v[i];
        return s;
    };

    SUBCASE("w.r.t. input") {
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                Tensor x = x0;
                x.v = xs;
                return dot_loss(c, x);
            },
            x0.v, gx.v, 40);
        CHECK(r.rel_err() < 1e-6);
    }
    SUBCASE("w.r.t. weight") {
        auto r = gradcheck::compare(
            [&](const std::vector<double>& ws) {
                Conv2d cc = c;
                cc.weight.w.v = ws;
                return dot_loss(cc, x0);
            },
            c.weight.w.v, c.weight.g.v, 40);
        CHECK(r.rel_err() < 1e-6);
    }
    SUBCASE("w.r.t. bias") {
        auto r = gradcheck::compare(
            [&](const std::vector<double>& bs) {
                Conv2d cc = c;
                cc.bias.w.v = bs;
                return dot_loss(cc, x0);
            },
            c.bias.w.v, c.bias.g.v, 4);
        CHECK(r.rel_err() < 1e-6);
    }
}

TEST_CASE("linear forward and gradcheck") {
    Rng rng(3);
    nn::Linear l = nn::Linear::make("l", 5, 3, true, rng, 0.4);
    Tensor x0({4, 5});
    fill_rand(x0, rng);
    Tensor y = l.forward(x0);
    REQUIRE(y.shape == std::vector<int>{4, 3});
    // manual check of one element
    double want = l.bias.w.v[1];
    for (int i = 0; i < 5; ++i) want += x0.at(2, i) * l.weight.w.at(1, i);
    CHECK(y.at(2, 1) == doctest::Approx(want).epsilon(1e-12));

    Tensor gy({4, 3});
    fill_rand(gy, rng);
    l.weight.zero_grad();
    l.bias.zero_grad();
    l.forward(x0);
    Tensor gx = l.backward(gy);

    auto dot_loss = [&](nn::Linear& ll, const Tensor& x) {
        Tensor yy = ll.forward(x);
        double s = 0;
        for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy.v[i];
        return s;
    };
    auto rx = gradcheck::compare(
        [&](const std::vector<double>& xs) {
            Tensor x = x0;
            x.v = xs;
            return dot_loss(l, x);
        },
        x0.v, gx.v, 20);
    CHECK(rx.rel_err() < 1e-6);
    auto rw = gradcheck::compare(
        [&](const std::vector<double>& ws) {
            nn::Linear ll = l;
            ll.weight.w.v = ws;
            return dot_loss(ll, x0);
        },
        l.weight.w.v, l.weight.g.v, 15);
    CHECK(rw.rel_err() < 1e-6);
}

TEST_CASE("batchnorm statistics and gradcheck") {
    Rng rng(9);
    nn::BatchNorm2d bn = nn::BatchNorm2d::make("bn", 3);
    Tensor x0({4, 3, 2, 2});
    fill_rand(x0, rng, 2.0);

    SUBCASE("train forward normalizes per channel") {
        Tensor y = bn.forward(x0, true);
        for (int ch = 0; ch < 3; ++ch) {
            double s = 0, s2 = 0;
            int cnt = 0;
            for (int b = 0; b < 4; ++b)
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        double v = y.at(b, ch, i, j);
                        s += v;
                        s2 += v * v;
                        ++cnt;
                    }
            double mean = s / cnt, var = s2 / cnt - mean * mean;
            CHECK(std::abs(mean) < 1e-9);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
        }
        // running stats moved off their init values
        CHECK(bn.running_mean.w.max_abs() > 0.0);
    }

    SUBCASE("eval uses running stats and backward refuses eval mode") {
        bn.forward(x0, true);
        Tensor y1 = bn.forward(x0, false);
        Tensor y2 = bn.forward(x0, false);
        CHECK(max_abs_diff(y1, y2) == 0.0);
        CHECK_THROWS_AS(bn.backward(y1), std::logic_error);
    }

    SUBCASE("train-mode gradcheck") {
        Tensor gy({4, 3, 2, 2});
        fill_rand(gy, rng);
        bn.gamma.w.v = {1.3, 0.7, -0.4};
        bn.beta.w.v = {0.1, -0.2, 0.4};
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        bn.forward(x0, true);
        Tensor gx = bn.backward(gy);

        auto dot_loss = [&](nn::BatchNorm2d& bb, const Tensor& x) {
            Tensor yy = bb.forward(x, true);
            double s = 0;
            for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy.v[i];
            return s;
        };
        auto rx = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                nn::BatchNorm2d bb = bn;
                Tensor x = x0;
                x.v = xs;
                return dot_loss(bb, x);
            },
            x0.v, gx.v, 30);
        CHECK(rx.rel_err() < 1e-5);
        auto rg = gradcheck::compare(
            [&](const std::vector<double>& gs) {
                nn::BatchNorm2d bb = bn;
                bb.gamma.w.v = gs;
                return dot_loss(bb, x0);
            },
            bn.gamma.w.v, bn.gamma.g.v, 3);
        CHECK(rg.rel_err() < 1e-6);
        auto rb = gradcheck::compare(
            [&](const std::vector<double>& bs) {
                nn::BatchNorm2d bb = bn;
                bb.beta.w.v = bs;
                return dot_loss(bb, x0);
            },
            bn.beta.w.v, bn.beta.g.v, 3);
        CHECK(rb.rel_err() < 1e-6);
    }
}

TEST_CASE("activation and pooling gradchecks") {
    Rng rng(21);
    Tensor x0({2, 3, 4, 4});
    fill_rand(x0, rng);
    Tensor gy_small({2, 3, 2, 2});
    fill_rand(gy_small, rng);
    Tensor gy_big({2, 3, 8, 8});
    fill_rand(gy_big, rng);
    Tensor gy_same({2, 3, 4, 4});
    fill_rand(gy_same, rng);

    SUBCASE("leaky relu") {
        nn::LeakyReLU act{0.1};
        act.forward(x0);
        Tensor gx = act.backward(gy_same);
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                nn::LeakyReLU a{0.1};
                Tensor x = x0;
                x.v = xs;
                Tensor y = a.forward(x);
                double s = 0;
                for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * gy_same.v[i];
                return s;
            },
            x0.v, gx.v, 30);
        CHECK(r.rel_err() < 1e-6);
    }
    SUBCASE("sigmoid") {
        nn::Sigmoid act;
        act.forward(x0);
        Tensor gx = act.backward(gy_same);
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                nn::Sigmoid a;
                Tensor x = x0;
                x.v = xs;
                Tensor y = a.forward(x);
                double s = 0;
                for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * gy_same.v[i];
                return s;
            },
            x0.v, gx.v, 30);
        CHECK(r.rel_err() < 1e-6);
    }
    SUBCASE("avg pool") {
        nn::AvgPool2x2 pool;
        Tensor y = pool.forward(x0);
        REQUIRE(y.shape == std::vector<int>{2, 3, 2, 2});
        CHECK(y.at(0, 0, 0, 0) ==
              doctest::Approx(0.25 * (x0.at(0, 0, 0, 0) + x0.at(0, 0, 0, 1) +
                                      x0.at(0, 0, 1, 0) + x0.at(0, 0, 1, 1))));
        Tensor gx = pool.backward(gy_small);
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                nn::AvgPool2x2 p;
                Tensor x = x0;
                x.v = xs;
                Tensor yy = p.forward(x);
                double s = 0;
                for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy_small.v[i];
                return s;
            },
            x0.v, gx.v, 30);
        CHECK(r.rel_err() < 1e-6);

        Tensor odd({1, 1, 3, 3});
        CHECK_THROWS_AS(pool.forward(odd), std::invalid_argument);
    }
    SUBCASE("bilinear upsample") {
        nn::BilinearUp2 up;
        Tensor y = up.forward(x0);
        REQUIRE(y.shape == std::vector<int>{2, 3, 8, 8});
        // constant input upsamples to the same constant
        Tensor ones = Tensor::full({1, 1, 4, 4}, 3.5);
        Tensor yc = up.forward(ones);
        for (double v : yc.v) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

        up.forward(x0);
        Tensor gx = up.backward(gy_big);
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                nn::BilinearUp2 u;
                Tensor x = x0;
                x.v = xs;
                Tensor yy = u.forward(x);
                double s = 0;
                for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy_big.v[i];
                return s;
            },
            x0.v, gx.v, 30);
        CHECK(r.rel_err() < 1e-6);
    }
}

TEST_CASE("spectral norm") {
    Rng rng(31);

    SUBCASE("power iteration converges to the top singular value") {
        Conv2d c = Conv2d::make("c", 6, 8, 3, 1, 1, 1, false, rng, 0.5);
        c.enable_spectral_norm(rng);
        c.sn_power_iteration(500);
        double sigma = c.sn_sigma();

        // dense SVD of the weight viewed as a [out, in*k*k] matrix
        const int rows = c.out_ch, cols = (c.in_ch / c.groups) * c.k * c.k;
        Eigen::MatrixXd W(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int cc = 0; cc < cols; ++cc)
                W(r, cc) = c.weight.w.v[static_cast<size_t>(r * cols + cc)];
        double top = Eigen::JacobiSVD<Eigen::MatrixXd>(W).singularValues()(0);
        CHECK(sigma == doctest::Approx(top).epsilon(1e-8));
    }

    SUBCASE("normalized forward scales output by 1/sigma") {
        Conv2d plain = Conv2d::make("c", 3, 4, 3, 1, 1, 1, true, rng, 0.5);
        Conv2d sn = plain;
        sn.enable_spectral_norm(rng);
        sn.sn_power_iteration(300);
        double sigma = sn.sn_sigma();

        Tensor x({2, 3, 5, 5});
        fill_rand(x, rng);
        Tensor y_plain = plain.forward(x, false);
        Tensor y_sn = sn.forward(x, false);  // eval: state frozen
        // bias is not normalized, so compare the linear parts
        Tensor x0 = Tensor({2, 3, 5, 5});
        Tensor b_plain = plain.forward(x0, false);
        Tensor b_sn = sn.forward(x0, false);
        double worst = 0;
        for (size_t i = 0; i < y_plain.v.size(); ++i) {
            double lin_plain = y_plain.v[i] - b_plain.v[i];
            double lin_sn = y_sn.v[i] - b_sn.v[i];
            worst = std::max(worst, std::abs(lin_sn - lin_plain / sigma));
        }
        CHECK(worst < 1e-9);
    }

    SUBCASE("train-mode forward advances the power iteration") {
        Conv2d c = Conv2d::make("c", 3, 4, 3, 1, 1, 1, true, rng, 0.5);
        c.enable_spectral_norm(rng);
        Tensor x({1, 3, 5, 5});
        fill_rand(x, rng);
        Tensor u_before = c.sn_u.w;
        c.forward(x, true);
        double moved = max_abs_diff(u_before, c.sn_u.w);
        CHECK(moved > 0.0);
        // eval forward leaves it alone
        Tensor u_now = c.sn_u.w;
        c.forward(x, false);
        CHECK(max_abs_diff(u_now, c.sn_u.w) == 0.0);
    }

    SUBCASE("gradcheck through the normalized weight (frozen state)") {
        Conv2d c = Conv2d::make("c", 2, 3, 3, 1, 1, 1, true, rng, 0.5);
        c.enable_spectral_norm(rng);
        c.sn_power_iteration(300);
        Tensor x0({2, 2, 4, 4});
        fill_rand(x0, rng);
        Tensor gy({2, 3, 4, 4});
        fill_rand(gy, rng);

        c.weight.zero_grad();
        c.bias.zero_grad();
        c.forward(x0, false);  // eval keeps u, v fixed so FD sees a clean function
        Tensor gx = c.backward(gy);

        auto dot_loss = [&](Conv2d& cc, const Tensor& x) {
            Tensor yy = cc.forward(x, false);
            double s = 0;
            for (size_t i = 0; i < yy.v.size(); ++i) s += yy.v[i] * gy.v[i];
            return s;
        };
        auto rw = gradcheck::compare(
            [&](const std::vector<double>& ws) {
                Conv2d cc = c;
                cc.weight.w.v = ws;
                return dot_loss(cc, x0);
            },
            c.weight.w.v, c.weight.g.v, 30);
        CHECK(rw.rel_err() < 1e-5);
        auto rx = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                Conv2d cc = c;
                Tensor x = x0;
                x.v = xs;
                return dot_loss(cc, x);
            },
            x0.v, gx.v, 30);
        CHECK(rx.rel_err() < 1e-6);
    }
}

TEST_CASE("adam step") {
    nn::Param p;
    p.name = "p";
    p.init_shape({2});
    p.w.v = {1.0, -2.0};
    p.g.v = {0.5, -0.25};

    nn::adam_step({&p}, 1e-3, 0.9, 0.999);
    // first step: mhat = g, vhat = g^2, so update = -lr * g/(|g|+eps) = -lr*sign(g)
    CHECK(p.w.v[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(p.w.v[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
    CHECK(p.steps == 1);

    // params not in the list are untouched
    nn::Param q;
    q.init_shape({1});
    q.w.v = {5.0};
    q.g.v = {100.0};
    nn::adam_step({&p}, 1e-3, 0.9, 0.999);
    CHECK(q.w.v[0] == 5.0);
    CHECK(q.steps == 0);
    CHECK(p.steps == 2);
}

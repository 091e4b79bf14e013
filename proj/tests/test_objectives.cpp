#include "doctest.h"
#include "gradcheck.hpp"
#include "oogan/objectives.hpp"

#include <cmath>
#include <stdexcept>

using namespace oogan;
using namespace oogan::objectives;

namespace {

QPrediction det_pred(const Tensor& c_hat) {
    QPrediction p;
    p.probabilistic = false;
    p.c_hat = c_hat;
    return p;
}

}  // namespace

TEST_CASE("hinge d loss analytic values") {
    // relu(1-real) terms: real {2.0, 0.5} -> {0, 0.5}; fake {-2.0, 0.5} -> {0, 1.5}
    std::vector<double> real = {2.0, 0.5}, fake = {-2.0, 0.5};
    std::vector<double> gr, gf;
    double loss = hinge_d_loss(real, fake, &gr, &gf);
    CHECK(loss == doctest::Approx(0.25 + 0.75).epsilon(1e-12));
    // gradients: d/d real_i = -1/B inside the hinge, else 0
    CHECK(gr[0] == 0.0);
    CHECK(gr[1] == doctest::Approx(-0.5));
    CHECK(gf[0] == 0.0);
    CHECK(gf[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(hinge_d_loss({}, {}), std::invalid_argument);

    SUBCASE("gradcheck away from kinks") {
        Rng rng(3);
        std::vector<double> r0(6), f0(6);
        for (auto& x : r0) x = 3.0 * rng.normal() + 0.1;
        for (auto& x : f0) x = 3.0 * rng.normal() - 0.1;
        std::vector<double> gr0, gf0;
        hinge_d_loss(r0, f0, &gr0, &gf0);
        auto rr = gradcheck::compare(
            [&](const std::vector<double>& xs) { return hinge_d_loss(xs, f0); }, r0, gr0, 6);
        CHECK(rr.rel_err() < 1e-6);
        auto rf = gradcheck::compare(
            [&](const std::vector<double>& xs) { return hinge_d_loss(r0, xs); }, f0, gf0, 6);
        CHECK(rf.rel_err() < 1e-6);
    }
}

TEST_CASE("generator adversarial loss") {
    std::vector<double> fake = {1.0, -3.0, 2.0};
    std::vector<double> gf;
    double loss = g_adv_loss(fake, &gf);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
    for (double g : gf) CHECK(g == doctest::Approx(-1.0 / 3.0));
    CHECK_THROWS_AS(g_adv_loss({}), std::invalid_argument);
}

TEST_CASE("deterministic mi loss") {
    Tensor c({2, 2});
    c.v = {0.0, 1.0, 0.5, 0.25};
    Tensor c_hat({2, 2});
    c_hat.v = {0.25, 0.75, 0.5, 0.75};
    QPrediction p = det_pred(c_hat);
    Tensor d_c_hat;
    double loss = mi_loss_det(p, c, &d_c_hat);
    // |diffs| = {0.25, 0.25, 0, 0.5}, mean over 4 entries
    CHECK(loss == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d_c_hat.at(0, 0) == doctest::Approx(0.25));   // sign(+0.25)/4
    CHECK(d_c_hat.at(0, 1) == doctest::Approx(-0.25));  // sign(-0.25)/4
    CHECK(d_c_hat.at(1, 0) == 0.0);                     // at the kink: subgradient 0
    CHECK(d_c_hat.at(1, 1) == doctest::Approx(0.25));

    QPrediction prob;
    prob.probabilistic = true;
    prob.c_hat = c_hat;
    prob.sigma = Tensor::full({2, 2}, 1.0);
    CHECK_THROWS_AS(mi_loss_det(prob, c), std::logic_error);
}

TEST_CASE("gaussian nll mi loss") {
    SUBCASE("analytic value") {
        // mu=0.5, sigma=0.5, c=1.0 single entry:
        // log(0.5) + 0.25/(2*0.25) + 0.5 log(2 pi)
        Tensor c({1, 1});
        c.v = {1.0};
        QPrediction p;
        p.probabilistic = true;
        p.c_hat = Tensor::full({1, 1}, 0.5);
        p.sigma = Tensor::full({1, 1}, 0.5);
        double want = std::log(0.5) + 0.5 + 0.5 * std::log(2.0 * M_PI);
        CHECK(mi_loss_prob(p, c) == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("gradcheck mu and sigma") {
        Rng rng(5);
        const int B = 3, d = 4;
        Tensor c({B, d});
        for (auto& x : c.v) x = rng.uniform01();
        QPrediction p;
        p.probabilistic = true;
        p.c_hat = Tensor({B, d});
        p.sigma = Tensor({B, d});
        for (auto& x : p.c_hat.v) x = rng.uniform01();
        for (auto& x : p.sigma.v) x = 0.3 + rng.uniform01();

        Tensor d_mu, d_sigma;
        mi_loss_prob(p, c, &d_mu, &d_sigma);
        auto rm = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                QPrediction q = p;
                q.c_hat.v = xs;
                return mi_loss_prob(q, c);
            },
            p.c_hat.v, d_mu.v, B * d);
        CHECK(rm.rel_err() < 1e-6);
        auto rs = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                QPrediction q = p;
                q.sigma.v = xs;
                return mi_loss_prob(q, c);
            },
            p.sigma.v, d_sigma.v, B * d);
        CHECK(rs.rel_err() < 1e-6);
    }
    SUBCASE("rejects nonpositive sigma and det mode") {
        Tensor c({1, 1});
        c.v = {0.5};
        QPrediction p;
        p.probabilistic = true;
        p.c_hat = Tensor::full({1, 1}, 0.5);
        p.sigma = Tensor::full({1, 1}, 0.0);
        CHECK_THROWS_AS(mi_loss_prob(p, c), std::logic_error);
        QPrediction det = det_pred(c);
        CHECK_THROWS_AS(mi_loss_prob(det, c), std::logic_error);
    }
}

TEST_CASE("one-hot cross entropy") {
    SUBCASE("frozen example") {
        // logits (2,0,0,0), hot at 0: loss = -log(e^2/(e^2+3))
        QPrediction p;
        p.logits = Tensor({1, 4});
        p.logits.v = {2.0, 0.0, 0.0, 0.0};
        Tensor c({1, 4});
        c.v = {1.0, 0.0, 0.0, 0.0};
        double loss = onehot_ce_loss(p, c);
        CHECK(loss == doctest::Approx(0.3407529539131312).epsilon(1e-14));
    }
    SUBCASE("shift invariance of softmax") {
        QPrediction p;
        p.logits = Tensor({1, 3});
        p.logits.v = {1.0, 2.0, 3.0};
        Tensor c({1, 3});
        c.v = {0.0, 1.0, 0.0};
        double a = onehot_ce_loss(p, c);
        for (auto& x : p.logits.v) x += 100.0;
        double b = onehot_ce_loss(p, c);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("large logits stay finite") {
        QPrediction p;
        p.logits = Tensor({1, 3});
        p.logits.v = {1000.0, 0.0, 0.0};
        Tensor c({1, 3});
        c.v = {1.0, 0.0, 0.0};
        double loss = onehot_ce_loss(p, c);
        CHECK(std::isfinite(loss));
        CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("gradcheck") {
        Rng rng(7);
        const int B = 4, d = 5;
        QPrediction p;
        p.logits = Tensor({B, d});
        for (auto& x : p.logits.v) x = rng.normal();
        Tensor c({B, d});
        for (int b = 0; b < B; ++b) c.at(b, static_cast<int>(rng.randint(d))) = 1.0;
        Tensor d_logits;
        onehot_ce_loss(p, c, &d_logits);
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) {
                QPrediction q = p;
                q.logits.v = xs;
                return onehot_ce_loss(q, c);
            },
            p.logits.v, d_logits.v, B * d);
        CHECK(r.rel_err() < 1e-6);
    }
    SUBCASE("rejects rows that are not one-hot") {
        QPrediction p;
        p.logits = Tensor({2, 3});
        Tensor c({2, 3});
        c.v = {1.0, 0.0, 0.0, 0.5, 0.5, 0.0};
        bool threw = false;
        std::string msg;
        try {
            onehot_ce_loss(p, c);
        } catch (const std::invalid_argument& e) {
            threw = true;
            msg = e.what();
        }
        CHECK(threw);
        CHECK(msg.find("1") != std::string::npos);  // offending row index named
    }
}

TEST_CASE("orthogonal regularizer") {
    SUBCASE("orthogonal kernels give zero, parallel give one") {
        KernelLayers ortho = {{{1.0, 0.0}, {0.0, 1.0}}};
        CHECK(orthogonal_reg(ortho) == doctest::Approx(0.0).epsilon(1e-12));
        KernelLayers parallel = {{{1.0, 0.0}, {2.0, 0.0}}};
        CHECK(orthogonal_reg(parallel) == doctest::Approx(1.0).epsilon(1e-12));
        KernelLayers anti = {{{1.0, 0.0}, {-3.0, 0.0}}};
        CHECK(orthogonal_reg(anti) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(orthogonal_reg(anti, /*signed_mode=*/true) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("frozen three-vector example") {
        // cos(a,b)=0, cos(a,c)=cos45, cos(b,c)=cos45 -> mean = sqrt(2)/3
        KernelLayers ks = {{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}};
        CHECK(orthogonal_reg(ks) == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-12));
    }
    SUBCASE("layers sum; scale invariance") {
        KernelLayers two = {{{1.0, 0.0}, {1.0, 1.0}}, {{0.0, 2.0}, {0.0, 5.0}}};
        double v = orthogonal_reg(two);
        CHECK(v == doctest::Approx(std::sqrt(0.5) + 1.0).epsilon(1e-12));
        // rescaling any kernel leaves the value unchanged
        KernelLayers scaled = two;
        for (auto& layer : scaled)
            for (auto& k : layer)
                for (auto& x : k) x *= 17.0;
        CHECK(orthogonal_reg(scaled) == doctest::Approx(v).epsilon(1e-12));
    }
    SUBCASE("zero-norm kernels contribute zero") {
        KernelLayers ks = {{{0.0, 0.0}, {1.0, 2.0}, {3.0, 1.0}}};
        // only the (k1,k2) pair is nonzero
        double cos12 = (1.0 * 3 + 2.0 * 1) / (std::sqrt(5.0) * std::sqrt(10.0));
        CHECK(orthogonal_reg(ks) == doctest::Approx(cos12 / 3.0).epsilon(1e-12));
    }
    SUBCASE("gradcheck") {
        Rng rng(11);
        KernelLayers ks(2);
        ks[0].assign(4, std::vector<double>(6));
        ks[1].assign(3, std::vector<double>(5));
        for (auto& layer : ks)
            for (auto& k : layer)
                for (auto& x : k) x = rng.normal();

        KernelLayers grads;
        orthogonal_reg(ks, false, &grads);

        // flatten for the checker
        std::vector<double> flat, gflat;
        for (auto& layer : ks)
            for (auto& k : layer) flat.insert(flat.end(), k.begin(), k.end());
        for (auto& layer : grads)
            for (auto& k : layer) gflat.insert(gflat.end(), k.begin(), k.end());

        auto unflatten = [&](const std::vector<double>& xs) {
            KernelLayers out = ks;
            size_t pos = 0;
            for (auto& layer : out)
                for (auto& k : layer)
                    for (auto& x : k) x = xs[pos++];
            return out;
        };
        auto r = gradcheck::compare(
            [&](const std::vector<double>& xs) { return orthogonal_reg(unflatten(xs)); }, flat,
            gflat, 30);
        CHECK(r.rel_err() < 1e-6);

        // signed mode too
        KernelLayers sgrads;
        orthogonal_reg(ks, true, &sgrads);
        std::vector<double> sgflat;
        for (auto& layer : sgrads)
            for (auto& k : layer) sgflat.insert(sgflat.end(), k.begin(), k.end());
        auto rs = gradcheck::compare(
            [&](const std::vector<double>& xs) { return orthogonal_reg(unflatten(xs), true); },
            flat, sgflat, 30);
        CHECK(rs.rel_err() < 1e-6);
    }
    SUBCASE("needs at least two kernels per layer") {
        KernelLayers one = {{{1.0, 2.0}}};
        CHECK_THROWS_AS(orthogonal_reg(one), std::invalid_argument);
    }
}

TEST_CASE("combined mi objective") {
    Rng rng(13);
    const int B = 3, d = 4;
    Tensor c_cont({B, d});
    for (auto& x : c_cont.v) x = rng.uniform01();
    Tensor c_hot({B, d});
    for (int b = 0; b < B; ++b) c_hot.at(b, static_cast<int>(rng.randint(d))) = 1.0;

    QPrediction p;
    p.probabilistic = false;
    p.c_hat = Tensor({B, d});
    p.logits = Tensor({B, d});
    for (auto& x : p.c_hat.v) x = rng.uniform01();
    for (auto& x : p.logits.v) x = rng.normal();

    LossWeights w;
    w.lambda_mi = 2.0;
    w.gamma_ce = 0.5;

    SUBCASE("continuous iteration: no CE") {
        Tensor d_chat, d_logits;
        MiTerms t = total_mi_objective(p, c_cont, latent::CodeKind::continuous, w, &d_chat,
                                       nullptr, &d_logits);
        CHECK(t.mi == doctest::Approx(mi_loss_det(p, c_cont)).epsilon(1e-12));
        CHECK(t.ce == 0.0);
        CHECK(t.total == doctest::Approx(2.0 * t.mi).epsilon(1e-12));
        CHECK(d_logits.max_abs() == 0.0);
        // weighted gradient: lambda * per-term grad
        Tensor ref;
        mi_loss_det(p, c_cont, &ref);
        for (size_t i = 0; i < ref.v.size(); ++i)
            CHECK(d_chat.v[i] == doctest::Approx(2.0 * ref.v[i]).epsilon(1e-12));
    }
    SUBCASE("one-hot iteration adds weighted CE") {
        Tensor d_chat, d_logits;
        MiTerms t = total_mi_objective(p, c_hot, latent::CodeKind::one_hot, w, &d_chat, nullptr,
                                       &d_logits);
        CHECK(t.ce == doctest::Approx(onehot_ce_loss(p, c_hot)).epsilon(1e-12));
        CHECK(t.total == doctest::Approx(2.0 * t.mi + 0.5 * t.ce).epsilon(1e-12));
        Tensor ce_ref;
        onehot_ce_loss(p, c_hot, &ce_ref);
        for (size_t i = 0; i < ce_ref.v.size(); ++i)
            CHECK(d_logits.v[i] == doctest::Approx(0.5 * ce_ref.v[i]).epsilon(1e-12));
    }
    SUBCASE("probabilistic path routes sigma gradients") {
        QPrediction q = p;
        q.probabilistic = true;
        q.sigma = Tensor({B, d});
        for (auto& x : q.sigma.v) x = 0.5 + rng.uniform01();
        Tensor d_mu, d_sigma;
        MiTerms t = total_mi_objective(q, c_cont, latent::CodeKind::continuous, w, &d_mu,
                                       &d_sigma, nullptr);
        CHECK(t.mi == doctest::Approx(mi_loss_prob(q, c_cont)).epsilon(1e-12));
        CHECK(d_sigma.max_abs() > 0.0);
    }
    SUBCASE("weights validate") {
        LossWeights bad;
        bad.lambda_mi = -1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

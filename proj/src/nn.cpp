#include "oogan/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace oogan::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

void adam_step(const std::vector<Param*>& params, double lr, double beta1, double beta2,
               double eps) {
    for (Param* p : params) {
        p->steps += 1;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->steps));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->steps));
        for (int64_t i = 0; i < p->w.numel(); ++i) {
            double g = p->g[i];
            double m = beta1 * p->m[i] + (1.0 - beta1) * g;
            double v = beta2 * p->v[i] + (1.0 - beta2) * g * g;
            p->m[i] = m;
            p->v[i] = v;
            p->w[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d Conv2d::make(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad,
                    int groups, bool bias, Rng& rng, double init_sd) {
    if (in_ch <= 0 || out_ch <= 0 || k <= 0 || stride <= 0 || pad < 0 || groups <= 0)
        throw std::invalid_argument("Conv2d " + name + ": bad geometry");
    if (in_ch % groups != 0 || out_ch % groups != 0)
        throw std::invalid_argument("Conv2d " + name + ": groups must divide channel counts");
    Conv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.groups = groups;
    c.has_bias = bias;
    c.weight.name = name + ".w";
    c.weight.init_shape({out_ch, in_ch / groups, k, k});
    rng.fill_normal(c.weight.w.data(), c.weight.w.numel(), 0.0, init_sd);
    if (bias) {
        c.bias.name = name + ".b";
        c.bias.init_shape({out_ch});
    }
    c.sn_u.name = name + ".sn_u";
    c.sn_v.name = name + ".sn_v";
    return c;
}

void Conv2d::enable_spectral_norm(Rng& rng) {
    sn = true;
    int rows = out_ch;
    int cols = (in_ch / groups) * k * k;
    sn_u.w = Tensor({rows});
    sn_v.w = Tensor({cols});
    rng.fill_normal(sn_u.w.data(), rows);
    MapVec u(sn_u.w.data(), rows);
    u /= (u.norm() + 1e-12);
    sn_power_iteration(1);  // makes v consistent with u and unit-length
}

void Conv2d::sn_power_iteration(int steps) {
    int rows = out_ch;
    int cols = (in_ch / groups) * k * k;
    CMapMat W(weight.w.data(), rows, cols);
    MapVec u(sn_u.w.data(), rows);
    MapVec v(sn_v.w.data(), cols);
    for (int s = 0; s < steps; ++s) {
        v.noalias() = W.transpose() * u;
        v /= (v.norm() + 1e-12);
        u.noalias() = W * v;
        u /= (u.norm() + 1e-12);
    }
}

double Conv2d::sn_sigma() const {
    int rows = out_ch;
    int cols = (in_ch / groups) * k * k;
    CMapMat W(weight.w.data(), rows, cols);
    CMapVec u(sn_u.w.data(), rows);
    CMapVec v(sn_v.w.data(), cols);
    return u.dot(W * v);
}

namespace {
/// Gathers one sample's group-slice into a [icg*k*k, oh*ow] row-major patch
/// matrix. Out-of-bounds taps read as zero.
void im2col(const double* x, int in_ch_total, int H, int W, int icg, int c0, int k, int stride,
            int pad, int oh, int ow, double* col) {
    (void)in_ch_total;
    for (int ic = 0; ic < icg; ++ic) {
        const double* xc = x + static_cast<int64_t>(c0 + ic) * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* row = col + (static_cast<int64_t>(ic) * k * k + ky * k + kx) *
                                        (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        row[static_cast<int64_t>(oy) * ow + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? xc[static_cast<int64_t>(iy) * W + ix]
                                : 0.0;
                    }
                }
            }
    }
}

void col2im_add(const double* col, int H, int W, int icg, int c0, int k, int stride, int pad,
                int oh, int ow, double* gx) {
    for (int ic = 0; ic < icg; ++ic) {
        double* gc = gx + static_cast<int64_t>(c0 + ic) * H * W;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* row = col + (static_cast<int64_t>(ic) * k * k + ky * k + kx) *
                                              (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        gc[static_cast<int64_t>(iy) * W + ix] +=
                            row[static_cast<int64_t>(oy) * ow + ox];
                    }
                }
            }
    }
}
}  // namespace

Tensor Conv2d::forward(const Tensor& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != in_ch)
        throw std::invalid_argument("Conv2d " + weight.name + ": input shape " +
                                    shape_string(x.shape) + " does not match in_ch=" +
                                    std::to_string(in_ch));
    int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    int oh = out_h(H), ow = out_h(W);
    if (oh <= 0 || ow <= 0)
        throw std::invalid_argument("Conv2d " + weight.name + ": input too small");

    if (sn && train) sn_power_iteration(1);
    sigma_cache_ = sn ? sn_sigma() : 1.0;
    double scale = sn ? 1.0 / sigma_cache_ : 1.0;

    x_cache_ = x;
    int icg = in_ch / groups, ocg = out_ch / groups;
    int64_t R = static_cast<int64_t>(icg) * k * k;
    int64_t C = static_cast<int64_t>(oh) * ow;

    Tensor out({B, out_ch, oh, ow});
    std::vector<double> colbuf(static_cast<size_t>(R * C));
    for (int n = 0; n < B; ++n) {
        const double* xn = x.data() + static_cast<int64_t>(n) * in_ch * H * W;
        for (int g = 0; g < groups; ++g) {
            im2col(xn, in_ch, H, W, icg, g * icg, k, stride, pad, oh, ow, colbuf.data());
            CMapMat Wg(weight.w.data() + static_cast<int64_t>(g) * ocg * R, ocg, R);
            CMapMat col(colbuf.data(), R, C);
            MapMat Og(out.data() + (static_cast<int64_t>(n) * out_ch + g * ocg) * C, ocg, C);
            Og.noalias() = Wg * col;
            if (scale != 1.0) Og *= scale;
        }
    }
    if (has_bias) {
        for (int n = 0; n < B; ++n)
            for (int oc = 0; oc < out_ch; ++oc) {
                double b = bias.w[oc];
                double* o = out.data() + (static_cast<int64_t>(n) * out_ch + oc) * C;
                for (int64_t i = 0; i < C; ++i) o[i] += b;
            }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& gout) {
    const Tensor& x = x_cache_;
    if (x.empty()) throw std::logic_error("Conv2d " + weight.name + ": backward before forward");
    int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    int oh = out_h(H), ow = out_h(W);
    if (gout.rank() != 4 || gout.dim(0) != B || gout.dim(1) != out_ch || gout.dim(2) != oh ||
        gout.dim(3) != ow)
        throw std::invalid_argument("Conv2d " + weight.name + ": gradient shape mismatch");

    int icg = in_ch / groups, ocg = out_ch / groups;
    int64_t R = static_cast<int64_t>(icg) * k * k;
    int64_t C = static_cast<int64_t>(oh) * ow;
    double scale = sn ? 1.0 / sigma_cache_ : 1.0;

    Tensor gin({B, in_ch, H, W});
    Tensor dwhat({out_ch, icg, k, k});  // grad w.r.t. the (normalized) weight
    std::vector<double> colbuf(static_cast<size_t>(R * C));
    std::vector<double> dcolbuf(static_cast<size_t>(R * C));

    for (int n = 0; n < B; ++n) {
        const double* xn = x.data() + static_cast<int64_t>(n) * in_ch * H * W;
        double* gn = gin.data() + static_cast<int64_t>(n) * in_ch * H * W;
        for (int g = 0; g < groups; ++g) {
            im2col(xn, in_ch, H, W, icg, g * icg, k, stride, pad, oh, ow, colbuf.data());
            CMapMat col(colbuf.data(), R, C);
            CMapMat Go(gout.data() + (static_cast<int64_t>(n) * out_ch + g * ocg) * C, ocg, C);
            MapMat dWg(dwhat.data() + static_cast<int64_t>(g) * ocg * R, ocg, R);
            dWg.noalias() += Go * col.transpose();

            CMapMat Wg(weight.w.data() + static_cast<int64_t>(g) * ocg * R, ocg, R);
            MapMat dcol(dcolbuf.data(), R, C);
            dcol.noalias() = Wg.transpose() * Go;
            if (scale != 1.0) dcol *= scale;
            col2im_add(dcolbuf.data(), H, W, icg, g * icg, k, stride, pad, oh, ow, gn);
        }
    }

    if (has_bias) {
        for (int n = 0; n < B; ++n)
            for (int oc = 0; oc < out_ch; ++oc) {
                const double* go = gout.data() + (static_cast<int64_t>(n) * out_ch + oc) * C;
                double s = 0;
                for (int64_t i = 0; i < C; ++i) s += go[i];
                bias.g[oc] += s;
            }
    }

    if (!sn) {
        weight.g.add_(dwhat);
    } else {
        // dL/dW = (dL/dWhat - <dL/dWhat, What> u v^T) / sigma, u/v/sigma from forward
        int64_t rows = out_ch, cols = R;
        CMapMat dWh(dwhat.data(), rows, cols);
        CMapMat Wfull(weight.w.data(), rows, cols);
        CMapVec u(sn_u.w.data(), rows);
        CMapVec v(sn_v.w.data(), cols);
        double inner = (dWh.array() * (Wfull.array() / sigma_cache_)).sum();
        MapMat Gw(weight.g.data(), rows, cols);
        Gw.noalias() += (dWh - inner * (u * v.transpose())) / sigma_cache_;
    }
    return gin;
}

void Conv2d::params(std::vector<Param*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

void Conv2d::buffers(std::vector<Buffer*>& out) {
    if (sn) {
        out.push_back(&sn_u);
        out.push_back(&sn_v);
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear Linear::make(const std::string& name, int in_f, int out_f, bool bias, Rng& rng,
                    double init_sd) {
    if (in_f <= 0 || out_f <= 0) throw std::invalid_argument("Linear " + name + ": bad shape");
    Linear l;
    l.in_f = in_f;
    l.out_f = out_f;
    l.has_bias = bias;
    l.weight.name = name + ".w";
    l.weight.init_shape({out_f, in_f});
    rng.fill_normal(l.weight.w.data(), l.weight.w.numel(), 0.0, init_sd);
    if (bias) {
        l.bias.name = name + ".b";
        l.bias.init_shape({out_f});
    }
    return l;
}

Tensor Linear::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_f)
        throw std::invalid_argument("Linear " + weight.name + ": input shape " +
                                    shape_string(x.shape));
    int B = x.dim(0);
    x_cache_ = x;
    Tensor y({B, out_f});
    CMapMat X(x.data(), B, in_f);
    CMapMat W(weight.w.data(), out_f, in_f);
    MapMat Y(y.data(), B, out_f);
    Y.noalias() = X * W.transpose();
    if (has_bias)
        for (int n = 0; n < B; ++n)
            for (int o = 0; o < out_f; ++o) y.at(n, o) += bias.w[o];
    return y;
}

Tensor Linear::backward(const Tensor& gout) {
    const Tensor& x = x_cache_;
    if (x.empty()) throw std::logic_error("Linear " + weight.name + ": backward before forward");
    int B = x.dim(0);
    if (gout.rank() != 2 || gout.dim(0) != B || gout.dim(1) != out_f)
        throw std::invalid_argument("Linear " + weight.name + ": gradient shape mismatch");
    CMapMat X(x.data(), B, in_f);
    CMapMat Gy(gout.data(), B, out_f);
    MapMat Gw(weight.g.data(), out_f, in_f);
    Gw.noalias() += Gy.transpose() * X;
    if (has_bias)
        for (int n = 0; n < B; ++n)
            for (int o = 0; o < out_f; ++o) bias.g[o] += gout.at(n, o);
    Tensor gin({B, in_f});
    MapMat Gx(gin.data(), B, in_f);
    CMapMat W(weight.w.data(), out_f, in_f);
    Gx.noalias() = Gy * W;
    return gin;
}

void Linear::params(std::vector<Param*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BatchNorm2d BatchNorm2d::make(const std::string& name, int ch) {
    BatchNorm2d bn;
    bn.ch = ch;
    bn.gamma.name = name + ".gamma";
    bn.gamma.init_shape({ch});
    bn.gamma.w.fill_(1.0);
    bn.beta.name = name + ".beta";
    bn.beta.init_shape({ch});
    bn.running_mean.name = name + ".running_mean";
    bn.running_mean.w = Tensor({ch});
    bn.running_var.name = name + ".running_var";
    bn.running_var.w = Tensor::full({ch}, 1.0);
    return bn;
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != ch)
        throw std::invalid_argument("BatchNorm2d " + gamma.name + ": input shape " +
                                    shape_string(x.shape));
    int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    int64_t hw = static_cast<int64_t>(H) * W;
    int64_t cnt = static_cast<int64_t>(B) * hw;
    last_train_ = train;
    Tensor y(x.shape);

    if (train) {
        xhat_cache_ = Tensor(x.shape);
        invstd_cache_.assign(static_cast<size_t>(ch), 0.0);
        for (int c = 0; c < ch; ++c) {
            double mean = 0, var = 0;
            for (int n = 0; n < B; ++n) {
                const double* p = x.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) mean += p[i];
            }
            mean /= static_cast<double>(cnt);
            for (int n = 0; n < B; ++n) {
                const double* p = x.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    double dxi = p[i] - mean;
                    var += dxi * dxi;
                }
            }
            var /= static_cast<double>(cnt);
            double invstd = 1.0 / std::sqrt(var + eps);
            invstd_cache_[static_cast<size_t>(c)] = invstd;
            double g = gamma.w[c], b = beta.w[c];
            for (int n = 0; n < B; ++n) {
                const double* p = x.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                double* xh = xhat_cache_.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                double* o = y.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    double h = (p[i] - mean) * invstd;
                    xh[i] = h;
                    o[i] = g * h + b;
                }
            }
            double var_running = cnt > 1 ? var * static_cast<double>(cnt) /
                                               static_cast<double>(cnt - 1)
                                         : var;
            running_mean.w[c] = (1.0 - momentum) * running_mean.w[c] + momentum * mean;
            running_var.w[c] = (1.0 - momentum) * running_var.w[c] + momentum * var_running;
        }
    } else {
        for (int c = 0; c < ch; ++c) {
            double mean = running_mean.w[c];
            double invstd = 1.0 / std::sqrt(running_var.w[c] + eps);
            double g = gamma.w[c], b = beta.w[c];
            for (int n = 0; n < B; ++n) {
                const double* p = x.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                double* o = y.data() + (static_cast<int64_t>(n) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) o[i] = g * (p[i] - mean) * invstd + b;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& gout) {
    if (!last_train_ || xhat_cache_.empty())
        throw std::logic_error("BatchNorm2d " + gamma.name +
                               ": backward requires a preceding train-mode forward");
    if (!gout.same_shape(xhat_cache_))
        throw std::invalid_argument("BatchNorm2d " + gamma.name + ": gradient shape mismatch");
    int B = gout.dim(0), H = gout.dim(2), W = gout.dim(3);
    int64_t hw = static_cast<int64_t>(H) * W;
    double cnt = static_cast<double>(static_cast<int64_t>(B) * hw);

    Tensor gin(gout.shape);
    for (int c = 0; c < ch; ++c) {
        double s1 = 0, s2 = 0;
        for (int n = 0; n < B; ++n) {
            const double* gy = gout.data() + (static_cast<int64_t>(n) * ch + c) * hw;
            const double* xh = xhat_cache_.data() + (static_cast<int64_t>(n) * ch + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                s1 += gy[i];
                s2 += gy[i] * xh[i];
            }
        }
        gamma.g[c] += s2;
        beta.g[c] += s1;
        double g = gamma.w[c];
        double invstd = invstd_cache_[static_cast<size_t>(c)];
        for (int n = 0; n < B; ++n) {
            const double* gy = gout.data() + (static_cast<int64_t>(n) * ch + c) * hw;
            const double* xh = xhat_cache_.data() + (static_cast<int64_t>(n) * ch + c) * hw;
            double* gx = gin.data() + (static_cast<int64_t>(n) * ch + c) * hw;
            for (int64_t i = 0; i < hw; ++i)
                gx[i] = g * invstd * (gy[i] - s1 / cnt - xh[i] * s2 / cnt);
        }
    }
    return gin;
}

void BatchNorm2d::params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::buffers(std::vector<Buffer*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// activations & resampling
// ---------------------------------------------------------------------------

Tensor LeakyReLU::forward(const Tensor& x) {
    x_cache_ = x;
    Tensor y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] >= 0 ? x[i] : slope * x[i];
    return y;
}

Tensor LeakyReLU::backward(const Tensor& gout) const {
    if (!gout.same_shape(x_cache_)) throw std::invalid_argument("LeakyReLU: gradient shape");
    Tensor gin(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i)
        gin[i] = x_cache_[i] >= 0 ? gout[i] : slope * gout[i];
    return gin;
}

Tensor Sigmoid::forward(const Tensor& x) {
    y_cache_ = Tensor(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y_cache_[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y_cache_;
}

Tensor Sigmoid::backward(const Tensor& gout) const {
    if (!gout.same_shape(y_cache_)) throw std::invalid_argument("Sigmoid: gradient shape");
    Tensor gin(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i)
        gin[i] = gout[i] * y_cache_[i] * (1.0 - y_cache_[i]);
    return gin;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return y;
}

Tensor AvgPool2x2::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw std::invalid_argument("AvgPool2x2: input " + shape_string(x.shape) +
                                    " must be rank-4 with even spatial dims");
    in_shape_ = x.shape;
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, C, H / 2, W / 2});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            double* o = y.data() + (static_cast<int64_t>(n) * C + c) * (H / 2) * (W / 2);
            for (int oy = 0; oy < H / 2; ++oy)
                for (int ox = 0; ox < W / 2; ++ox) {
                    const double* q = p + static_cast<int64_t>(2 * oy) * W + 2 * ox;
                    o[static_cast<int64_t>(oy) * (W / 2) + ox] =
                        0.25 * (q[0] + q[1] + q[W] + q[W + 1]);
                }
        }
    return y;
}

Tensor AvgPool2x2::backward(const Tensor& gout) const {
    if (in_shape_.empty()) throw std::logic_error("AvgPool2x2: backward before forward");
    int B = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor gin({B, C, H, W});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const double* go = gout.data() + (static_cast<int64_t>(n) * C + c) * (H / 2) * (W / 2);
            double* gx = gin.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            for (int oy = 0; oy < H / 2; ++oy)
                for (int ox = 0; ox < W / 2; ++ox) {
                    double g = 0.25 * go[static_cast<int64_t>(oy) * (W / 2) + ox];
                    double* q = gx + static_cast<int64_t>(2 * oy) * W + 2 * ox;
                    q[0] += g;
                    q[1] += g;
                    q[W] += g;
                    q[W + 1] += g;
                }
        }
    return gin;
}

namespace {
struct LerpIndex {
    int i0, i1;
    double w0, w1;
};
std::vector<LerpIndex> up2_table(int in_len) {
    std::vector<LerpIndex> t(static_cast<size_t>(2 * in_len));
    for (int o = 0; o < 2 * in_len; ++o) {
        double s = (o + 0.5) / 2.0 - 0.5;
        s = std::max(0.0, std::min(static_cast<double>(in_len - 1), s));
        int i0 = static_cast<int>(std::floor(s));
        int i1 = std::min(i0 + 1, in_len - 1);
        double w1 = s - i0;
        t[static_cast<size_t>(o)] = {i0, i1, 1.0 - w1, w1};
    }
    return t;
}
}  // namespace

Tensor BilinearUp2::forward(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("BilinearUp2: rank-4 input required");
    in_shape_ = x.shape;
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto ty = up2_table(H), tx = up2_table(W);
    Tensor y({B, C, 2 * H, 2 * W});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            double* o = y.data() + (static_cast<int64_t>(n) * C + c) * 4 * H * W;
            for (int oy = 0; oy < 2 * H; ++oy) {
                const LerpIndex& ay = ty[static_cast<size_t>(oy)];
                for (int ox = 0; ox < 2 * W; ++ox) {
                    const LerpIndex& ax = tx[static_cast<size_t>(ox)];
                    o[static_cast<int64_t>(oy) * 2 * W + ox] =
                        ay.w0 * (ax.w0 * p[static_cast<int64_t>(ay.i0) * W + ax.i0] +
                                 ax.w1 * p[static_cast<int64_t>(ay.i0) * W + ax.i1]) +
                        ay.w1 * (ax.w0 * p[static_cast<int64_t>(ay.i1) * W + ax.i0] +
                                 ax.w1 * p[static_cast<int64_t>(ay.i1) * W + ax.i1]);
                }
            }
        }
    return y;
}

Tensor BilinearUp2::backward(const Tensor& gout) const {
    if (in_shape_.empty()) throw std::logic_error("BilinearUp2: backward before forward");
    int B = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    if (gout.rank() != 4 || gout.dim(2) != 2 * H || gout.dim(3) != 2 * W)
        throw std::invalid_argument("BilinearUp2: gradient shape mismatch");
    auto ty = up2_table(H), tx = up2_table(W);
    Tensor gin({B, C, H, W});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const double* go = gout.data() + (static_cast<int64_t>(n) * C + c) * 4 * H * W;
            double* gx = gin.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            for (int oy = 0; oy < 2 * H; ++oy) {
                const LerpIndex& ay = ty[static_cast<size_t>(oy)];
                for (int ox = 0; ox < 2 * W; ++ox) {
                    const LerpIndex& ax = tx[static_cast<size_t>(ox)];
                    double g = go[static_cast<int64_t>(oy) * 2 * W + ox];
                    gx[static_cast<int64_t>(ay.i0) * W + ax.i0] += ay.w0 * ax.w0 * g;
                    gx[static_cast<int64_t>(ay.i0) * W + ax.i1] += ay.w0 * ax.w1 * g;
                    gx[static_cast<int64_t>(ay.i1) * W + ax.i0] += ay.w1 * ax.w0 * g;
                    gx[static_cast<int64_t>(ay.i1) * W + ax.i1] += ay.w1 * ax.w1 * g;
                }
            }
        }
    return gin;
}

}  // namespace oogan::nn

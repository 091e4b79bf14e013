#include "oogan/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace oogan::objectives {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;

void check_pred_shapes(const QPrediction& pred, const Tensor& c, const char* who) {
    if (pred.c_hat.rank() != 2 || c.rank() != 2 || !pred.c_hat.same_shape(c))
        throw std::invalid_argument(std::string(who) + ": prediction/code shape mismatch " +
                                    shape_string(pred.c_hat.shape) + " vs " +
                                    shape_string(c.shape));
}
}  // namespace

void LossWeights::validate() const {
    if (lambda_mi < 0 || gamma_ce < 0 || ortho_weight < 0)
        throw std::invalid_argument("LossWeights: weights must be nonnegative");
}

double hinge_d_loss(const std::vector<double>& real_scores,
                    const std::vector<double>& fake_scores, std::vector<double>* grad_real,
                    std::vector<double>* grad_fake) {
    if (real_scores.empty() || fake_scores.empty())
        throw std::invalid_argument("hinge_d_loss: empty score batch");
    double loss = 0.0;
    double nr = static_cast<double>(real_scores.size());
    double nf = static_cast<double>(fake_scores.size());
    if (grad_real) grad_real->assign(real_scores.size(), 0.0);
    if (grad_fake) grad_fake->assign(fake_scores.size(), 0.0);
    for (size_t i = 0; i < real_scores.size(); ++i) {
        double m = 1.0 - real_scores[i];
        if (m > 0) {
            loss += m / nr;
            if (grad_real) (*grad_real)[i] = -1.0 / nr;
        }
    }
    for (size_t i = 0; i < fake_scores.size(); ++i) {
        double m = 1.0 + fake_scores[i];
        if (m > 0) {
            loss += m / nf;
            if (grad_fake) (*grad_fake)[i] = 1.0 / nf;
        }
    }
    return loss;
}

double g_adv_loss(const std::vector<double>& fake_scores, std::vector<double>* grad_fake) {
    if (fake_scores.empty()) throw std::invalid_argument("g_adv_loss: empty score batch");
    double n = static_cast<double>(fake_scores.size());
    double s = 0.0;
    for (double x : fake_scores) s += x;
    if (grad_fake) grad_fake->assign(fake_scores.size(), -1.0 / n);
    return -s / n;
}

double mi_loss_det(const QPrediction& pred, const Tensor& c, Tensor* d_c_hat) {
    if (pred.probabilistic)
        throw std::logic_error("mi_loss_det: prediction is in probabilistic mode");
    check_pred_shapes(pred, c, "mi_loss_det");
    int64_t n = c.numel();
    if (d_c_hat && d_c_hat->empty()) *d_c_hat = Tensor(c.shape);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double diff = pred.c_hat[i] - c[i];
        loss += std::fabs(diff);
        if (d_c_hat)
            (*d_c_hat)[i] += (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) / static_cast<double>(n);
    }
    return loss / static_cast<double>(n);
}

double mi_loss_prob(const QPrediction& pred, const Tensor& c, Tensor* d_mu, Tensor* d_sigma) {
    if (!pred.probabilistic)
        throw std::logic_error("mi_loss_prob: prediction is in deterministic mode");
    check_pred_shapes(pred, c, "mi_loss_prob");
    if (!pred.sigma.same_shape(c))
        throw std::invalid_argument("mi_loss_prob: sigma shape mismatch");
    int64_t n = c.numel();
    if (d_mu && d_mu->empty()) *d_mu = Tensor(c.shape);
    if (d_sigma && d_sigma->empty()) *d_sigma = Tensor(c.shape);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double mu = pred.c_hat[i], sg = pred.sigma[i], cv = c[i];
        if (!(sg > 0)) throw std::logic_error("mi_loss_prob: sigma must be positive");
        double diff = cv - mu;
        loss += std::log(sg) + diff * diff / (2.0 * sg * sg) + kHalfLog2Pi;
        if (d_mu) (*d_mu)[i] += (mu - cv) / (sg * sg) / static_cast<double>(n);
        if (d_sigma)
            (*d_sigma)[i] += (1.0 / sg - diff * diff / (sg * sg * sg)) / static_cast<double>(n);
    }
    return loss / static_cast<double>(n);
}

double onehot_ce_loss(const QPrediction& pred, const Tensor& c, Tensor* d_logits) {
    if (pred.logits.rank() != 2 || c.rank() != 2 || !pred.logits.same_shape(c))
        throw std::invalid_argument("onehot_ce_loss: logits/code shape mismatch");
    int B = c.dim(0), d = c.dim(1);
    if (d_logits && d_logits->empty()) *d_logits = Tensor(c.shape);
    double loss = 0.0;
    for (int n = 0; n < B; ++n) {
        int hot = latent::hot_index_row(c, n);
        if (hot < 0)
            throw std::invalid_argument("onehot_ce_loss: code row " + std::to_string(n) +
                                        " is not one-hot");
        double mx = pred.logits.at(n, 0);
        for (int j = 1; j < d; ++j) mx = std::max(mx, pred.logits.at(n, j));
        double Z = 0.0;
        for (int j = 0; j < d; ++j) Z += std::exp(pred.logits.at(n, j) - mx);
        loss += -(pred.logits.at(n, hot) - mx - std::log(Z));
        if (d_logits)
            for (int j = 0; j < d; ++j) {
                double p = std::exp(pred.logits.at(n, j) - mx) / Z;
                d_logits->at(n, j) += (p - (j == hot ? 1.0 : 0.0)) / static_cast<double>(B);
            }
    }
    return loss / static_cast<double>(B);
}

double orthogonal_reg(const KernelLayers& kernels, bool signed_mode, KernelLayers* grads) {
    if (grads) {
        grads->clear();
        grads->resize(kernels.size());
        for (size_t l = 0; l < kernels.size(); ++l) {
            (*grads)[l].resize(kernels[l].size());
            for (size_t k = 0; k < kernels[l].size(); ++k)
                (*grads)[l][k].assign(kernels[l][k].size(), 0.0);
        }
    }
    double total = 0.0;
    for (size_t l = 0; l < kernels.size(); ++l) {
        const auto& layer = kernels[l];
        size_t K = layer.size();
        if (K < 2)
            throw std::invalid_argument("orthogonal_reg: layer " + std::to_string(l) +
                                        " needs at least 2 kernels");
        std::vector<double> norms(K);
        for (size_t a = 0; a < K; ++a) {
            double s = 0;
            for (double x : layer[a]) s += x * x;
            norms[a] = std::sqrt(s);
        }
        double pairs = static_cast<double>(K * (K - 1) / 2);
        double acc = 0.0;
        for (size_t a = 0; a < K; ++a)
            for (size_t b = a + 1; b < K; ++b) {
                if (norms[a] == 0.0 || norms[b] == 0.0) continue;  // degenerate pair: 0
                if (layer[a].size() != layer[b].size())
                    throw std::invalid_argument("orthogonal_reg: kernel length mismatch in layer " +
                                                std::to_string(l));
                double dot = 0;
                for (size_t i = 0; i < layer[a].size(); ++i) dot += layer[a][i] * layer[b][i];
                double cosab = dot / (norms[a] * norms[b]);
                double s = signed_mode ? 1.0 : (cosab > 0 ? 1.0 : cosab < 0 ? -1.0 : 0.0);
                acc += signed_mode ? cosab : std::fabs(cosab);
                if (grads) {
                    // d cos/d u_a = v/(|u||v|) - cos * u/|u|^2, scaled by sign/pairs
                    double ca = s / (pairs * norms[a] * norms[b]);
                    double cb = s * cosab / pairs;
                    for (size_t i = 0; i < layer[a].size(); ++i) {
                        (*grads)[l][a][i] += ca * layer[b][i] - cb * layer[a][i] / (norms[a] * norms[a]);
                        (*grads)[l][b][i] += ca * layer[a][i] - cb * layer[b][i] / (norms[b] * norms[b]);
                    }
                }
            }
        total += acc / pairs;
    }
    return total;
}

MiTerms total_mi_objective(const QPrediction& pred, const Tensor& c, latent::CodeKind kind,
                           const LossWeights& weights, Tensor* d_c_hat_or_mu, Tensor* d_sigma,
                           Tensor* d_logits) {
    weights.validate();
    MiTerms out;
    Tensor d_main, d_sg, d_lg;
    if (pred.probabilistic) {
        out.mi = mi_loss_prob(pred, c, d_c_hat_or_mu ? &d_main : nullptr,
                              d_sigma ? &d_sg : nullptr);
    } else {
        out.mi = mi_loss_det(pred, c, d_c_hat_or_mu ? &d_main : nullptr);
    }
    if (kind == latent::CodeKind::one_hot) {
        out.ce = onehot_ce_loss(pred, c, d_logits ? &d_lg : nullptr);
    }
    out.total = weights.lambda_mi * out.mi + weights.gamma_ce * out.ce;

    if (d_c_hat_or_mu) {
        if (d_c_hat_or_mu->empty()) *d_c_hat_or_mu = Tensor(c.shape);
        for (int64_t i = 0; i < c.numel(); ++i)
            (*d_c_hat_or_mu)[i] += weights.lambda_mi * d_main[i];
    }
    if (d_sigma && pred.probabilistic) {
        if (d_sigma->empty()) *d_sigma = Tensor(c.shape);
        for (int64_t i = 0; i < c.numel(); ++i) (*d_sigma)[i] += weights.lambda_mi * d_sg[i];
    }
    if (d_logits && kind == latent::CodeKind::one_hot) {
        if (d_logits->empty()) *d_logits = Tensor(c.shape);
        for (int64_t i = 0; i < c.numel(); ++i) (*d_logits)[i] += weights.gamma_ce * d_lg[i];
    }
    return out;
}

}  // namespace oogan::objectives

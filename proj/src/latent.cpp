#include "oogan/latent.hpp"

#include <stdexcept>

namespace oogan::latent {

void SamplingSchedule::validate() const {
    if (period <= 0) throw std::invalid_argument("SamplingSchedule: period must be positive");
    if (onehot_phase < 0 || onehot_phase >= period)
        throw std::invalid_argument("SamplingSchedule: onehot_phase must lie in [0, period)");
}

LatentCode sample_uniform_code(int d, Rng& rng) {
    if (d <= 0) throw std::invalid_argument("sample_uniform_code: d must be positive");
    LatentCode c;
    c.kind = CodeKind::continuous;
    c.values.resize(static_cast<size_t>(d));
    rng.fill_uniform01(c.values.data(), d);
    return c;
}

LatentCode sample_onehot_code(int d, Rng& rng) {
    if (d <= 0) throw std::invalid_argument("sample_onehot_code: d must be positive");
    LatentCode c;
    c.kind = CodeKind::one_hot;
    c.values.assign(static_cast<size_t>(d), 0.0);
    c.hot_index = static_cast<int>(rng.randint(d));
    c.values[static_cast<size_t>(c.hot_index)] = 1.0;
    return c;
}

NoiseVector sample_noise(int n_z, Rng& rng) {
    if (n_z <= 0) throw std::invalid_argument("sample_noise: n_z must be positive");
    NoiseVector z;
    z.values.resize(static_cast<size_t>(n_z));
    rng.fill_normal(z.values.data(), n_z);
    return z;
}

CodeKind schedule_kind(const SamplingSchedule& schedule, long iteration) {
    schedule.validate();
    if (iteration < 1) throw std::invalid_argument("schedule_kind: iteration must be >= 1");
    return iteration % schedule.period == schedule.onehot_phase ? CodeKind::one_hot
                                                                : CodeKind::continuous;
}

Tensor sample_code_batch(int B, int d, CodeKind kind, Rng& rng) {
    if (B <= 0) throw std::invalid_argument("sample_code_batch: B must be positive");
    Tensor out({B, d});
    for (int n = 0; n < B; ++n) {
        LatentCode c = kind == CodeKind::one_hot ? sample_onehot_code(d, rng)
                                                 : sample_uniform_code(d, rng);
        for (int j = 0; j < d; ++j) out.at(n, j) = c.values[static_cast<size_t>(j)];
    }
    return out;
}

Tensor sample_noise_batch(int B, int n_z, Rng& rng) {
    if (B <= 0) throw std::invalid_argument("sample_noise_batch: B must be positive");
    if (n_z <= 0) throw std::invalid_argument("sample_noise_batch: n_z must be positive");
    Tensor out({B, n_z});
    rng.fill_normal(out.data(), out.numel());
    return out;
}

bool is_onehot_row(const Tensor& codes, int row) { return hot_index_row(codes, row) >= 0; }

int hot_index_row(const Tensor& codes, int row) {
    int d = codes.dim(1);
    int hot = -1;
    for (int j = 0; j < d; ++j) {
        double x = codes.at(row, j);
        if (x == 1.0) {
            if (hot >= 0) return -1;
            hot = j;
        } else if (x != 0.0) {
            return -1;
        }
    }
    return hot;
}

}  // namespace oogan::latent

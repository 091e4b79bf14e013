#pragma once

#include <vector>

#include "oogan/rng.hpp"
#include "oogan/tensor.hpp"

namespace oogan::latent {

enum class CodeKind { continuous, one_hot };

/// Control vector c. Entries always lie in [0,1]; one-hot codes additionally
/// carry the index of their single 1.
struct LatentCode {
    std::vector<double> values;
    CodeKind kind = CodeKind::continuous;
    int hot_index = -1;  // valid iff kind == one_hot
};

struct NoiseVector {
    std::vector<double> values;
};

/// Alternation between one-hot and continuous sampling. The default (period
/// 2, phase 1) makes odd iterations one-hot and even ones continuous; a batch
/// shares a single kind per iteration.
struct SamplingSchedule {
    int period = 2;
    int onehot_phase = 1;
    void validate() const;
};

LatentCode sample_uniform_code(int d, Rng& rng);
LatentCode sample_onehot_code(int d, Rng& rng);
NoiseVector sample_noise(int n_z, Rng& rng);
CodeKind schedule_kind(const SamplingSchedule& schedule, long iteration);

// batched forms used by the trainer and metrics (row-per-sample [B,d])
Tensor sample_code_batch(int B, int d, CodeKind kind, Rng& rng);
Tensor sample_noise_batch(int B, int n_z, Rng& rng);

/// True iff row `row` of a [B,d] code batch is exactly one-hot.
bool is_onehot_row(const Tensor& codes, int row);
int hot_index_row(const Tensor& codes, int row);  // -1 when not one-hot

}  // namespace oogan::latent

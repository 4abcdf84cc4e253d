#pragma once

// Isotropic probe of the unembedding map: push one fixed batch of standard
// normal d-vectors through W_U at every checkpoint and count how many singular
// values of the batch-centred images survive a relative tolerance.

#include "wdyn/checkpoint_store.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wdyn::probe {

struct RankCurve {
    std::vector<std::int64_t> steps;
    std::vector<double> tolerances;
    std::vector<std::vector<int>> ranks; // [checkpoint][tolerance]
    std::size_t batch = 0;
    std::uint64_t seed = 0;
};

struct RankDerivative {
    std::vector<std::int64_t> steps; // left end of each interval
    std::vector<double> tolerances;
    std::vector<std::vector<double>> values; // [interval][tolerance]
};

// B x d probe batch, row-major, shared by every checkpoint.
std::vector<double> probe_batch(std::size_t batch, std::size_t d, std::uint64_t seed);

// Singular values (descending) of the batch-centred B x v image matrix
// probe * W for a row-major (d x v) matrix W. Computed from the B x B Gram
// matrix; the v x v covariance is never formed.
std::vector<double> centered_singular_values(std::span<const float> w, std::size_t d, std::size_t v,
                                             std::span<const double> probe, std::size_t batch);

// Number of singular values >= tol * max; 0 when all vanish.
int rank_at(std::span<const double> singular_values_desc, double tol);

// Rank per tolerance for one (d x v) matrix.
std::vector<int> rank_profile(std::span<const float> w, std::size_t d, std::size_t v, std::size_t batch,
                              std::span<const double> tolerances, std::uint64_t seed);

RankCurve probe_rank(const store::CheckpointSeries& series, const std::string& tensor, std::size_t batch,
                     std::vector<double> tolerances, std::uint64_t seed);

RankDerivative rank_series_derivative(const RankCurve& curve);

std::string rank_csv(const RankCurve& curve);
std::string rank_derivative_csv(const RankDerivative& derivative);

} // namespace wdyn::probe

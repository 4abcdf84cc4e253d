#pragma once

// Early-stop verdicts from MSD curves and density movies, plus ternary
// quantization of weights that have settled into a zero-symmetric bimodal state.

#include "wdyn/dynamics_stats.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wdyn::detect {

struct DetectorConfig {
    double drop_fraction = 0.5;    // theta, in (0, 1)
    int persistence = 3;           // m
    int stationarity_window = 5;   // w
    double stationarity_eps = 1e-3; // epsilon, W1 in units of the histogram range

    void validate() const;
};

enum class Status { diffusive, peaked, stationary };

std::string_view status_name(Status s) noexcept;

struct Peak {
    std::size_t index = 0;
    std::int64_t step = 0;
};

struct W1Point {
    std::int64_t step = 0; // step of the later histogram in the transition
    double w1 = 0.0;
};

struct StopSignal {
    Status status = Status::diffusive;
    std::optional<std::int64_t> peak_step;
    std::optional<std::int64_t> stop_step;
    float msd_peak_value = 0.0f;
    std::vector<W1Point> evidence;
};

// Earliest running maximum followed, before anything exceeds it, by >= m
// consecutive values below theta * peak.
std::optional<Peak> detect_peak(const stats::MsdCurve& curve, double theta, int m);

// 1-Wasserstein distance between two normalized histograms on the same grid,
// with the grid rescaled to unit range: mean over bins of |CDF_a - CDF_b|.
double wasserstein1(const stats::Histogram& a, const stats::Histogram& b);

// Distances for every consecutive transition (T - 1 entries).
std::vector<W1Point> transition_distances(const stats::DensityMovie& movie);

// First step s at which the last w transitions (ending at s) all have
// W1 < eps. Windows ending before `from_index` are skipped.
std::optional<std::int64_t> stationarity(const stats::DensityMovie& movie, int w, double eps,
                                         std::size_t from_index = 0);

StopSignal early_stop(const stats::MsdCurve& curve, const stats::DensityMovie& movie, const DetectorConfig& cfg);

std::string report_json(const StopSignal& signal, const DetectorConfig& cfg);

struct TernaryQuantization {
    float negative_level = 0.0f; // mu_minus, 0 when absent
    float positive_level = 0.0f; // mu_plus, 0 when absent
    std::vector<std::int8_t> assignments; // -1, 0, +1
    float rmse = 0.0f;

    float level(std::int8_t a) const noexcept {
        return a < 0 ? negative_level : (a > 0 ? positive_level : 0.0f);
    }
};

// Maps each weight to the nearest of {mu_minus, 0, mu_plus}, with thresholds at
// half of each mode location. Refuses reports with more than two modes.
TernaryQuantization quantize_ternary(std::span<const float> weights, const stats::BimodalityReport& report);

} // namespace wdyn::detect

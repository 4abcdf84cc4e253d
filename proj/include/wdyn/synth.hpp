#pragma once

// Ground-truth stochastic processes with analytically known behaviour:
// white noise, Brownian motion, Ornstein-Uhlenbeck and the pitchfork normal
// form dw = (a(t) w - w^3) dt + sigma dW with a linear ramp a(t).

#include "wdyn/checkpoint_store.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace wdyn::synth {

enum class ProcessKind { white_noise, brownian, ou, pitchfork };

std::string_view kind_name(ProcessKind kind) noexcept;
ProcessKind parse_kind(std::string_view name);

struct SdeConfig {
    ProcessKind kind = ProcessKind::white_noise;
    std::size_t particles = 2; // K
    std::size_t steps = 1;     // T
    double dt = 0.1;
    double sigma = 1.0;
    double ou_theta = 1.0;
    double ramp_start = -1.0;
    double ramp_end = 1.0;
    // Standard deviation of the initial state; negative selects the default
    // (0.1 for pitchfork, 0 otherwise).
    double init_std = -1.0;
    std::uint64_t seed = 0;

    void validate() const;
    double initial_std() const noexcept;
    // Pitchfork drift parameter used for the update that produces row t.
    double drift_parameter(std::size_t t) const noexcept;
};

// JSON object with keys kind, K, T, dt, sigma, ou_theta, ramp [a_start, a_end],
// init_std, seed. Only kind, K and T are required.
SdeConfig parse_sde_config(std::string_view json_text);
std::string sde_config_json(const SdeConfig& cfg);

struct GroundTruth {
    std::optional<std::int64_t> bifurcation_step; // row where a(t) changes sign
    std::optional<std::pair<float, float>> terminal_modes; // (-sqrt(a_end), +sqrt(a_end))
    std::optional<double> msd_slope_theory; // sigma^2 for white noise
};

std::string ground_truth_json(const GroundTruth& truth);

struct Simulation {
    store::SeriesSlice slice; // tensor "W_SIM", steps 0..T-1
    GroundTruth truth;
};

// Euler-Maruyama with one counter-based normal per (particle, row), so the
// output is identical at any worker count.
Simulation simulate(const SdeConfig& cfg);
// Same, with explicit initial states (size K) instead of the random default.
Simulation simulate(const SdeConfig& cfg, std::span<const double> initial);

inline constexpr const char* kSimTensor = "W_SIM";

// Writes one WTS1 checkpoint per row at steps t * step_spacing.
store::CheckpointSeries export_series(const store::SeriesSlice& slice, std::int64_t step_spacing,
                                      const std::filesystem::path& out_dir);

} // namespace wdyn::synth

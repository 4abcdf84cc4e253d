#include "wdyn/synth.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"
#include "wdyn/rng.hpp"

#include <json.hpp>

#include <cmath>

namespace wdyn::synth {

std::string_view kind_name(ProcessKind kind) noexcept {
    switch (kind) {
    case ProcessKind::white_noise:
        return "white-noise";
    case ProcessKind::brownian:
        return "brownian";
    case ProcessKind::ou:
        return "ou";
    case ProcessKind::pitchfork:
        return "pitchfork";
    }
    return "white-noise";
}

ProcessKind parse_kind(std::string_view name) {
    for (auto k : {ProcessKind::white_noise, ProcessKind::brownian, ProcessKind::ou, ProcessKind::pitchfork}) {
        if (kind_name(k) == name) {
            return k;
        }
    }
    throw UsageError("unknown process kind '" + std::string(name) + "'");
}

void SdeConfig::validate() const {
    if (particles < 2) {
        throw UsageError("SDE config needs K >= 2");
    }
    if (steps < 1) {
        throw UsageError("SDE config needs T >= 1");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw UsageError("SDE config needs dt > 0");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw UsageError("SDE config needs sigma >= 0");
    }
    if (!(ou_theta >= 0.0) || !std::isfinite(ou_theta)) {
        throw UsageError("SDE config needs ou_theta >= 0");
    }
    if (!std::isfinite(ramp_start) || !std::isfinite(ramp_end)) {
        throw UsageError("SDE config ramp must be finite");
    }
}

double SdeConfig::initial_std() const noexcept {
    if (init_std >= 0.0) {
        return init_std;
    }
    return kind == ProcessKind::pitchfork ? 0.1 : 0.0;
}

double SdeConfig::drift_parameter(std::size_t t) const noexcept {
    return ramp_start + (ramp_end - ramp_start) * double(t) / double(steps);
}

SdeConfig parse_sde_config(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid SDE config JSON: ") + e.what());
    }
    SdeConfig cfg;
    try {
        cfg.kind = parse_kind(j.at("kind").get<std::string>());
        cfg.particles = j.at("K").get<std::size_t>();
        cfg.steps = j.at("T").get<std::size_t>();
        cfg.dt = j.value("dt", cfg.dt);
        cfg.sigma = j.value("sigma", cfg.sigma);
        cfg.ou_theta = j.value("ou_theta", cfg.ou_theta);
        if (j.contains("ramp")) {
            const auto ramp = j.at("ramp").get<std::vector<double>>();
            if (ramp.size() != 2) {
                throw UsageError("SDE config 'ramp' must be [a_start, a_end]");
            }
            cfg.ramp_start = ramp[0];
            cfg.ramp_end = ramp[1];
        }
        cfg.init_std = j.value("init_std", cfg.init_std);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid SDE config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string sde_config_json(const SdeConfig& cfg) {
    nlohmann::ordered_json j;
    j["kind"] = kind_name(cfg.kind);
    j["K"] = cfg.particles;
    j["T"] = cfg.steps;
    j["dt"] = cfg.dt;
    j["sigma"] = cfg.sigma;
    j["ou_theta"] = cfg.ou_theta;
    j["ramp"] = {cfg.ramp_start, cfg.ramp_end};
    j["init_std"] = cfg.initial_std();
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

std::string ground_truth_json(const GroundTruth& truth) {
    nlohmann::ordered_json j;
    j["bifurcation_step"] =
        truth.bifurcation_step ? nlohmann::ordered_json(*truth.bifurcation_step) : nlohmann::ordered_json(nullptr);
    if (truth.terminal_modes) {
        j["terminal_modes"] = {io::widen(truth.terminal_modes->first), io::widen(truth.terminal_modes->second)};
    } else {
        j["terminal_modes"] = nullptr;
    }
    j["msd_slope_theory"] =
        truth.msd_slope_theory ? nlohmann::ordered_json(*truth.msd_slope_theory) : nlohmann::ordered_json(nullptr);
    return j.dump(2) + "\n";
}

namespace {

GroundTruth ground_truth(const SdeConfig& cfg) {
    GroundTruth truth;
    if (cfg.kind == ProcessKind::white_noise) {
        truth.msd_slope_theory = cfg.sigma * cfg.sigma;
    }
    if (cfg.kind == ProcessKind::pitchfork) {
        for (std::size_t t = 1; t < cfg.steps; ++t) {
            const double prev = cfg.drift_parameter(t - 1);
            const double cur = cfg.drift_parameter(t);
            if ((prev < 0.0 && cur >= 0.0) || (prev > 0.0 && cur <= 0.0)) {
                truth.bifurcation_step = static_cast<std::int64_t>(t);
                break;
            }
        }
        if (cfg.ramp_end > 0.0) {
            const auto r = static_cast<float>(std::sqrt(cfg.ramp_end));
            truth.terminal_modes = std::pair{-r, r};
        }
    }
    return truth;
}

Simulation run(const SdeConfig& cfg, std::span<const double> initial) {
    cfg.validate();
    const std::size_t K = cfg.particles;
    const std::size_t T = cfg.steps;
    if (!initial.empty() && initial.size() != K) {
        throw UsageError("initial state size must equal K");
    }

    Simulation sim;
    sim.truth = ground_truth(cfg);
    store::SeriesSlice& slice = sim.slice;
    slice.tensor = kSimTensor;
    slice.cols = K;
    slice.steps.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        slice.steps[t] = static_cast<std::int64_t>(t);
    }
    slice.values.resize(T * K);

    std::vector<double> drift(T);
    for (std::size_t t = 0; t < T; ++t) {
        drift[t] = cfg.drift_parameter(t);
    }
    const double noise = cfg.sigma * std::sqrt(cfg.dt);
    const double init_std = cfg.initial_std();

    std::vector<int> blew_up(chunk_count(K), 0);
    parallel_for(chunk_count(K), [&](std::size_t c) {
        const std::size_t lo = c * kReduceChunk;
        const std::size_t hi = std::min(K, lo + kReduceChunk);
        for (std::size_t k = lo; k < hi; ++k) {
            double w = 0.0;
            if (!initial.empty()) {
                w = initial[k];
            } else if (init_std > 0.0) {
                w = init_std * rng::normal(cfg.seed, rng::Stream::sde_initial, k, 0);
            }
            for (std::size_t t = 0; t < T; ++t) {
                const double xi = rng::normal(cfg.seed, rng::Stream::sde_increment, k, static_cast<std::uint32_t>(t));
                switch (cfg.kind) {
                case ProcessKind::white_noise:
                    w = cfg.sigma * xi;
                    break;
                case ProcessKind::brownian:
                    w += noise * xi;
                    break;
                case ProcessKind::ou:
                    w += -cfg.ou_theta * w * cfg.dt + noise * xi;
                    break;
                case ProcessKind::pitchfork:
                    w += (drift[t] * w - w * w * w) * cfg.dt + noise * xi;
                    break;
                }
                if (!std::isfinite(w)) {
                    blew_up[c] = 1;
                    return;
                }
                slice.values[t * K + k] = static_cast<float>(w);
            }
        }
    });
    for (int b : blew_up) {
        if (b) {
            throw DataError("simulation diverged (non-finite state); reduce dt");
        }
    }
    return sim;
}

} // namespace

Simulation simulate(const SdeConfig& cfg) {
    return run(cfg, {});
}

Simulation simulate(const SdeConfig& cfg, std::span<const double> initial) {
    if (initial.empty()) {
        throw UsageError("initial state must not be empty");
    }
    return run(cfg, initial);
}

store::CheckpointSeries export_series(const store::SeriesSlice& slice, std::int64_t step_spacing,
                                      const std::filesystem::path& out_dir) {
    if (step_spacing < 1) {
        throw UsageError("step spacing must be >= 1");
    }
    std::vector<std::int64_t> steps(slice.rows());
    for (std::size_t t = 0; t < slice.rows(); ++t) {
        steps[t] = static_cast<std::int64_t>(t) * step_spacing;
    }
    store::prepare_series_dir(out_dir, steps);
    const store::Shape shape{static_cast<std::int64_t>(slice.cols)};
    parallel_for(slice.rows(), [&](std::size_t t) {
        const std::int64_t step = steps[t];
        store::TensorMap tensors;
        tensors.emplace(kSimTensor, store::Tensor::f32(shape, slice.row(t)));
        store::write_checkpoint(step, tensors, out_dir / store::checkpoint_filename(step));
    });
    return store::open_series(out_dir);
}

} // namespace wdyn::synth

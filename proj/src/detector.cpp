#include "wdyn/detector.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace wdyn::detect {

void DetectorConfig::validate() const {
    if (!(drop_fraction > 0.0 && drop_fraction < 1.0)) {
        throw UsageError("drop fraction must lie in (0, 1)");
    }
    if (persistence < 1) {
        throw UsageError("persistence must be >= 1");
    }
    if (stationarity_window < 1) {
        throw UsageError("stationarity window must be >= 1");
    }
    if (!(stationarity_eps > 0.0)) {
        throw UsageError("stationarity epsilon must be > 0");
    }
}

std::string_view status_name(Status s) noexcept {
    switch (s) {
    case Status::diffusive:
        return "diffusive";
    case Status::peaked:
        return "peaked";
    case Status::stationary:
        return "stationary";
    }
    return "diffusive";
}

std::optional<Peak> detect_peak(const stats::MsdCurve& curve, double theta, int m) {
    const auto& v = curve.values;
    const auto need = static_cast<std::size_t>(std::max(m, 0));
    if (m < 1 || v.size() < need + 1) {
        return std::nullopt;
    }
    // The fall may start after intermediate values, but only while curve[i]
    // is still the maximum; a later, higher value becomes the new candidate.
    float running = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i + need < v.size(); ++i) {
        running = std::max(running, v[i]);
        if (v[i] < running || !(v[i] > 0.0f)) {
            continue;
        }
        const double bar = theta * double(v[i]);
        std::size_t run = 0;
        for (std::size_t j = i + 1; j < v.size() && v[j] <= v[i]; ++j) {
            run = double(v[j]) < bar ? run + 1 : 0;
            if (run >= need) {
                return Peak{i, curve.steps[i]};
            }
        }
    }
    return std::nullopt;
}

double wasserstein1(const stats::Histogram& a, const stats::Histogram& b) {
    if (a.bins() != b.bins() || a.edges != b.edges) {
        throw DataError("wasserstein1 needs histograms on a shared grid");
    }
    if (a.total <= 0 || b.total <= 0) {
        throw DataError("wasserstein1 needs non-empty histograms");
    }
    double cdf_a = 0.0;
    double cdf_b = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.bins(); ++i) {
        cdf_a += double(a.counts[i]) / double(a.total);
        cdf_b += double(b.counts[i]) / double(b.total);
        acc += std::abs(cdf_a - cdf_b);
    }
    return acc / double(a.bins());
}

std::vector<W1Point> transition_distances(const stats::DensityMovie& movie) {
    std::vector<W1Point> out;
    for (std::size_t t = 1; t < movie.histograms.size(); ++t) {
        out.push_back({movie.steps[t], wasserstein1(movie.histograms[t - 1], movie.histograms[t])});
    }
    return out;
}

namespace {

std::optional<std::size_t> first_stable_index(const std::vector<W1Point>& d, int w, double eps,
                                              std::size_t from_index) {
    // d[j - 1] is the transition into histogram j
    const auto window = static_cast<std::size_t>(w);
    std::size_t run = 0;
    for (std::size_t j = 1; j <= d.size(); ++j) {
        run = d[j - 1].w1 < eps ? run + 1 : 0;
        if (run >= window && j >= from_index) {
            return j;
        }
    }
    return std::nullopt;
}

} // namespace

std::optional<std::int64_t> stationarity(const stats::DensityMovie& movie, int w, double eps,
                                         std::size_t from_index) {
    if (w < 1 || movie.histograms.size() < static_cast<std::size_t>(w) + 1) {
        return std::nullopt;
    }
    const auto idx = first_stable_index(transition_distances(movie), w, eps, from_index);
    if (!idx) {
        return std::nullopt;
    }
    return movie.steps[*idx];
}

StopSignal early_stop(const stats::MsdCurve& curve, const stats::DensityMovie& movie, const DetectorConfig& cfg) {
    cfg.validate();
    if (curve.steps != movie.steps) {
        throw DataError("MSD curve and density movie have different step vectors");
    }
    StopSignal signal;
    signal.evidence = transition_distances(movie);

    const auto peak = detect_peak(curve, cfg.drop_fraction, cfg.persistence);
    if (!peak) {
        signal.status = Status::diffusive;
        if (!curve.values.empty()) {
            signal.msd_peak_value = *std::max_element(curve.values.begin(), curve.values.end());
        }
        return signal;
    }
    signal.peak_step = peak->step;
    signal.msd_peak_value = curve.values[peak->index];
    signal.status = Status::peaked;

    if (movie.histograms.size() >= static_cast<std::size_t>(cfg.stationarity_window) + 1) {
        const auto idx = first_stable_index(signal.evidence, cfg.stationarity_window, cfg.stationarity_eps,
                                            peak->index);
        if (idx) {
            signal.status = Status::stationary;
            signal.stop_step = movie.steps[*idx];
        }
    }
    return signal;
}

std::string report_json(const StopSignal& signal, const DetectorConfig& cfg) {
    nlohmann::ordered_json j;
    j["status"] = status_name(signal.status);
    j["peak_step"] = signal.peak_step ? nlohmann::ordered_json(*signal.peak_step) : nlohmann::ordered_json(nullptr);
    j["stop_step"] = signal.stop_step ? nlohmann::ordered_json(*signal.stop_step) : nlohmann::ordered_json(nullptr);
    j["msd_peak_value"] = io::widen(signal.msd_peak_value);
    j["config"] = {{"drop_fraction", cfg.drop_fraction},
                   {"persistence", cfg.persistence},
                   {"stationarity_window", cfg.stationarity_window},
                   {"stationarity_eps", cfg.stationarity_eps}};
    j["evidence"] = nlohmann::ordered_json::array();
    for (const auto& e : signal.evidence) {
        j["evidence"].push_back({{"step", e.step}, {"w1", e.w1}});
    }
    return j.dump(2) + "\n";
}

TernaryQuantization quantize_ternary(std::span<const float> weights, const stats::BimodalityReport& report) {
    if (report.mode_count < 1 || report.mode_count > 2 ||
        report.mode_locations.size() != static_cast<std::size_t>(report.mode_count)) {
        throw DataError("ternary quantization needs one or two modes, got " + std::to_string(report.mode_count));
    }
    TernaryQuantization q;
    for (float loc : report.mode_locations) {
        if (loc < 0.0f) {
            if (q.negative_level != 0.0f) {
                throw DataError("ternary quantization: two negative modes are ambiguous");
            }
            q.negative_level = loc;
        } else if (loc > 0.0f) {
            if (q.positive_level != 0.0f) {
                throw DataError("ternary quantization: two positive modes are ambiguous");
            }
            q.positive_level = loc;
        }
    }
    const double lower = 0.5 * double(q.negative_level);
    const double upper = 0.5 * double(q.positive_level);
    q.assignments.resize(weights.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double x = weights[i];
        std::int8_t a = 0;
        if (q.negative_level != 0.0f && x < lower) {
            a = -1;
        } else if (q.positive_level != 0.0f && x > upper) {
            a = 1;
        }
        q.assignments[i] = a;
        const double err = x - double(q.level(a));
        sq += err * err;
    }
    q.rmse = weights.empty() ? 0.0f : static_cast<float>(std::sqrt(sq / double(weights.size())));
    return q;
}

} // namespace wdyn::detect

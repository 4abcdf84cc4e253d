#pragma once

// Temporal diagnostics over a (T x K) series slice: density movies,
// mean square displacement of the demeaned cumulative weight sum, and
// histogram bimodality measures.

#include "wdyn/checkpoint_store.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace wdyn::stats {

struct Histogram {
    std::vector<float> edges;          // B + 1, strictly increasing, uniform
    std::vector<std::int64_t> counts;  // B
    std::int64_t total = 0;

    std::size_t bins() const noexcept { return counts.size(); }
    double center(std::size_t b) const noexcept { return 0.5 * (double(edges[b]) + double(edges[b + 1])); }
    double width() const noexcept { return (double(edges.back()) - double(edges.front())) / double(bins()); }
};

struct RangePolicy {
    enum class Kind { global_minmax, quantile };
    Kind kind = Kind::quantile;
    double lower_q = 0.001;
    double upper_q = 0.999;

    static RangePolicy minmax() { return {Kind::global_minmax, 0.0, 1.0}; }
    static RangePolicy quantile(double lower, double upper) { return {Kind::quantile, lower, upper}; }
    std::string describe() const;
};

// How the shared edges were chosen and what fell outside them.
struct RangeRecord {
    RangePolicy policy;
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t clipped_low = 0;
    std::int64_t clipped_high = 0;
    bool degenerate = false; // max == min: single-bin fallback
};

struct DensityMovie {
    std::vector<std::int64_t> steps;
    std::vector<Histogram> histograms; // all share one edge vector
    RangeRecord range;

    const std::vector<float>& edges() const { return histograms.front().edges; }
};

struct MsdCurve {
    std::vector<std::int64_t> steps;
    std::vector<float> values;
};

// per_step removes the mean over k of each row (the printed definition).
// per_step_and_particle additionally removes each particle's mean over the
// whole run before the row demeaning; the cumulative sum then returns to zero
// at the last step.
enum class MsdDemeaning { per_step, per_step_and_particle };

struct BimodalityReport {
    int mode_count = 0;
    std::vector<float> mode_locations; // ascending
    std::vector<float> mode_masses;
    float bimodality_coefficient = 0.0f;
};

// MSD(tau) = 1/(K-1) * sum_k (sum_{t<=tau} (w_tk - mean_k w_t.))^2, accumulated
// in f64 with chunked pairwise reductions. Requires K >= 2.
MsdCurve msd(const store::SeriesSlice& slice, MsdDemeaning demeaning = MsdDemeaning::per_step);

DensityMovie density_movie(const store::SeriesSlice& slice, std::size_t bins, RangePolicy policy = {});

// Modes are plateau-aware local maxima of the moving-average smoothed counts
// that exceed 5% of the largest smoothed count. smoothing_window must be odd.
BimodalityReport bimodality(const Histogram& h, std::size_t smoothing_window = 5);

std::string msd_csv(const MsdCurve& curve);
std::string density_csv(const DensityMovie& movie);
std::string bimodality_csv(const std::vector<std::int64_t>& steps, const std::vector<BimodalityReport>& reports);

} // namespace wdyn::stats

#include "wdyn/dynamics_stats.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wdyn::stats {

using io::format_number;

std::string RangePolicy::describe() const {
    if (kind == Kind::global_minmax) {
        return "global-minmax";
    }
    return "quantile(" + format_number(lower_q) + "," + format_number(upper_q) + ")";
}

// ---------------------------------------------------------------------------
// MSD

MsdCurve msd(const store::SeriesSlice& slice, MsdDemeaning demeaning) {
    const std::size_t T = slice.rows();
    const std::size_t K = slice.cols;
    if (T == 0) {
        throw DataError("msd needs at least one checkpoint");
    }
    if (K < 2) {
        throw DataError("msd needs K >= 2 (variance undefined)");
    }
    const std::size_t chunks = chunk_count(K);
    auto chunk_range = [&](std::size_t c) {
        const std::size_t lo = c * kReduceChunk;
        return std::pair{lo, std::min(K, lo + kReduceChunk)};
    };

    std::vector<double> particle_mean;
    if (demeaning == MsdDemeaning::per_step_and_particle) {
        particle_mean.assign(K, 0.0);
        parallel_for(chunks, [&](std::size_t c) {
            auto [lo, hi] = chunk_range(c);
            for (std::size_t t = 0; t < T; ++t) {
                const float* row = slice.values.data() + t * K;
                for (std::size_t k = lo; k < hi; ++k) {
                    particle_mean[k] += row[k];
                }
            }
            for (std::size_t k = lo; k < hi; ++k) {
                particle_mean[k] /= double(T);
            }
        });
    }
    auto value = [&](std::size_t t, std::size_t k) {
        const double w = slice.values[t * K + k];
        return particle_mean.empty() ? w : w - particle_mean[k];
    };

    // pass 1: per-row means from per-chunk partial sums
    std::vector<double> partial(T * chunks);
    parallel_for(chunks, [&](std::size_t c) {
        auto [lo, hi] = chunk_range(c);
        for (std::size_t t = 0; t < T; ++t) {
            double s = 0.0;
            for (std::size_t k = lo; k < hi; ++k) {
                s += value(t, k);
            }
            partial[t * chunks + c] = s;
        }
    });
    std::vector<double> row_mean(T);
    for (std::size_t t = 0; t < T; ++t) {
        row_mean[t] = pairwise_sum(std::span<const double>(partial).subspan(t * chunks, chunks)) / double(K);
    }

    // pass 2: cumulative demeaned sums and their per-row squared norms
    parallel_for(chunks, [&](std::size_t c) {
        auto [lo, hi] = chunk_range(c);
        std::vector<double> acc(hi - lo, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            double sq = 0.0;
            for (std::size_t k = lo; k < hi; ++k) {
                double& a = acc[k - lo];
                a += value(t, k) - row_mean[t];
                sq += a * a;
            }
            partial[t * chunks + c] = sq;
        }
    });

    MsdCurve curve;
    curve.steps = slice.steps;
    curve.values.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double ss = pairwise_sum(std::span<const double>(partial).subspan(t * chunks, chunks));
        curve.values[t] = static_cast<float>(ss / double(K - 1));
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Density movie

namespace {

double quantile_sorted_select(std::vector<float>& data, double p) {
    // linear interpolation between order statistics (numpy "linear")
    const double h = (double(data.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, data.size() - 1);
    std::nth_element(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(lo), data.end());
    const double a = data[lo];
    double b = a;
    if (hi != lo) {
        b = *std::min_element(data.begin() + static_cast<std::ptrdiff_t>(lo) + 1, data.end());
    }
    return a + (h - double(lo)) * (b - a);
}

} // namespace

DensityMovie density_movie(const store::SeriesSlice& slice, std::size_t bins, RangePolicy policy) {
    if (bins < 2) {
        throw UsageError("density needs bins >= 2");
    }
    if (slice.rows() == 0 || slice.cols == 0) {
        throw DataError("density needs a non-empty slice");
    }
    if (policy.kind == RangePolicy::Kind::quantile &&
        !(policy.lower_q >= 0.0 && policy.lower_q < policy.upper_q && policy.upper_q <= 1.0)) {
        throw UsageError("quantile range needs 0 <= lower < upper <= 1");
    }
    for (float v : slice.values) {
        if (!std::isfinite(v)) {
            throw DataError("non-finite value in slice '" + slice.tensor + "'");
        }
    }

    RangeRecord range;
    range.policy = policy;
    if (policy.kind == RangePolicy::Kind::global_minmax) {
        auto [mn, mx] = std::minmax_element(slice.values.begin(), slice.values.end());
        range.lo = *mn;
        range.hi = *mx;
    } else {
        std::vector<float> scratch = slice.values;
        range.lo = quantile_sorted_select(scratch, policy.lower_q);
        range.hi = quantile_sorted_select(scratch, policy.upper_q);
    }

    std::vector<float> edges;
    if (!(range.hi > range.lo)) {
        range.degenerate = true;
        bins = 1;
        edges = {static_cast<float>(range.lo - 0.5), static_cast<float>(range.lo + 0.5)};
        range.lo = edges[0];
        range.hi = edges[1];
    } else {
        edges.resize(bins + 1);
        for (std::size_t b = 0; b <= bins; ++b) {
            edges[b] = static_cast<float>(range.lo + (range.hi - range.lo) * double(b) / double(bins));
        }
    }

    DensityMovie movie;
    movie.steps = slice.steps;
    movie.histograms.resize(slice.rows());
    std::vector<std::int64_t> low(slice.rows(), 0);
    std::vector<std::int64_t> high(slice.rows(), 0);
    const double scale = double(bins) / (range.hi - range.lo);
    parallel_for(slice.rows(), [&](std::size_t t) {
        Histogram& h = movie.histograms[t];
        h.edges = edges;
        h.counts.assign(bins, 0);
        for (float v : slice.row(t)) {
            if (v < range.lo) {
                ++low[t];
                ++h.counts.front();
            } else if (v > range.hi) {
                ++high[t];
                ++h.counts.back();
            } else {
                const auto b = static_cast<std::size_t>((double(v) - range.lo) * scale);
                ++h.counts[std::min(b, bins - 1)];
            }
        }
        h.total = static_cast<std::int64_t>(slice.cols);
    });
    for (std::size_t t = 0; t < slice.rows(); ++t) {
        range.clipped_low += low[t];
        range.clipped_high += high[t];
    }
    movie.range = range;
    return movie;
}

// ---------------------------------------------------------------------------
// Bimodality

BimodalityReport bimodality(const Histogram& h, std::size_t smoothing_window) {
    if (h.total <= 0 || h.bins() == 0) {
        throw DataError("bimodality needs a non-empty histogram");
    }
    if (smoothing_window == 0 || smoothing_window % 2 == 0) {
        throw UsageError("smoothing window must be a positive odd integer");
    }
    const std::size_t B = h.bins();
    const std::size_t half = smoothing_window / 2;

    std::vector<double> smooth(B);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t lo = b >= half ? b - half : 0;
        const std::size_t hi = std::min(B - 1, b + half);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            s += double(h.counts[j]);
        }
        smooth[b] = s / double(hi - lo + 1);
    }
    const double peak = *std::max_element(smooth.begin(), smooth.end());
    const double floor = 0.05 * peak;

    // plateau-aware local maxima: a run of equal values higher than both neighbours
    std::vector<std::size_t> mode_lo;
    std::vector<std::size_t> mode_hi;
    for (std::size_t b = 0; b < B;) {
        std::size_t e = b;
        while (e + 1 < B && smooth[e + 1] == smooth[b]) {
            ++e;
        }
        const bool left_ok = b == 0 || smooth[b - 1] < smooth[b];
        const bool right_ok = e == B - 1 || smooth[e + 1] < smooth[b];
        if (left_ok && right_ok && smooth[b] > floor) {
            mode_lo.push_back(b);
            mode_hi.push_back(e);
        }
        b = e + 1;
    }

    BimodalityReport report;
    report.mode_count = static_cast<int>(mode_lo.size());
    const std::size_t M = mode_lo.size();
    // basins split at the smoothed minimum between consecutive modes
    std::vector<std::size_t> cut(M + 1, 0);
    cut[M] = B;
    for (std::size_t i = 0; i + 1 < M; ++i) {
        std::size_t arg = mode_hi[i];
        for (std::size_t b = mode_hi[i]; b <= mode_lo[i + 1]; ++b) {
            if (smooth[b] < smooth[arg]) {
                arg = b;
            }
        }
        cut[i + 1] = arg;
    }
    for (std::size_t i = 0; i < M; ++i) {
        report.mode_locations.push_back(static_cast<float>(0.5 * (h.center(mode_lo[i]) + h.center(mode_hi[i]))));
        std::int64_t mass = 0;
        for (std::size_t b = cut[i]; b < cut[i + 1]; ++b) {
            mass += h.counts[b];
        }
        report.mode_masses.push_back(static_cast<float>(double(mass) / double(h.total)));
    }

    // moments from bin centres
    double n = 0.0;
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        n += double(h.counts[b]);
        mean += double(h.counts[b]) * h.center(b);
    }
    mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double d = h.center(b) - mean;
        const double c = double(h.counts[b]);
        m2 += c * d * d;
        m3 += c * d * d * d;
        m4 += c * d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 > 0.0) {
        const double skew = m3 / std::pow(m2, 1.5);
        const double kurt = m4 / (m2 * m2);
        report.bimodality_coefficient = static_cast<float>((skew * skew + 1.0) / kurt);
    }
    return report;
}

// ---------------------------------------------------------------------------
// CSV

std::string msd_csv(const MsdCurve& curve) {
    std::ostringstream out;
    out << "step,msd\n";
    for (std::size_t t = 0; t < curve.values.size(); ++t) {
        out << curve.steps[t] << ',' << format_number(curve.values[t]) << '\n';
    }
    return out.str();
}

std::string density_csv(const DensityMovie& movie) {
    std::ostringstream out;
    out << "step,bin_index,bin_left,bin_right,count\n";
    for (std::size_t t = 0; t < movie.histograms.size(); ++t) {
        const Histogram& h = movie.histograms[t];
        for (std::size_t b = 0; b < h.bins(); ++b) {
            out << movie.steps[t] << ',' << b << ',' << format_number(h.edges[b]) << ','
                << format_number(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
        }
    }
    return out.str();
}

std::string bimodality_csv(const std::vector<std::int64_t>& steps, const std::vector<BimodalityReport>& reports) {
    std::ostringstream out;
    out << "step,mode_count,bimodality_coefficient\n";
    for (std::size_t t = 0; t < reports.size(); ++t) {
        out << steps[t] << ',' << reports[t].mode_count << ','
            << format_number(reports[t].bimodality_coefficient) << '\n';
    }
    return out.str();
}

} // namespace wdyn::stats

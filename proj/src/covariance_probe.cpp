#include "wdyn/covariance_probe.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"
#include "wdyn/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wdyn::probe {

std::vector<double> probe_batch(std::size_t batch, std::size_t d, std::uint64_t seed) {
    std::vector<double> v(batch * d);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < d; ++i) {
            v[b * d + i] = rng::normal(seed, rng::Stream::probe_batch, b, static_cast<std::uint32_t>(i));
        }
    }
    return v;
}

std::vector<double> centered_singular_values(std::span<const float> w, std::size_t d, std::size_t v,
                                             std::span<const double> probe, std::size_t batch) {
    if (w.size() != d * v || probe.size() != batch * d) {
        throw DataError("probe dimensions do not match");
    }
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wm(w.data(), d, v);
    const Eigen::Map<const RowMatrix> pm(probe.data(), batch, d);

    RowMatrix images = pm * wm.cast<double>(); // B x v
    images.rowwise() -= images.colwise().mean();
    const Eigen::MatrixXd gram = images * images.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw DataError("eigen decomposition of the probe Gram matrix failed");
    }
    std::vector<double> sv(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        sv[i] = std::sqrt(std::max(0.0, solver.eigenvalues()[static_cast<Eigen::Index>(i)]));
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

int rank_at(std::span<const double> sv, double tol) {
    if (sv.empty() || !(sv.front() > 0.0)) {
        return 0;
    }
    const double bar = tol * sv.front();
    return static_cast<int>(std::count_if(sv.begin(), sv.end(), [bar](double s) { return s >= bar; }));
}

namespace {

void validate(std::size_t batch, std::span<const double> tolerances) {
    if (batch < 2) {
        throw UsageError("probe batch size must be >= 2");
    }
    if (tolerances.empty()) {
        throw UsageError("at least one tolerance is required");
    }
    for (double t : tolerances) {
        if (!(t > 0.0 && t <= 1.0)) {
            throw UsageError("tolerances must lie in (0, 1]");
        }
    }
}

std::vector<int> profile(std::span<const float> w, std::size_t d, std::size_t v, std::span<const double> probe,
                         std::size_t batch, std::span<const double> tolerances) {
    const auto sv = centered_singular_values(w, d, v, probe, batch);
    std::vector<int> ranks;
    ranks.reserve(tolerances.size());
    for (double tol : tolerances) {
        ranks.push_back(rank_at(sv, tol));
    }
    return ranks;
}

} // namespace

std::vector<int> rank_profile(std::span<const float> w, std::size_t d, std::size_t v, std::size_t batch,
                              std::span<const double> tolerances, std::uint64_t seed) {
    validate(batch, tolerances);
    const auto probe = probe_batch(batch, d, seed);
    return profile(w, d, v, probe, batch, tolerances);
}

RankCurve probe_rank(const store::CheckpointSeries& series, const std::string& tensor, std::size_t batch,
                     std::vector<double> tolerances, std::uint64_t seed) {
    validate(batch, tolerances);
    const store::TensorInfo& info = series.tensor(tensor);
    if (info.shape.size() != 2) {
        throw DataError("probe-rank needs a 2-D (d, v) tensor; '" + tensor + "' has " +
                        std::to_string(info.shape.size()) + " dimensions");
    }
    const auto d = static_cast<std::size_t>(info.shape[0]);
    const auto v = static_cast<std::size_t>(info.shape[1]);
    const auto probe = probe_batch(batch, d, seed);

    RankCurve curve;
    curve.steps = series.steps();
    curve.tolerances = std::move(tolerances);
    curve.batch = batch;
    curve.seed = seed;
    curve.ranks.resize(series.entries.size());
    parallel_for(series.entries.size(), [&](std::size_t t) {
        const store::CheckpointFile file(series.entries[t].path);
        const auto w = file.read_f32(tensor);
        curve.ranks[t] = profile(w, d, v, probe, batch, curve.tolerances);
    });
    return curve;
}

RankDerivative rank_series_derivative(const RankCurve& curve) {
    if (curve.steps.size() < 2) {
        throw DataError("rank derivative needs at least two checkpoints");
    }
    RankDerivative out;
    out.tolerances = curve.tolerances;
    for (std::size_t t = 0; t + 1 < curve.steps.size(); ++t) {
        const double span = double(curve.steps[t + 1] - curve.steps[t]);
        std::vector<double> row;
        for (std::size_t j = 0; j < curve.tolerances.size(); ++j) {
            row.push_back(double(curve.ranks[t + 1][j] - curve.ranks[t][j]) / span);
        }
        out.steps.push_back(curve.steps[t]);
        out.values.push_back(std::move(row));
    }
    return out;
}

std::string rank_csv(const RankCurve& curve) {
    std::ostringstream out;
    out << "step,tolerance,rank\n";
    for (std::size_t t = 0; t < curve.steps.size(); ++t) {
        for (std::size_t j = 0; j < curve.tolerances.size(); ++j) {
            out << curve.steps[t] << ',' << io::format_number(curve.tolerances[j]) << ',' << curve.ranks[t][j] << '\n';
        }
    }
    return out.str();
}

std::string rank_derivative_csv(const RankDerivative& derivative) {
    std::ostringstream out;
    out << "step,tolerance,d_rank_d_step\n";
    for (std::size_t t = 0; t < derivative.steps.size(); ++t) {
        for (std::size_t j = 0; j < derivative.tolerances.size(); ++j) {
            out << derivative.steps[t] << ',' << io::format_number(derivative.tolerances[j]) << ','
                << io::format_number(derivative.values[t][j]) << '\n';
        }
    }
    return out.str();
}

} // namespace wdyn::probe

#include "helpers.hpp"

#include "wdyn/covariance_probe.hpp"
#include "wdyn/error.hpp"
#include "wdyn/rng.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>

using namespace wdyn;
using wdyn::testing::TempDir;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<float> random_matrix(std::size_t d, std::size_t v, std::uint64_t seed) {
    std::vector<float> w(d * v);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(rng::normal(seed, rng::Stream::sde_initial, i, 99));
    }
    return w;
}

// Rank-3 orthogonal projection embedded in a (d x v) matrix: P = U U^T on the
// first d output coordinates, U with three orthonormal columns.
std::vector<float> rank3_projection(std::size_t d, std::size_t v) {
    Eigen::MatrixXd a(d, 3);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rng::normal(5, rng::Stream::sde_initial, i, static_cast<std::uint32_t>(j));
        }
    }
    const Eigen::MatrixXd u = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() * Eigen::MatrixXd::Identity(d, 3);
    const Eigen::MatrixXd p = u * u.transpose();
    std::vector<float> w(d * v, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            w[i * v + j] = static_cast<float>(p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
    }
    return w;
}

// Oracle: full SVD of the explicitly centred B x v image matrix.
std::vector<double> svd_oracle(const std::vector<float>& w, std::size_t d, std::size_t v, std::size_t batch,
                               std::uint64_t seed) {
    const auto probe = probe::probe_batch(batch, d, seed);
    RowMatrix images = RowMatrix::Zero(batch, v);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < v; ++j) {
                images(b, j) += probe[b * d + i] * double(w[i * v + j]);
            }
        }
    }
    for (std::size_t j = 0; j < v; ++j) {
        images.col(j).array() -= images.col(j).mean();
    }
    Eigen::JacobiSVD<RowMatrix> svd(images);
    const auto s = svd.singularValues();
    return std::vector<double>(s.data(), s.data() + s.size());
}

} // namespace

TEST_SUITE("covariance_probe") {

TEST_CASE("singular values agree with a full SVD") {
    const std::size_t d = 12, v = 20, batch = 16;
    const auto w = random_matrix(d, v, 3);
    const auto probe = probe::probe_batch(batch, d, 42);
    const auto got = probe::centered_singular_values(w, d, v, probe, batch);
    const auto want = svd_oracle(w, d, v, batch, 42);
    // Gram eigenvalues carry absolute error ~ eps * sigma_max^2, so a vanishing
    // singular value comes back as ~ sqrt(eps) * sigma_max.
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-7).scale(want[0]));
    }
}

TEST_CASE("zero matrix has rank zero") {
    const std::vector<double> tol{0.1, 0.5, 1.0};
    const auto r = probe::rank_profile(std::vector<float>(16 * 32, 0.0f), 16, 32, 64, tol, 1);
    CHECK(r == std::vector<int>{0, 0, 0});
}

TEST_CASE("rank-3 projection is rank 3 at loose tolerance") {
    const auto w = rank3_projection(16, 32);
    const std::vector<double> tol{0.1};
    CHECK(probe::rank_profile(w, 16, 32, 64, tol, 42) == std::vector<int>{3});
}

TEST_CASE("full-rank matrix saturates at min(B - 1, d)") {
    const std::size_t d = 8, v = 40;
    const auto w = random_matrix(d, v, 8);
    const std::vector<double> tol{0.1};
    CHECK(probe::rank_profile(w, d, v, 64, tol, 42)[0] == 8);
    CHECK(probe::rank_profile(w, d, v, 16, tol, 42)[0] == 8);
    CHECK(probe::rank_profile(w, d, v, 5, tol, 42)[0] == 4);
}

TEST_CASE("rank never increases with tolerance") {
    const std::vector<double> tol{0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = probe::rank_profile(random_matrix(10, 24, seed), 10, 24, 32, tol, seed);
        for (std::size_t j = 1; j < r.size(); ++j) {
            CHECK(r[j] <= r[j - 1]);
        }
        CHECK(r.back() >= 1);
    }
}

TEST_CASE("rotating the output space leaves the rank unchanged") {
    const std::size_t d = 10, v = 16;
    const auto w = random_matrix(d, v, 4);
    Eigen::MatrixXd g(v, v);
    for (std::size_t i = 0; i < v * v; ++i) {
        g.data()[i] = rng::normal(6, rng::Stream::sde_initial, i, 0);
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    std::vector<float> rotated(d * v, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < v; ++k) {
                s += double(w[i * v + k]) * q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            }
            rotated[i * v + j] = static_cast<float>(s);
        }
    }
    const auto probe = probe::probe_batch(32, d, 1);
    const auto a = probe::centered_singular_values(w, d, v, probe, 32);
    const auto b = probe::centered_singular_values(rotated, d, v, probe, 32);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-5).scale(a[0]));
    }
}

TEST_CASE("invalid arguments") {
    const std::vector<float> w(4, 1.0f);
    CHECK_THROWS_AS(probe::rank_profile(w, 2, 2, 1, std::vector<double>{0.5}, 0), UsageError);
    CHECK_THROWS_AS(probe::rank_profile(w, 2, 2, 4, std::vector<double>{0.0}, 0), UsageError);
    CHECK_THROWS_AS(probe::rank_profile(w, 2, 2, 4, std::vector<double>{1.5}, 0), UsageError);
}

TEST_CASE("probe_rank over a series") {
    TempDir dir;
    for (std::int64_t step : {0, 1000, 2000}) {
        store::TensorMap m;
        m.emplace("W_U", store::Tensor::f32({8, 12}, random_matrix(8, 12, static_cast<std::uint64_t>(step))));
        m.emplace("b", store::Tensor::f32({12}, std::vector<float>(12, 0.0f)));
        store::write_checkpoint(step, m, dir / store::checkpoint_filename(step));
    }
    const auto series = store::open_series(dir.path());
    const auto curve = probe::probe_rank(series, "W_U", 16, {0.1, 0.5}, 42);
    CHECK(curve.steps == std::vector<std::int64_t>{0, 1000, 2000});
    for (const auto& row : curve.ranks) {
        CHECK(row[0] == 8);
        CHECK(row[1] <= row[0]);
    }
    const auto again = probe::probe_rank(series, "W_U", 16, {0.1, 0.5}, 42);
    CHECK(again.ranks == curve.ranks);
    CHECK_THROWS_AS(probe::probe_rank(series, "b", 16, {0.1}, 42), DataError);
    CHECK(probe::rank_csv(curve).starts_with("step,tolerance,rank\n0,0.1,8\n"));
}

TEST_CASE("rank derivative") {
    probe::RankCurve c;
    c.steps = {0, 1000, 2000};
    c.tolerances = {0.1, 0.5};
    c.ranks = {{63, 10}, {40, 10}, {40, 10}};
    const auto d = probe::rank_series_derivative(c);
    CHECK(d.steps == std::vector<std::int64_t>{0, 1000});
    CHECK(d.values[0][0] == doctest::Approx(-0.023));
    CHECK(d.values[0][1] == 0.0);
    CHECK(d.values[1][0] == 0.0);
    CHECK(probe::rank_derivative_csv(d).starts_with("step,tolerance,d_rank_d_step\n0,0.1,-0.023\n"));
    probe::RankCurve one;
    one.steps = {0};
    one.tolerances = {0.1};
    one.ranks = {{1}};
    CHECK_THROWS_AS(probe::rank_series_derivative(one), DataError);
}

} // TEST_SUITE covariance_probe

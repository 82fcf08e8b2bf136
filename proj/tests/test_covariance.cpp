#include <catch2/catch_amalgamated.hpp>

#include "folio/covariance.hpp"
#include "folio/rng.hpp"
#include "folio/synthetic.hpp"
#include "test_util.hpp"

using namespace folio;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<long> all_stocks(const MarketPanel& p) {
    std::vector<long> out(p.n_stocks());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

/// Random valid correlation + sigma via a random returns sample.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> random_correlation(int n, int t, Rng& rng,
                                                               int n_factors = 2,
                                                               double factor_strength = 0.5) {
    Eigen::MatrixXd R(t, n);
    std::vector<double> load(n * n_factors);
    for (auto& l : load) l = rng.normal(0.0, factor_strength);
    for (int s = 0; s < t; ++s) {
        std::vector<double> f(n_factors);
        for (auto& x : f) x = rng.normal();
        for (int i = 0; i < n; ++i) {
            double r = rng.normal();
            for (int a = 0; a < n_factors; ++a) r += load[i * n_factors + a] * f[a];
            R(s, i) = 0.01 * r * (0.5 + (i % 5) * 0.3);
        }
    }
    Eigen::RowVectorXd mean = R.colwise().mean();
    Eigen::MatrixXd X = R.rowwise() - mean;
    Eigen::VectorXd ss = X.colwise().squaredNorm();
    Eigen::VectorXd sigma = (ss / (t - 1)).cwiseSqrt();
    Eigen::VectorXd norm = ss.cwiseSqrt();
    Eigen::MatrixXd corr = (X.transpose() * X).cwiseQuotient(norm * norm.transpose());
    corr.diagonal().setOnes();
    return {corr, sigma};
}

}  // namespace

TEST_CASE("estimate_correlation: identical series correlate at exactly 1") {
    std::vector<std::vector<double>> rets(120, std::vector<double>(2, 0.0));
    Rng rng(2);
    for (size_t t = 1; t < rets.size(); ++t) rets[t][0] = rets[t][1] = 0.01 * rng.normal();
    MarketPanel p = testutil::make_panel(rets);
    auto stocks = all_stocks(p);
    auto est = estimate_correlation(p, stocks, 110, 100);
    CHECK_THAT(est.corr(0, 1), WithinAbs(1.0, 1e-12));
    CHECK_THAT(est.sigma(0), WithinAbs(est.sigma(1), 1e-15));
    CHECK(est.corr(0, 0) == 1.0);
    CHECK(est.corr(1, 1) == 1.0);
}

TEST_CASE("estimate_correlation: independent series decorrelate") {
    SyntheticSpec spec;
    spec.n_stocks = 2;
    spec.n_days = 5001;
    spec.market_vol = 1e-12;
    spec.sector_vol = 1e-12;
    spec.idio_vol = 0.2;
    spec.seed = 31;
    spec.with_fundamentals = false;
    MarketPanel p = generate_synthetic(spec);
    auto stocks = all_stocks(p);
    auto est = estimate_correlation(p, stocks, 5000, 4999);
    CHECK(std::abs(est.corr(0, 1)) < 0.05);
}

TEST_CASE("estimate_correlation: short-history stocks are excluded and reported") {
    std::vector<std::vector<double>> rets(120, std::vector<double>(3));
    Rng rng(4);
    for (size_t t = 0; t < rets.size(); ++t)
        for (int i = 0; i < 3; ++i) rets[t][i] = 0.01 * rng.normal();
    MarketPanel p = testutil::make_panel(rets);
    for (long t = 0; t < 70; ++t) p.total_return(t, 2) = kMissing;  // only ~50 obs left
    auto stocks = all_stocks(p);
    auto est = estimate_correlation(p, stocks, 110, 100);
    CHECK(est.stocks == std::vector<long>{0, 1});
    CHECK(est.excluded == std::vector<long>{2});
}

TEST_CASE("estimate_correlation: pairwise path handles gaps and stays PSD") {
    std::vector<std::vector<double>> rets(300, std::vector<double>(6));
    Rng rng(6);
    for (size_t t = 0; t < rets.size(); ++t)
        for (int i = 0; i < 6; ++i) rets[t][i] = 0.01 * rng.normal();
    MarketPanel p = testutil::make_panel(rets);
    // punch holes
    for (long t = 0; t < p.n_dates(); ++t)
        for (long i = 0; i < 6; ++i)
            if (rng.uniform() < 0.15) p.total_return(t, i) = kMissing;
    auto stocks = all_stocks(p);
    auto est = estimate_correlation(p, stocks, 290, 280);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.corr);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
    for (long i = 0; i < est.corr.rows(); ++i) CHECK(est.corr(i, i) == 1.0);
}

TEST_CASE("clip_spectrum: identity correlation, k=1") {
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(3, 0.02);
    auto model = clip_spectrum(corr, sigma, 1);
    CHECK_THAT(model.eigenvalues(0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(model.epsilon2, WithinAbs(2.0 / 3.0, 1e-12));
    // trace preserved: Tr C = sum sigma^2
    CHECK_THAT(model.dense().trace(), WithinAbs(sigma.squaredNorm(), 1e-14));
}

TEST_CASE("clip_spectrum: equicorrelation analytic eigenvalues") {
    const int n = 4;
    const double rho = 0.5;
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(n, n, rho);
    corr.diagonal().setOnes();
    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(n, 0.01);
    auto model = clip_spectrum(corr, sigma, 1);
    CHECK_THAT(model.eigenvalues(0), WithinAbs(1.0 + (n - 1) * rho, 1e-12));  // 2.5
    CHECK_THAT(model.epsilon2, WithinAbs((4.0 - 2.5) / 4.0, 1e-12));          // 0.375
    // top eigenvector of equicorrelation is uniform
    for (int i = 0; i < n; ++i)
        CHECK_THAT(model.eigenvectors(i, 0), WithinAbs(0.5, 1e-12));
}

TEST_CASE("clip_spectrum: k=N-1 reconstruction deviates by at most the clipped mass") {
    Rng rng(8);
    auto [corr, sigma] = random_correlation(12, 400, rng);
    auto model = clip_spectrum(corr, sigma, 11);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    const double lambda_min = es.eigenvalues()(0);
    Eigen::MatrixXd model_corr =
        model.dense().cwiseQuotient(sigma * sigma.transpose());
    const double maxdev = (model_corr - corr).cwiseAbs().maxCoeff();
    CHECK(maxdev <= lambda_min + 1e-12);
}

TEST_CASE("clip_spectrum: parameter and PSD error contracts") {
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(3, 0.02);
    CHECK_THROWS_AS(clip_spectrum(corr, sigma, 3), ConfigError);
    CHECK_THROWS_AS(clip_spectrum(corr, sigma, 0), ConfigError);
    Eigen::MatrixXd bad = corr;
    bad(0, 1) = bad(1, 0) = 2.0;  // not PSD
    CHECK_THROWS_AS(clip_spectrum(bad, sigma, 1), ComputeError);
}

TEST_CASE("spectral model invariants on random instances") {
    Rng rng(15);
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 20 + rep * 5;
        auto [corr, sigma] = random_correlation(n, 600, rng);
        for (int k = 1; k <= 5; ++k) {
            auto model = clip_spectrum(corr, sigma, k);

            // trace preservation (relative)
            const double tr = model.dense().trace();
            const double target = sigma.squaredNorm();
            CHECK(std::abs(tr - target) < 1e-10 * target);

            // PSD with the epsilon floor
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.dense());
            CHECK(es.eigenvalues().minCoeff() >=
                  model.epsilon2 * sigma.minCoeff() * sigma.minCoeff() - 1e-12);

            // inverse consistency on random vectors
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) y(i) = rng.normal();
            Eigen::VectorXd round_trip = model.apply(model.apply_inverse(y));
            CHECK((round_trip - y).cwiseAbs().maxCoeff() <
                  1e-9 * y.cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("reconstruction error is non-increasing in k while factors dominate") {
    // Keeping an extra eigenpair tightens the Frobenius fit exactly when that
    // eigenvalue carries more than its share of the residual mass, which is
    // the statistical-factor regime; inside the noise bulk the inequality
    // flips. Plant five strong factors and check k = 1..5.
    Rng rng(16);
    for (int rep = 0; rep < 3; ++rep) {
        auto [corr, sigma] = random_correlation(24, 900, rng, 5, 1.2);
        double prev_frob = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 5; ++k) {
            auto model = clip_spectrum(corr, sigma, k);
            Eigen::MatrixXd emp_cov = corr.cwiseProduct(sigma * sigma.transpose());
            const double frob = (model.dense() - emp_cov).norm();
            CHECK(frob <= prev_frob + 1e-12);
            prev_frob = frob;
        }
    }
}

TEST_CASE("apply_inverse matches dense inversion, N=50") {
    Rng rng(23);
    auto [corr, sigma] = random_correlation(50, 700, rng);
    for (int k : {1, 3, 5}) {
        auto model = clip_spectrum(corr, sigma, k);
        Eigen::MatrixXd dense = model.dense();
        Eigen::VectorXd y(50);
        for (int i = 0; i < 50; ++i) y(i) = rng.normal();
        Eigen::VectorXd via_model = model.apply_inverse(y);
        Eigen::VectorXd via_dense = dense.ldlt().solve(y);
        CHECK((via_model - via_dense).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("apply_inverse: identity correlation agrees with the dense oracle") {
    // The clipped model of an identity correlation is not diagonal (the kept
    // eigenvector stays at weight 1 while the residual drops to eps2), so the
    // inverse is checked against dense inversion rather than 1/sigma^2.
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(6, 6);
    Eigen::VectorXd sigma(6);
    sigma << 0.01, 0.02, 0.03, 0.01, 0.015, 0.025;
    auto model = clip_spectrum(corr, sigma, 1);
    Rng rng(99);
    Eigen::VectorXd y(6);
    for (int i = 0; i < 6; ++i) y(i) = rng.normal();
    Eigen::VectorXd via_dense = model.dense().ldlt().solve(y);
    CHECK((model.apply_inverse(y) - via_dense).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("SpectralCovariance JSON round-trip") {
    Rng rng(5);
    auto [corr, sigma] = random_correlation(8, 300, rng);
    auto model = clip_spectrum(corr, sigma, 2);
    model.stocks = {0, 1, 2, 3, 4, 5, 6, 7};
    auto loaded = SpectralCovariance::from_json(model.to_json());
    CHECK(loaded.k == model.k);
    CHECK(loaded.epsilon2 == model.epsilon2);
    CHECK((loaded.sigma - model.sigma).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.eigenvectors - model.eigenvectors).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.stocks == model.stocks);
}

TEST_CASE("compute_beta: regression identities") {
    // 40 stocks whose returns are beta_i * market + small noise; the index is
    // cap-weighted, caps equal, so the index is close to the average.
    const int n = 8, T = 600;
    Rng rng(44);
    std::vector<double> betas = {1.0, 2.0, 0.5, 1.5, 0.8, 1.2, 1.0, 1.0};
    std::vector<std::vector<double>> rets(T, std::vector<double>(n, 0.0));
    for (int t = 1; t < T; ++t) {
        const double mkt = 0.01 * rng.normal();
        for (int i = 0; i < n; ++i)
            rets[t][i] = betas[i] * mkt + (i == 0 ? 0.0 : 1e-5 * rng.normal());
    }
    MarketPanel p = testutil::make_panel(rets);
    auto stocks = all_stocks(p);
    auto bv = compute_beta(p, stocks, 590, BetaMethod::regression, 500);

    // cap-weighted beta of the index itself is 1 by construction
    double wmean = 0;
    for (int i = 0; i < n; ++i) wmean += bv.beta(i) / n;
    CHECK_THAT(wmean, WithinAbs(1.0, 1e-4));

    // stock 1 moves at 2x the market; the index mixes betas with mean ~1.125
    const double mean_beta = std::accumulate(betas.begin(), betas.end(), 0.0) / n;
    CHECK_THAT(bv.beta(1), WithinAbs(2.0 / mean_beta, 1e-3));
    CHECK_THAT(bv.beta(2), WithinAbs(0.5 / mean_beta, 1e-3));
}

TEST_CASE("compute_beta: a stock equal to the index has beta 1") {
    const int n = 3, T = 400;
    Rng rng(45);
    std::vector<std::vector<double>> rets(T, std::vector<double>(n, 0.0));
    for (int t = 1; t < T; ++t) {
        const double mkt = 0.01 * rng.normal();
        for (int i = 0; i < n; ++i) rets[t][i] = mkt;  // all identical = the index
    }
    MarketPanel p = testutil::make_panel(rets);
    auto stocks = all_stocks(p);
    auto bv = compute_beta(p, stocks, 390, BetaMethod::regression, 300);
    for (int i = 0; i < n; ++i) CHECK_THAT(bv.beta(i), WithinAbs(1.0, 1e-12));
}

TEST_CASE("compute_beta: first-factor and regression betas agree in rank") {
    SyntheticSpec spec;
    spec.n_stocks = 40;
    spec.n_days = 650;
    spec.seed = 77;
    spec.market_vol = 0.2;
    spec.sector_vol = 0.0;
    spec.idio_vol = 0.08;
    spec.market_beta_dispersion = 0.4;
    spec.with_fundamentals = false;
    MarketPanel p = generate_synthetic(spec);
    auto stocks = all_stocks(p);
    auto reg = compute_beta(p, stocks, 620, BetaMethod::regression, 500);
    auto ff = compute_beta(p, stocks, 620, BetaMethod::first_factor, 500);
    REQUIRE(reg.stocks.size() == ff.stocks.size());

    auto rank_of = [](const Eigen::VectorXd& v) {
        std::vector<size_t> ord(v.size());
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](size_t a, size_t b) { return v(a) < v(b); });
        std::vector<double> r(v.size());
        for (size_t i = 0; i < ord.size(); ++i) r[ord[i]] = static_cast<double>(i);
        return r;
    };
    auto ra = rank_of(reg.beta), rb = rank_of(ff.beta);
    double ma = 0, mb = 0;
    const double n = static_cast<double>(ra.size());
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    CHECK(num / std::sqrt(da * db) > 0.95);

    // cap-weighted mean of the first-factor beta is 1 by normalization
    double cap_sum = 0, cap_beta = 0;
    for (size_t j = 0; j < ff.stocks.size(); ++j) {
        const double c = p.market_cap(620, ff.stocks[j]);
        cap_sum += c;
        cap_beta += c * ff.beta(j);
    }
    CHECK_THAT(cap_beta / cap_sum, WithinAbs(1.0, 1e-12));
}

TEST_CASE("compute_beta: degenerate index variance raises") {
    std::vector<std::vector<double>> rets(400, std::vector<double>(2, 0.0));
    MarketPanel p = testutil::make_panel(rets);
    auto stocks = all_stocks(p);
    CHECK_THROWS_AS(compute_beta(p, stocks, 390, BetaMethod::regression, 300), ComputeError);
}

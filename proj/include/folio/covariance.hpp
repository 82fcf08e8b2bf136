#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <span>

#include "folio/panel.hpp"

namespace folio {

/// Empirical correlation of daily returns over a trailing window, plus the
/// per-stock volatilities. Stocks with fewer than `min_obs` valid returns in
/// the window are excluded and reported.
struct CorrelationEstimate {
    long date_idx = -1;
    int window = 0;
    std::vector<long> stocks;  // kept panel stock indices
    Eigen::MatrixXd corr;      // MxM, unit diagonal
    Eigen::VectorXd sigma;     // M, daily return units
    std::vector<long> excluded;
    bool psd_projected = false;
};

/// Cleaned k-factor covariance model
///     C_ij = sigma_i sigma_j ( sum_a lambda_a v_a_i v_a_j + eps2 delta_ij ),
/// with eps2 chosen so the correlation trace (and hence Tr C = sum sigma_i^2)
/// is preserved.
struct SpectralCovariance {
    long date_idx = -1;
    int window = 0;
    int k = 0;
    std::vector<long> stocks;
    Eigen::VectorXd sigma;         // N
    Eigen::VectorXd eigenvalues;   // k, descending
    Eigen::MatrixXd eigenvectors;  // N x k, unit-norm orthogonal columns
    double epsilon2 = 0.0;

    long size() const { return sigma.size(); }

    /// C y without forming C.
    Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
        Eigen::VectorXd z = sigma.cwiseProduct(y);
        Eigen::VectorXd out = epsilon2 * z;
        for (int a = 0; a < k; ++a) {
            const auto v = eigenvectors.col(a);
            out += eigenvalues(a) * v.dot(z) * v;
        }
        return sigma.cwiseProduct(out);
    }

    /// C^{-1} y in closed form from the spectral representation:
    /// C^{-1} = D^{-1} [ eps^{-2} (I - sum_a lambda_a/(lambda_a+eps2) v v^T) ] D^{-1}.
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& y) const {
        Eigen::VectorXd z = y.cwiseQuotient(sigma);
        Eigen::VectorXd out = z;
        for (int a = 0; a < k; ++a) {
            const auto v = eigenvectors.col(a);
            out -= eigenvalues(a) / (eigenvalues(a) + epsilon2) * v.dot(z) * v;
        }
        out /= epsilon2;
        return out.cwiseQuotient(sigma);
    }

    /// Dense reconstruction; for tests, oracles and small problems only.
    Eigen::MatrixXd dense() const {
        const long n = size();
        Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n) * epsilon2;
        for (int a = 0; a < k; ++a)
            corr += eigenvalues(a) * eigenvectors.col(a) * eigenvectors.col(a).transpose();
        return sigma.asDiagonal() * corr * sigma.asDiagonal();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["k"] = k;
        j["window"] = window;
        j["date_idx"] = date_idx;
        j["epsilon2"] = epsilon2;
        j["stocks"] = stocks;
        j["sigma"] = std::vector<double>(sigma.data(), sigma.data() + sigma.size());
        j["eigenvalues"] =
            std::vector<double>(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
        std::vector<std::vector<double>> vecs(k);
        for (int a = 0; a < k; ++a)
            vecs[a].assign(eigenvectors.col(a).data(), eigenvectors.col(a).data() + size());
        j["eigenvectors"] = vecs;
        return j;
    }

    static SpectralCovariance from_json(const nlohmann::json& j) {
        SpectralCovariance m;
        m.k = j.at("k").get<int>();
        m.window = j.at("window").get<int>();
        m.date_idx = j.at("date_idx").get<long>();
        m.epsilon2 = j.at("epsilon2").get<double>();
        m.stocks = j.at("stocks").get<std::vector<long>>();
        const auto sig = j.at("sigma").get<std::vector<double>>();
        m.sigma = Eigen::Map<const Eigen::VectorXd>(sig.data(), sig.size());
        const auto lam = j.at("eigenvalues").get<std::vector<double>>();
        m.eigenvalues = Eigen::Map<const Eigen::VectorXd>(lam.data(), lam.size());
        const auto vecs = j.at("eigenvectors").get<std::vector<std::vector<double>>>();
        m.eigenvectors.resize(sig.size(), m.k);
        for (int a = 0; a < m.k; ++a)
            m.eigenvectors.col(a) =
                Eigen::Map<const Eigen::VectorXd>(vecs[a].data(), vecs[a].size());
        return m;
    }
};

inline constexpr int kMinCorrObs = 60;

/// Correlation from standardized returns over [date_idx - window, date_idx - 1].
/// Complete panels take the vectorized path; panels with gaps fall back to
/// pairwise-complete estimation with the minimum-overlap threshold, and the
/// result is projected to the nearest PSD matrix if sampling noise pushed an
/// eigenvalue below -1e-8.
inline CorrelationEstimate estimate_correlation(const MarketPanel& panel,
                                                std::span<const long> stocks, long date_idx,
                                                int window = 500, int min_obs = kMinCorrObs) {
    if (window < 2) throw ConfigError("estimate_correlation: window must be >= 2");
    const long t0 = date_idx - window;
    if (t0 < 0)
        throw DataError("estimate_correlation: needs " + std::to_string(window) +
                        " days before date, have " + std::to_string(date_idx));

    CorrelationEstimate est;
    est.date_idx = date_idx;
    est.window = window;

    std::vector<long> kept;
    for (long i : stocks) {
        int n = 0;
        for (long t = t0; t < date_idx; ++t)
            if (panel.has_return(t, i)) ++n;
        if (n >= min_obs) kept.push_back(i);
        else est.excluded.push_back(i);
    }
    const long m = static_cast<long>(kept.size());
    if (m < 2)
        throw DataError("estimate_correlation: fewer than 2 stocks with " +
                        std::to_string(min_obs) + " observations");
    est.stocks = kept;

    Eigen::MatrixXd R(window, m);
    bool complete = true;
    for (long j = 0; j < m; ++j)
        for (long t = 0; t < window; ++t) {
            R(t, j) = panel.total_return(t0 + t, kept[j]);
            complete &= !is_missing(R(t, j));
        }

    est.sigma.resize(m);
    est.corr.resize(m, m);

    if (complete) {
        Eigen::RowVectorXd mean = R.colwise().mean();
        Eigen::MatrixXd X = R.rowwise() - mean;
        Eigen::VectorXd ss = X.colwise().squaredNorm();
        est.sigma = (ss / (window - 1)).cwiseSqrt();
        for (long j = 0; j < m; ++j)
            if (!(est.sigma(j) > 0.0))
                throw ComputeError("estimate_correlation: zero variance for stock " +
                                   panel.stock_ids[kept[j]]);
        Eigen::VectorXd norm = ss.cwiseSqrt();
        est.corr = (X.transpose() * X).cwiseQuotient(norm * norm.transpose());
        est.corr.diagonal().setOnes();
    } else {
        // sigma over each stock's own valid days
        for (long j = 0; j < m; ++j) {
            double sum = 0, sum2 = 0;
            int n = 0;
            for (long t = 0; t < window; ++t)
                if (!is_missing(R(t, j))) {
                    sum += R(t, j);
                    sum2 += R(t, j) * R(t, j);
                    ++n;
                }
            const double mean = sum / n;
            const double var = (sum2 - n * mean * mean) / (n - 1);
            if (!(var > 0.0))
                throw ComputeError("estimate_correlation: zero variance for stock " +
                                   panel.stock_ids[kept[j]]);
            est.sigma(j) = std::sqrt(var);
        }
        for (long a = 0; a < m; ++a) {
            est.corr(a, a) = 1.0;
            for (long b = a + 1; b < m; ++b) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                int n = 0;
                for (long t = 0; t < window; ++t) {
                    if (is_missing(R(t, a)) || is_missing(R(t, b))) continue;
                    sa += R(t, a);
                    sb += R(t, b);
                    saa += R(t, a) * R(t, a);
                    sbb += R(t, b) * R(t, b);
                    sab += R(t, a) * R(t, b);
                    ++n;
                }
                double rho = 0.0;  // insufficient overlap: uncorrelated
                if (n >= min_obs) {
                    const double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
                    const double cab = sab - sa * sb / n;
                    rho = (va > 0 && vb > 0) ? cab / std::sqrt(va * vb) : 0.0;
                }
                est.corr(a, b) = est.corr(b, a) = rho;
            }
        }
        // Pairwise estimates need not be PSD.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.corr);
        if (es.eigenvalues().minCoeff() < -1e-8) {
            Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
            Eigen::MatrixXd fixed =
                es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
            Eigen::VectorXd d = fixed.diagonal().cwiseMax(1e-12).cwiseSqrt();
            est.corr = fixed.cwiseQuotient(d * d.transpose());
            est.corr.diagonal().setOnes();
            est.psd_projected = true;
        }
    }
    return est;
}

/// Keeps the top-k eigenpairs of the correlation matrix and spreads the
/// remaining mass onto the diagonal. eps2 is pinned by the total-variance
/// requirement Tr C = sum_i sigma_i^2, which makes it the sigma^2-weighted
/// residual
///     eps2 = sum_i sigma_i^2 (1 - sum_a lambda_a v_a_i^2) / sum_i sigma_i^2;
/// for equal volatilities this reduces to (N - sum_a lambda_a)/N. Eigenvector
/// signs are fixed so the largest-magnitude component is positive.
inline SpectralCovariance clip_spectrum(const Eigen::MatrixXd& correlation,
                                        const Eigen::VectorXd& sigma, int k) {
    const long n = correlation.rows();
    if (k < 1 || k >= n)
        throw ConfigError("clip_spectrum: need 1 <= k < N (k=" + std::to_string(k) +
                          ", N=" + std::to_string(n) + ")");
    if (correlation.cols() != n || sigma.size() != n)
        throw ConfigError("clip_spectrum: dimension mismatch");
    if (!correlation.isApprox(correlation.transpose(), 1e-10))
        throw ComputeError("clip_spectrum: correlation not symmetric");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(correlation);
    if (es.info() != Eigen::Success)
        throw ComputeError("clip_spectrum: eigendecomposition failed");
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw ComputeError("clip_spectrum: input not PSD beyond tolerance (min eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");

    SpectralCovariance model;
    model.k = k;
    model.sigma = sigma;
    model.eigenvalues.resize(k);
    model.eigenvectors.resize(n, k);
    for (int a = 0; a < k; ++a) {
        const long src = n - 1 - a;  // Eigen sorts ascending
        model.eigenvalues(a) = es.eigenvalues()(src);
        Eigen::VectorXd v = es.eigenvectors().col(src);
        long imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0) v = -v;
        model.eigenvectors.col(a) = v;
    }
    if (!(model.eigenvalues(k - 1) > 0.0))
        throw ComputeError("clip_spectrum: eigenvalue " + std::to_string(k) +
                           " is not positive; reduce k");

    const Eigen::VectorXd sigma2 = sigma.cwiseProduct(sigma);
    double kept_var = 0.0;
    for (int a = 0; a < k; ++a)
        kept_var +=
            model.eigenvalues(a) * model.eigenvectors.col(a).cwiseProduct(sigma).squaredNorm();
    model.epsilon2 = (sigma2.sum() - kept_var) / sigma2.sum();
    if (!(model.epsilon2 > 0.0))
        throw ComputeError("clip_spectrum: retained eigenvalues exhaust the trace; reduce k");
    return model;
}

inline SpectralCovariance clip_spectrum(const CorrelationEstimate& est, int k) {
    SpectralCovariance model = clip_spectrum(est.corr, est.sigma, k);
    model.date_idx = est.date_idx;
    model.window = est.window;
    model.stocks = est.stocks;
    return model;
}

enum class BetaMethod { regression, first_factor };

/// Per-stock market beta. Regression method: 1-year OLS of stock returns on
/// the cap-weighted index built from the given stocks. First-factor method:
/// beta_i proportional to sigma_i sqrt(lambda_1) v1_i, rescaled so the
/// cap-weighted mean is one.
struct BetaVector {
    long date_idx = -1;
    int window = 0;
    BetaMethod source = BetaMethod::regression;
    std::vector<long> stocks;
    Eigen::VectorXd beta;

    double for_stock(long panel_idx, double fallback = 1.0) const {
        for (size_t j = 0; j < stocks.size(); ++j)
            if (stocks[j] == panel_idx) return beta(j);
        return fallback;
    }
};

/// Cap-weighted index daily return over the given stocks; weights use the
/// previous day's caps. Days with no eligible stock are missing.
inline std::vector<double> index_returns(const MarketPanel& panel, std::span<const long> stocks,
                                         long t_begin, long t_end) {
    std::vector<double> out;
    out.reserve(t_end - t_begin);
    for (long t = t_begin; t < t_end; ++t) {
        double num = 0.0, den = 0.0;
        if (t >= 1)
            for (long i : stocks)
                if (panel.has_return(t, i) && panel.has_cap(t - 1, i)) {
                    num += panel.market_cap(t - 1, i) * panel.total_return(t, i);
                    den += panel.market_cap(t - 1, i);
                }
        out.push_back(den > 0.0 ? num / den : kMissing);
    }
    return out;
}

inline BetaVector compute_beta(const MarketPanel& panel, std::span<const long> stocks,
                               long date_idx, BetaMethod method = BetaMethod::regression,
                               int window = 252, const SpectralCovariance* model = nullptr) {
    BetaVector bv;
    bv.date_idx = date_idx;
    bv.window = window;
    bv.source = method;

    if (method == BetaMethod::first_factor) {
        SpectralCovariance local;
        if (!model) {
            auto est = estimate_correlation(panel, stocks, date_idx, window);
            local = clip_spectrum(est, 1);
            model = &local;
        }
        bv.stocks = model->stocks;
        const long m = model->size();
        Eigen::VectorXd raw =
            model->sigma.cwiseProduct(model->eigenvectors.col(0)) * std::sqrt(model->eigenvalues(0));
        // normalize: cap-weighted mean of beta = 1
        double wsum = 0.0, wb = 0.0;
        for (long j = 0; j < m; ++j)
            if (panel.has_cap(date_idx, bv.stocks[j])) {
                const double c = panel.market_cap(date_idx, bv.stocks[j]);
                wsum += c;
                wb += c * raw(j);
            }
        if (!(wsum > 0.0) || wb == 0.0)
            throw ComputeError("compute_beta: degenerate cap weighting for first-factor beta");
        bv.beta = raw * (wsum / wb);
        return bv;
    }

    const long t0 = date_idx - window;
    if (t0 < 1)
        throw DataError("compute_beta: needs " + std::to_string(window) + " days of history");
    const auto idx = index_returns(panel, stocks, t0, date_idx);

    double im = 0.0;
    int n_idx = 0;
    for (double r : idx)
        if (!is_missing(r)) {
            im += r;
            ++n_idx;
        }
    if (n_idx < kMinCorrObs) throw DataError("compute_beta: insufficient index history");
    im /= n_idx;
    double iv = 0.0;
    for (double r : idx)
        if (!is_missing(r)) iv += (r - im) * (r - im);
    iv /= (n_idx - 1);
    if (!(iv > 0.0)) throw ComputeError("compute_beta: degenerate index variance");

    bv.stocks.assign(stocks.begin(), stocks.end());
    bv.beta.resize(bv.stocks.size());
    for (size_t j = 0; j < bv.stocks.size(); ++j) {
        const long i = bv.stocks[j];
        double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0;
        int n = 0;
        for (long t = t0; t < date_idx; ++t) {
            const double ri = panel.total_return(t, i), rm = idx[t - t0];
            if (is_missing(ri) || is_missing(rm)) continue;
            sx += rm;
            sy += ri;
            sxx += rm * rm;
            sxy += rm * ri;
            ++n;
        }
        if (n < kMinCorrObs) {
            bv.beta(j) = 1.0;  // too little data: market-like by convention
            continue;
        }
        const double var = sxx - sx * sx / n;
        bv.beta(j) = var > 0.0 ? (sxy - sx * sy / n) / var : 1.0;
    }
    return bv;
}

}  // namespace folio

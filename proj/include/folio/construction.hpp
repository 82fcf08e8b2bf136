#pragma once

#include <map>

#include "folio/covariance.hpp"
#include "folio/signals.hpp"

namespace folio {

/// Signed dollar weights per stock, gross-normalized to 1 by every builder.
struct Portfolio {
    long date_idx = -1;
    std::string scheme;
    std::vector<long> stocks;  // sorted panel indices
    Eigen::VectorXd weights;
    std::vector<std::string> warnings;

    double gross() const { return weights.cwiseAbs().sum(); }
    double net() const { return weights.sum(); }

    double weight_for(long panel_idx) const {
        for (size_t j = 0; j < stocks.size(); ++j)
            if (stocks[j] == panel_idx) return weights(j);
        return 0.0;
    }
};

/// Market-cap index weights on the universe, refreshed with it at quarter
/// start.
struct IndexWeights {
    long date_idx = -1;
    std::vector<long> stocks;
    Eigen::VectorXd w;  // >= 0, sums to 1
};

inline IndexWeights make_index_weights(const MarketPanel& panel, std::span<const long> stocks,
                                       long date_idx) {
    IndexWeights iw;
    iw.date_idx = date_idx;
    for (long i : stocks)
        if (panel.has_cap(date_idx, i)) iw.stocks.push_back(i);
    if (iw.stocks.empty()) throw DataError("make_index_weights: no stock has a market cap");
    iw.w.resize(iw.stocks.size());
    for (size_t j = 0; j < iw.stocks.size(); ++j)
        iw.w(j) = panel.market_cap(date_idx, iw.stocks[j]);
    iw.w /= iw.w.sum();
    return iw;
}

namespace detail {

inline void normalize_gross(Portfolio& pf, const char* scheme) {
    const double g = pf.gross();
    if (!(g > 0.0))
        throw ComputeError(std::string(scheme) + ": degenerate cross-section (zero gross)");
    pf.weights /= g;
}

/// Aligns a per-stock quantity onto the predictor's stock list.
template <typename Get>
Eigen::VectorXd aligned(const Predictor& pred, Get&& get) {
    Eigen::VectorXd out(pred.stocks.size());
    for (size_t j = 0; j < pred.stocks.size(); ++j) out(j) = get(pred.stocks[j]);
    return out;
}

}  // namespace detail

/// Fama-French buckets: long the top 30% by predictor, short the bottom 30%,
/// cap-weighted within each bucket, each leg at gross 0.5.
inline Portfolio build_ff(const Predictor& pred, const MarketPanel& panel) {
    const size_t n = pred.stocks.size();
    if (n < 4) throw ComputeError("build_ff: need at least 4 stocks");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (pred.p[a] != pred.p[b]) return pred.p[a] < pred.p[b];
        return pred.stocks[a] < pred.stocks[b];
    });

    const size_t n_long = static_cast<size_t>(std::ceil(0.3 * n));
    const size_t n_short = static_cast<size_t>(std::floor(0.3 * n));

    Portfolio pf;
    pf.date_idx = pred.date_idx;
    pf.scheme = "ff";
    pf.stocks = pred.stocks;
    pf.weights = Eigen::VectorXd::Zero(n);

    auto fill_leg = [&](size_t begin, size_t count, double sign) {
        double total_cap = 0.0;
        for (size_t r = begin; r < begin + count; ++r) {
            const long i = pred.stocks[order[r]];
            if (!panel.has_cap(pred.date_idx, i))
                throw DataError("build_ff: missing market cap for " + panel.stock_ids[i]);
            total_cap += panel.market_cap(pred.date_idx, i);
        }
        if (!(total_cap > 0.0)) throw ComputeError("build_ff: zero bucket capitalization");
        for (size_t r = begin; r < begin + count; ++r) {
            const size_t j = order[r];
            pf.weights(j) =
                sign * 0.5 * panel.market_cap(pred.date_idx, pred.stocks[j]) / total_cap;
        }
    };
    fill_leg(n - n_long, n_long, +1.0);  // top of the ascending order
    fill_leg(0, n_short, -1.0);
    return pf;  // legs already sum to gross 1
}

/// x_i proportional to p_i, demeaned over the defined subset so the net is
/// exactly zero, gross 1.
inline Portfolio build_neutral(const Predictor& pred) {
    const size_t n = pred.stocks.size();
    if (n < 2) throw ComputeError("build_neutral: need at least 2 stocks");
    Portfolio pf;
    pf.date_idx = pred.date_idx;
    pf.scheme = "neutral";
    pf.stocks = pred.stocks;
    pf.weights = Eigen::Map<const Eigen::VectorXd>(pred.p.data(), n);
    pf.weights.array() -= pf.weights.mean();
    detail::normalize_gross(pf, "build_neutral");
    return pf;
}

/// Leg-rescaled beta neutrality: scale the long and short legs of the
/// neutral portfolio so their aggregate betas cancel. Falls back to the
/// neutral weights (with a warning) when a leg's aggregate beta has the
/// wrong sign or vanishes.
inline Portfolio build_beta(const Predictor& pred, const BetaVector& beta) {
    Portfolio pf = build_neutral(pred);
    pf.scheme = "beta";
    Eigen::VectorXd b = detail::aligned(pred, [&](long i) { return beta.for_stock(i); });

    double b_long = 0.0, b_short = 0.0;
    for (long j = 0; j < pf.weights.size(); ++j) {
        const double xb = pf.weights(j) * b(j);
        (pf.weights(j) > 0.0 ? b_long : b_short) += xb;
    }
    if (!(b_long > 0.0) || !(b_short < 0.0)) {
        pf.warnings.push_back("build_beta: degenerate leg beta (B+=" + std::to_string(b_long) +
                              ", B-=" + std::to_string(b_short) + "); kept neutral weights");
        return pf;
    }
    const double scale = -b_short / b_long;
    for (long j = 0; j < pf.weights.size(); ++j)
        if (pf.weights(j) > 0.0) pf.weights(j) *= scale;
    detail::normalize_gross(pf, "build_beta");
    return pf;
}

/// The closed-form solution of
///     min (p-x)^T C (p-x)  s.t.  beta.x = 0  with beta ∝ C w:
///     x = p - (w^T C p / w^T C w) w.
/// Exposed unnormalized for oracle comparisons; build_betaopt gross-scales it.
inline Eigen::VectorXd betaopt_raw(const Eigen::VectorXd& p, const SpectralCovariance& model,
                                   const Eigen::VectorXd& w) {
    const Eigen::VectorXd cw = model.apply(w);
    const double wcw = w.dot(cw);
    if (!(wcw > 0.0)) throw ComputeError("betaopt: degenerate index variance w^T C w");
    const double wcp = model.apply(p).dot(w);
    return p - (wcp / wcw) * w;
}

inline Portfolio build_betaopt(const Predictor& pred, const SpectralCovariance& model,
                               const IndexWeights& index_w) {
    const size_t n = pred.stocks.size();
    if (model.stocks != pred.stocks)
        throw ComputeError("build_betaopt: model not fitted on predictor support");
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(pred.p.data(), n);
    Eigen::VectorXd w(n);
    for (size_t j = 0; j < n; ++j) {
        w(j) = 0.0;
        for (size_t m = 0; m < index_w.stocks.size(); ++m)
            if (index_w.stocks[m] == pred.stocks[j]) {
                w(j) = index_w.w(m);
                break;
            }
    }
    Portfolio pf;
    pf.date_idx = pred.date_idx;
    pf.scheme = "betaopt";
    pf.stocks = pred.stocks;
    pf.weights = betaopt_raw(p, model, w);
    detail::normalize_gross(pf, "build_betaopt");
    return pf;
}

/// Markowitz weights x ∝ C^{-1} p on the cleaned model.
inline Portfolio build_markowitz(const Predictor& pred, const SpectralCovariance& model) {
    const size_t n = pred.stocks.size();
    if (model.stocks != pred.stocks)
        throw ComputeError("build_markowitz: model not fitted on predictor support");
    Portfolio pf;
    pf.date_idx = pred.date_idx;
    pf.scheme = "markowitz";
    pf.stocks = pred.stocks;
    pf.weights = model.apply_inverse(Eigen::Map<const Eigen::VectorXd>(pred.p.data(), n));
    detail::normalize_gross(pf, "build_markowitz");
    return pf;
}

// ---------------------------------------------------------------------------
// Cost-aware construction: slow the predictor down with an EMA, re-rank to
// restore the uniform [-1,1] contract, and feed the result to Markowitz. The
// halflife is picked by grid search on a strictly-prior window.

/// One-day EMA decay for a halflife in days.
inline double ema_decay(int halflife_days) {
    if (halflife_days < 1) throw ConfigError("ema_decay: halflife must be >= 1 day");
    return std::exp2(-1.0 / halflife_days);
}

/// Per-stock EMA state of the predictor, keyed by panel stock index. New
/// stocks initialize at their first observed value; stocks without a value
/// today keep yesterday's state.
class PredictorSmoother {
public:
    explicit PredictorSmoother(int halflife_days)
        : decay_(ema_decay(halflife_days)), halflife_(halflife_days) {}

    int halflife() const { return halflife_; }

    /// Folds today's predictor in and returns the re-ranked smoothed one.
    Predictor update(const Predictor& pred) {
        for (size_t j = 0; j < pred.stocks.size(); ++j) {
            auto [it, fresh] = state_.try_emplace(pred.stocks[j], pred.p[j]);
            if (!fresh) it->second = decay_ * it->second + (1.0 - decay_) * pred.p[j];
        }
        RawSignal sig;
        sig.date_idx = pred.date_idx;
        sig.stocks = pred.stocks;
        sig.values.resize(pred.stocks.size());
        for (size_t j = 0; j < pred.stocks.size(); ++j)
            sig.values[j] = state_.at(pred.stocks[j]);
        return rank_to_predictor(sig);
    }

private:
    double decay_;
    int halflife_;
    std::map<long, double> state_;
};

/// Grid-search selection of the slow-down halflife: evaluates net-of-cost
/// Sharpe per candidate (the evaluator runs the caller's strictly-prior
/// simulation) and returns the argmax, smallest halflife on ties.
template <typename NetSharpeFn>
int calibrate_halflife(std::span<const int> grid, NetSharpeFn&& net_sharpe) {
    if (grid.empty()) throw ConfigError("calibrate_halflife: empty halflife grid");
    int best_h = grid[0];
    double best = -std::numeric_limits<double>::infinity();
    for (int h : grid) {
        const double s = net_sharpe(h);
        if (s > best || (s == best && h < best_h)) {
            best = s;
            best_h = h;
        }
    }
    return best_h;
}

inline const std::vector<int>& default_halflife_grid() {
    static const std::vector<int> grid = {1, 2, 5, 10, 21, 42, 63};
    return grid;
}

inline Portfolio build_cost_aware(const Predictor& smoothed, const SpectralCovariance& model,
                                  int halflife) {
    Portfolio pf = build_markowitz(smoothed, model);
    pf.scheme = "costaware(h=" + std::to_string(halflife) + ")";
    return pf;
}

}  // namespace folio

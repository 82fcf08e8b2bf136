#pragma once

#include <map>
#include <memory>
#include <set>

#include "folio/analytics.hpp"
#include "folio/construction.hpp"
#include "folio/universe.hpp"

namespace folio {

/// Linear execution costs in basis points per traded dollar.
struct CostParams {
    double commission_bps = 1.0;
    double half_spread_bps = 5.0;

    double rate() const { return (commission_bps + half_spread_bps) * 1e-4; }
    void validate() const {
        if (commission_bps < 0 || half_spread_bps < 0)
            throw ConfigError("cost params must be non-negative");
    }
};

struct ModelConfig {
    int corr_window = 500;
    int k = 3;
    int refit_days = 21;   // covariance/beta refreshed on this cadence
    int beta_window = 252;
};

enum class SchemeKind { ff, neutral, beta, betaopt, markowitz, costaware };

struct SchemeSpec {
    SchemeKind kind = SchemeKind::neutral;
    std::optional<int> k;                  // markowitz/costaware override of ModelConfig::k
    std::vector<int> halflife_grid;        // costaware; empty = default grid
    int calib_window = 252;                // costaware: strictly-prior calibration span

    std::string label() const {
        switch (kind) {
            case SchemeKind::ff: return "ff";
            case SchemeKind::neutral: return "neutral";
            case SchemeKind::beta: return "beta";
            case SchemeKind::betaopt: return "betaopt";
            case SchemeKind::markowitz:
                return k ? "markowitz:k=" + std::to_string(*k) : "markowitz";
            case SchemeKind::costaware:
                return k ? "costaware:k=" + std::to_string(*k) : "costaware";
        }
        return "?";
    }

    bool needs_model() const {
        return kind == SchemeKind::betaopt || kind == SchemeKind::markowitz ||
               kind == SchemeKind::costaware;
    }

    static std::string valid_ids() {
        return "ff, neutral, beta, betaopt, markowitz:k=<int>, costaware:k=<int>";
    }

    static SchemeSpec parse(const std::string& s) {
        SchemeSpec spec;
        auto bad = [&]() -> SchemeSpec& {
            throw ConfigError("unknown scheme '" + s + "' (valid: " + valid_ids() + ")");
        };
        auto parse_k = [&](std::string_view rest) {
            if (rest.empty()) return;
            if (!rest.starts_with(":k=")) bad();
            int v = 0;
            auto [p, ec] = std::from_chars(rest.data() + 3, rest.data() + rest.size(), v);
            if (ec != std::errc{} || p != rest.data() + rest.size() || v < 1) bad();
            spec.k = v;
        };
        if (s == "ff") spec.kind = SchemeKind::ff;
        else if (s == "neutral") spec.kind = SchemeKind::neutral;
        else if (s == "beta") spec.kind = SchemeKind::beta;
        else if (s == "betaopt") spec.kind = SchemeKind::betaopt;
        else if (s.starts_with("markowitz")) {
            spec.kind = SchemeKind::markowitz;
            parse_k(std::string_view(s).substr(9));
        } else if (s.starts_with("costaware")) {
            spec.kind = SchemeKind::costaware;
            parse_k(std::string_view(s).substr(9));
        } else bad();
        return spec;
    }
};

struct BacktestOptions {
    std::optional<Date> start;
    std::optional<Date> end;
    int rebalance_every = 1;  // trading days between rebalances
    bool keep_positions = false;
};

/// Daily ledger of one pool backtest. net_pnl = pre_cost_pnl - cost holds
/// exactly per date; all series are aligned with `dates`.
struct BacktestResult {
    std::string pool;
    std::string factor;
    std::string scheme;
    std::vector<Date> dates;
    std::vector<double> pre_cost_pnl;
    std::vector<double> net_pnl;
    std::vector<double> cost;
    std::vector<double> turnover;
    std::vector<double> gross;
    std::vector<double> net_exposure;
    std::vector<double> index_return;       // cap-weighted universe index
    std::vector<Portfolio> positions;       // rebalance-day portfolios when kept
    std::vector<std::string> notes;
    double avg_universe_cap = 0.0;
    double risk_scale = 1.0;

    long size() const { return static_cast<long>(dates.size()); }

    /// Index closes integrated from index returns (level starts at 1).
    std::vector<double> index_closes() const {
        std::vector<double> out(dates.size());
        double level = 1.0;
        for (size_t t = 0; t < dates.size(); ++t) {
            if (!is_missing(index_return[t])) level *= 1.0 + index_return[t];
            out[t] = level;
        }
        return out;
    }
};

namespace detail {

/// Per-pool simulation state and caches. Models and betas are fitted on a
/// fixed date grid (anchor = corr_window, every refit_days) and fetched in
/// between; every window ends strictly before the date it is used at.
class PoolEngine {
public:
    PoolEngine(const MarketPanel& panel, const Universe& universe, FactorId factor,
               const ModelConfig& cfg)
        : panel_(panel), universe_(universe), factor_(factor), cfg_(cfg) {}

    const MarketPanel& panel() const { return panel_; }

    long model_fit_idx(long t) const {
        return t - ((t - cfg_.corr_window) % cfg_.refit_days);
    }

    const Universe::Entry* universe_entry(long t) const {
        return universe_.entry_for(panel_.dates[t]);
    }

    /// Raw factor signal at a date, cached.
    const RawSignal& raw_signal(long t) {
        auto it = raw_cache_.find(t);
        if (it != raw_cache_.end()) return *it->second;
        const auto* entry = universe_entry(t);
        if (!entry) throw DataError("no universe for " + to_string(panel_.dates[t]));
        SignalOptions opt;
        opt.corr_window = cfg_.corr_window;
        SpectralCovariance first_factor_model;
        if (factor_ == FactorId::lowbeta) {
            auto est = estimate_correlation(panel_, entry->eligible, model_fit_idx(t),
                                            cfg_.corr_window);
            first_factor_model = clip_spectrum(est, 1);
            opt.model = &first_factor_model;
        }
        auto sig = std::make_shared<RawSignal>(
            compute_raw_signal(factor_, panel_, entry->eligible, t, opt));
        auto [pos, _] = raw_cache_.emplace(t, std::move(sig));
        return *pos->second;
    }

    /// Support of the raw signal (stocks with a defined value).
    std::vector<long> signal_support(long t) {
        const RawSignal& sig = raw_signal(t);
        std::vector<long> out;
        for (size_t j = 0; j < sig.values.size(); ++j)
            if (!is_missing(sig.values[j])) out.push_back(sig.stocks[j]);
        return out;
    }

    /// Cleaned covariance for date t over the given support, fetched from the
    /// refit-grid cache.
    std::shared_ptr<const SpectralCovariance> model_for(long t, const std::vector<long>& support,
                                                        int k) {
        const long f = model_fit_idx(t);
        auto key = std::make_tuple(f, k, support);
        auto it = model_cache_.find(key);
        if (it != model_cache_.end()) return it->second;
        auto est = estimate_correlation(panel_, support, f, cfg_.corr_window);
        auto model = std::make_shared<SpectralCovariance>(clip_spectrum(est, k));
        model_cache_.emplace(std::move(key), model);
        return model;
    }

    std::shared_ptr<const BetaVector> beta_for(long t, const std::vector<long>& support) {
        const long f = model_fit_idx(t);
        auto key = std::make_pair(f, support);
        auto it = beta_cache_.find(key);
        if (it != beta_cache_.end()) return it->second;
        auto beta = std::make_shared<BetaVector>(
            compute_beta(panel_, support, f, BetaMethod::regression, cfg_.beta_window));
        beta_cache_.emplace(std::move(key), beta);
        return beta;
    }

    /// Quarter-start cap weights over the quarter's universe.
    std::shared_ptr<const IndexWeights> index_weights_for(long t) {
        const auto* entry = universe_entry(t);
        if (!entry) throw DataError("no universe for " + to_string(panel_.dates[t]));
        const Quarter q = quarter_of(panel_.dates[t]);
        auto it = index_cache_.find(q);
        if (it != index_cache_.end()) return it->second;
        long qstart = t;
        while (qstart > 0 && quarter_of(panel_.dates[qstart - 1]) == q) --qstart;
        auto iw = std::make_shared<IndexWeights>(
            make_index_weights(panel_, entry->eligible, qstart));
        index_cache_.emplace(q, iw);
        return iw;
    }

    /// Ranked predictor restricted to the model support when a model is in
    /// play (correlation estimation may exclude short-history stocks).
    Predictor predictor_for(long t, const std::vector<long>* restrict_to = nullptr) {
        const RawSignal& sig = raw_signal(t);
        if (!restrict_to) return rank_to_predictor(sig);
        RawSignal sub;
        sub.date_idx = sig.date_idx;
        sub.direction = sig.direction;
        sub.lag_days = sig.lag_days;
        for (size_t j = 0; j < sig.stocks.size(); ++j)
            if (std::binary_search(restrict_to->begin(), restrict_to->end(), sig.stocks[j])) {
                sub.stocks.push_back(sig.stocks[j]);
                sub.values.push_back(sig.values[j]);
            }
        return rank_to_predictor(sub);
    }

    /// Cap-weighted index return of the quarter's universe at date t.
    double index_return_at(long t) {
        const auto* entry = universe_entry(t);
        if (!entry || t < 1) return kMissing;
        double num = 0, den = 0;
        for (long i : entry->eligible)
            if (panel_.has_return(t, i) && panel_.has_cap(t - 1, i)) {
                num += panel_.market_cap(t - 1, i) * panel_.total_return(t, i);
                den += panel_.market_cap(t - 1, i);
            }
        return den > 0 ? num / den : kMissing;
    }

    double universe_cap_at(long t) {
        const auto* entry = universe_entry(t);
        if (!entry) return kMissing;
        double total = 0;
        for (long i : entry->eligible)
            if (panel_.has_cap(t, i)) total += panel_.market_cap(t, i);
        return total;
    }

private:
    const MarketPanel& panel_;
    const Universe& universe_;
    FactorId factor_;
    ModelConfig cfg_;
    std::map<long, std::shared_ptr<const RawSignal>> raw_cache_;
    std::map<std::tuple<long, int, std::vector<long>>, std::shared_ptr<const SpectralCovariance>>
        model_cache_;
    std::map<std::pair<long, std::vector<long>>, std::shared_ptr<const BetaVector>> beta_cache_;
    std::map<Quarter, std::shared_ptr<const IndexWeights>> index_cache_;
};

using Holdings = std::map<long, double>;  // panel stock index -> dollar weight

inline double accrue_pnl(const MarketPanel& panel, const Holdings& h, long t) {
    double pnl = 0.0;
    for (const auto& [i, w] : h)
        if (panel.has_return(t, i)) pnl += w * panel.total_return(t, i);
    return pnl;  // frozen (missing-return) positions contribute zero
}

inline double trade_turnover(const Holdings& prev, const Holdings& next) {
    double sum = 0.0;
    auto a = prev.begin();
    auto b = next.begin();
    while (a != prev.end() || b != next.end()) {
        if (b == next.end() || (a != prev.end() && a->first < b->first)) {
            sum += std::abs(a->second);
            ++a;
        } else if (a == prev.end() || b->first < a->first) {
            sum += std::abs(b->second);
            ++b;
        } else {
            sum += std::abs(b->second - a->second);
            ++a;
            ++b;
        }
    }
    return sum;
}

inline Holdings to_holdings(const Portfolio& pf) {
    Holdings h;
    for (size_t j = 0; j < pf.stocks.size(); ++j)
        if (pf.weights(j) != 0.0) h[pf.stocks[j]] = pf.weights(j);
    return h;
}

}  // namespace detail

/// Runs the daily-rebalance simulation for one pool: predictor from data
/// <= t - lag, covariance from data < t, trade at t's close, earn the
/// t -> t+1 return, linear costs on traded dollars.
inline BacktestResult run_pool_backtest(const MarketPanel& panel, const Universe& universe,
                                        const SchemeSpec& scheme, FactorId factor,
                                        const ModelConfig& model_cfg, const CostParams& costs,
                                        const BacktestOptions& options = {}) {
    costs.validate();
    if (options.rebalance_every < 1)
        throw ConfigError("run_pool_backtest: rebalance_every must be >= 1");
    if (model_cfg.refit_days < 1) throw ConfigError("run_pool_backtest: refit_days must be >= 1");

    detail::PoolEngine eng(panel, universe, factor, model_cfg);
    const int k = scheme.k.value_or(model_cfg.k);
    const std::vector<int>& grid =
        scheme.halflife_grid.empty() ? default_halflife_grid() : scheme.halflife_grid;

    BacktestResult res;
    res.pool = universe.pool_name;
    res.factor = factor_name(factor);
    res.scheme = scheme.label();

    // --- determine the first tradable date -------------------------------
    long lo = 0;
    if (options.start) {
        const long s = panel.last_index_before(*options.start) + 1;
        lo = std::max(lo, s);
    }
    if (scheme.needs_model()) lo = std::max<long>(lo, model_cfg.corr_window);
    if (scheme.kind == SchemeKind::beta) lo = std::max<long>(lo, model_cfg.beta_window + 1);

    long hi = panel.n_dates();
    if (options.end)
        while (hi > 0 && panel.dates[hi - 1] > *options.end) --hi;

    auto signal_feasible = [&](long t) {
        if (!eng.universe_entry(t)) return false;
        try {
            return eng.signal_support(t).size() >= 2;
        } catch (const Error&) {
            return false;
        }
    };

    long t0 = lo;
    while (t0 < hi && !signal_feasible(t0)) ++t0;
    if (scheme.kind == SchemeKind::costaware) {
        // the calibration window must sit strictly before the first trade
        t0 += scheme.calib_window;
        while (t0 < hi && !signal_feasible(t0)) ++t0;
    }
    if (t0 >= hi)
        throw DataError("run_pool_backtest: no tradable date (warm-up exceeds panel)");
    if (t0 > lo)
        res.notes.push_back("start adjusted to " + to_string(panel.dates[t0]) +
                            " (signal/covariance warm-up)");

    // --- cost-aware state --------------------------------------------------
    std::optional<PredictorSmoother> smoother;
    int current_halflife = 0;
    int last_calib_year = -10000;

    auto markowitz_target = [&](long t) {
        auto support = eng.signal_support(t);
        auto model = eng.model_for(t, support, k);
        Predictor pred = eng.predictor_for(t, &model->stocks);
        return std::make_pair(pred, model);
    };

    // Net-of-cost Sharpe of the slowed-down Markowitz over [c0, t), fresh
    // smoother, used for halflife calibration.
    auto calib_net_sharpe = [&](int h, long c0, long c1) -> double {
        PredictorSmoother sm(h);
        detail::Holdings prev;
        std::vector<double> pnl;
        for (long s = c0; s < c1; ++s) {
            double pre = detail::accrue_pnl(panel, prev, s);
            double traded = 0.0;
            if ((s - c0) % options.rebalance_every == 0) {
                try {
                    auto [pred, model] = markowitz_target(s);
                    Portfolio pf = build_cost_aware(sm.update(pred), *model, h);
                    detail::Holdings next = detail::to_holdings(pf);
                    traded = detail::trade_turnover(prev, next);
                    prev = std::move(next);
                } catch (const Error&) {
                    // hold through infeasible days
                }
            }
            pnl.push_back(pre - costs.rate() * traded);
        }
        if (pnl.size() < 2) return -std::numeric_limits<double>::infinity();
        double mean = 0;
        for (double v : pnl) mean += v;
        mean /= pnl.size();
        double var = 0;
        for (double v : pnl) var += (v - mean) * (v - mean);
        var /= (pnl.size() - 1);
        if (!(var > 0)) return -std::numeric_limits<double>::infinity();
        return mean / std::sqrt(var) * std::sqrt(kTradingDaysPerYear);
    };

    auto recalibrate = [&](long t) {
        const long c0 = t - scheme.calib_window;
        if (c0 < std::max<long>(model_cfg.corr_window, 0)) return;
        const int h = calibrate_halflife(
            grid, [&](int cand) { return calib_net_sharpe(cand, c0, t); });
        if (!smoother || h != current_halflife) {
            smoother.emplace(h);
            // replay the prior window so the EMA state is warm under the new h
            for (long s = c0; s < t; ++s) {
                try {
                    auto [pred, model] = markowitz_target(s);
                    (void)model;
                    smoother->update(pred);
                } catch (const Error&) {
                }
            }
            current_halflife = h;
        }
        res.notes.push_back("calibrated halflife " + std::to_string(h) + " days at " +
                            to_string(panel.dates[t]));
    };

    // --- daily loop --------------------------------------------------------
    detail::Holdings holdings;
    bool warned_degenerate = false;
    double cap_sum = 0.0;
    long cap_n = 0;

    for (long t = t0; t < hi; ++t) {
        const double pre = detail::accrue_pnl(panel, holdings, t);
        double traded = 0.0;

        const bool rebalance_day = (t - t0) % options.rebalance_every == 0;
        if (rebalance_day && eng.universe_entry(t)) {
            try {
                Portfolio pf;
                switch (scheme.kind) {
                    case SchemeKind::ff:
                        pf = build_ff(eng.predictor_for(t), panel);
                        break;
                    case SchemeKind::neutral:
                        pf = build_neutral(eng.predictor_for(t));
                        break;
                    case SchemeKind::beta: {
                        auto support = eng.signal_support(t);
                        auto beta = eng.beta_for(t, support);
                        pf = build_beta(eng.predictor_for(t), *beta);
                        break;
                    }
                    case SchemeKind::betaopt: {
                        auto support = eng.signal_support(t);
                        auto model = eng.model_for(t, support, k);
                        pf = build_betaopt(eng.predictor_for(t, &model->stocks), *model,
                                           *eng.index_weights_for(t));
                        break;
                    }
                    case SchemeKind::markowitz: {
                        auto [pred, model] = markowitz_target(t);
                        pf = build_markowitz(pred, *model);
                        break;
                    }
                    case SchemeKind::costaware: {
                        if (panel.dates[t].year != last_calib_year) {
                            recalibrate(t);
                            last_calib_year = panel.dates[t].year;
                        }
                        if (!smoother)
                            throw DataError("costaware: insufficient calibration history");
                        auto [pred, model] = markowitz_target(t);
                        pf = build_cost_aware(smoother->update(pred), *model, current_halflife);
                        break;
                    }
                }
                for (const auto& w : pf.warnings)
                    if (res.notes.size() < 64) res.notes.push_back(w);
                detail::Holdings next = detail::to_holdings(pf);
                traded = detail::trade_turnover(holdings, next);
                holdings = std::move(next);
                if (options.keep_positions) res.positions.push_back(std::move(pf));
            } catch (const Error& e) {
                if (!warned_degenerate) {
                    res.notes.push_back(std::string("held positions on ") +
                                        to_string(panel.dates[t]) + ": " + e.what());
                    warned_degenerate = true;
                }
            }
        }

        double gross = 0.0, net = 0.0;
        for (const auto& [i, w] : holdings) {
            gross += std::abs(w);
            net += w;
        }

        res.dates.push_back(panel.dates[t]);
        res.pre_cost_pnl.push_back(pre);
        res.turnover.push_back(traded);
        res.cost.push_back(costs.rate() * traded);
        res.net_pnl.push_back(pre - costs.rate() * traded);
        res.gross.push_back(gross);
        res.net_exposure.push_back(net);
        res.index_return.push_back(eng.index_return_at(t));

        const double cap = eng.universe_cap_at(t);
        if (!is_missing(cap)) {
            cap_sum += cap;
            ++cap_n;
        }
    }
    res.avg_universe_cap = cap_n > 0 ? cap_sum / cap_n : 0.0;
    return res;
}

enum class AggregationMode { flat, cap_weighted };

/// World-wide aggregation: per date, the (flat or cap-weighted) average of
/// the pools that have data that day, applied uniformly to every series.
inline BacktestResult aggregate_worldwide(std::span<const BacktestResult> results,
                                          AggregationMode mode = AggregationMode::flat) {
    if (results.empty()) throw ConfigError("aggregate_worldwide: no results");

    std::set<Date> all_dates;
    for (const auto& r : results) all_dates.insert(r.dates.begin(), r.dates.end());

    BacktestResult agg;
    agg.pool = "worldwide";
    agg.factor = results[0].factor;
    agg.scheme = results[0].scheme;
    for (const auto& r : results) {
        if (r.factor != agg.factor || r.scheme != agg.scheme)
            throw ConfigError("aggregate_worldwide: mixed factor/scheme inputs");
        agg.avg_universe_cap += r.avg_universe_cap;
    }

    std::vector<size_t> cursor(results.size(), 0);
    for (const Date& d : all_dates) {
        double w_sum = 0;
        double pre = 0, net = 0, cost = 0, turn = 0, gross = 0, nexp = 0, idx = 0;
        double idx_w = 0;
        for (size_t p = 0; p < results.size(); ++p) {
            const auto& r = results[p];
            auto& c = cursor[p];
            while (c < r.dates.size() && r.dates[c] < d) ++c;
            if (c >= r.dates.size() || !(r.dates[c] == d)) continue;
            const double w = mode == AggregationMode::flat
                                 ? 1.0
                                 : std::max(r.avg_universe_cap, 0.0);
            w_sum += w;
            pre += w * r.pre_cost_pnl[c];
            net += w * r.net_pnl[c];
            cost += w * r.cost[c];
            turn += w * r.turnover[c];
            gross += w * r.gross[c];
            nexp += w * r.net_exposure[c];
            if (!is_missing(r.index_return[c])) {
                idx += w * r.index_return[c];
                idx_w += w;
            }
        }
        if (!(w_sum > 0)) continue;
        agg.dates.push_back(d);
        agg.pre_cost_pnl.push_back(pre / w_sum);
        agg.net_pnl.push_back(net / w_sum);
        agg.cost.push_back(cost / w_sum);
        agg.turnover.push_back(turn / w_sum);
        agg.gross.push_back(gross / w_sum);
        agg.net_exposure.push_back(nexp / w_sum);
        agg.index_return.push_back(idx_w > 0 ? idx / idx_w : kMissing);
    }
    return agg;
}

/// Rescales each result by one scalar so the full-period annualized vol of
/// its net P&L equals the target; the scalar applies uniformly to P&L,
/// costs, turnover and exposure series, which leaves Sharpe ratios intact.
inline void normalize_risk(std::span<BacktestResult> results, double target_ann_vol = 0.10) {
    if (!(target_ann_vol > 0)) throw ConfigError("normalize_risk: target vol must be positive");
    for (auto& r : results) {
        if (r.size() <= static_cast<long>(kTradingDaysPerYear))
            throw DataError("normalize_risk: '" + r.scheme + "' has <= 1 year of P&L");
        const SharpeStats s = sharpe_and_tstat(r.net_pnl);  // throws on zero variance
        const double scale = target_ann_vol / s.vol_annualized;
        for (auto* series : {&r.pre_cost_pnl, &r.net_pnl, &r.cost, &r.turnover, &r.gross,
                             &r.net_exposure})
            for (double& v : *series) v *= scale;
        r.risk_scale *= scale;
    }
}

}  // namespace folio

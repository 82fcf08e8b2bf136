#pragma once

#include <cstdio>
#include <numeric>

#include "folio/panel.hpp"
#include "folio/rng.hpp"

namespace folio {

/// Parameters of the synthetic market generator. Returns follow a one-market
/// plus sector-block factor model,
///     r_it = beta_i f_t + s_{g(i),t} + eta_it (+ alpha term),
/// with log-normal caps/ADV constant per stock and round-robin sectors.
/// Identical specs (same seed) generate bit-identical panels.
struct SyntheticSpec {
    int n_stocks = 50;
    int n_days = 750;
    int n_sectors = 4;
    double market_vol = 0.15;   // annualized
    double sector_vol = 0.08;   // annualized
    double idio_vol = 0.20;     // annualized
    double market_beta_dispersion = 0.25;
    /// When > 0, adds embedded_alpha * idio_daily_vol * p_{i,t-1} to the
    /// return, where p is the ranked trailing-mean-return predictor (230-day
    /// window lagged 21 days). This plants genuine momentum alpha.
    double embedded_alpha = 0.0;
    std::uint64_t seed = 1;
    Date start_date{2000, 1, 3};
    bool with_fundamentals = true;

    void validate() const {
        if (n_stocks < 1 || n_days < 2) throw ConfigError("synthetic: need n_stocks>=1, n_days>=2");
        if (n_sectors < 1) throw ConfigError("synthetic: n_sectors must be >= 1");
        if (!(market_vol >= 0) || !(sector_vol >= 0) || !(idio_vol > 0))
            throw ConfigError("synthetic: volatilities must be positive (idio strictly)");
    }
};

namespace detail {

/// Trading days: consecutive weekdays from start.
inline std::vector<Date> trading_days(Date start, int n) {
    std::vector<Date> out;
    out.reserve(n);
    std::int64_t s = to_serial(start);
    while (static_cast<int>(out.size()) < n) {
        Date d = from_serial(s);
        if (weekday(d) < 5) out.push_back(d);
        ++s;
    }
    return out;
}

/// Rank map used for the embedded-alpha coupling; mirrors the predictor
/// convention (ascending, ties impossible here up to RNG measure zero).
inline void rank_to_unit(const std::vector<double>& v, std::vector<int>& order,
                         std::vector<double>& out) {
    const int n = static_cast<int>(v.size());
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return v[a] < v[b] || (v[a] == v[b] && a < b);
    });
    out.resize(n);
    if (n == 1) {
        out[0] = 0.0;
        return;
    }
    for (int r = 0; r < n; ++r) out[order[r]] = 2.0 * (r + 1 - 0.5 * (n + 1)) / (n - 1);
}

}  // namespace detail

inline MarketPanel generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int N = spec.n_stocks, T = spec.n_days, G = spec.n_sectors;
    const double sqrt252 = std::sqrt(252.0);
    const double mvol = spec.market_vol / sqrt252;
    const double svol = spec.sector_vol / sqrt252;
    const double ivol = spec.idio_vol / sqrt252;

    MarketPanel p;
    p.dates = detail::trading_days(spec.start_date, T);
    p.stock_ids.resize(N);
    p.sector.resize(N);
    for (int i = 0; i < N; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "S%04d", i);
        p.stock_ids[i] = id;
        char sec[16];
        std::snprintf(sec, sizeof sec, "SEC%02d", i % G);
        p.sector[i] = sec;
    }

    std::vector<double> beta(N), cap(N), advv(N), p0(N);
    for (int i = 0; i < N; ++i) beta[i] = 1.0 + spec.market_beta_dispersion * rng.normal();
    for (int i = 0; i < N; ++i) cap[i] = 1e9 * std::exp(rng.normal(0.0, 1.0));
    for (int i = 0; i < N; ++i) advv[i] = 5e6 * std::exp(rng.normal(0.0, 1.0));
    for (int i = 0; i < N; ++i) p0[i] = 20.0 + 180.0 * rng.uniform();

    p.close.resize(T, N);
    p.total_return.resize(T, N);
    p.market_cap.resize(T, N);
    p.adv.resize(T, N);

    // Embedded-alpha machinery: ranked predictor of trailing 230-day mean
    // return, lagged 21 days, matching the momentum factor definition.
    constexpr int kMomWindow = 230, kMomLag = 21;
    std::vector<std::vector<double>> pred_hist;  // predictor per day (for lagging)
    std::vector<double> runsum(N, 0.0);
    std::vector<double> mom(N), ranked;
    std::vector<int> scratch;

    p.total_return.row(0).setConstant(kMissing);
    for (int i = 0; i < N; ++i) p.close(0, i) = p0[i];

    std::vector<double> sec_shock(G);
    for (int t = 1; t < T; ++t) {
        const double f = mvol * rng.normal();
        for (int g = 0; g < G; ++g) sec_shock[g] = svol * rng.normal();
        const std::vector<double>* lagged = nullptr;
        if (spec.embedded_alpha != 0.0 && static_cast<int>(pred_hist.size()) >= kMomLag)
            lagged = &pred_hist[pred_hist.size() - kMomLag];
        for (int i = 0; i < N; ++i) {
            double r = beta[i] * f + sec_shock[i % G] + ivol * rng.normal();
            if (lagged) r += spec.embedded_alpha * ivol * (*lagged)[i];
            p.total_return(t, i) = r;
            p.close(t, i) = p.close(t - 1, i) * (1.0 + r);
        }
        if (spec.embedded_alpha != 0.0) {
            // Trailing mean return over the last kMomWindow days ending at t.
            for (int i = 0; i < N; ++i) runsum[i] += p.total_return(t, i);
            if (t > kMomWindow)
                for (int i = 0; i < N; ++i) runsum[i] -= p.total_return(t - kMomWindow, i);
            if (t >= kMomWindow) {
                for (int i = 0; i < N; ++i) mom[i] = runsum[i] / kMomWindow;
                detail::rank_to_unit(mom, scratch, ranked);
                pred_hist.push_back(ranked);
            }
        }
    }

    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N; ++i) {
            p.market_cap(t, i) = cap[i];
            p.adv(t, i) = advv[i];
        }

    p.fundamentals.resize(N);
    if (spec.with_fundamentals) {
        // Quarterly reports, available 45 calendar days after quarter end.
        std::vector<double> ta(N), noa(N);
        for (int i = 0; i < N; ++i) {
            ta[i] = cap[i] * (0.8 + 0.8 * rng.uniform());
            noa[i] = 0.6 * ta[i];
        }
        Quarter q = quarter_of(p.dates.front());
        const Date last = p.dates.back();
        while (q.start() < last) {
            const Date qend = add_days(q.next().start(), -1);
            const Date avail = add_days(qend, 45);
            for (int i = 0; i < N; ++i) {
                ta[i] *= 1.0 + rng.normal(0.005, 0.01);
                noa[i] += ta[i] * rng.normal(0.002, 0.01);
                FundamentalReport rep;
                rep.report_date = avail;
                rep.total_assets = ta[i];
                rep.net_operating_assets = noa[i];
                rep.total_equity = 0.5 * ta[i] * (1.0 + 0.1 * rng.normal());
                rep.operating_cash_flow = ta[i] * (0.02 + 0.01 * rng.normal());
                rep.net_income = ta[i] * (0.008 + 0.006 * rng.normal());
                rep.dividends = std::max(0.0, ta[i] * (0.004 + 0.002 * rng.normal()));
                p.fundamentals[i].push_back(rep);
            }
            q = q.next();
        }
        for (auto& reps : p.fundamentals) {
            std::sort(reps.begin(), reps.end(),
                      [](const auto& a, const auto& b) { return a.report_date < b.report_date; });
            reps.erase(std::unique(reps.begin(), reps.end(),
                                   [](const auto& a, const auto& b) {
                                       return a.report_date == b.report_date;
                                   }),
                       reps.end());
        }
    }

    p.validate();
    return p;
}

}  // namespace folio

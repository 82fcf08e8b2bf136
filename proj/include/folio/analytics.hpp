#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "folio/construction.hpp"
#include "folio/dates.hpp"
#include "folio/errors.hpp"
#include "folio/panel.hpp"

namespace folio {

inline constexpr double kTradingDaysPerYear = 252.0;

struct SharpeStats {
    double sharpe_annualized = 0.0;
    double tstat = 0.0;
    double mean_daily = 0.0;
    double vol_daily = 0.0;
    double vol_annualized = 0.0;
    long n_obs = 0;
};

/// SR = mean/std * sqrt(252) on daily P&L; t-stat = SR * sqrt(years).
inline SharpeStats sharpe_and_tstat(std::span<const double> pnl) {
    long n = 0;
    double sum = 0.0;
    for (double v : pnl)
        if (!is_missing(v)) {
            sum += v;
            ++n;
        }
    if (n < 2) throw ComputeError("sharpe_and_tstat: need at least 2 observations");
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : pnl)
        if (!is_missing(v)) ss += (v - mean) * (v - mean);
    const double var = ss / (n - 1);
    if (!(var > 0.0)) throw ComputeError("sharpe_and_tstat: zero variance P&L");

    SharpeStats s;
    s.n_obs = n;
    s.mean_daily = mean;
    s.vol_daily = std::sqrt(var);
    s.vol_annualized = s.vol_daily * std::sqrt(kTradingDaysPerYear);
    s.sharpe_annualized = mean / s.vol_daily * std::sqrt(kTradingDaysPerYear);
    s.tstat = s.sharpe_annualized * std::sqrt(n / kTradingDaysPerYear);
    return s;
}

struct RollingStats {
    std::vector<double> vol;   // trailing std, NaN during warm-up
    std::vector<double> corr;  // trailing Pearson correlation with the index
};

/// Strictly trailing window statistics: the value at t uses observations
/// t-window+1..t only. `normalize_vol` rescales the vol series so its
/// time-average over defined entries is 1.
inline RollingStats rolling_stats(std::span<const double> pnl,
                                  std::span<const double> index_returns, int window = 252,
                                  bool normalize_vol = false) {
    if (pnl.size() != index_returns.size())
        throw ComputeError("rolling_stats: series lengths differ");
    const long n = static_cast<long>(pnl.size());
    if (n < window) throw DataError("rolling_stats: need at least `window` observations");

    RollingStats out;
    out.vol.assign(n, kMissing);
    out.corr.assign(n, kMissing);
    for (long t = window - 1; t < n; ++t) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        int m = 0;
        for (long s = t - window + 1; s <= t; ++s) {
            if (is_missing(pnl[s]) || is_missing(index_returns[s])) continue;
            const double x = pnl[s], y = index_returns[s];
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            ++m;
        }
        if (m < 2) continue;
        const double vx = sxx - sx * sx / m, vy = syy - sy * sy / m;
        if (vx > 0.0) out.vol[t] = std::sqrt(vx / (m - 1));
        if (vx > 0.0 && vy > 0.0) out.corr[t] = (sxy - sx * sy / m) / std::sqrt(vx * vy);
    }
    if (normalize_vol) {
        double sum = 0.0;
        long m = 0;
        for (double v : out.vol)
            if (!is_missing(v)) {
                sum += v;
                ++m;
            }
        if (m > 0 && sum > 0.0) {
            const double avg = sum / m;
            for (double& v : out.vol)
                if (!is_missing(v)) v /= avg;
        }
    }
    return out;
}

struct ExposureReport {
    std::vector<double> net_over_gross;           // per date, NaN when gross = 0
    std::vector<double> beta_exposure;            // beta . x per date
    std::vector<std::string> sectors;             // distinct labels, sorted
    std::vector<double> avg_sector_exposure;      // per sector: time-avg |sector net|/gross
    double avg_sector_exposure_overall = 0.0;     // mean over sectors
};

/// Net/gross, per-sector average |net|/gross and beta exposure over a
/// positions history. Dates with zero gross are flagged (NaN) and skipped in
/// averages.
inline ExposureReport exposures(std::span<const Portfolio> positions, const MarketPanel& panel,
                                const BetaVector* beta = nullptr) {
    ExposureReport rep;
    {
        std::vector<std::string> labels = panel.sector;
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        rep.sectors = std::move(labels);
    }
    const size_t ns = rep.sectors.size();
    std::vector<double> sector_sum(ns, 0.0);
    long used_dates = 0;

    rep.net_over_gross.reserve(positions.size());
    rep.beta_exposure.reserve(positions.size());
    for (const auto& pf : positions) {
        const double gross = pf.gross();
        if (!(gross > 0.0)) {
            rep.net_over_gross.push_back(kMissing);
            rep.beta_exposure.push_back(kMissing);
            continue;
        }
        rep.net_over_gross.push_back(pf.net() / gross);
        double bx = kMissing;
        if (beta) {
            bx = 0.0;
            for (size_t j = 0; j < pf.stocks.size(); ++j)
                bx += pf.weights(j) * beta->for_stock(pf.stocks[j]);
        }
        rep.beta_exposure.push_back(bx);

        std::vector<double> net_by_sector(ns, 0.0);
        for (size_t j = 0; j < pf.stocks.size(); ++j) {
            const auto& label = panel.sector[pf.stocks[j]];
            const size_t s =
                std::lower_bound(rep.sectors.begin(), rep.sectors.end(), label) -
                rep.sectors.begin();
            net_by_sector[s] += pf.weights(j);
        }
        for (size_t s = 0; s < ns; ++s) sector_sum[s] += std::abs(net_by_sector[s]) / gross;
        ++used_dates;
    }

    rep.avg_sector_exposure.assign(ns, kMissing);
    if (used_dates > 0) {
        double total = 0.0;
        for (size_t s = 0; s < ns; ++s) {
            rep.avg_sector_exposure[s] = sector_sum[s] / used_dates;
            total += rep.avg_sector_exposure[s];
        }
        rep.avg_sector_exposure_overall = ns > 0 ? total / ns : 0.0;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Weekly aggregation

struct WeeklySeries {
    std::vector<IsoWeek> weeks;
    std::vector<double> values;
};

/// Sums daily values within ISO weeks (calendar weeks, Monday-Sunday).
inline WeeklySeries weekly_sum(std::span<const Date> dates, std::span<const double> daily) {
    if (dates.size() != daily.size()) throw ComputeError("weekly_sum: length mismatch");
    WeeklySeries out;
    for (size_t t = 0; t < dates.size(); ++t) {
        const IsoWeek w = iso_week_of(dates[t]);
        if (out.weeks.empty() || !(out.weeks.back() == w)) {
            out.weeks.push_back(w);
            out.values.push_back(0.0);
        }
        if (!is_missing(daily[t])) out.values.back() += daily[t];
    }
    return out;
}

/// Last value within each ISO week (index closes).
inline WeeklySeries weekly_last(std::span<const Date> dates, std::span<const double> daily) {
    if (dates.size() != daily.size()) throw ComputeError("weekly_last: length mismatch");
    WeeklySeries out;
    for (size_t t = 0; t < dates.size(); ++t) {
        const IsoWeek w = iso_week_of(dates[t]);
        if (out.weeks.empty() || !(out.weeks.back() == w)) {
            out.weeks.push_back(w);
            out.values.push_back(kMissing);
        }
        if (!is_missing(daily[t])) out.values.back() = daily[t];
    }
    return out;
}

/// Bias-corrected sample skewness G1.
inline double sample_skewness(std::span<const double> v) {
    long n = 0;
    double sum = 0.0;
    for (double x : v)
        if (!is_missing(x)) {
            sum += x;
            ++n;
        }
    if (n < 3) throw ComputeError("sample_skewness: need at least 3 observations");
    const double mean = sum / n;
    double m2 = 0.0, m3 = 0.0;
    for (double x : v)
        if (!is_missing(x)) {
            const double d = x - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
    m2 /= n;
    m3 /= n;
    if (!(m2 > 0.0)) throw ComputeError("sample_skewness: zero variance");
    const double g1 = m3 / std::pow(m2, 1.5);
    return g1 * std::sqrt(static_cast<double>(n) * (n - 1)) / (n - 2);
}

/// Weekly P&L reordered by amplitude, smallest first, with running partial
/// sums; the scalar skewness is computed on the unsorted series.
struct SkewCurve {
    std::vector<double> ordered_pnl;    // sorted by |pnl| ascending, date order on ties
    std::vector<double> cumulative;     // partial sums of ordered_pnl
    double skewness = 0.0;
    double total_pnl = 0.0;
};

inline SkewCurve skew_curve(std::span<const double> pnl_weekly) {
    long n_def = 0;
    for (double v : pnl_weekly)
        if (!is_missing(v)) ++n_def;
    if (n_def < 10) throw DataError("skew_curve: need at least 10 weekly observations");

    SkewCurve out;
    std::vector<size_t> order;
    for (size_t j = 0; j < pnl_weekly.size(); ++j)
        if (!is_missing(pnl_weekly[j])) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return std::abs(pnl_weekly[a]) < std::abs(pnl_weekly[b]);
    });
    double cum = 0.0;
    for (size_t j : order) {
        out.ordered_pnl.push_back(pnl_weekly[j]);
        cum += pnl_weekly[j];
        out.cumulative.push_back(cum);
    }
    out.total_pnl = cum;
    out.skewness = sample_skewness(pnl_weekly);
    return out;
}

// ---------------------------------------------------------------------------
// Market kinks

struct KinkEvent {
    enum class Kind { minimum, maximum };
    Kind kind = Kind::minimum;
    long week_idx = -1;        // index into the weekly series
    double depth_sigma = 0.0;  // draw-down (or -up) in weekly-vol units
    long eval_begin = -1;      // week_idx + 1
    long eval_end = -1;        // week_idx + 4, inclusive
};

inline constexpr int kKinkLocalWindow = 4;   // 9-week window = t +/- 4
inline constexpr int kKinkRefWindow = 26;    // prior running max/min lookback
inline constexpr int kKinkVolWindow = 52;    // weekly-return vol window
inline constexpr int kKinkEvalWeeks = 4;

/// Local extrema of a weekly index-close series whose draw-down (draw-up)
/// from the prior 26-week running maximum (minimum), in units of the
/// trailing 52-week weekly-return volatility, reaches `n`. All inputs to an
/// event live in weeks <= t+4, so later data cannot change it.
inline std::vector<KinkEvent> detect_kinks(std::span<const double> index_weekly_closes,
                                           double n_threshold) {
    const long n = static_cast<long>(index_weekly_closes.size());
    if (n < kKinkVolWindow + 1 + 2 * kKinkLocalWindow)
        throw DataError("detect_kinks: need at least " +
                        std::to_string(kKinkVolWindow + 1 + 2 * kKinkLocalWindow) +
                        " weeks of index history");
    for (double c : index_weekly_closes)
        if (is_missing(c) || !(c > 0.0))
            throw DataError("detect_kinks: index closes must be present and positive");

    // Weekly returns for the vol normalization (first entry undefined).
    std::vector<double> wret(n, kMissing);
    for (long t = 1; t < n; ++t)
        wret[t] = index_weekly_closes[t] / index_weekly_closes[t - 1] - 1.0;

    auto trailing_vol = [&](long t) -> double {
        double sum = 0.0, sum2 = 0.0;
        int m = 0;
        for (long s = t - kKinkVolWindow + 1; s <= t; ++s) {
            if (s < 1) continue;
            sum += wret[s];
            sum2 += wret[s] * wret[s];
            ++m;
        }
        if (m < 2) return kMissing;
        const double mean = sum / m;
        const double var = (sum2 - m * mean * mean) / (m - 1);
        return var > 0.0 ? std::sqrt(var) : kMissing;
    };

    std::vector<KinkEvent> events;
    for (long t = kKinkVolWindow; t + kKinkLocalWindow < n; ++t) {
        bool is_min = true, is_max = true;
        for (long s = t - kKinkLocalWindow; s <= t + kKinkLocalWindow; ++s) {
            if (s == t) continue;
            if (s < 0) {
                is_min = is_max = false;
                break;
            }
            if (index_weekly_closes[s] <= index_weekly_closes[t]) is_min = false;
            if (index_weekly_closes[s] >= index_weekly_closes[t]) is_max = false;
        }
        if (!is_min && !is_max) continue;
        const double vol = trailing_vol(t);
        if (is_missing(vol)) continue;

        double ref = index_weekly_closes[t];
        for (long s = std::max<long>(0, t - kKinkRefWindow); s < t; ++s)
            ref = is_min ? std::max(ref, index_weekly_closes[s])
                         : std::min(ref, index_weekly_closes[s]);
        const double move = is_min ? (ref - index_weekly_closes[t]) / ref
                                   : (index_weekly_closes[t] - ref) / ref;
        const double depth = move / vol;
        if (depth < n_threshold) continue;

        KinkEvent ev;
        ev.kind = is_min ? KinkEvent::Kind::minimum : KinkEvent::Kind::maximum;
        ev.week_idx = t;
        ev.depth_sigma = depth;
        ev.eval_begin = t + 1;
        ev.eval_end = t + kKinkEvalWeeks;
        events.push_back(ev);
    }
    return events;
}

struct ConditionalPerformance {
    KinkEvent::Kind kind = KinkEvent::Kind::minimum;
    double threshold = 0.0;
    long count = 0;
    double mean = 0.0;    // average 4-week P&L sum across events
    double stderr_ = 0.0; // standard error of that mean (0 for a single event)
};

/// Average strategy P&L over each event's 4-week evaluation window. Events
/// whose window extends past the P&L history are skipped. Returns nullopt if
/// no event of the requested kind remains.
inline std::optional<ConditionalPerformance> conditional_performance(
    std::span<const double> pnl_weekly, std::span<const KinkEvent> events,
    KinkEvent::Kind kind, double threshold) {
    std::vector<double> sums;
    for (const auto& ev : events) {
        if (ev.kind != kind || ev.depth_sigma < threshold) continue;
        if (ev.eval_end >= static_cast<long>(pnl_weekly.size())) continue;
        double s = 0.0;
        for (long t = ev.eval_begin; t <= ev.eval_end; ++t)
            if (!is_missing(pnl_weekly[t])) s += pnl_weekly[t];
        sums.push_back(s);
    }
    if (sums.empty()) return std::nullopt;

    ConditionalPerformance out;
    out.kind = kind;
    out.threshold = threshold;
    out.count = static_cast<long>(sums.size());
    for (double s : sums) out.mean += s;
    out.mean /= out.count;
    if (out.count > 1) {
        double ss = 0.0;
        for (double s : sums) ss += (s - out.mean) * (s - out.mean);
        out.stderr_ = std::sqrt(ss / (out.count - 1) / out.count);
    }
    return out;
}

}  // namespace folio

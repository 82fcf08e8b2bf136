#pragma once

#include <numeric>
#include <span>

#include "folio/covariance.hpp"
#include "folio/panel.hpp"

namespace folio {

enum class FactorId {
    accrual,
    book,
    cashflow,
    divyield,
    earnyield,
    growth,
    quality,
    lowbeta,
    lowvol,
    momentum,
    size,
};

inline const std::vector<std::pair<std::string, FactorId>>& factor_ids() {
    static const std::vector<std::pair<std::string, FactorId>> ids = {
        {"accrual", FactorId::accrual},   {"book", FactorId::book},
        {"cashflow", FactorId::cashflow}, {"divyield", FactorId::divyield},
        {"earnyield", FactorId::earnyield}, {"growth", FactorId::growth},
        {"quality", FactorId::quality},   {"lowbeta", FactorId::lowbeta},
        {"lowvol", FactorId::lowvol},     {"momentum", FactorId::momentum},
        {"size", FactorId::size},
    };
    return ids;
}

inline FactorId parse_factor(const std::string& s) {
    for (const auto& [name, id] : factor_ids())
        if (name == s) return id;
    std::string valid;
    for (const auto& [name, _] : factor_ids()) valid += (valid.empty() ? "" : ", ") + name;
    throw ConfigError("unknown factor '" + s + "' (valid: " + valid + ")");
}

inline std::string factor_name(FactorId f) {
    for (const auto& [name, id] : factor_ids())
        if (id == f) return name;
    return "?";
}

/// Ranking orientation: ascending means the largest raw value maps to +1.
enum class RankDirection { lowest_to_highest, highest_to_lowest };

struct RawSignal {
    long date_idx = -1;
    std::vector<long> stocks;    // panel stock indices the signal is defined on
    std::vector<double> values;  // aligned with stocks; NaN = undefined
    RankDirection direction = RankDirection::lowest_to_highest;
    int lag_days = 0;
};

/// Cross-sectional ranked predictor, equispaced in (-1, +1).
struct Predictor {
    long date_idx = -1;
    std::vector<long> stocks;  // defined subset, sorted by panel index
    std::vector<double> p;     // in [-1, +1]
};

/// "1 month" of reporting lag in trading days.
inline constexpr int kMonthLag = 21;

struct SignalOptions {
    /// Covariance model used by the lowbeta factor; when absent a one-factor
    /// model is fitted internally over corr_window days.
    const SpectralCovariance* model = nullptr;
    int corr_window = 500;
};

namespace detail {

/// Trailing mean of present returns over the `window` observations ending at
/// `end_idx` inclusive; defined when at least two thirds are present.
inline double trailing_mean_return(const MarketPanel& p, long stock, long end_idx, int window) {
    if (end_idx - window + 1 < 1) return kMissing;  // returns start on day 1
    double sum = 0.0;
    int n = 0;
    for (long t = end_idx - window + 1; t <= end_idx; ++t)
        if (p.has_return(t, stock)) {
            sum += p.total_return(t, stock);
            ++n;
        }
    if (3 * n < 2 * window) return kMissing;
    return sum / n;
}

inline double trailing_return_vol(const MarketPanel& p, long stock, long end_idx, int window) {
    if (end_idx - window + 1 < 1) return kMissing;
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (long t = end_idx - window + 1; t <= end_idx; ++t)
        if (p.has_return(t, stock)) {
            const double r = p.total_return(t, stock);
            sum += r;
            sum2 += r * r;
            ++n;
        }
    if (3 * n < 2 * window || n < 2) return kMissing;
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1)));
}

inline double trailing_mean_cap(const MarketPanel& p, long stock, long end_idx, int window) {
    if (end_idx - window + 1 < 0) return kMissing;
    double sum = 0.0;
    int n = 0;
    for (long t = end_idx - window + 1; t <= end_idx; ++t)
        if (p.has_cap(t, stock)) {
            sum += p.market_cap(t, stock);
            ++n;
        }
    if (3 * n < 2 * window) return kMissing;
    return sum / n;
}

/// Fundamentals ratio numerator/denominator evaluated point-in-time at panel
/// index t; either side missing makes the value missing.
inline double ratio(double num, double den) {
    if (is_missing(num) || is_missing(den) || den == 0.0) return kMissing;
    return num / den;
}

}  // namespace detail

/// Computes the raw factor value for every stock in `stocks` at `date_idx`.
/// Stocks without the required history or fundamentals stay NaN.
inline RawSignal compute_raw_signal(FactorId factor, const MarketPanel& panel,
                                    std::span<const long> stocks, long date_idx,
                                    const SignalOptions& opt = {}) {
    if (date_idx < 0 || date_idx >= panel.n_dates())
        throw DataError("compute_raw_signal: date index out of range");

    RawSignal sig;
    sig.date_idx = date_idx;
    sig.stocks.assign(stocks.begin(), stocks.end());
    sig.values.assign(stocks.size(), kMissing);
    sig.direction = RankDirection::lowest_to_highest;
    sig.lag_days = kMonthLag;

    // Evaluation index for "(lagged by 1 month)" factors.
    const long lag_idx = date_idx - kMonthLag;

    auto fundamental_ratio = [&](auto numerator_of) {
        if (lag_idx < 0) return;
        for (size_t j = 0; j < sig.stocks.size(); ++j) {
            const long i = sig.stocks[j];
            const FundamentalReport* rep = panel.latest_report(i, lag_idx);
            if (!rep || !panel.has_cap(lag_idx, i)) continue;
            sig.values[j] = detail::ratio(numerator_of(*rep), panel.market_cap(lag_idx, i));
        }
    };

    switch (factor) {
        case FactorId::momentum:
            // 230-day mean daily return, window ending one month back.
            if (lag_idx >= 1)
                for (size_t j = 0; j < sig.stocks.size(); ++j)
                    sig.values[j] = detail::trailing_mean_return(panel, sig.stocks[j], lag_idx, 230);
            break;
        case FactorId::lowvol:
            sig.direction = RankDirection::highest_to_lowest;
            if (lag_idx >= 1)
                for (size_t j = 0; j < sig.stocks.size(); ++j)
                    sig.values[j] = detail::trailing_return_vol(panel, sig.stocks[j], lag_idx, 180);
            break;
        case FactorId::size:
            sig.direction = RankDirection::highest_to_lowest;
            if (lag_idx >= 0)
                for (size_t j = 0; j < sig.stocks.size(); ++j)
                    sig.values[j] = detail::trailing_mean_cap(panel, sig.stocks[j], lag_idx, 250);
            break;
        case FactorId::book:
            fundamental_ratio([](const FundamentalReport& r) { return r.total_equity; });
            break;
        case FactorId::cashflow:
            fundamental_ratio([](const FundamentalReport& r) { return r.operating_cash_flow; });
            break;
        case FactorId::divyield:
            fundamental_ratio([](const FundamentalReport& r) { return r.dividends; });
            break;
        case FactorId::earnyield:
            fundamental_ratio([](const FundamentalReport& r) { return r.net_income; });
            break;
        case FactorId::growth:
            if (lag_idx >= 0)
                for (size_t j = 0; j < sig.stocks.size(); ++j) {
                    const FundamentalReport* rep = panel.latest_report(sig.stocks[j], lag_idx);
                    if (rep) sig.values[j] = detail::ratio(rep->operating_cash_flow, rep->total_assets);
                }
            break;
        case FactorId::quality:
            if (lag_idx >= 0)
                for (size_t j = 0; j < sig.stocks.size(); ++j) {
                    const FundamentalReport* rep = panel.latest_report(sig.stocks[j], lag_idx);
                    if (rep) sig.values[j] = detail::ratio(rep->net_income, rep->total_assets);
                }
            break;
        case FactorId::accrual: {
            // Yearly increase of net operating assets over latest total
            // assets; no reporting lag beyond point-in-time availability.
            sig.lag_days = 0;
            for (size_t j = 0; j < sig.stocks.size(); ++j) {
                const long i = sig.stocks[j];
                const FundamentalReport* latest = panel.latest_report(i, date_idx);
                if (!latest) continue;
                const FundamentalReport* prior = nullptr;
                for (const auto& r : panel.fundamentals[i]) {
                    if (to_serial(latest->report_date) - to_serial(r.report_date) >= 300)
                        prior = &r;
                    else
                        break;
                }
                if (!prior) continue;
                if (is_missing(latest->net_operating_assets) ||
                    is_missing(prior->net_operating_assets))
                    continue;
                sig.values[j] = detail::ratio(
                    latest->net_operating_assets - prior->net_operating_assets,
                    latest->total_assets);
            }
            break;
        }
        case FactorId::lowbeta: {
            // Beta from the first statistical factor of the cleaned model.
            sig.direction = RankDirection::highest_to_lowest;
            sig.lag_days = 0;
            const SpectralCovariance* model = opt.model;
            SpectralCovariance local;
            if (!model) {
                auto est = estimate_correlation(panel, stocks, date_idx, opt.corr_window);
                local = clip_spectrum(est, 1);
                model = &local;
            }
            const double lam0 = model->eigenvalues(0);
            for (size_t j = 0; j < sig.stocks.size(); ++j) {
                const long i = sig.stocks[j];
                for (size_t m = 0; m < model->stocks.size(); ++m)
                    if (model->stocks[m] == i) {
                        sig.values[j] =
                            model->sigma(m) * std::sqrt(lam0) * model->eigenvectors(m, 0);
                        break;
                    }
            }
            break;
        }
    }
    return sig;
}

/// Maps raw values to ranks and ranks to p_i = 2(rank - (N+1)/2)/(N-1),
/// average rank on ties, over the defined subset only. Descending factors
/// are negated before ranking.
inline Predictor rank_to_predictor(const RawSignal& sig) {
    std::vector<size_t> defined;
    for (size_t j = 0; j < sig.values.size(); ++j)
        if (!is_missing(sig.values[j])) defined.push_back(j);
    const size_t n = defined.size();
    if (n < 2)
        throw ComputeError("rank_to_predictor: degenerate cross-section (" +
                           std::to_string(n) + " defined values)");

    const double flip = sig.direction == RankDirection::highest_to_lowest ? -1.0 : 1.0;
    std::vector<size_t> order = defined;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double va = flip * sig.values[a], vb = flip * sig.values[b];
        if (va != vb) return va < vb;
        return sig.stocks[a] < sig.stocks[b];
    });

    // Average rank over tied runs.
    std::vector<double> rank(sig.values.size(), 0.0);
    size_t s = 0;
    while (s < n) {
        size_t e = s;
        while (e + 1 < n &&
               flip * sig.values[order[e + 1]] == flip * sig.values[order[s]])
            ++e;
        const double avg = 0.5 * (s + e) + 1.0;  // 1-based
        for (size_t r = s; r <= e; ++r) rank[order[r]] = avg;
        s = e + 1;
    }

    Predictor pred;
    pred.date_idx = sig.date_idx;
    pred.stocks.reserve(n);
    pred.p.reserve(n);
    for (size_t j : defined) {
        pred.stocks.push_back(sig.stocks[j]);
        pred.p.push_back(2.0 * (rank[j] - 0.5 * (n + 1)) / (n - 1));
    }
    return pred;
}

/// The cumulative 12-month-minus-1 momentum variant: total compounded return
/// over the 231 trading days ending one month back. The 230-day rolling-mean
/// definition above is the canonical one for the factor library; this is the
/// alternative commonly used for the signal itself.
inline RawSignal momentum_cumulative_12m(const MarketPanel& panel,
                                         std::span<const long> stocks, long date_idx) {
    RawSignal sig;
    sig.date_idx = date_idx;
    sig.stocks.assign(stocks.begin(), stocks.end());
    sig.values.assign(stocks.size(), kMissing);
    sig.lag_days = kMonthLag;
    const long end = date_idx - kMonthLag;
    const int window = 231;
    if (end - window + 1 < 1) return sig;
    for (size_t j = 0; j < sig.stocks.size(); ++j) {
        double cum = 1.0;
        int n = 0;
        for (long t = end - window + 1; t <= end; ++t)
            if (panel.has_return(t, sig.stocks[j])) {
                cum *= 1.0 + panel.total_return(t, sig.stocks[j]);
                ++n;
            }
        if (3 * n >= 2 * window) sig.values[j] = cum - 1.0;
    }
    return sig;
}

}  // namespace folio

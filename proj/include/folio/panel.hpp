#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "folio/dates.hpp"
#include "folio/errors.hpp"

namespace folio {

/// Missing cells are carried as quiet NaN throughout the panel matrices;
/// is_missing()/has() are the only sanctioned way to test for them.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// One point-in-time fundamentals record. Values are usable only at dates
/// strictly after report_date. Absent fields stay NaN.
struct FundamentalReport {
    Date report_date;
    double net_operating_assets = kMissing;
    double total_assets = kMissing;
    double total_equity = kMissing;
    double operating_cash_flow = kMissing;
    double dividends = kMissing;
    double net_income = kMissing;

    double field(std::string_view name) const {
        if (name == "net_operating_assets") return net_operating_assets;
        if (name == "total_assets") return total_assets;
        if (name == "total_equity") return total_equity;
        if (name == "operating_cash_flow") return operating_cash_flow;
        if (name == "dividends") return dividends;
        if (name == "net_income") return net_income;
        throw DataError("unknown fundamentals field: '" + std::string(name) + "'");
    }

    double& field_ref(std::string_view name) {
        if (name == "net_operating_assets") return net_operating_assets;
        if (name == "total_assets") return total_assets;
        if (name == "total_equity") return total_equity;
        if (name == "operating_cash_flow") return operating_cash_flow;
        if (name == "dividends") return dividends;
        if (name == "net_income") return net_income;
        throw DataError("unknown fundamentals field: '" + std::string(name) + "'");
    }
};

/// Aligned daily panel for one pool: rows are trading days, columns stocks.
/// Immutable after construction (validate() is the constructor's last step);
/// sharing across threads is safe.
struct MarketPanel {
    std::vector<Date> dates;
    std::vector<std::string> stock_ids;
    std::vector<std::string> sector;  // per stock

    // [dates x stocks]; NaN = missing.
    Eigen::MatrixXd close;
    Eigen::MatrixXd total_return;
    Eigen::MatrixXd market_cap;
    Eigen::MatrixXd adv;  // trailing 3-month average daily dollar volume

    // Per stock, sorted by report_date.
    std::vector<std::vector<FundamentalReport>> fundamentals;

    long n_dates() const { return static_cast<long>(dates.size()); }
    long n_stocks() const { return static_cast<long>(stock_ids.size()); }

    bool has_return(long t, long i) const { return !is_missing(total_return(t, i)); }
    bool has_close(long t, long i) const { return !is_missing(close(t, i)); }
    bool has_cap(long t, long i) const { return !is_missing(market_cap(t, i)); }
    bool has_adv(long t, long i) const { return !is_missing(adv(t, i)); }

    /// Index of `d` in dates, or -1.
    long date_index(const Date& d) const {
        auto it = std::lower_bound(dates.begin(), dates.end(), d);
        if (it == dates.end() || *it != d) return -1;
        return it - dates.begin();
    }

    /// Index of the last trading day strictly before `d`, or -1.
    long last_index_before(const Date& d) const {
        auto it = std::lower_bound(dates.begin(), dates.end(), d);
        return static_cast<long>(it - dates.begin()) - 1;
    }

    long stock_index(std::string_view id) const {
        for (long i = 0; i < n_stocks(); ++i)
            if (stock_ids[i] == id) return i;
        return -1;
    }

    /// Latest fundamentals report usable at date index t (report_date
    /// strictly before the panel date), or nullptr.
    const FundamentalReport* latest_report(long stock, long t) const {
        const auto& reps = fundamentals[stock];
        const Date& d = dates[t];
        const FundamentalReport* best = nullptr;
        for (const auto& r : reps) {
            if (r.report_date < d) best = &r;
            else break;
        }
        return best;
    }

    void validate() const {
        const long T = n_dates(), N = n_stocks();
        if (static_cast<long>(sector.size()) != N)
            throw DataError("panel: sector labels do not match stock count");
        auto check_dims = [&](const Eigen::MatrixXd& m, const char* name) {
            if (m.rows() != T || m.cols() != N)
                throw DataError(std::string("panel: matrix '") + name +
                                "' has wrong dimensions");
        };
        check_dims(close, "close");
        check_dims(total_return, "total_return");
        check_dims(market_cap, "market_cap");
        check_dims(adv, "adv");
        for (long t = 1; t < T; ++t)
            if (!(dates[t - 1] < dates[t]))
                throw DataError("panel: dates not strictly increasing at " +
                                to_string(dates[t]));
        for (long t = 0; t < T; ++t)
            for (long i = 0; i < N; ++i) {
                if (has_cap(t, i) && !(market_cap(t, i) > 0.0))
                    throw DataError("panel: non-positive market cap for " + stock_ids[i] +
                                    " on " + to_string(dates[t]));
                if (has_adv(t, i) && adv(t, i) < 0.0)
                    throw DataError("panel: negative ADV for " + stock_ids[i] + " on " +
                                    to_string(dates[t]));
            }
        if (static_cast<long>(fundamentals.size()) != N)
            throw DataError("panel: fundamentals table does not match stock count");
        for (const auto& reps : fundamentals)
            for (size_t j = 1; j < reps.size(); ++j)
                if (!(reps[j - 1].report_date < reps[j].report_date))
                    throw DataError("panel: fundamentals reports not strictly ordered");
    }
};

inline const char* const kFundamentalFields[] = {
    "net_operating_assets", "total_assets",  "total_equity",
    "operating_cash_flow",  "dividends",     "net_income"};

}  // namespace folio

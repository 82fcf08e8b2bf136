#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "folio/panel.hpp"

namespace folio {

struct PoolConfig {
    std::string pool_name = "pool";
    int cap_filter_size = 0;  // 0 disables the cap pre-filter
    int liquidity_size = 1000;
};

/// Quarterly eligibility lists. Selection for quarter Q ranks stocks by ADV
/// on the last trading day strictly before Q, so membership is a function of
/// data strictly before the quarter it applies to.
struct Universe {
    struct Entry {
        Quarter quarter;
        long selection_idx;          // panel date index the ranking was read at
        std::vector<long> eligible;  // panel stock indices, sorted
    };

    std::string pool_name;
    int cap_filter_size = 0;
    int liquidity_size = 0;
    std::vector<Entry> entries;          // ordered by quarter
    std::vector<Quarter> warmup;         // quarters skipped for lack of history

    const Entry* entry_for(const Date& d) const {
        const Quarter q = quarter_of(d);
        for (const auto& e : entries)
            if (e.quarter == q) return &e;
        return nullptr;
    }
};

/// Requires 63 trading days of panel history before a quarter's selection
/// date ("3 months" of ADV warm-up); earlier quarters are reported as warm-up.
inline constexpr int kAdvWarmupDays = 63;

inline Universe select_universe(const MarketPanel& panel, const PoolConfig& cfg) {
    if (cfg.liquidity_size < 1) throw ConfigError("select_universe: liquidity_size must be >= 1");
    if (panel.n_dates() == 0) throw DataError("select_universe: empty panel");

    Universe u;
    u.pool_name = cfg.pool_name;
    u.cap_filter_size = cfg.cap_filter_size;
    u.liquidity_size = cfg.liquidity_size;

    Quarter q = quarter_of(panel.dates.front());
    const Quarter last_q = quarter_of(panel.dates.back());
    for (; q <= last_q; q = q.next()) {
        const long sel = panel.last_index_before(q.start());
        if (sel + 1 < kAdvWarmupDays) {
            u.warmup.push_back(q);
            continue;
        }

        std::vector<long> candidates;
        for (long i = 0; i < panel.n_stocks(); ++i)
            if (panel.has_adv(sel, i)) candidates.push_back(i);

        if (cfg.cap_filter_size > 0) {
            std::vector<long> with_cap;
            for (long i : candidates)
                if (panel.has_cap(sel, i)) with_cap.push_back(i);
            std::sort(with_cap.begin(), with_cap.end(), [&](long a, long b) {
                const double ca = panel.market_cap(sel, a), cb = panel.market_cap(sel, b);
                if (ca != cb) return ca > cb;
                return panel.stock_ids[a] < panel.stock_ids[b];
            });
            if (static_cast<int>(with_cap.size()) > cfg.cap_filter_size)
                with_cap.resize(cfg.cap_filter_size);
            candidates = std::move(with_cap);
        }

        std::sort(candidates.begin(), candidates.end(), [&](long a, long b) {
            const double va = panel.adv(sel, a), vb = panel.adv(sel, b);
            if (va != vb) return va > vb;
            return panel.stock_ids[a] < panel.stock_ids[b];
        });
        if (static_cast<int>(candidates.size()) > cfg.liquidity_size)
            candidates.resize(cfg.liquidity_size);
        std::sort(candidates.begin(), candidates.end());

        u.entries.push_back({q, sel, std::move(candidates)});
    }

    if (u.entries.empty())
        throw DataError("select_universe: warm-up shortfall, no quarter has " +
                        std::to_string(kAdvWarmupDays) + " days of prior ADV history");
    return u;
}

}  // namespace folio

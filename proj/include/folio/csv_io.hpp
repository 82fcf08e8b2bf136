#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "folio/panel.hpp"

namespace folio {

/// Ingestion options for load_panel. The prices file itself is the required
/// argument; a fundamentals file is optional.
struct LoadOptions {
    std::optional<std::string> fundamentals_path;
};

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

/// Empty cells and the literal "nan"/"NaN" mean missing; anything else must
/// parse as a double or the row is rejected.
inline double parse_cell(const std::string& s, const char* file, size_t row,
                         const char* column) {
    if (s.empty() || s == "nan" || s == "NaN" || s == "NA") return kMissing;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError(std::string(file) + ":" + std::to_string(row) +
                        ": unparseable value '" + s + "' in column '" + column + "'");
    return v;
}

}  // namespace csv

/// Loads the documented long-format prices CSV
/// (`date,stock_id,close,total_return,market_cap,adv,sector`) plus the
/// optional fundamentals file (`report_date,stock_id,field,value`).
///
/// Returns computed close-to-close wherever the total_return cell is empty
/// and both closes are present; the first day of a series has no derivable
/// return and stays missing.
inline MarketPanel load_panel(const std::string& path, const LoadOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open prices file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    {
        auto header = csv::split_line(line);
        const std::vector<std::string> expected = {
            "date", "stock_id", "close", "total_return", "market_cap", "adv", "sector"};
        if (header != expected) {
            std::string want;
            for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
            throw DataError(path + ": schema error: header must be exactly '" + want + "'");
        }
    }

    struct Row {
        Date date;
        std::string id;
        double close, ret, cap, adv;
        std::string sector;
        size_t line_no;
    };
    std::vector<Row> rows;
    Date last_date{1, 1, 1};
    std::set<std::pair<std::string, std::string>> seen;  // (date, id)
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        if (f.size() != 7)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 7 columns, got " +
                            std::to_string(f.size()));
        Row r;
        r.date = parse_date(f[0]);
        if (r.date < last_date)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": ordering error: date " + f[0] + " precedes an earlier row");
        last_date = r.date;
        r.id = f[1];
        if (r.id.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty stock_id");
        if (!seen.insert({f[0], r.id}).second)
            throw DataError(path + ":" + std::to_string(line_no) + ": duplicate (date, stock) (" +
                            f[0] + ", " + r.id + ")");
        r.close = csv::parse_cell(f[2], path.c_str(), line_no, "close");
        r.ret = csv::parse_cell(f[3], path.c_str(), line_no, "total_return");
        r.cap = csv::parse_cell(f[4], path.c_str(), line_no, "market_cap");
        r.adv = csv::parse_cell(f[5], path.c_str(), line_no, "adv");
        r.sector = f[6];
        r.line_no = line_no;
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");

    MarketPanel p;
    {
        std::map<std::string, long> id_index;
        for (const auto& r : rows) id_index.emplace(r.id, 0);
        long next = 0;
        for (auto& [id, idx] : id_index) {
            idx = next++;
            p.stock_ids.push_back(id);
        }
        for (const auto& r : rows)
            if (p.dates.empty() || p.dates.back() != r.date) p.dates.push_back(r.date);

        const long T = p.n_dates(), N = p.n_stocks();
        p.close = Eigen::MatrixXd::Constant(T, N, kMissing);
        p.total_return = Eigen::MatrixXd::Constant(T, N, kMissing);
        p.market_cap = Eigen::MatrixXd::Constant(T, N, kMissing);
        p.adv = Eigen::MatrixXd::Constant(T, N, kMissing);
        p.sector.assign(N, "");
        p.fundamentals.resize(N);

        long t = -1;
        Date cur{1, 1, 1};
        for (const auto& r : rows) {
            if (t < 0 || r.date != cur) {
                ++t;
                cur = r.date;
            }
            const long i = id_index[r.id];
            p.close(t, i) = r.close;
            p.total_return(t, i) = r.ret;
            p.market_cap(t, i) = r.cap;
            p.adv(t, i) = r.adv;
            if (!r.sector.empty()) p.sector[i] = r.sector;
        }
    }

    // Fill returns from closes where the file left them blank.
    for (long i = 0; i < p.n_stocks(); ++i)
        for (long t = 1; t < p.n_dates(); ++t)
            if (is_missing(p.total_return(t, i)) && p.has_close(t, i) &&
                p.has_close(t - 1, i) && p.close(t - 1, i) > 0.0)
                p.total_return(t, i) = p.close(t, i) / p.close(t - 1, i) - 1.0;

    if (opt.fundamentals_path) {
        std::ifstream fin(*opt.fundamentals_path);
        if (!fin) throw DataError("cannot open fundamentals file: " + *opt.fundamentals_path);
        const std::string& fpath = *opt.fundamentals_path;
        if (!std::getline(fin, line)) throw DataError(fpath + ": empty file");
        if (csv::split_line(line) != std::vector<std::string>{"report_date", "stock_id", "field", "value"})
            throw DataError(fpath +
                            ": schema error: header must be exactly 'report_date,stock_id,field,value'");
        // (stock, report_date) -> report under construction
        std::map<std::pair<long, Date>, FundamentalReport> reps;
        size_t ln = 1;
        while (std::getline(fin, line)) {
            ++ln;
            if (line.empty()) continue;
            auto f = csv::split_line(line);
            if (f.size() != 4)
                throw DataError(fpath + ":" + std::to_string(ln) + ": expected 4 columns");
            const Date rd = parse_date(f[0]);
            const long i = p.stock_index(f[1]);
            if (i < 0) continue;  // fundamentals for stocks outside the panel are ignored
            auto& rep = reps[{i, rd}];
            rep.report_date = rd;
            rep.field_ref(f[2]) = csv::parse_cell(f[3], fpath.c_str(), ln, "value");
        }
        for (auto& [key, rep] : reps) p.fundamentals[key.first].push_back(rep);
    }

    p.validate();
    return p;
}

/// Writes a panel back out in the ingestion format (used by `gen-data`).
inline void save_panel_csv(const MarketPanel& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write prices file: " + path);
    out << "date,stock_id,close,total_return,market_cap,adv,sector\n";
    char buf[480];
    for (long t = 0; t < p.n_dates(); ++t)
        for (long i = 0; i < p.n_stocks(); ++i) {
            if (!p.has_close(t, i) && !p.has_return(t, i) && !p.has_cap(t, i) &&
                !p.has_adv(t, i))
                continue;
            auto cell = [&](double v) {
                static thread_local char c[48];
                if (is_missing(v)) return std::string();
                std::snprintf(c, sizeof c, "%.12g", v);
                return std::string(c);
            };
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%s,%s,%s\n",
                          to_string(p.dates[t]).c_str(), p.stock_ids[i].c_str(),
                          cell(p.close(t, i)).c_str(), cell(p.total_return(t, i)).c_str(),
                          cell(p.market_cap(t, i)).c_str(), cell(p.adv(t, i)).c_str(),
                          p.sector[i].c_str());
            out << buf;
        }
}

inline void save_fundamentals_csv(const MarketPanel& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write fundamentals file: " + path);
    out << "report_date,stock_id,field,value\n";
    char buf[160];
    for (long i = 0; i < p.n_stocks(); ++i)
        for (const auto& rep : p.fundamentals[i])
            for (const char* f : kFundamentalFields) {
                const double v = rep.field(f);
                if (is_missing(v)) continue;
                std::snprintf(buf, sizeof buf, "%s,%s,%s,%.12g\n",
                              to_string(rep.report_date).c_str(), p.stock_ids[i].c_str(), f, v);
                out << buf;
            }
}

}  // namespace folio

#include <catch2/catch_amalgamated.hpp>

#include "folio/csv_io.hpp"
#include "folio/synthetic.hpp"
#include "folio/universe.hpp"
#include "test_util.hpp"

using namespace folio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

const char* kMinimalCsv =
    "date,stock_id,close,total_return,market_cap,adv,sector\n"
    "2020-01-02,AAA,100,,1e9,2e6,Tech\n"
    "2020-01-02,BBB,50,,5e8,1e6,Energy\n"
    "2020-01-03,AAA,101,,1e9,2e6,Tech\n"
    "2020-01-03,BBB,49,,5e8,1e6,Energy\n"
    "2020-01-06,AAA,102,,1e9,2e6,Tech\n"
    "2020-01-06,BBB,50,,5e8,1e6,Energy\n";

}  // namespace

TEST_CASE("load_panel: minimal 2-stock 3-day file") {
    testutil::TempDir dir("folio-data");
    auto path = testutil::write_file(dir.file("prices.csv"), kMinimalCsv);
    MarketPanel p = load_panel(path);

    REQUIRE(p.n_dates() == 3);
    REQUIRE(p.n_stocks() == 2);
    REQUIRE(p.stock_ids == std::vector<std::string>{"AAA", "BBB"});
    REQUIRE(p.sector[0] == "Tech");
    CHECK(p.close(0, 0) == 100.0);
    CHECK(p.close(2, 1) == 50.0);

    // day-1 returns are not derivable; days 2-3 come from closes
    CHECK(is_missing(p.total_return(0, 0)));
    CHECK(is_missing(p.total_return(0, 1)));
    CHECK_THAT(p.total_return(1, 0), WithinAbs(0.01, 1e-12));
    CHECK_THAT(p.total_return(2, 1), WithinAbs(50.0 / 49.0 - 1.0, 1e-12));
}

TEST_CASE("load_panel: explicit total_return cells are taken as-is") {
    testutil::TempDir dir("folio-data");
    auto path = testutil::write_file(dir.file("prices.csv"),
                                     "date,stock_id,close,total_return,market_cap,adv,sector\n"
                                     "2020-01-02,AAA,100,,1e9,2e6,Tech\n"
                                     "2020-01-03,AAA,90,0.02,1e9,2e6,Tech\n");
    MarketPanel p = load_panel(path);
    CHECK(p.total_return(1, 0) == 0.02);  // dividend-adjusted input wins over closes
}

TEST_CASE("load_panel: missing close propagates to dependent returns") {
    testutil::TempDir dir("folio-data");
    auto path = testutil::write_file(dir.file("prices.csv"),
                                     "date,stock_id,close,total_return,market_cap,adv,sector\n"
                                     "2020-01-02,AAA,100,,1e9,2e6,Tech\n"
                                     "2020-01-03,AAA,,,1e9,2e6,Tech\n"
                                     "2020-01-06,AAA,104,,1e9,2e6,Tech\n"
                                     "2020-01-07,AAA,105,,1e9,2e6,Tech\n");
    MarketPanel p = load_panel(path);
    CHECK(is_missing(p.close(1, 0)));
    CHECK(is_missing(p.total_return(1, 0)));  // close(t) missing
    CHECK(is_missing(p.total_return(2, 0)));  // close(t-1) missing
    CHECK_THAT(p.total_return(3, 0), WithinAbs(105.0 / 104.0 - 1.0, 1e-12));
}

TEST_CASE("load_panel: error contracts") {
    testutil::TempDir dir("folio-data");

    SECTION("malformed header") {
        auto path = testutil::write_file(dir.file("bad.csv"),
                                         "date,stock,close,total_return,market_cap,adv,sector\n");
        CHECK_THROWS_MATCHES(load_panel(path), DataError, Catch::Matchers::MessageMatches(
                                                              ContainsSubstring("schema error")));
    }
    SECTION("non-monotonic dates name the offending row") {
        auto path = testutil::write_file(dir.file("ooo.csv"),
                                         "date,stock_id,close,total_return,market_cap,adv,sector\n"
                                         "2020-01-03,AAA,100,,1e9,2e6,Tech\n"
                                         "2020-01-02,AAA,99,,1e9,2e6,Tech\n");
        try {
            load_panel(path);
            FAIL("expected ordering error");
        } catch (const DataError& e) {
            CHECK_THAT(e.what(), ContainsSubstring("ordering error"));
            CHECK_THAT(e.what(), ContainsSubstring(":3"));  // row number
        }
    }
    SECTION("duplicate (date, stock)") {
        auto path = testutil::write_file(dir.file("dup.csv"),
                                         "date,stock_id,close,total_return,market_cap,adv,sector\n"
                                         "2020-01-02,AAA,100,,1e9,2e6,Tech\n"
                                         "2020-01-02,AAA,101,,1e9,2e6,Tech\n");
        CHECK_THROWS_MATCHES(load_panel(path), DataError, Catch::Matchers::MessageMatches(
                                                              ContainsSubstring("duplicate")));
    }
    SECTION("unparseable cell is rejected with location") {
        auto path = testutil::write_file(dir.file("garbage.csv"),
                                         "date,stock_id,close,total_return,market_cap,adv,sector\n"
                                         "2020-01-02,AAA,oops,,1e9,2e6,Tech\n");
        try {
            load_panel(path);
            FAIL("expected parse error");
        } catch (const DataError& e) {
            CHECK_THAT(e.what(), ContainsSubstring(":2"));
            CHECK_THAT(e.what(), ContainsSubstring("close"));
        }
    }
}

TEST_CASE("load_panel: fundamentals are merged point-in-time") {
    testutil::TempDir dir("folio-data");
    auto prices = testutil::write_file(dir.file("prices.csv"), kMinimalCsv);
    auto fn = testutil::write_file(dir.file("fn.csv"),
                                   "report_date,stock_id,field,value\n"
                                   "2020-01-02,AAA,total_assets,200\n"
                                   "2020-01-02,AAA,net_income,10\n"
                                   "2020-01-05,AAA,total_assets,210\n");
    LoadOptions opt;
    opt.fundamentals_path = fn;
    MarketPanel p = load_panel(prices, opt);
    REQUIRE(p.fundamentals[0].size() == 2);
    CHECK(p.fundamentals[0][0].net_income == 10.0);
    CHECK(is_missing(p.fundamentals[0][1].net_income));

    // strictly-after availability: the 01-02 report is usable on 01-03, not 01-02
    CHECK(p.latest_report(0, 0) == nullptr);
    REQUIRE(p.latest_report(0, 1) != nullptr);
    CHECK(p.latest_report(0, 1)->total_assets == 200.0);
    CHECK(p.latest_report(0, 2)->total_assets == 210.0);
}

TEST_CASE("generate_synthetic: degenerate factor model gives identical series") {
    SyntheticSpec spec;
    spec.n_stocks = 3;
    spec.n_days = 50;
    spec.n_sectors = 1;
    spec.sector_vol = 1e-12;
    spec.idio_vol = 1e-12;
    spec.market_vol = 0.15;
    spec.market_beta_dispersion = 0.0;  // all betas 1
    spec.with_fundamentals = false;
    MarketPanel p = generate_synthetic(spec);
    for (long t = 1; t < p.n_dates(); ++t) {
        CHECK_THAT(p.total_return(t, 1), WithinAbs(p.total_return(t, 0), 1e-9));
        CHECK_THAT(p.total_return(t, 2), WithinAbs(p.total_return(t, 0), 1e-9));
    }
}

TEST_CASE("generate_synthetic: no common factors -> cross-correlations vanish") {
    SyntheticSpec spec;
    spec.n_stocks = 4;
    spec.n_days = 5000;
    spec.market_vol = 1e-12;
    spec.sector_vol = 1e-12;
    spec.idio_vol = 0.2;
    spec.with_fundamentals = false;
    spec.seed = 7;
    MarketPanel p = generate_synthetic(spec);
    for (long a = 0; a < 4; ++a)
        for (long b = a + 1; b < 4; ++b) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            const long n = p.n_dates() - 1;
            for (long t = 1; t < p.n_dates(); ++t) {
                const double x = p.total_return(t, a), y = p.total_return(t, b);
                sa += x;
                sb += y;
                saa += x * x;
                sbb += y * y;
                sab += x * y;
            }
            const double rho = (sab - sa * sb / n) /
                               std::sqrt((saa - sa * sa / n) * (sbb - sb * sb / n));
            CHECK(std::abs(rho) < 0.1);
        }
}

namespace {

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (long t = 0; t < a.rows(); ++t)
        for (long i = 0; i < a.cols(); ++i) {
            if (is_missing(a(t, i)) != is_missing(b(t, i))) return false;
            if (!is_missing(a(t, i)) && a(t, i) != b(t, i)) return false;
        }
    return true;
}

}  // namespace

TEST_CASE("generate_synthetic: same seed, bit-identical panels") {
    SyntheticSpec spec;
    spec.n_stocks = 8;
    spec.n_days = 300;
    spec.embedded_alpha = 1.0;
    spec.seed = 42;
    MarketPanel a = generate_synthetic(spec);
    MarketPanel b = generate_synthetic(spec);
    CHECK(same_matrix(a.close, b.close));
    CHECK(same_matrix(a.total_return, b.total_return));
    CHECK(same_matrix(a.market_cap, b.market_cap));
    CHECK(same_matrix(a.adv, b.adv));
    REQUIRE(a.fundamentals.size() == b.fundamentals.size());
    for (size_t i = 0; i < a.fundamentals.size(); ++i) {
        REQUIRE(a.fundamentals[i].size() == b.fundamentals[i].size());
        for (size_t r = 0; r < a.fundamentals[i].size(); ++r)
            CHECK(a.fundamentals[i][r].total_assets == b.fundamentals[i][r].total_assets);
    }
}

namespace {

/// Panel long enough for one warm-up quarter, with per-stock constant ADV.
MarketPanel universe_fixture(std::vector<double> advs, std::vector<double> caps = {}) {
    const int n = static_cast<int>(advs.size());
    // two quarters of weekdays starting Jan 1 so Q2 selection has 63 days
    std::vector<std::vector<double>> rets(130, std::vector<double>(n, 0.001));
    MarketPanel p = testutil::make_panel(rets, Date{2015, 1, 1});
    for (long t = 0; t < p.n_dates(); ++t)
        for (int i = 0; i < n; ++i) {
            p.adv(t, i) = advs[i];
            if (!caps.empty()) p.market_cap(t, i) = caps[i];
        }
    return p;
}

}  // namespace

TEST_CASE("select_universe: ranks by trailing ADV") {
    MarketPanel p = universe_fixture({5e6, 3e6, 0.0});
    Universe u = select_universe(p, {"test", 0, 2});
    REQUIRE(!u.entries.empty());
    const auto& e = u.entries.front();
    CHECK(e.quarter == Quarter{2015, 2});
    CHECK(e.eligible == std::vector<long>{0, 1});  // zero-volume stock excluded
    CHECK(u.warmup.size() == 1);                   // Q1 = warm-up
}

TEST_CASE("select_universe: causal selection survives later delisting") {
    MarketPanel p = universe_fixture({5e6, 3e6, 1e6});
    // stock 0 "delists" right at the start of Q2: no data from April on
    const long q2 = p.last_index_before(Date{2015, 4, 1}) + 1;
    for (long t = q2; t < p.n_dates(); ++t) {
        p.adv(t, 0) = kMissing;
        p.total_return(t, 0) = kMissing;
        p.close(t, 0) = kMissing;
    }
    Universe u = select_universe(p, {"test", 0, 2});
    CHECK(u.entries.front().eligible == std::vector<long>{0, 1});
}

TEST_CASE("select_universe: cap pre-filter drops the most liquid small cap") {
    // stock 2 is the most liquid but the smallest cap of 3
    MarketPanel p = universe_fixture({5e6, 4e6, 9e6}, {3e9, 2e9, 1e8});
    Universe u = select_universe(p, {"test", 2, 2});
    CHECK(u.entries.front().eligible == std::vector<long>{0, 1});
}

TEST_CASE("select_universe: warm-up shortfall raises") {
    std::vector<std::vector<double>> rets(10, std::vector<double>(2, 0.0));
    MarketPanel p = testutil::make_panel(rets);
    CHECK_THROWS_AS(select_universe(p, {"test", 0, 2}), DataError);
}

TEST_CASE("select_universe: causality under future mutation") {
    MarketPanel p = universe_fixture({5e6, 3e6, 1e6});
    Universe before = select_universe(p, {"test", 0, 2});
    const long q2 = p.last_index_before(Date{2015, 4, 1}) + 1;
    for (long t = q2; t < p.n_dates(); ++t) p.adv(t, 2) = 99e9;  // future liquidity spike
    Universe after = select_universe(p, {"test", 0, 2});
    CHECK(before.entries.front().eligible == after.entries.front().eligible);
}

TEST_CASE("select_universe: ADV ties break lexicographically") {
    MarketPanel p = universe_fixture({2e6, 2e6, 2e6});
    Universe u = select_universe(p, {"test", 0, 2});
    CHECK(u.entries.front().eligible == std::vector<long>{0, 1});  // S100 < S101 < S102
}

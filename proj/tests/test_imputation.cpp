#include <catch2/catch_amalgamated.hpp>

#include "demandcast/datagen.hpp"
#include "demandcast/imputation.hpp"
#include "demandcast/rng.hpp"

using namespace demandcast;
using Catch::Approx;

namespace {
ArticlePanel panel_with_totals(const std::vector<std::vector<int>>& weekly_sales,
                               const std::vector<std::vector<int>>& weekly_stock) {
    ArticlePanel p;
    p.article_id = 1;
    p.n_sizes = static_cast<int>(weekly_sales.front().size());
    for (size_t w = 0; w < weekly_sales.size(); ++w) {
        WeekRecord r;
        r.week = static_cast<int>(w);
        r.sales_by_size = weekly_sales[w];
        r.stock_by_size = weekly_stock[w];
        p.weeks.push_back(r);
    }
    return p;
}
}  // namespace

TEST_CASE("fit_size_profile normalizes totals with smoothing") {
    // totals (1,2,4,2,1): alpha=0.5 -> (1.5,2.5,4.5,2.5,1.5)/12.5
    ArticlePanel p = panel_with_totals({{1, 2, 4, 2, 1}}, {{9, 9, 9, 9, 9}});
    ImputeSettings cfg;
    cfg.alpha = 0.5;
    SizeProfile prof = fit_size_profile(p, cfg);
    CHECK(prof.p[0] == Approx(0.12).margin(1e-12));
    CHECK(prof.p[1] == Approx(0.20).margin(1e-12));
    CHECK(prof.p[2] == Approx(0.36).margin(1e-12));
    CHECK(prof.p[3] == Approx(0.20).margin(1e-12));
    CHECK(prof.p[4] == Approx(0.12).margin(1e-12));

    cfg.alpha = 0.0;
    SizeProfile raw = fit_size_profile(p, cfg);
    CHECK(raw.p == std::vector<double>{0.1, 0.2, 0.4, 0.2, 0.1});
}

TEST_CASE("fit_size_profile corner cases") {
    SECTION("single size") {
        ArticlePanel p = panel_with_totals({{3}}, {{9}});
        CHECK(fit_size_profile(p).p == std::vector<double>{1.0});
    }
    SECTION("uniform sales across four sizes") {
        ArticlePanel p = panel_with_totals({{2, 2, 2, 2}}, {{9, 9, 9, 9}});
        for (double v : fit_size_profile(p).p) CHECK(v == Approx(0.25));
    }
    SECTION("weeks with a missing size are ignored") {
        ArticlePanel p = panel_with_totals({{1, 1}, {50, 0}}, {{9, 9}, {9, 0}});
        ImputeSettings cfg;
        cfg.alpha = 0.0;
        CHECK(fit_size_profile(p, cfg).p == std::vector<double>{0.5, 0.5});
    }
    SECTION("no fully stocked week throws") {
        ArticlePanel p = panel_with_totals({{1, 0}}, {{9, 0}});
        CHECK_THROWS_AS(fit_size_profile(p), NoFullAvailability);
    }
}

TEST_CASE("impute_week cases") {
    SizeProfile prof;
    prof.p = {0.1, 0.2, 0.4, 0.2, 0.1};

    SECTION("full availability returns sales exactly") {
        ImputedWeek w = impute_week({1, 2, 4, 0, 0}, {3, 3, 3, 3, 3}, prof);
        CHECK(w.demand_estimate == 7.0);
        CHECK_FALSE(w.imputed_flag);
        CHECK_FALSE(w.excluded_from_eval);
    }
    SECTION("missing L and XL gives multinomial MLE") {
        ImputedWeek w = impute_week({1, 2, 4, 0, 0}, {3, 3, 3, 0, 0}, prof);
        CHECK(w.demand_estimate == Approx(10.0).margin(1e-12));
        CHECK(w.imputed_flag);
        CHECK(w.excluded_from_eval);
        // per-missing-size demand p_s * n
        CHECK(prof.p[3] * w.demand_estimate == Approx(2.0));
        CHECK(prof.p[4] * w.demand_estimate == Approx(1.0));
    }
    SECTION("zero observed sales with partial availability") {
        ImputedWeek w = impute_week({0, 0, 0, 0, 0}, {3, 3, 3, 0, 0}, prof);
        CHECK(w.demand_estimate == 0.0);
        CHECK(w.imputed_flag);
    }
    SECTION("all sizes unavailable is fully censored") {
        ImputedWeek w = impute_week({0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, prof);
        CHECK(w.fully_censored);
        CHECK(w.excluded_from_eval);
    }
    SECTION("tiny observed mass is treated as censored") {
        ImputedWeek w = impute_week({1, 0, 0, 0, 0}, {3, 0, 0, 0, 0}, prof);  // mass 0.1 < 0.2
        CHECK(w.fully_censored);
    }
    SECTION("profile size mismatch") {
        CHECK_THROWS_AS(impute_week({1, 2}, {3, 3}, prof), std::invalid_argument);
    }
}

TEST_CASE("imputation only adds demand and is idempotent on full weeks") {
    Rng rng(17);
    SizeProfile prof;
    prof.p = {0.25, 0.25, 0.25, 0.25};
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<int> sales(4), stock(4);
        for (int s = 0; s < 4; ++s) {
            stock[static_cast<size_t>(s)] = rng.uniform01() < 0.3 ? 0 : 5;
            sales[static_cast<size_t>(s)] =
                stock[static_cast<size_t>(s)] > 0 ? rng.poisson(3.0) : 0;
        }
        ImputedWeek w = impute_week(sales, stock, prof);
        if (!w.fully_censored) CHECK(w.demand_estimate >= w.observed_sales);
        bool full = stock == std::vector<int>{5, 5, 5, 5};
        if (full) CHECK(w.demand_estimate == static_cast<double>(w.observed_sales));
    }
}

TEST_CASE("simulation oracle: restricted-cells MLE is nearly unbiased") {
    // 10,000 simulated multinomial weeks with known n and p; availability
    // masks retain at least 50% of the probability mass.
    Rng rng(2024);
    const std::vector<double> p = {0.1, 0.2, 0.4, 0.2, 0.1};
    SizeProfile prof;
    prof.p = p;
    double rel_bias_acc = 0.0;
    int used = 0;
    for (int iter = 0; iter < 10000; ++iter) {
        int n = 5 + rng.uniform_int(196);
        std::vector<int> demand = rng.multinomial(n, p);
        std::vector<int> stock(5, 1);
        double mass = 1.0;
        for (int s = 0; s < 5; ++s) {
            if (rng.uniform01() < 0.3 && mass - p[static_cast<size_t>(s)] >= 0.5) {
                stock[static_cast<size_t>(s)] = 0;
                mass -= p[static_cast<size_t>(s)];
            }
        }
        std::vector<int> sales(5);
        for (int s = 0; s < 5; ++s)
            sales[static_cast<size_t>(s)] = stock[static_cast<size_t>(s)] ? demand[static_cast<size_t>(s)] : 0;
        ImputedWeek w = impute_week(sales, stock, prof);
        REQUIRE_FALSE(w.fully_censored);
        rel_bias_acc += (w.demand_estimate - n) / n;
        ++used;
    }
    CHECK(used == 10000);
    CHECK(std::abs(rel_bias_acc / used) < 0.02);
}

TEST_CASE("catalog-level imputation with fallbacks") {
    CatalogSpec spec;
    spec.n_articles = 60;
    spec.n_markets = 2;
    spec.n_weeks = 60;
    spec.seed = 5;
    spec.stockout_rate = 0.25;  // force some articles to have no clean week
    spec.oos_episode_rate = 0.05;
    Catalog c = generate_catalog(spec);
    ImputationResult res = impute_catalog(c);
    CHECK(res.profiles.size() == 60);
    for (const SizeProfile& prof : res.profiles) prof.check();
    CHECK(res.imputed_count > 0);
    // every imputed week is excluded from evaluation
    for (const ImputedWeek& w : res.weeks)
        if (w.imputed_flag) CHECK(w.excluded_from_eval);
}

TEST_CASE("imputed file round-trip") {
    CatalogSpec spec;
    spec.n_articles = 10;
    spec.n_weeks = 30;
    spec.seed = 3;
    Catalog c = generate_catalog(spec);
    ImputationResult res = impute_catalog(c);
    std::string path = (std::filesystem::temp_directory_path() / "dc_imputed.tsv").string();
    write_imputed(res, path);
    auto back = read_imputed(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == res.weeks.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].demand_estimate == res.weeks[i].demand_estimate);
        CHECK(back[i].imputed_flag == res.weeks[i].imputed_flag);
    }

    std::string ppath = (std::filesystem::temp_directory_path() / "dc_profiles.tsv").string();
    write_profiles(res.profiles, ppath);
    auto profs = read_profiles(ppath);
    std::filesystem::remove(ppath);
    REQUIRE(profs.size() == res.profiles.size());
    CHECK(profs[3].p == res.profiles[3].p);
}

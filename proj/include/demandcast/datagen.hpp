#pragma once

// Synthetic fashion-catalog generator. Produces long-tail, price-sensitive,
// stock-censored weekly panels with known ground truth so the imputation and
// forecasting stages can be tested against a closed-form demand oracle.
//
// Demand process per article a, market j, week w:
//   mu = base_rate_a * market_factor_j * season_a(w) * level(w) * uplift(d; e_a)
//   true demand ~ NegativeBinomial(mean mu, dispersion r)
//   sized demand ~ Multinomial(true demand, p_a)
// Sales are the sized demand censored by availability: a size that is out of
// stock for the whole week sells zero.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "demandcast/panel.hpp"
#include "demandcast/rng.hpp"

namespace demandcast {

struct CatalogSpec {
    int n_articles = 200;
    int n_markets = 1;
    int n_weeks = 130;
    uint64_t seed = 42;
    int size_count_min = 3;
    int size_count_max = 6;
    double elasticity_min = 0.1;  // true uplift per 10pp discount in the base region
    double elasticity_max = 0.6;
    double base_rate_log_mean = 1.2;
    double base_rate_log_sigma = 1.0;
    double stockout_rate = 0.06;        // per (week, size) random gap
    double oos_episode_rate = 0.015;    // per week chance a full out-of-stock episode starts
    double oos_episode_mean_len = 3.0;
    double cold_start_share = 0.12;     // articles launching inside the final encoder window
    double seasonal_amplitude = 0.3;
    double drift_vol = 0.0;             // weekly sd of the global log-level random walk
    double drift_max_rate = 0.0;        // regime growth rate bound (0 disables regimes)
    int drift_regime_len = 8;
    double sale_event_rate = 0.01;      // per week chance a discount sale event starts
    double nb_dispersion = 5.0;
    int n_brands = 30;
    int n_commodity_groups = 12;
    double discount_step_prob = 0.25;   // random-walk move probability per direction

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("CatalogSpec: " + msg); };
        if (n_articles <= 0 || n_markets <= 0 || n_weeks <= 0) fail("counts must be positive");
        if (size_count_min < 1 || size_count_max < size_count_min) fail("bad size_count range");
        if (elasticity_min < 0 || elasticity_max < elasticity_min) fail("elasticities must be >= 0 and ordered");
        if (stockout_rate < 0 || stockout_rate > 1) fail("stockout_rate must be in [0,1]");
        if (oos_episode_rate < 0 || oos_episode_rate > 1) fail("oos_episode_rate must be in [0,1]");
        if (cold_start_share < 0 || cold_start_share > 1) fail("cold_start_share must be in [0,1]");
        if (sale_event_rate < 0 || sale_event_rate > 1) fail("sale_event_rate must be in [0,1]");
        if (seasonal_amplitude < 0 || seasonal_amplitude > 0.9) fail("seasonal_amplitude must be in [0,0.9]");
        if (nb_dispersion <= 0) fail("nb_dispersion must be positive");
        if (n_brands <= 0 || n_commodity_groups <= 0) fail("vocab sizes must be positive");
        if (discount_step_prob < 0 || discount_step_prob > 0.5) fail("discount_step_prob must be in [0,0.5]");
        if (base_rate_log_sigma < 0) fail("base_rate_log_sigma must be >= 0");
        if (drift_vol < 0 || drift_max_rate < 0 || drift_regime_len <= 0) fail("bad drift settings");
    }
};

// Ground-truth multiplicative demand response. Monotone non-decreasing in d
// for every elasticity >= 0: slope e per 10pp up to 30% discount, 1.4*e above
// (deep end-of-season discounts move demand more).
inline double demand_uplift(double discount, double elasticity) {
    double low = std::min(discount, 0.3);
    double high = std::max(0.0, discount - 0.3);
    return 1.0 + 10.0 * elasticity * low + 14.0 * elasticity * high;
}

namespace detail {

struct ArticleTraits {
    int brand, cg, k, launch;
    double base_rate, elasticity, black_price, seasonal_amp;
    std::vector<double> size_profile;
};

inline std::vector<double> global_level_path(const CatalogSpec& spec) {
    std::vector<double> level(static_cast<size_t>(spec.n_weeks), 1.0);
    if (spec.drift_vol == 0.0 && spec.drift_max_rate == 0.0) return level;
    Rng rng = Rng::derive(spec.seed, 0x11);
    double log_level = 0.0, rate = 0.0;
    for (int w = 0; w < spec.n_weeks; ++w) {
        if (w % spec.drift_regime_len == 0) rate = rng.uniform(-spec.drift_max_rate, spec.drift_max_rate);
        log_level += rate + spec.drift_vol * rng.normal();
        level[static_cast<size_t>(w)] = std::exp(log_level);
    }
    return level;
}

inline std::vector<double> market_factors(const CatalogSpec& spec) {
    Rng rng = Rng::derive(spec.seed, 0x12);
    std::vector<double> f(static_cast<size_t>(spec.n_markets));
    for (double& v : f) v = rng.lognormal(0.0, 0.25);
    return f;
}

inline std::vector<double> cg_phases(const CatalogSpec& spec) {
    Rng rng = Rng::derive(spec.seed, 0x13);
    std::vector<double> ph(static_cast<size_t>(spec.n_commodity_groups));
    for (double& v : ph) v = rng.uniform(0.0, 52.0);
    return ph;
}

}  // namespace detail

inline Catalog generate_catalog(const CatalogSpec& spec) {
    spec.validate();
    Catalog catalog;
    catalog.n_weeks = spec.n_weeks;
    catalog.n_markets = spec.n_markets;

    const std::vector<double> level = detail::global_level_path(spec);
    const std::vector<double> mfac = detail::market_factors(spec);
    const std::vector<double> phases = detail::cg_phases(spec);
    const int window = 52;

    for (int a = 0; a < spec.n_articles; ++a) {
        Rng rng = Rng::derive(spec.seed, 0x100, static_cast<uint64_t>(a));

        detail::ArticleTraits tr;
        tr.brand = rng.uniform_int(spec.n_brands);
        tr.cg = rng.uniform_int(spec.n_commodity_groups);
        tr.k = spec.size_count_min + rng.uniform_int(spec.size_count_max - spec.size_count_min + 1);
        tr.black_price = rng.lognormal(3.5, 0.5);
        double raw_rate = rng.lognormal(spec.base_rate_log_mean, spec.base_rate_log_sigma);
        tr.base_rate = raw_rate * std::pow(tr.black_price / 33.0, -0.6);  // pricier items sell less
        tr.elasticity = rng.uniform(spec.elasticity_min, spec.elasticity_max);
        tr.seasonal_amp = rng.uniform(0.0, spec.seasonal_amplitude);
        bool cold = rng.uniform01() < spec.cold_start_share;
        if (cold && spec.n_weeks > 10) {
            int lo = std::max(1, spec.n_weeks - window + 1);
            int hi = std::max(lo + 1, spec.n_weeks - 6);
            tr.launch = lo + rng.uniform_int(hi - lo);
        } else {
            tr.launch = 0;
        }
        std::vector<double> alpha(static_cast<size_t>(tr.k));
        for (int s = 0; s < tr.k; ++s) {
            double centre = (tr.k - 1) / 2.0;
            alpha[static_cast<size_t>(s)] = 1.5 + 2.0 * (1.0 - std::abs(s - centre) / std::max(1.0, centre));
        }
        tr.size_profile = rng.dirichlet(alpha);

        // Discount paths per market: random walk on the 5pp grid with
        // occasional multi-week sale events jumping to a deeper level.
        std::vector<std::vector<int>> dlevel(static_cast<size_t>(spec.n_markets),
                                             std::vector<int>(static_cast<size_t>(spec.n_weeks), 0));
        for (int j = 0; j < spec.n_markets; ++j) {
            int d = rng.uniform_int(6);  // start at 0..25%
            int event_left = 0, pre_event = 0;
            for (int w = 0; w < spec.n_weeks; ++w) {
                if (event_left > 0) {
                    --event_left;
                    if (event_left == 0) d = pre_event;
                } else if (rng.uniform01() < spec.sale_event_rate) {
                    event_left = 1 + rng.uniform_int(3);
                    pre_event = d;
                    d = std::min(14, d + 3 + rng.uniform_int(4));
                } else {
                    double u = rng.uniform01();
                    if (u < spec.discount_step_prob)
                        d = std::max(0, d - 1);
                    else if (u > 1.0 - spec.discount_step_prob)
                        d = std::min(14, d + 1);
                }
                dlevel[static_cast<size_t>(j)][static_cast<size_t>(w)] = d;
            }
        }

        // Availability: full out-of-stock episodes plus per-size random gaps.
        std::vector<std::vector<uint8_t>> avail(static_cast<size_t>(spec.n_weeks),
                                                std::vector<uint8_t>(static_cast<size_t>(tr.k), 1));
        int episode_left = 0;
        for (int w = tr.launch; w < spec.n_weeks; ++w) {
            if (episode_left > 0) {
                --episode_left;
                for (int s = 0; s < tr.k; ++s) avail[static_cast<size_t>(w)][static_cast<size_t>(s)] = 0;
                continue;
            }
            if (rng.uniform01() < spec.oos_episode_rate)
                episode_left = 1 + rng.poisson(std::max(0.0, spec.oos_episode_mean_len - 1.0));
            for (int s = 0; s < tr.k; ++s)
                if (rng.uniform01() < spec.stockout_rate) avail[static_cast<size_t>(w)][static_cast<size_t>(s)] = 0;
        }

        const double uplift_units = std::max(0.0, std::round(0.1 * tr.base_rate));
        std::vector<ArticlePanel> market_panels(static_cast<size_t>(spec.n_markets));
        for (int j = 0; j < spec.n_markets; ++j) {
            ArticlePanel& p = market_panels[static_cast<size_t>(j)];
            p.article_id = a;
            p.market_id = j;
            p.brand_id = tr.brand;
            p.commodity_group_id = tr.cg;
            p.n_sizes = tr.k;
            p.black_price = tr.black_price * (1.0 + 0.02 * j);
            p.launch_week = tr.launch;
        }

        for (int w = tr.launch; w < spec.n_weeks; ++w) {
            double season = 1.0 + tr.seasonal_amp *
                                      std::sin(2.0 * M_PI * (w + phases[static_cast<size_t>(tr.cg)]) / 52.0);
            for (int j = 0; j < spec.n_markets; ++j) {
                double discount = discount_from_level(dlevel[static_cast<size_t>(j)][static_cast<size_t>(w)]);
                double mu = tr.base_rate * mfac[static_cast<size_t>(j)] * season * level[static_cast<size_t>(w)] *
                            demand_uplift(discount, tr.elasticity);
                int demand = rng.negative_binomial(mu, spec.nb_dispersion);
                std::vector<int> sized = rng.multinomial(demand, tr.size_profile);

                WeekRecord rec;
                rec.week = w;
                rec.discount = discount;
                rec.stock_uplift = uplift_units;
                rec.sales_by_size.resize(static_cast<size_t>(tr.k));
                rec.stock_by_size.resize(static_cast<size_t>(tr.k));
                for (int s = 0; s < tr.k; ++s) {
                    bool ok = avail[static_cast<size_t>(w)][static_cast<size_t>(s)] != 0;
                    int cap = std::max(1, static_cast<int>(std::ceil(3.0 * tr.base_rate *
                                                                     tr.size_profile[static_cast<size_t>(s)])));
                    rec.stock_by_size[static_cast<size_t>(s)] = ok ? cap : 0;
                    rec.sales_by_size[static_cast<size_t>(s)] = ok ? sized[static_cast<size_t>(s)] : 0;
                }
                market_panels[static_cast<size_t>(j)].weeks.push_back(std::move(rec));
                catalog.truth.push_back({a, j, w, demand, mu});
            }
        }
        for (ArticlePanel& p : market_panels) catalog.panels.push_back(std::move(p));
    }
    return catalog;
}

// ---------------------------------------------------------------------------
// Catalog summary (demand histogram + sparsity, as plot data)
// ---------------------------------------------------------------------------

struct CatalogSummary {
    std::vector<int64_t> histogram;  // bucket 0: zero sales; bucket b>0: [2^(b-1), 2^b)
    double zero_share = 0.0;
    double mean_weekly_sales = 0.0;
    double p50 = 0.0, p90 = 0.0, p99 = 0.0;
    double top1pct_share = 0.0;
    double hill_tail_index = 0.0;
    int64_t article_weeks = 0;
};

inline CatalogSummary summarize_catalog(const Catalog& catalog) {
    if (catalog.panels.empty()) throw std::invalid_argument("summarize_catalog: empty catalog");
    CatalogSummary s;
    std::vector<double> weekly;
    for (const ArticlePanel& p : catalog.panels)
        for (const WeekRecord& w : p.weeks) weekly.push_back(static_cast<double>(w.sales_total()));
    s.article_weeks = static_cast<int64_t>(weekly.size());
    int64_t zero = 0;
    double total = 0.0;
    int max_bucket = 1;
    for (double v : weekly)
        if (v >= 1.0) max_bucket = std::max(max_bucket, 1 + static_cast<int>(std::floor(std::log2(v))) + 1);
    s.histogram.assign(static_cast<size_t>(max_bucket + 1), 0);
    for (double v : weekly) {
        total += v;
        if (v == 0.0) {
            ++zero;
            ++s.histogram[0];
        } else {
            ++s.histogram[static_cast<size_t>(1 + static_cast<int>(std::floor(std::log2(v))))];
        }
    }
    s.zero_share = static_cast<double>(zero) / static_cast<double>(weekly.size());
    s.mean_weekly_sales = total / static_cast<double>(weekly.size());
    std::vector<double> sorted = weekly;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) { return sorted[static_cast<size_t>(q * (sorted.size() - 1))]; };
    s.p50 = pct(0.5);
    s.p90 = pct(0.9);
    s.p99 = pct(0.99);
    size_t top = std::max<size_t>(1, sorted.size() / 100);
    double top_sum = std::accumulate(sorted.end() - static_cast<long>(top), sorted.end(), 0.0);
    s.top1pct_share = total > 0 ? top_sum / total : 0.0;
    // Hill estimator over the top decile of positive values
    std::vector<double> pos;
    for (double v : sorted)
        if (v > 0) pos.push_back(v);
    if (pos.size() >= 20) {
        size_t k = pos.size() / 10;
        double xk = pos[pos.size() - k];
        double acc = 0.0;
        for (size_t i = pos.size() - k + 1; i < pos.size(); ++i) acc += std::log(pos[i] / xk);
        if (acc > 0) s.hill_tail_index = static_cast<double>(k - 1) / acc;
    }
    return s;
}

inline void write_summary(const CatalogSummary& s, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "# demandcast catalog summary v1\n";
    out << "# article_weeks = " << s.article_weeks << "\n";
    out << "# zero_sales_share = " << format_double(s.zero_share) << "\n";
    out << "# mean_weekly_sales = " << format_double(s.mean_weekly_sales) << "\n";
    out << "# p50 = " << s.p50 << ", p90 = " << s.p90 << ", p99 = " << s.p99 << "\n";
    out << "# top1pct_demand_share = " << format_double(s.top1pct_share) << "\n";
    out << "# hill_tail_index = " << format_double(s.hill_tail_index) << "\n";
    out << "# columns: bucket_low\tbucket_high\tcount\n";
    for (size_t b = 0; b < s.histogram.size(); ++b) {
        int64_t lo = b == 0 ? 0 : (int64_t{1} << (b - 1));
        int64_t hi = b == 0 ? 0 : (int64_t{1} << b) - 1;
        out << lo << '\t' << hi << '\t' << s.histogram[b] << '\n';
    }
}

}  // namespace demandcast

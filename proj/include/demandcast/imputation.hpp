#pragma once

// Sales-to-demand translation. Per-article size distributions are learned
// from weeks with full availability; weeks with missing sizes get the
// restricted-cells multinomial MLE  n = observed_total / observed_mass.
// Weeks that needed imputation are flagged and excluded from evaluation.

#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "demandcast/panel.hpp"

namespace demandcast {

class NoFullAvailability : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SizeProfile {
    int article_id = -1;
    std::vector<double> p;
    std::string source = "article";  // article | commodity_group | global | uniform

    void check() const {
        double total = 0.0;
        for (double v : p) {
            if (v < 0) throw std::logic_error("SizeProfile: negative probability");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw std::logic_error("SizeProfile: probabilities do not sum to 1");
    }
};

struct ImputedWeek {
    int article_id = 0;
    int market_id = 0;
    int week = 0;
    double demand_estimate = 0.0;
    int observed_sales = 0;
    bool imputed_flag = false;       // some sizes were unavailable, estimate extrapolated
    bool excluded_from_eval = false; // imputed or fully censored
    bool fully_censored = false;     // demand undefined; masked downstream
};

struct ImputeSettings {
    double alpha = 0.5;              // additive smoothing per size count
    double min_observed_mass = 0.2;  // below this the MLE variance explodes; treat as censored
};

namespace detail {
inline bool fully_stocked(const WeekRecord& w) {
    for (int s : w.stock_by_size)
        if (s <= 0) return false;
    return true;
}
inline SizeProfile normalize_counts(const std::vector<double>& counts, double alpha, int article_id,
                                    const std::string& source) {
    SizeProfile prof;
    prof.article_id = article_id;
    prof.source = source;
    double total = 0.0;
    prof.p.resize(counts.size());
    for (size_t s = 0; s < counts.size(); ++s) total += counts[s] + alpha;
    for (size_t s = 0; s < counts.size(); ++s) prof.p[s] = (counts[s] + alpha) / total;
    prof.check();
    return prof;
}
}  // namespace detail

// Learns p from per-size sales totals over fully stocked weeks, pooled across
// the article's market panels. Additive smoothing alpha per size.
inline SizeProfile fit_size_profile(std::span<const ArticlePanel* const> panels, const ImputeSettings& cfg = {}) {
    if (panels.empty()) throw std::invalid_argument("fit_size_profile: no panels");
    const int k = panels.front()->n_sizes;
    std::vector<double> counts(static_cast<size_t>(k), 0.0);
    bool any_week = false;
    for (const ArticlePanel* p : panels) {
        if (p->n_sizes != k) throw std::invalid_argument("fit_size_profile: size counts differ across markets");
        for (const WeekRecord& w : p->weeks) {
            if (!detail::fully_stocked(w)) continue;
            any_week = true;
            for (int s = 0; s < k; ++s) counts[static_cast<size_t>(s)] += w.sales_by_size[static_cast<size_t>(s)];
        }
    }
    double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (!any_week || total == 0.0)
        throw NoFullAvailability("article " + std::to_string(panels.front()->article_id) +
                                 ": no fully stocked week with sales");
    return detail::normalize_counts(counts, cfg.alpha, panels.front()->article_id, "article");
}

inline SizeProfile fit_size_profile(const ArticlePanel& panel, const ImputeSettings& cfg = {}) {
    const ArticlePanel* p = &panel;
    return fit_size_profile(std::span<const ArticlePanel* const>(&p, 1), cfg);
}

inline ImputedWeek impute_week(const std::vector<int>& sales_by_size, const std::vector<int>& stock_by_size,
                               const SizeProfile& profile, const ImputeSettings& cfg = {}) {
    if (sales_by_size.size() != profile.p.size() || stock_by_size.size() != profile.p.size())
        throw std::invalid_argument("impute_week: profile size count does not match week record");
    ImputedWeek out;
    int observed = 0;
    double mass = 0.0;
    bool all_available = true, any_available = false;
    for (size_t s = 0; s < profile.p.size(); ++s) {
        if (stock_by_size[s] > 0) {
            any_available = true;
            observed += sales_by_size[s];
            mass += profile.p[s];
        } else {
            all_available = false;
        }
    }
    out.observed_sales = observed;
    if (!any_available || mass < cfg.min_observed_mass) {
        out.fully_censored = true;
        out.excluded_from_eval = true;
        out.demand_estimate = 0.0;
        return out;
    }
    if (all_available) {
        out.demand_estimate = static_cast<double>(observed);  // demand equals observed sales, bit-exact
        return out;
    }
    out.imputed_flag = true;
    out.excluded_from_eval = true;
    out.demand_estimate = static_cast<double>(observed) / mass;
    return out;
}

inline std::vector<ImputedWeek> impute_panel(const ArticlePanel& panel, const SizeProfile& profile,
                                             const ImputeSettings& cfg = {}) {
    std::vector<ImputedWeek> out;
    out.reserve(panel.weeks.size());
    for (const WeekRecord& w : panel.weeks) {
        ImputedWeek iw = impute_week(w.sales_by_size, w.stock_by_size, profile, cfg);
        iw.article_id = panel.article_id;
        iw.market_id = panel.market_id;
        iw.week = w.week;
        out.push_back(iw);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Catalog-level driver with the profile fallback hierarchy:
// article -> commodity-group pool (same size count) -> global pool -> uniform.
// ---------------------------------------------------------------------------

struct ImputationResult {
    std::vector<SizeProfile> profiles;   // one per article, catalog order
    std::vector<ImputedWeek> weeks;      // all article-market-weeks
    int64_t imputed_count = 0;
    int64_t fully_censored_count = 0;
    int64_t fallback_count = 0;
};

inline ImputationResult impute_catalog(const Catalog& catalog, const ImputeSettings& cfg = {}) {
    ImputationResult res;
    // group panels per article
    std::map<int, std::vector<const ArticlePanel*>> by_article;
    for (const ArticlePanel& p : catalog.panels) by_article[p.article_id].push_back(&p);

    // pooled per-size counts for fallbacks, keyed by (commodity group, k) and k
    std::map<std::pair<int, int>, std::vector<double>> cg_counts;
    std::map<int, std::vector<double>> global_counts;
    for (const ArticlePanel& p : catalog.panels) {
        for (const WeekRecord& w : p.weeks) {
            if (!detail::fully_stocked(w)) continue;
            auto& cg = cg_counts[{p.commodity_group_id, p.n_sizes}];
            auto& gl = global_counts[p.n_sizes];
            cg.resize(static_cast<size_t>(p.n_sizes), 0.0);
            gl.resize(static_cast<size_t>(p.n_sizes), 0.0);
            for (int s = 0; s < p.n_sizes; ++s) {
                cg[static_cast<size_t>(s)] += w.sales_by_size[static_cast<size_t>(s)];
                gl[static_cast<size_t>(s)] += w.sales_by_size[static_cast<size_t>(s)];
            }
        }
    }

    for (const auto& [article_id, panels] : by_article) {
        const ArticlePanel* first = panels.front();
        SizeProfile prof;
        try {
            prof = fit_size_profile(std::span<const ArticlePanel* const>(panels.data(), panels.size()), cfg);
        } catch (const NoFullAvailability&) {
            ++res.fallback_count;
            auto cg_it = cg_counts.find({first->commodity_group_id, first->n_sizes});
            auto gl_it = global_counts.find(first->n_sizes);
            if (cg_it != cg_counts.end() &&
                std::accumulate(cg_it->second.begin(), cg_it->second.end(), 0.0) > 0.0) {
                prof = detail::normalize_counts(cg_it->second, cfg.alpha, article_id, "commodity_group");
            } else if (gl_it != global_counts.end() &&
                       std::accumulate(gl_it->second.begin(), gl_it->second.end(), 0.0) > 0.0) {
                prof = detail::normalize_counts(gl_it->second, cfg.alpha, article_id, "global");
            } else {
                prof = detail::normalize_counts(std::vector<double>(static_cast<size_t>(first->n_sizes), 0.0), 1.0,
                                                article_id, "uniform");
            }
        }
        res.profiles.push_back(prof);
        for (const ArticlePanel* p : panels) {
            std::vector<ImputedWeek> weeks = impute_panel(*p, prof, cfg);
            for (const ImputedWeek& w : weeks) {
                if (w.imputed_flag) ++res.imputed_count;
                if (w.fully_censored) ++res.fully_censored_count;
            }
            res.weeks.insert(res.weeks.end(), weeks.begin(), weeks.end());
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline void write_imputed(const ImputationResult& res, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "# demandcast imputed demand v1\n";
    out << "# columns: article_id\tmarket_id\tweek\tdemand_estimate\tobserved_sales\timputed\texcluded_from_eval\t"
           "fully_censored\n";
    for (const ImputedWeek& w : res.weeks)
        out << w.article_id << '\t' << w.market_id << '\t' << w.week << '\t' << format_double(w.demand_estimate)
            << '\t' << w.observed_sales << '\t' << (w.imputed_flag ? 1 : 0) << '\t' << (w.excluded_from_eval ? 1 : 0)
            << '\t' << (w.fully_censored ? 1 : 0) << '\n';
}

inline std::vector<ImputedWeek> read_imputed(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<ImputedWeek> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, '\t');
        if (f.size() != 8) throw IoError(path + ": bad imputed record");
        ImputedWeek w;
        w.article_id = std::stoi(f[0]);
        w.market_id = std::stoi(f[1]);
        w.week = std::stoi(f[2]);
        w.demand_estimate = std::stod(f[3]);
        w.observed_sales = std::stoi(f[4]);
        w.imputed_flag = f[5] == "1";
        w.excluded_from_eval = f[6] == "1";
        w.fully_censored = f[7] == "1";
        out.push_back(w);
    }
    return out;
}

inline void write_profiles(const std::vector<SizeProfile>& profiles, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "# demandcast size profiles v1\n";
    out << "# columns: article_id\tsource\tn_sizes\tp*n\n";
    for (const SizeProfile& prof : profiles) {
        out << prof.article_id << '\t' << prof.source << '\t' << prof.p.size();
        for (double v : prof.p) out << '\t' << format_double(v);
        out << '\n';
    }
}

inline std::vector<SizeProfile> read_profiles(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<SizeProfile> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, '\t');
        if (f.size() < 3) throw IoError(path + ": bad profile record");
        SizeProfile prof;
        prof.article_id = std::stoi(f[0]);
        prof.source = f[1];
        size_t k = std::stoul(f[2]);
        if (f.size() != 3 + k) throw IoError(path + ": bad profile record length");
        for (size_t s = 0; s < k; ++s) prof.p.push_back(std::stod(f[3 + s]));
        out.push_back(prof);
    }
    return out;
}

}  // namespace demandcast

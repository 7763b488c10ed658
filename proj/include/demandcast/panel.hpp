#pragma once

// Weekly article/market panel data model and its line-oriented file format.
// One record per article-market-week; sized arrays are written inline after
// their length so panels with differing size systems share one schema.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "demandcast/io_util.hpp"

namespace demandcast {

// The discount grid {0, 0.05, ..., 0.70} as level/20 so that level 14 equals
// the double literal 0.7 exactly.
inline double discount_from_level(int level) { return static_cast<double>(level) / 20.0; }

struct WeekRecord {
    int week = 0;  // absolute week index within the catalog horizon
    std::vector<int> sales_by_size;
    std::vector<int> stock_by_size;  // 0 means unavailable for the whole week
    double discount = 0.0;           // fraction of black price, 5pp grid
    double stock_uplift = 0.0;       // units added this week (deliveries/returns)

    int sales_total() const {
        int s = 0;
        for (int v : sales_by_size) s += v;
        return s;
    }
    int stock_total() const {
        int s = 0;
        for (int v : stock_by_size) s += v;
        return s;
    }
};

struct ArticlePanel {
    int article_id = 0;
    int market_id = 0;
    int brand_id = 0;
    int commodity_group_id = 0;
    int n_sizes = 0;
    double black_price = 0.0;
    int launch_week = 0;
    std::vector<WeekRecord> weeks;  // launch_week .. n_weeks-1, contiguous
};

struct GroundTruthWeek {
    int article_id = 0;
    int market_id = 0;
    int week = 0;
    int true_demand = 0;        // realized demand before stock censoring
    double expected_demand = 0; // closed-form mean of the demand process
};

struct Catalog {
    int n_weeks = 0;
    int n_markets = 0;
    std::vector<ArticlePanel> panels;       // sorted by (article_id, market_id)
    std::vector<GroundTruthWeek> truth;     // populated for synthetic catalogs

    std::vector<const ArticlePanel*> panels_of_article(int article_id) const {
        std::vector<const ArticlePanel*> out;
        for (const ArticlePanel& p : panels)
            if (p.article_id == article_id) out.push_back(&p);
        return out;
    }
    std::vector<int> article_ids() const {
        std::vector<int> ids;
        for (const ArticlePanel& p : panels)
            if (ids.empty() || ids.back() != p.article_id) ids.push_back(p.article_id);
        return ids;
    }
};

// ---------------------------------------------------------------------------
// Panel file format (tab-separated, one article-market-week per line)
// ---------------------------------------------------------------------------

inline constexpr const char* kPanelHeader =
    "# demandcast panels v1\n"
    "# columns: article_id\tmarket_id\tweek\tbrand_id\tcommodity_group_id\tblack_price\tdiscount\t"
    "stock_uplift\tn_sizes\tsales_by_size*n\tstock_by_size*n\n";

inline void write_panels(const Catalog& catalog, const std::string& path) {
    std::ofstream out = open_out(path);
    out << kPanelHeader;
    out << "# n_weeks = " << catalog.n_weeks << "\n";
    out << "# n_markets = " << catalog.n_markets << "\n";
    for (const ArticlePanel& p : catalog.panels) {
        for (const WeekRecord& w : p.weeks) {
            out << p.article_id << '\t' << p.market_id << '\t' << w.week << '\t' << p.brand_id << '\t'
                << p.commodity_group_id << '\t' << format_double(p.black_price) << '\t'
                << format_double(w.discount) << '\t' << format_double(w.stock_uplift) << '\t' << p.n_sizes;
            for (int v : w.sales_by_size) out << '\t' << v;
            for (int v : w.stock_by_size) out << '\t' << v;
            out << '\n';
        }
    }
}

inline Catalog read_panels(const std::string& path) {
    std::ifstream in = open_in(path);
    Catalog catalog;
    std::map<std::pair<int, int>, ArticlePanel> by_key;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto fields = split(line, ' ');
            if (fields.size() >= 4 && fields[1] == "n_weeks") catalog.n_weeks = std::stoi(fields[3]);
            if (fields.size() >= 4 && fields[1] == "n_markets") catalog.n_markets = std::stoi(fields[3]);
            continue;
        }
        auto f = split(line, '\t');
        if (f.size() < 9) throw IoError(path + ":" + std::to_string(lineno) + ": short panel record");
        WeekRecord w;
        int article_id = std::stoi(f[0]);
        int market_id = std::stoi(f[1]);
        w.week = std::stoi(f[2]);
        int n_sizes = std::stoi(f[8]);
        if (static_cast<int>(f.size()) != 9 + 2 * n_sizes)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(9 + 2 * n_sizes) +
                          " fields, got " + std::to_string(f.size()));
        w.discount = std::stod(f[6]);
        w.stock_uplift = std::stod(f[7]);
        w.sales_by_size.resize(static_cast<size_t>(n_sizes));
        w.stock_by_size.resize(static_cast<size_t>(n_sizes));
        for (int s = 0; s < n_sizes; ++s) {
            w.sales_by_size[static_cast<size_t>(s)] = std::stoi(f[static_cast<size_t>(9 + s)]);
            w.stock_by_size[static_cast<size_t>(s)] = std::stoi(f[static_cast<size_t>(9 + n_sizes + s)]);
        }
        auto key = std::make_pair(article_id, market_id);
        auto it = by_key.find(key);
        if (it == by_key.end()) {
            ArticlePanel p;
            p.article_id = article_id;
            p.market_id = market_id;
            p.brand_id = std::stoi(f[3]);
            p.commodity_group_id = std::stoi(f[4]);
            p.black_price = std::stod(f[5]);
            p.n_sizes = n_sizes;
            it = by_key.emplace(key, std::move(p)).first;
        }
        it->second.weeks.push_back(std::move(w));
    }
    for (auto& [key, p] : by_key) {
        std::sort(p.weeks.begin(), p.weeks.end(), [](const WeekRecord& a, const WeekRecord& b) { return a.week < b.week; });
        p.launch_week = p.weeks.empty() ? 0 : p.weeks.front().week;
        if (catalog.n_weeks == 0 && !p.weeks.empty()) catalog.n_weeks = p.weeks.back().week + 1;
        catalog.panels.push_back(std::move(p));
    }
    if (catalog.n_markets == 0) {
        int mx = 0;
        for (const ArticlePanel& p : catalog.panels) mx = std::max(mx, p.market_id + 1);
        catalog.n_markets = mx;
    }
    return catalog;
}

inline void write_ground_truth(const Catalog& catalog, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "# demandcast ground truth v1\n";
    out << "# columns: article_id\tmarket_id\tweek\ttrue_demand\texpected_demand\n";
    for (const GroundTruthWeek& g : catalog.truth)
        out << g.article_id << '\t' << g.market_id << '\t' << g.week << '\t' << g.true_demand << '\t'
            << format_double(g.expected_demand) << '\n';
}

inline std::vector<GroundTruthWeek> read_ground_truth(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<GroundTruthWeek> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, '\t');
        if (f.size() != 5) throw IoError(path + ": bad ground truth record");
        out.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4])});
    }
    return out;
}

}  // namespace demandcast

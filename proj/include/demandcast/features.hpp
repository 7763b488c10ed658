#pragma once

// Input assembly for the forecaster: covariate transforms, the positional
// encoding covariate, padding/masking, and the encoder/decoder matrices.
// The serialized schema file is the single source of column order; training
// and inference both load it so the layouts agree bit-exactly.

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "demandcast/imputation.hpp"
#include "demandcast/io_util.hpp"
#include "demandcast/panel.hpp"
#include "demandcast/tensor.hpp"

namespace demandcast {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Covariate schema (Table-1 style)
// ---------------------------------------------------------------------------

enum class CovCategory { StaticGlobal, DynamicGlobal, StaticInternational, DynamicInternational };
enum class CovTransform { None, Logarithm, Embedded };

struct CovariateSpec {
    std::string name;
    CovCategory category;
    bool categorical = false;
    CovTransform transform = CovTransform::None;
    bool future_available = false;
};

inline const char* to_string(CovCategory c) {
    switch (c) {
        case CovCategory::StaticGlobal: return "static-global";
        case CovCategory::DynamicGlobal: return "dynamic-global";
        case CovCategory::StaticInternational: return "static-international";
        case CovCategory::DynamicInternational: return "dynamic-international";
    }
    return "?";
}
inline const char* to_string(CovTransform t) {
    switch (t) {
        case CovTransform::None: return "none";
        case CovTransform::Logarithm: return "logarithm";
        case CovTransform::Embedded: return "embedded";
    }
    return "?";
}

// Numeric transform application. Table 1's "logarithm" is implemented as
// log1p because demand and stock contain zeros.
inline double apply_transform(CovTransform t, double x, const std::string& covariate) {
    switch (t) {
        case CovTransform::None: return x;
        case CovTransform::Logarithm:
            if (x < 0.0) throw DataError("covariate " + covariate + ": negative input " + format_double(x) +
                                         " to logarithm transform");
            return std::log1p(x);
        case CovTransform::Embedded: throw DataError("covariate " + covariate + ": embedded is not numeric");
    }
    return x;
}

// Eq.-style positional-encoding covariate: alternating sin/cos at frequencies
// f_m = (2m+1) / (e_dim * t_dim), evaluated at absolute week n.
inline std::vector<double> positional_encoding(int n, int e_dim, int t_dim = 52) {
    if (e_dim <= 0 || e_dim % 2 != 0) throw ConfigError("positional_encoding: e_dim must be positive and even");
    if (t_dim <= 0) throw ConfigError("positional_encoding: t_dim must be positive");
    std::vector<double> pos(static_cast<size_t>(e_dim));
    for (int m = 0; m < e_dim; ++m) {
        double f = static_cast<double>(2 * m + 1) / (static_cast<double>(e_dim) * t_dim);
        double phase = 2.0 * M_PI * f * n;
        pos[static_cast<size_t>(m)] = (m % 2 == 0) ? std::sin(phase) : std::cos(phase);
    }
    return pos;
}

struct CovariateSchema {
    int n_markets = 1;
    int e_dim = 4;
    int t_dim = 52;
    int window = 52;  // encoder history length (j+1)
    int embed_dim = 10;
    int brand_vocab = 31;  // includes the reserved unknown slot (last index)
    int cg_vocab = 13;
    std::vector<CovariateSpec> covariates;

    static CovariateSchema standard(int n_markets, int e_dim = 4, int window = 52, int brand_vocab = 31,
                                    int cg_vocab = 13) {
        CovariateSchema s;
        s.n_markets = n_markets;
        s.e_dim = e_dim;
        s.window = window;
        s.brand_vocab = brand_vocab;
        s.cg_vocab = cg_vocab;
        s.covariates = {
            {"brand", CovCategory::StaticGlobal, true, CovTransform::Embedded, true},
            {"commodity_group", CovCategory::StaticGlobal, true, CovTransform::Embedded, true},
            {"demand", CovCategory::DynamicInternational, false, CovTransform::Logarithm, false},
            {"discount", CovCategory::DynamicInternational, false, CovTransform::None, false},
            {"black_price", CovCategory::StaticInternational, false, CovTransform::Logarithm, true},
            {"stock", CovCategory::DynamicGlobal, false, CovTransform::Logarithm, false},
            {"stock_uplift", CovCategory::DynamicGlobal, false, CovTransform::Logarithm, false},
        };
        return s;
    }

    bool multi(const CovariateSpec& c) const {
        return c.category == CovCategory::StaticInternational || c.category == CovCategory::DynamicInternational;
    }

    // Encoder row labels, in column order. Categorical covariates are static
    // embeddings routed to the monotonic head, not encoder rows.
    std::vector<std::string> encoder_rows() const {
        std::vector<std::string> rows;
        for (const CovariateSpec& c : covariates) {
            if (c.categorical) continue;
            int copies = multi(c) ? n_markets : 1;
            for (int j = 0; j < copies; ++j)
                rows.push_back(multi(c) ? c.name + "[m" + std::to_string(j) + "]" : c.name);
        }
        for (int m = 0; m < e_dim; ++m) rows.push_back("pos[" + std::to_string(m) + "]");
        return rows;
    }

    // Decoder rows: the last observed discount/demand anchors plus every
    // future-available numeric covariate and the positional encoding.
    std::vector<std::string> decoder_rows() const {
        std::vector<std::string> rows;
        for (int j = 0; j < n_markets; ++j) rows.push_back("last_discount[m" + std::to_string(j) + "]");
        for (int j = 0; j < n_markets; ++j) rows.push_back("last_demand[m" + std::to_string(j) + "]");
        for (const CovariateSpec& c : covariates) {
            if (c.categorical || !c.future_available) continue;
            int copies = multi(c) ? n_markets : 1;
            for (int j = 0; j < copies; ++j)
                rows.push_back(multi(c) ? c.name + "[m" + std::to_string(j) + "]" : c.name);
        }
        for (int m = 0; m < e_dim; ++m) rows.push_back("pos[" + std::to_string(m) + "]");
        return rows;
    }

    int encoder_dim() const { return static_cast<int>(encoder_rows().size()); }  // v = d_model
    int decoder_dim() const { return static_cast<int>(decoder_rows().size()); }

    void validate() const {
        if (n_markets <= 0) throw ConfigError("schema: n_markets must be positive");
        if (e_dim <= 0 || e_dim % 2 != 0) throw ConfigError("schema: e_dim must be positive and even");
        if (window <= 0 || t_dim <= 0) throw ConfigError("schema: window and t_dim must be positive");
        if (embed_dim <= 0 || brand_vocab < 2 || cg_vocab < 2) throw ConfigError("schema: bad embedding settings");
        for (const CovariateSpec& c : covariates)
            if (c.categorical && c.category != CovCategory::StaticGlobal)
                throw ConfigError("schema: categorical covariate " + c.name +
                                  " must be static-global (embeddings feed the demand head)");
    }

    std::string serialize() const {
        std::ostringstream out;
        out << "# demandcast covariate schema v1\n";
        out << "n_markets = " << n_markets << "\n";
        out << "e_dim = " << e_dim << "\n";
        out << "t_dim = " << t_dim << "\n";
        out << "window = " << window << "\n";
        out << "embed_dim = " << embed_dim << "\n";
        out << "brand_vocab = " << brand_vocab << "\n";
        out << "cg_vocab = " << cg_vocab << "\n";
        for (const CovariateSpec& c : covariates)
            out << "covariate " << c.name << " " << to_string(c.category) << " "
                << (c.categorical ? "categorical" : "numeric") << " " << to_string(c.transform) << " future="
                << (c.future_available ? "y" : "n") << "\n";
        auto enc = encoder_rows();
        for (size_t i = 0; i < enc.size(); ++i) out << "encoder_row " << i << " = " << enc[i] << "\n";
        auto dec = decoder_rows();
        for (size_t i = 0; i < dec.size(); ++i) out << "decoder_row " << i << " = " << dec[i] << "\n";
        return out.str();
    }

    uint64_t hash() const { return fnv1a64(serialize()); }

    void save(const std::string& path) const { open_out(path) << serialize(); }

    static CovariateSchema load(const std::string& path) {
        std::ifstream in = open_in(path);
        CovariateSchema s;
        s.covariates.clear();
        std::vector<std::string> enc_rows, dec_rows;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            std::string head;
            ls >> head;
            if (head == "covariate") {
                CovariateSpec c;
                std::string cat, vt, tr, fut;
                ls >> c.name >> cat >> vt >> tr >> fut;
                if (cat == "static-global") c.category = CovCategory::StaticGlobal;
                else if (cat == "dynamic-global") c.category = CovCategory::DynamicGlobal;
                else if (cat == "static-international") c.category = CovCategory::StaticInternational;
                else if (cat == "dynamic-international") c.category = CovCategory::DynamicInternational;
                else throw ConfigError(path + ": bad covariate category " + cat);
                c.categorical = vt == "categorical";
                if (tr == "none") c.transform = CovTransform::None;
                else if (tr == "logarithm") c.transform = CovTransform::Logarithm;
                else if (tr == "embedded") c.transform = CovTransform::Embedded;
                else throw ConfigError(path + ": bad transform " + tr);
                c.future_available = fut == "future=y";
                s.covariates.push_back(c);
            } else if (head == "encoder_row" || head == "decoder_row") {
                int idx;
                std::string eq, label;
                ls >> idx >> eq >> label;
                (head == "encoder_row" ? enc_rows : dec_rows).push_back(label);
            } else {
                std::string eq;
                int value;
                ls >> eq >> value;
                if (head == "n_markets") s.n_markets = value;
                else if (head == "e_dim") s.e_dim = value;
                else if (head == "t_dim") s.t_dim = value;
                else if (head == "window") s.window = value;
                else if (head == "embed_dim") s.embed_dim = value;
                else if (head == "brand_vocab") s.brand_vocab = value;
                else if (head == "cg_vocab") s.cg_vocab = value;
                else throw ConfigError(path + ": unknown schema key " + head);
            }
        }
        s.validate();
        if (enc_rows != s.encoder_rows() || dec_rows != s.decoder_rows())
            throw ConfigError(path + ": schema row listing does not match its own derivation");
        return s;
    }
};

// ---------------------------------------------------------------------------
// Per-article assembled series
// ---------------------------------------------------------------------------

struct EncoderInput {
    Tensor eta;                  // v x window, one column per history week
    std::vector<uint8_t> mask;   // window; 1 = usable (not padded, stock > 0)
    int article_id = 0;
    int brand_id = 0;
    int cg_id = 0;
    int origin = 0;  // absolute index of the last history week
};

struct DecoderInput {
    Tensor eta_future;  // v' x horizon
    int horizon = 0;
};

struct ArticleFeatures {
    int article_id = 0, brand_id = 0, cg_id = 0;
    int n_weeks = 0, n_markets = 0, launch_week = 0;
    std::vector<double> black_price;                  // per market
    std::vector<std::vector<double>> demand_log;      // market x week (log1p imputed demand)
    std::vector<std::vector<double>> demand_units;    // market x week
    std::vector<std::vector<double>> discount;        // market x week
    std::vector<double> stock_log;                    // week
    std::vector<double> uplift_log;                   // week
    std::vector<uint8_t> observed;                    // week >= launch with a record
    std::vector<uint8_t> stocked;                     // total stock > 0
    std::vector<std::vector<uint8_t>> usable_target;  // market x week: demand defined, stock > 0
    std::vector<std::vector<uint8_t>> eval_ok;        // market x week: usable and not imputed
    std::vector<std::vector<uint8_t>> imputed;        // market x week

    bool week_valid(int week) const {
        return week >= 0 && week < n_weeks && observed[static_cast<size_t>(week)] &&
               stocked[static_cast<size_t>(week)];
    }
    // Last non-padded, stocked week at or before `origin` (the anchor for
    // the decoder's d_t / q_t rows and for the naive forecaster).
    std::optional<int> last_observed_week(int origin) const {
        for (int w = std::min(origin, n_weeks - 1); w >= 0; --w)
            if (week_valid(w)) return w;
        return std::nullopt;
    }
};

// Joins an article's market panels with its imputed weeks.
inline ArticleFeatures build_article_features(const std::vector<const ArticlePanel*>& panels,
                                              const std::vector<const ImputedWeek*>& imputed_weeks,
                                              const CovariateSchema& schema, int n_weeks) {
    if (panels.empty()) throw DataError("build_article_features: no panels");
    const int c = schema.n_markets;
    if (static_cast<int>(panels.size()) != c)
        throw DataError("article " + std::to_string(panels.front()->article_id) + ": expected " +
                        std::to_string(c) + " market panels, got " + std::to_string(panels.size()));

    ArticleFeatures af;
    af.article_id = panels.front()->article_id;
    af.brand_id = panels.front()->brand_id;
    af.cg_id = panels.front()->commodity_group_id;
    af.n_weeks = n_weeks;
    af.n_markets = c;
    af.launch_week = panels.front()->launch_week;
    af.black_price.resize(static_cast<size_t>(c));
    af.demand_log.assign(static_cast<size_t>(c), std::vector<double>(static_cast<size_t>(n_weeks), 0.0));
    af.demand_units = af.demand_log;
    af.discount = af.demand_log;
    af.stock_log.assign(static_cast<size_t>(n_weeks), 0.0);
    af.uplift_log.assign(static_cast<size_t>(n_weeks), 0.0);
    af.observed.assign(static_cast<size_t>(n_weeks), 0);
    af.stocked.assign(static_cast<size_t>(n_weeks), 0);
    af.usable_target.assign(static_cast<size_t>(c), std::vector<uint8_t>(static_cast<size_t>(n_weeks), 0));
    af.eval_ok = af.usable_target;
    af.imputed = af.usable_target;

    std::map<std::pair<int, int>, const ImputedWeek*> imp;
    for (const ImputedWeek* w : imputed_weeks) imp[{w->market_id, w->week}] = w;

    for (const ArticlePanel* p : panels) {
        int j = p->market_id;
        if (j < 0 || j >= c) throw DataError("article " + std::to_string(af.article_id) + ": market id out of range");
        af.black_price[static_cast<size_t>(j)] = p->black_price;
        for (const WeekRecord& w : p->weeks) {
            if (w.week < 0 || w.week >= n_weeks) continue;
            const size_t t = static_cast<size_t>(w.week);
            af.observed[t] = 1;
            af.discount[static_cast<size_t>(j)][t] = w.discount;
            if (j == 0) {  // stock is global; all markets carry identical copies
                af.stock_log[t] = apply_transform(CovTransform::Logarithm, w.stock_total(), "stock");
                af.uplift_log[t] = apply_transform(CovTransform::Logarithm, w.stock_uplift, "stock_uplift");
                af.stocked[t] = w.stock_total() > 0 ? 1 : 0;
            }
            auto it = imp.find({j, w.week});
            if (it == imp.end())
                throw DataError("article " + std::to_string(af.article_id) + " market " + std::to_string(j) +
                                " week " + std::to_string(w.week) + ": missing imputed demand");
            const ImputedWeek& iw = *it->second;
            if (!iw.fully_censored) {
                af.demand_units[static_cast<size_t>(j)][t] = iw.demand_estimate;
                af.demand_log[static_cast<size_t>(j)][t] =
                    apply_transform(CovTransform::Logarithm, iw.demand_estimate, "demand");
                af.usable_target[static_cast<size_t>(j)][t] = 1;
                af.eval_ok[static_cast<size_t>(j)][t] = iw.excluded_from_eval ? 0 : 1;
                af.imputed[static_cast<size_t>(j)][t] = iw.imputed_flag ? 1 : 0;
            }
        }
    }
    // a target is usable only where the week is also stocked
    for (int j = 0; j < c; ++j)
        for (int w = 0; w < n_weeks; ++w) {
            if (!af.stocked[static_cast<size_t>(w)]) {
                af.usable_target[static_cast<size_t>(j)][static_cast<size_t>(w)] = 0;
                af.eval_ok[static_cast<size_t>(j)][static_cast<size_t>(w)] = 0;
            }
        }
    return af;
}

// Week mask for the encoder window ending at `origin`: a position is masked
// when zero padded (before launch / before week 0) or when stock was zero.
inline std::vector<uint8_t> build_masks(const ArticleFeatures& af, int origin, int window) {
    std::vector<uint8_t> mask(static_cast<size_t>(window), 0);
    for (int i = 0; i < window; ++i) {
        int week = origin - window + 1 + i;
        mask[static_cast<size_t>(i)] = af.week_valid(week) ? 1 : 0;
    }
    return mask;
}

inline EncoderInput build_encoder_input(const ArticleFeatures& af, const CovariateSchema& schema, int origin) {
    const int v = schema.encoder_dim();
    const int w = schema.window;
    const int c = schema.n_markets;
    EncoderInput enc;
    enc.eta = Tensor::zeros({v, w});
    enc.mask = build_masks(af, origin, w);
    enc.article_id = af.article_id;
    enc.brand_id = af.brand_id;
    enc.cg_id = af.cg_id;
    enc.origin = origin;
    for (int i = 0; i < w; ++i) {
        int week = origin - w + 1 + i;
        if (week < 0 || week >= af.n_weeks || !af.observed[static_cast<size_t>(week)]) continue;  // zero padding
        const size_t t = static_cast<size_t>(week);
        int r = 0;
        for (int j = 0; j < c; ++j) enc.eta.at(r++, i) = af.demand_log[static_cast<size_t>(j)][t];
        for (int j = 0; j < c; ++j) enc.eta.at(r++, i) = af.discount[static_cast<size_t>(j)][t];
        for (int j = 0; j < c; ++j)
            enc.eta.at(r++, i) = apply_transform(CovTransform::Logarithm, af.black_price[static_cast<size_t>(j)],
                                                 "black_price");
        enc.eta.at(r++, i) = af.stock_log[t];
        enc.eta.at(r++, i) = af.uplift_log[t];
        std::vector<double> pos = positional_encoding(week, schema.e_dim, schema.t_dim);
        for (int m = 0; m < schema.e_dim; ++m) enc.eta.at(r++, i) = pos[static_cast<size_t>(m)];
        if (r != v) throw DataError("encoder row count mismatch against schema");
    }
    return enc;
}

inline DecoderInput build_decoder_input(const ArticleFeatures& af, const CovariateSchema& schema, int origin,
                                        int horizon) {
    const int vp = schema.decoder_dim();
    const int c = schema.n_markets;
    DecoderInput dec;
    dec.horizon = horizon;
    dec.eta_future = Tensor::zeros({vp, horizon});
    std::optional<int> anchor = af.last_observed_week(origin);
    for (int h = 0; h < horizon; ++h) {
        int week = origin + 1 + h;
        int r = 0;
        for (int j = 0; j < c; ++j)
            dec.eta_future.at(r++, h) = anchor ? af.discount[static_cast<size_t>(j)][static_cast<size_t>(*anchor)] : 0.0;
        for (int j = 0; j < c; ++j)
            dec.eta_future.at(r++, h) = anchor ? af.demand_log[static_cast<size_t>(j)][static_cast<size_t>(*anchor)] : 0.0;
        for (int j = 0; j < c; ++j)
            dec.eta_future.at(r++, h) =
                apply_transform(CovTransform::Logarithm, af.black_price[static_cast<size_t>(j)], "black_price");
        std::vector<double> pos = positional_encoding(week, schema.e_dim, schema.t_dim);
        for (int m = 0; m < schema.e_dim; ++m) dec.eta_future.at(r++, h) = pos[static_cast<size_t>(m)];
        if (r != vp) throw DataError("decoder row count mismatch against schema");
    }
    return dec;
}

// Discounts the head conditions on: actual future path per market (what-if
// evaluation replaces these with grid levels).
inline std::vector<std::vector<double>> future_discounts(const ArticleFeatures& af, int origin, int horizon) {
    std::vector<std::vector<double>> d(static_cast<size_t>(af.n_markets),
                                       std::vector<double>(static_cast<size_t>(horizon), 0.0));
    for (int j = 0; j < af.n_markets; ++j)
        for (int h = 0; h < horizon; ++h) {
            int week = origin + 1 + h;
            if (week < af.n_weeks && af.observed[static_cast<size_t>(week)])
                d[static_cast<size_t>(j)][static_cast<size_t>(h)] = af.discount[static_cast<size_t>(j)][static_cast<size_t>(week)];
        }
    return d;
}

struct TargetSlice {
    std::vector<std::vector<double>> log_target;  // market x horizon
    std::vector<std::vector<uint8_t>> usable;     // demand defined and stock > 0
    std::vector<std::vector<uint8_t>> eval_ok;    // usable and not imputed
};

inline TargetSlice build_targets(const ArticleFeatures& af, int origin, int horizon, bool include_imputed = true) {
    TargetSlice t;
    t.log_target.assign(static_cast<size_t>(af.n_markets), std::vector<double>(static_cast<size_t>(horizon), 0.0));
    t.usable.assign(static_cast<size_t>(af.n_markets), std::vector<uint8_t>(static_cast<size_t>(horizon), 0));
    t.eval_ok = t.usable;
    for (int j = 0; j < af.n_markets; ++j)
        for (int h = 0; h < horizon; ++h) {
            int week = origin + 1 + h;
            if (week >= af.n_weeks) continue;
            const size_t jw = static_cast<size_t>(j), tw = static_cast<size_t>(week);
            if (!af.usable_target[jw][tw]) continue;
            if (!include_imputed && af.imputed[jw][tw]) continue;
            t.usable[jw][static_cast<size_t>(h)] = 1;
            t.eval_ok[jw][static_cast<size_t>(h)] = af.eval_ok[jw][tw];
            t.log_target[jw][static_cast<size_t>(h)] = af.demand_log[jw][tw];
        }
    return t;
}

// Catalog-level convenience: group panels and imputed weeks per article.
inline std::vector<ArticleFeatures> build_all_features(const Catalog& catalog,
                                                       const std::vector<ImputedWeek>& imputed,
                                                       const CovariateSchema& schema) {
    std::map<int, std::vector<const ArticlePanel*>> panels_by_article;
    for (const ArticlePanel& p : catalog.panels) panels_by_article[p.article_id].push_back(&p);
    std::map<int, std::vector<const ImputedWeek*>> imputed_by_article;
    for (const ImputedWeek& w : imputed) imputed_by_article[w.article_id].push_back(&w);
    std::vector<ArticleFeatures> out;
    out.reserve(panels_by_article.size());
    for (const auto& [article_id, panels] : panels_by_article) {
        auto it = imputed_by_article.find(article_id);
        if (it == imputed_by_article.end())
            throw DataError("article " + std::to_string(article_id) + ": no imputed demand; run impute first");
        out.push_back(build_article_features(panels, it->second, schema, catalog.n_weeks));
    }
    return out;
}

}  // namespace demandcast

#include "firmfx/psm.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/linreg.hpp"
#include "firmfx/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace firmfx::psm {

namespace {

double cont_covariate(const FirmYear& fy, const std::string& name) {
    if (name == "size") return log_or_nan(fy.employees);
    if (name == "capint") return log_or_nan(fy.capital_intensity);
    if (name == "tfp") return fy.tfp;
    if (name == "age") return std::isnan(fy.age) ? fy.age : std::log1p(fy.age);
    throw ConfigError("unknown matching covariate: " + name);
}

struct Unit {
    int firm = -1;
    int ref_year = 0; // g - 1 for treated; candidate year for controls
    int cohort = 0;   // g for treated, candidate g for controls
    bool treated = false;
    const FirmYear* row = nullptr;
};

} // namespace

MatchedSample nn_match(const Panel& panel, const MatchOptions& opts) {
    std::vector<std::string> cont_names;
    bool want_country = false, want_industry = false, want_year = false;
    for (const auto& n : opts.covariates) {
        if (n == "country") want_country = true;
        else if (n == "industry") want_industry = true;
        else if (n == "year") want_year = true;
        else cont_names.push_back(n);
    }

    // treated units at their last pre-treatment year; never-treated firms are
    // candidates at every such year
    std::set<int> ref_years;
    std::vector<Unit> units;
    for (int f = 0; f < panel.n_firms(); ++f) {
        const int g = panel.cohort[f];
        if (g == kNeverTreated)
            continue;
        const int r = panel.find(f, g - 1);
        if (r < 0)
            continue;
        Unit u{f, g - 1, g, true, &panel.rows[r]};
        bool ok = true;
        for (const auto& n : cont_names)
            if (!std::isfinite(cont_covariate(*u.row, n))) { ok = false; break; }
        if (ok) {
            units.push_back(u);
            ref_years.insert(g - 1);
        }
    }
    if (units.empty())
        throw DataError("nn_match: no matchable treated firms");
    for (int f = 0; f < panel.n_firms(); ++f) {
        if (panel.cohort[f] != kNeverTreated)
            continue;
        for (int y : ref_years) {
            const int r = panel.find(f, y);
            if (r < 0)
                continue;
            Unit u{f, y, y + 1, false, &panel.rows[r]};
            bool ok = true;
            for (const auto& n : cont_names)
                if (!std::isfinite(cont_covariate(*u.row, n))) { ok = false; break; }
            if (ok)
                units.push_back(u);
        }
    }

    // pooled logit design
    std::set<int> countries, industries, years;
    for (const auto& u : units) {
        countries.insert(u.row->country);
        industries.insert(u.row->industry);
        years.insert(u.ref_year);
    }
    auto dummies = [](const std::set<int>& s) {
        std::vector<int> v(s.begin(), s.end());
        if (!v.empty()) v.erase(v.begin());
        return v;
    };
    const std::vector<int> dc = want_country ? dummies(countries) : std::vector<int>{};
    const std::vector<int> di = want_industry ? dummies(industries) : std::vector<int>{};
    const std::vector<int> dy = want_year ? dummies(years) : std::vector<int>{};

    const std::size_t k = 1 + cont_names.size() + dc.size() + di.size() + dy.size();
    Eigen::MatrixXd X(units.size(), k);
    Eigen::VectorXd yv(units.size());
    std::vector<std::string> names;
    names.push_back("intercept");
    for (const auto& n : cont_names) names.push_back(n);
    for (int c : dc) names.push_back("country_" + panel.country_codes[c]);
    for (int c : di) names.push_back("industry_" + std::to_string(c));
    for (int c : dy) names.push_back("year_" + std::to_string(c));
    for (std::size_t i = 0; i < units.size(); ++i) {
        std::size_t col = 0;
        X(i, col++) = 1.0;
        for (const auto& n : cont_names)
            X(i, col++) = cont_covariate(*units[i].row, n);
        for (int c : dc) X(i, col++) = units[i].row->country == c ? 1.0 : 0.0;
        for (int c : di) X(i, col++) = units[i].row->industry == c ? 1.0 : 0.0;
        for (int c : dy) X(i, col++) = units[i].ref_year == c ? 1.0 : 0.0;
        yv[i] = units[i].treated ? 1.0 : 0.0;
    }
    LogitFit fit = logit_mle(X, yv, 1e-10, 100, &names);

    MatchedSample out;
    out.pscore_coef = fit.coef;
    out.coef_names = names;

    // common support from control candidate p-scores
    double lo = 1.0, hi = 0.0;
    bool any_control = false;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (!units[i].treated) {
            lo = std::min(lo, fit.prob[i]);
            hi = std::max(hi, fit.prob[i]);
            any_control = true;
        }
    if (!any_control)
        throw DataError("nn_match: no control candidates");
    out.support_lo = lo;
    out.support_hi = hi;

    // greedy match, descending treated p-score; ties on distance break on the
    // smallest external control id
    struct TreatedRef { std::size_t idx; double p; };
    std::vector<TreatedRef> treated;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (units[i].treated)
            treated.push_back({i, fit.prob[i]});
    std::sort(treated.begin(), treated.end(), [&](const TreatedRef& a, const TreatedRef& b) {
        if (a.p != b.p) return a.p > b.p;
        return panel.firm_ids[units[a.idx].firm] < panel.firm_ids[units[b.idx].firm];
    });

    std::vector<char> firm_used(panel.n_firms(), 0);
    for (const auto& tr : treated) {
        const double pt = tr.p;
        if (pt < lo || pt > hi) {
            ++out.n_dropped_support;
            continue;
        }
        int best_i = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < units.size(); ++i) {
            if (units[i].treated)
                continue;
            if (!opts.with_replacement && firm_used[units[i].firm])
                continue;
            const double d = std::abs(fit.prob[i] - pt);
            if (d < best_d ||
                (d == best_d && best_i >= 0 &&
                 panel.firm_ids[units[i].firm] < panel.firm_ids[units[best_i].firm])) {
                best_d = d;
                best_i = static_cast<int>(i);
            }
        }
        if (best_i < 0 || (!std::isnan(opts.caliper) && best_d > opts.caliper)) {
            ++out.n_unmatched;
            continue;
        }
        MatchedPair p;
        p.treated_firm = units[tr.idx].firm;
        p.control_firm = units[best_i].firm;
        p.event_year = units[tr.idx].cohort;
        p.p_treated = pt;
        p.p_control = fit.prob[best_i];
        p.distance = best_d;
        out.pairs.push_back(p);
        firm_used[units[best_i].firm] = 1;
    }
    return out;
}

namespace {

BalanceRow balance_row(const std::string& name, bool after, const std::vector<double>& xt,
                       const std::vector<double>& xc) {
    BalanceRow row;
    row.covariate = name;
    row.after = after;
    row.mean_treated = mean(xt);
    row.mean_control = mean(xc);
    const double vt = sample_var(xt);
    const double vc = sample_var(xc);
    if (vt <= 0.0 || vc <= 0.0) {
        row.undefined = true;
        row.pct_bias = std::numeric_limits<double>::quiet_NaN();
        row.variance_ratio = std::numeric_limits<double>::quiet_NaN();
        return row;
    }
    row.pct_bias = 100.0 * (row.mean_treated - row.mean_control) /
                   std::sqrt(0.5 * (vt + vc));
    const double nt = static_cast<double>(xt.size());
    const double nc = static_cast<double>(xc.size());
    const double se = std::sqrt(vt / nt + vc / nc);
    row.t_stat = se > 0.0 ? (row.mean_treated - row.mean_control) / se : 0.0;
    row.p_value = z_pvalue(row.t_stat);
    row.variance_ratio = vt / vc;
    row.flagged = row.variance_ratio < 0.80 || row.variance_ratio > 1.20;
    return row;
}

} // namespace

std::vector<BalanceRow> balance_diagnostics(const Panel& panel, const MatchedSample& m,
                                            const std::vector<std::string>& covariates) {
    if (m.pairs.empty())
        throw DataError("balance_diagnostics: empty matched sample");

    // "before": all treated units vs all never-treated candidates at the same
    // reference years; "after": the matched pairs
    std::set<int> ref_years;
    for (int f = 0; f < panel.n_firms(); ++f)
        if (panel.cohort[f] != kNeverTreated && panel.find(f, panel.cohort[f] - 1) >= 0)
            ref_years.insert(panel.cohort[f] - 1);

    std::vector<BalanceRow> rows;
    for (const auto& name : covariates) {
        std::vector<double> bt, bc, at, ac;
        for (int f = 0; f < panel.n_firms(); ++f) {
            const int g = panel.cohort[f];
            if (g != kNeverTreated) {
                const int r = panel.find(f, g - 1);
                if (r >= 0) {
                    const double v = cont_covariate(panel.rows[r], name);
                    if (std::isfinite(v)) bt.push_back(v);
                }
            } else {
                for (int y : ref_years) {
                    const int r = panel.find(f, y);
                    if (r >= 0) {
                        const double v = cont_covariate(panel.rows[r], name);
                        if (std::isfinite(v)) bc.push_back(v);
                    }
                }
            }
        }
        for (const auto& p : m.pairs) {
            const int rt = panel.find(p.treated_firm, p.event_year - 1);
            const int rc = panel.find(p.control_firm, p.event_year - 1);
            if (rt >= 0) {
                const double v = cont_covariate(panel.rows[rt], name);
                if (std::isfinite(v)) at.push_back(v);
            }
            if (rc >= 0) {
                const double v = cont_covariate(panel.rows[rc], name);
                if (std::isfinite(v)) ac.push_back(v);
            }
        }
        rows.push_back(balance_row(name, false, bt, bc));
        rows.push_back(balance_row(name, true, at, ac));
    }
    return rows;
}

TwfeResult twfe_did(const Panel& panel, const MatchedSample& m,
                    const std::vector<double>& outcome, const TwfeOptions& opts) {
    if (m.pairs.empty())
        throw DataError("twfe_did: empty matched sample");

    // matched firms with their event years
    std::map<int, std::pair<bool, int>> firms; // firm -> (treated, event year)
    for (const auto& p : m.pairs) {
        firms[p.treated_firm] = {true, p.event_year};
        firms[p.control_firm] = {false, p.event_year};
    }

    struct Obs {
        int row;
        bool treated;
        bool post;
    };
    std::vector<Obs> sample;
    for (const auto& [f, info] : firms) {
        auto [b, e] = panel.firm_span(f);
        for (int r = b; r < e; ++r) {
            if (!std::isfinite(outcome[r]))
                continue;
            bool ok = true;
            for (const auto& n : opts.controls)
                if (!std::isfinite(cont_covariate(panel.rows[r], n))) { ok = false; break; }
            if (!ok)
                continue;
            sample.push_back({r, info.first, panel.rows[r].year >= info.second});
        }
    }
    if (sample.size() < opts.controls.size() + 4)
        throw DataError("twfe_did: matched sample too small");

    const std::size_t n = sample.size();
    std::vector<std::string> names = {"T", "Post", "TxPost"};
    for (const auto& c : opts.controls)
        names.push_back(c);
    std::size_t k = names.size();
    if (!opts.absorb_fixed_effects) {
        names.insert(names.begin(), "intercept");
        ++k;
    }

    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd y(n);
    std::vector<int> cluster(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Obs& o = sample[i];
        const FirmYear& fy = panel.rows[o.row];
        std::size_t c = 0;
        if (!opts.absorb_fixed_effects)
            X(i, c++) = 1.0;
        X(i, c++) = o.treated ? 1.0 : 0.0;
        X(i, c++) = o.post ? 1.0 : 0.0;
        X(i, c++) = (o.treated && o.post) ? 1.0 : 0.0;
        for (const auto& nme : opts.controls)
            X(i, c++) = cont_covariate(fy, nme);
        y[i] = outcome[o.row];
        cluster[i] = fy.firm;
    }

    TwfeResult res;
    if (opts.absorb_fixed_effects) {
        // iterative within-demeaning over year, country and industry groups
        std::array<std::vector<int>, 3> gid;
        std::array<std::map<int, int>, 3> lut;
        for (int d = 0; d < 3; ++d)
            gid[d].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const FirmYear& fy = panel.rows[sample[i].row];
            const int keys[3] = {fy.year, fy.country, fy.industry};
            for (int d = 0; d < 3; ++d) {
                auto it = lut[d].try_emplace(keys[d], static_cast<int>(lut[d].size())).first;
                gid[d][i] = it->second;
            }
        }
        Eigen::MatrixXd M(n, k + 1);
        M.leftCols(k) = X;
        M.col(k) = y;
        for (int iter = 0; iter < 200; ++iter) {
            double change = 0.0;
            for (int d = 0; d < 3; ++d) {
                const int ng = static_cast<int>(lut[d].size());
                Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(ng, k + 1);
                Eigen::VectorXd cnt = Eigen::VectorXd::Zero(ng);
                for (std::size_t i = 0; i < n; ++i) {
                    sums.row(gid[d][i]) += M.row(i);
                    cnt[gid[d][i]] += 1.0;
                }
                for (int gi = 0; gi < ng; ++gi)
                    sums.row(gi) /= cnt[gi];
                for (std::size_t i = 0; i < n; ++i)
                    M.row(i) -= sums.row(gid[d][i]);
                change = std::max(change, sums.cwiseAbs().maxCoeff());
            }
            if (change < opts.demean_tol)
                break;
        }
        // drop columns absorbed by the transform
        std::vector<int> keep_cols;
        std::vector<std::string> kept_names;
        for (std::size_t c = 0; c < k; ++c) {
            if (M.col(c).norm() > 1e-8 * std::sqrt(static_cast<double>(n))) {
                keep_cols.push_back(static_cast<int>(c));
                kept_names.push_back(names[c]);
            } else {
                res.dropped_terms.push_back(names[c]);
            }
        }
        if (std::find(kept_names.begin(), kept_names.end(), "TxPost") == kept_names.end())
            throw EstimationError("twfe_did: interaction absorbed by fixed effects");
        Eigen::MatrixXd Xd(n, keep_cols.size());
        for (std::size_t c = 0; c < keep_cols.size(); ++c)
            Xd.col(c) = M.col(keep_cols[c]);
        Eigen::VectorXd yd = M.col(k);
        OlsFit fit = ols(Xd, yd, true, &kept_names);
        Eigen::MatrixXd V = cluster_robust_cov(Xd, fit.residuals, cluster);
        res.coef = fit.coef;
        res.names = kept_names;
        for (std::size_t c = 0; c < kept_names.size(); ++c)
            if (kept_names[c] == "TxPost") {
                res.beta3 = fit.coef[c];
                res.se = std::sqrt(V(c, c));
            }
    } else {
        OlsFit fit = ols(X, y, true, &names);
        Eigen::MatrixXd V = cluster_robust_cov(X, fit.residuals, cluster);
        res.coef = fit.coef;
        res.names = names;
        for (std::size_t c = 0; c < names.size(); ++c)
            if (names[c] == "TxPost") {
                res.beta3 = fit.coef[c];
                res.se = std::sqrt(V(c, c));
            }
    }
    res.n_obs = static_cast<long long>(n);
    for (const auto& o : sample)
        (o.treated ? res.n_treated_obs : res.n_control_obs)++;
    return res;
}

} // namespace firmfx::psm

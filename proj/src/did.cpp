#include "firmfx/did.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/linreg.hpp"
#include "firmfx/rng.hpp"
#include "firmfx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>

namespace firmfx::did {

namespace {

double covariate_value(const FirmYear& fy, const std::string& name) {
    if (name == "size") return log_or_nan(fy.employees);
    if (name == "age") return std::isnan(fy.age) ? fy.age : std::log1p(fy.age);
    if (name == "capint") return log_or_nan(fy.capital_intensity);
    if (name == "tfp") return fy.tfp;
    throw ConfigError("unknown covariate: " + name);
}

struct CellSample {
    bool ok = false;
    std::string note;
    std::vector<int> firms;   // universe firm indices
    std::vector<char> treated;
    Eigen::VectorXd dy;
    Eigen::MatrixXd Xp, Xo;
    std::vector<std::string> xp_names, xo_names;
    int n_treated = 0, n_control = 0;
};

// covariate matrix for the cell: intercept, named columns, then industry
// dummies over ascending distinct codes among participants (smallest dropped)
Eigen::MatrixXd build_design(const std::vector<const FirmYear*>& base_rows,
                             const std::vector<std::string>& names,
                             const std::vector<int>& dummy_codes,
                             std::vector<std::string>& out_names) {
    std::size_t k = 1;
    bool want_industry = false;
    for (const auto& n : names) {
        if (n == "industry") { want_industry = true; continue; }
        ++k;
    }
    if (want_industry)
        k += dummy_codes.size();
    Eigen::MatrixXd X(base_rows.size(), k);
    out_names.clear();
    out_names.push_back("intercept");
    for (std::size_t i = 0; i < base_rows.size(); ++i) {
        const FirmYear& fb = *base_rows[i];
        std::size_t c = 0;
        X(i, c++) = 1.0;
        for (const auto& n : names) {
            if (n == "industry") continue;
            X(i, c++) = covariate_value(fb, n);
        }
        if (want_industry)
            for (int code : dummy_codes)
                X(i, c++) = (fb.industry == code) ? 1.0 : 0.0;
    }
    for (const auto& n : names)
        if (n != "industry")
            out_names.push_back(n);
    if (want_industry)
        for (int code : dummy_codes)
            out_names.push_back("industry_" + std::to_string(code));
    return X;
}

CellSample build_cell_sample(const Panel& panel, const std::vector<double>& outcome,
                             const CohortDesign& design, int g, int t) {
    CellSample s;
    const int base = g - 1 - design.anticipation;

    // covariate names needed for unit inclusion (union of both lists)
    std::vector<std::string> all_names = design.pscore_covariates;
    for (const auto& n : design.outcome_covariates)
        if (std::find(all_names.begin(), all_names.end(), n) == all_names.end())
            all_names.push_back(n);

    std::vector<const FirmYear*> base_rows;
    for (int f = 0; f < panel.n_firms(); ++f) {
        const int cohort = panel.cohort[f];
        const bool is_treated = (cohort == g);
        bool is_control = false;
        if (!is_treated) {
            if (cohort == kNeverTreated)
                is_control = true;
            else if (design.control_rule == ControlRule::NeverPlusNotYet &&
                     cohort > std::max(t, base) && cohort != g)
                is_control = true;
        }
        if (!is_treated && !is_control)
            continue;
        const int rt = panel.find(f, t);
        const int rb = panel.find(f, base);
        if (rt < 0 || rb < 0)
            continue;
        if (!std::isfinite(outcome[rt]) || !std::isfinite(outcome[rb]))
            continue;
        const FirmYear& fb = panel.rows[rb];
        bool ok = true;
        for (const auto& n : all_names) {
            if (n == "industry") continue;
            if (!std::isfinite(covariate_value(fb, n))) { ok = false; break; }
        }
        if (!ok)
            continue;
        s.firms.push_back(f);
        s.treated.push_back(is_treated ? 1 : 0);
        base_rows.push_back(&fb);
        (is_treated ? s.n_treated : s.n_control)++;
    }

    if (s.n_treated < 1 || s.n_control < 1) {
        s.note = "infeasible: n_treated=" + std::to_string(s.n_treated) +
                 " n_control=" + std::to_string(s.n_control);
        return s;
    }

    s.dy.resize(s.firms.size());
    for (std::size_t i = 0; i < s.firms.size(); ++i) {
        const int f = s.firms[i];
        s.dy[i] = outcome[panel.find(f, t)] - outcome[panel.find(f, base)];
    }

    std::set<int> codes;
    for (const FirmYear* fb : base_rows)
        codes.insert(fb->industry);
    std::vector<int> dummy_codes(codes.begin(), codes.end());
    if (!dummy_codes.empty())
        dummy_codes.erase(dummy_codes.begin());

    s.Xp = build_design(base_rows, design.pscore_covariates, dummy_codes, s.xp_names);
    s.Xo = build_design(base_rows, design.outcome_covariates, dummy_codes, s.xo_names);
    s.ok = true;
    return s;
}

} // namespace

PscoreFit fit_pscore(const Panel& panel, const CohortDesign& design, int g, int t) {
    // the outcome plays no role in the fit itself; use a vector of zeros so
    // inclusion is governed by observation at (t, base) and covariates alone
    std::vector<double> zeros(panel.rows.size(), 0.0);
    CellSample s = build_cell_sample(panel, zeros, design, g, t);
    if (!s.ok)
        throw EstimationError("fit_pscore: " + s.note);
    Eigen::VectorXd y(s.firms.size());
    for (std::size_t i = 0; i < s.firms.size(); ++i)
        y[i] = s.treated[i] ? 1.0 : 0.0;
    LogitFit lf = logit_mle(s.Xp, y, 1e-12, 100, &s.xp_names);
    PscoreFit out;
    out.coef = lf.coef;
    out.column_names = s.xp_names;
    out.firms = s.firms;
    out.prob = lf.prob;
    out.n_treated = s.n_treated;
    out.n_control = s.n_control;
    return out;
}

DidEngine::DidEngine(const Panel& panel, std::vector<double> outcome, CohortDesign design)
    : panel_(panel), outcome_(std::move(outcome)), design_(std::move(design)) {
    if (design_.cohorts.empty())
        throw ConfigError("no treatment cohorts in the design");
    std::sort(design_.cohorts.begin(), design_.cohorts.end());
    n_universe_ = panel_.n_firms();
    year_min_ = panel_.rows.empty() ? 0 : panel_.rows.front().year;
    year_max_ = year_min_;
    for (const auto& fy : panel_.rows) {
        year_min_ = std::min(year_min_, fy.year);
        year_max_ = std::max(year_max_, fy.year);
    }
}

AttGt DidEngine::compute_cell(int g, int t) const {
    AttGt cell;
    cell.g = g;
    cell.t = t;
    cell.influence = Eigen::VectorXd::Zero(n_universe_);
    const int base = g - 1 - design_.anticipation;
    if (base < year_min_) {
        cell.note = "infeasible: base period before first data year";
        return cell;
    }

    CellSample s;
    try {
        s = build_cell_sample(panel_, outcome_, design_, g, t);
        cell.n_treated = s.n_treated;
        cell.n_control = s.n_control;
        if (!s.ok) {
            cell.note = s.note;
            return cell;
        }

        const Eigen::Index n = static_cast<Eigen::Index>(s.firms.size());
        Eigen::VectorXd yv(n);
        for (Eigen::Index i = 0; i < n; ++i)
            yv[i] = s.treated[i] ? 1.0 : 0.0;
        LogitFit ps = logit_mle(s.Xp, yv, 1e-12, 100, &s.xp_names);
        cell.pscore_coef = ps.coef;

        // overlap: drop controls with p at or above the ceiling
        std::vector<char> keep(n, 1);
        int retained_controls = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!s.treated[i] && ps.prob[i] >= design_.overlap_ceiling) {
                keep[i] = 0;
                ++cell.n_dropped_overlap;
            } else if (!s.treated[i]) {
                ++retained_controls;
            }
        }
        cell.n_control = retained_controls;
        if (retained_controls < 1) {
            cell.note = "infeasible: no controls inside the overlap ceiling";
            return cell;
        }

        // compact to the retained sample
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i)
            if (keep[i]) idx.push_back(i);
        const Eigen::Index nu = static_cast<Eigen::Index>(idx.size());
        Eigen::VectorXd dy(nu), p(nu), D(nu);
        Eigen::MatrixXd Xp(nu, s.Xp.cols()), Xo(nu, s.Xo.cols());
        std::vector<int> firms(nu);
        for (Eigen::Index j = 0; j < nu; ++j) {
            const Eigen::Index i = idx[j];
            dy[j] = s.dy[i];
            p[j] = ps.prob[i];
            D[j] = s.treated[i] ? 1.0 : 0.0;
            Xp.row(j) = s.Xp.row(i);
            Xo.row(j) = s.Xo.row(i);
            firms[j] = s.firms[i];
        }

        // outcome regression on retained controls
        std::vector<Eigen::Index> cidx;
        for (Eigen::Index j = 0; j < nu; ++j)
            if (D[j] == 0.0) cidx.push_back(j);
        Eigen::MatrixXd Xc(cidx.size(), Xo.cols());
        Eigen::VectorXd yc(cidx.size());
        for (std::size_t j = 0; j < cidx.size(); ++j) {
            Xc.row(j) = Xo.row(cidx[j]);
            yc[j] = dy[cidx[j]];
        }
        OlsFit reg = ols(Xc, yc, true, &s.xo_names);
        cell.outcome_coef = reg.coef;
        Eigen::VectorXd m = Xo * reg.coef;

        // doubly robust estimate
        Eigen::VectorXd w_treat = D;
        Eigen::VectorXd w_cont(nu);
        for (Eigen::Index j = 0; j < nu; ++j)
            w_cont[j] = (D[j] == 0.0) ? p[j] / (1.0 - p[j]) : 0.0;
        const double mean_wT = w_treat.mean();
        const double mean_wC = w_cont.mean();
        Eigen::VectorXd att_treat = w_treat.cwiseProduct(dy - m);
        Eigen::VectorXd att_cont = w_cont.cwiseProduct(dy - m);
        const double eta_T = att_treat.mean() / mean_wT;
        const double eta_C = att_cont.mean() / mean_wC;
        cell.estimate = eta_T - eta_C;
        cell.feasible = true;

        // influence function with the estimation effects of the outcome
        // regression and the propensity score
        const double nn = static_cast<double>(nu);
        Eigen::MatrixXd Ainv;
        {
            Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Xo.cols(), Xo.cols());
            for (Eigen::Index j = 0; j < nu; ++j)
                if (D[j] == 0.0)
                    A += Xo.row(j).transpose() * Xo.row(j);
            A /= nn;
            Ainv = A.ldlt().solve(Eigen::MatrixXd::Identity(Xo.cols(), Xo.cols()));
        }
        // lin_rep_j = Ainv * Xo_j * (1-D_j)(dy_j - m_j), one row per unit
        Eigen::MatrixXd lin_rep(nu, Xo.cols());
        for (Eigen::Index j = 0; j < nu; ++j) {
            const double wr = (D[j] == 0.0) ? (dy[j] - m[j]) : 0.0;
            lin_rep.row(j) = (Ainv * Xo.row(j).transpose()).transpose() * wr;
        }

        Eigen::VectorXd M1 = Eigen::VectorXd::Zero(Xo.cols());
        Eigen::VectorXd M3 = Eigen::VectorXd::Zero(Xo.cols());
        Eigen::VectorXd M2 = Eigen::VectorXd::Zero(Xp.cols());
        for (Eigen::Index j = 0; j < nu; ++j) {
            M1 += w_treat[j] * Xo.row(j).transpose();
            M3 += w_cont[j] * Xo.row(j).transpose();
            M2 += w_cont[j] * (dy[j] - m[j] - eta_C) * Xp.row(j).transpose();
        }
        M1 /= nn;
        M2 /= nn;
        M3 /= nn;

        Eigen::MatrixXd Hinv;
        {
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(Xp.cols(), Xp.cols());
            for (Eigen::Index j = 0; j < nu; ++j)
                H += p[j] * (1.0 - p[j]) * Xp.row(j).transpose() * Xp.row(j);
            H /= nn;
            Hinv = H.ldlt().solve(Eigen::MatrixXd::Identity(Xp.cols(), Xp.cols()));
        }

        const double scale = static_cast<double>(n_universe_) / nn;
        for (Eigen::Index j = 0; j < nu; ++j) {
            const double inf_treat =
                (att_treat[j] - w_treat[j] * eta_T - lin_rep.row(j).dot(M1)) / mean_wT;
            const double score_ps_M2 =
                (D[j] - p[j]) * (Hinv * Xp.row(j).transpose()).dot(M2);
            const double inf_cont =
                (att_cont[j] - w_cont[j] * eta_C + score_ps_M2 - lin_rep.row(j).dot(M3)) /
                mean_wC;
            cell.influence[firms[j]] = scale * (inf_treat - inf_cont);
        }
    } catch (const EstimationError& e) {
        cell.feasible = false;
        cell.influence.setZero();
        cell.note = std::string("infeasible: ") + e.what();
    }
    return cell;
}

const std::vector<AttGt>& DidEngine::cells() {
    if (cells_done_)
        return cells_;
    std::vector<std::pair<int, int>> tasks;
    for (int g : design_.cohorts) {
        const int base = g - 1 - design_.anticipation;
        for (int t = year_min_; t <= year_max_; ++t) {
            if (t == base)
                continue; // the base-period difference is identically zero
            tasks.emplace_back(g, t);
        }
    }
    cells_.resize(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(tasks.size()); ++i)
        cells_[i] = compute_cell(tasks[i].first, tasks[i].second);
    cells_done_ = true;
    return cells_;
}

BootstrapResult DidEngine::multiplier_bootstrap(const Eigen::MatrixXd& influence, int reps,
                                                std::uint64_t seed) const {
    if (reps < 100)
        std::cerr << "warning: bootstrap with fewer than 100 replications\n";
    const Eigen::Index n = influence.rows();
    const Eigen::Index k = influence.cols();
    Eigen::MatrixXd draws(reps, k);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < reps; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b) + 1));
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = rng.rademacher();
        draws.row(b) = (influence.transpose() * v).transpose() / static_cast<double>(n);
    }

    BootstrapResult out;
    out.reps = reps;
    out.se.resize(k);
    // IQR-based scale, robust to heavy-tailed draws
    const double iqr_z = 1.3489795003921634;
    for (Eigen::Index j = 0; j < k; ++j) {
        std::vector<double> col(draws.col(j).data(), draws.col(j).data() + reps);
        const double iqr = quantile(col, 0.75) - quantile(col, 0.25);
        out.se[j] = iqr / iqr_z;
    }
    // simultaneous critical value from the sup-t statistic
    std::vector<double> sup(reps, 0.0);
    bool any = false;
    for (int b = 0; b < reps; ++b) {
        double m = 0.0;
        for (Eigen::Index j = 0; j < k; ++j)
            if (out.se[j] > 0.0) {
                m = std::max(m, std::abs(draws(b, j)) / out.se[j]);
                any = true;
            }
        sup[b] = m;
    }
    if (any)
        out.crit95 = quantile(sup, 0.95);
    return out;
}

Eigen::MatrixXd DidEngine::bootstrap_cov(const Eigen::MatrixXd& influence, int reps,
                                         std::uint64_t seed) const {
    const Eigen::Index n = influence.rows();
    const Eigen::Index k = influence.cols();
    Eigen::MatrixXd draws(reps, k);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < reps; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b) + 1));
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = rng.rademacher();
        draws.row(b) = (influence.transpose() * v).transpose() / static_cast<double>(n);
    }
    Eigen::RowVectorXd mu = draws.colwise().mean();
    Eigen::MatrixXd centered = draws.rowwise() - mu;
    return centered.transpose() * centered / static_cast<double>(reps - 1);
}

void DidEngine::attach_cell_ses(int reps, std::uint64_t seed) {
    cells();
    std::vector<int> feas;
    for (std::size_t i = 0; i < cells_.size(); ++i)
        if (cells_[i].feasible)
            feas.push_back(static_cast<int>(i));
    if (feas.empty())
        return;
    Eigen::MatrixXd infl(n_universe_, feas.size());
    for (std::size_t j = 0; j < feas.size(); ++j)
        infl.col(j) = cells_[feas[j]].influence;
    BootstrapResult bs = multiplier_bootstrap(infl, reps, seed);
    for (std::size_t j = 0; j < feas.size(); ++j)
        cells_[feas[j]].se = bs.se[j];
}

namespace {

// estimation effect of the cohort-share weights P(G=g)/sum on the aggregate
Eigen::MatrixXd weight_if(const Panel& panel, const std::vector<int>& cohorts,
                          const std::vector<double>& pg, int n_universe) {
    const double S = [&] {
        double s = 0.0;
        for (double v : pg) s += v;
        return s;
    }();
    Eigen::MatrixXd wif = Eigen::MatrixXd::Zero(n_universe, cohorts.size());
    for (int f = 0; f < n_universe; ++f) {
        double common = 0.0;
        for (std::size_t h = 0; h < cohorts.size(); ++h)
            common += (panel.cohort[f] == cohorts[h] ? 1.0 : 0.0) - pg[h];
        for (std::size_t k = 0; k < cohorts.size(); ++k) {
            const double ind = (panel.cohort[f] == cohorts[k] ? 1.0 : 0.0);
            wif(f, k) = (ind - pg[k]) / S - common * pg[k] / (S * S);
        }
    }
    return wif;
}

} // namespace

AggregatedEffect DidEngine::aggregate_by_group(int reps, std::uint64_t seed) {
    cells();
    AggregatedEffect out;
    out.kind = "by_group";
    std::vector<Eigen::VectorXd> ifs;
    std::vector<double> ests;
    for (int g : design_.cohorts) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_universe_);
        double est = 0.0;
        int count = 0;
        for (const auto& c : cells_)
            if (c.g == g && c.t >= g && c.feasible) {
                est += c.estimate;
                acc += c.influence;
                ++count;
            }
        if (count == 0)
            continue;
        out.index.push_back(g);
        ests.push_back(est / count);
        ifs.push_back(acc / static_cast<double>(count));
    }
    if (out.index.empty())
        throw EstimationError("aggregation: all cohort-time cells are infeasible");
    out.estimates = Eigen::Map<Eigen::VectorXd>(ests.data(), ests.size());
    out.influence.resize(n_universe_, ifs.size());
    for (std::size_t j = 0; j < ifs.size(); ++j)
        out.influence.col(j) = ifs[j];
    BootstrapResult bs = multiplier_bootstrap(out.influence, reps, seed);
    out.se = bs.se;
    out.crit_val = bs.crit95;
    out.ci_low = out.estimates - bs.crit95 * out.se;
    out.ci_high = out.estimates + bs.crit95 * out.se;
    return out;
}

AggregatedEffect DidEngine::aggregate_overall(int reps, std::uint64_t seed) {
    AggregatedEffect groups = aggregate_by_group(reps, seed);
    const std::vector<int>& cohorts = groups.index;

    std::vector<double> pg(cohorts.size(), 0.0);
    for (int f = 0; f < n_universe_; ++f)
        for (std::size_t k = 0; k < cohorts.size(); ++k)
            if (panel_.cohort[f] == cohorts[k])
                pg[k] += 1.0 / static_cast<double>(n_universe_);
    double S = 0.0;
    for (double v : pg) S += v;
    if (S <= 0.0)
        throw EstimationError("aggregation: no treated firms in the universe");

    AggregatedEffect out;
    out.kind = "overall";
    out.index = {0};
    double est = 0.0;
    Eigen::VectorXd infl = Eigen::VectorXd::Zero(n_universe_);
    for (std::size_t k = 0; k < cohorts.size(); ++k) {
        est += pg[k] / S * groups.estimates[k];
        infl += pg[k] / S * groups.influence.col(k);
    }
    Eigen::MatrixXd wif = weight_if(panel_, cohorts, pg, n_universe_);
    for (std::size_t k = 0; k < cohorts.size(); ++k)
        infl += groups.estimates[k] * wif.col(k);
    out.estimates = Eigen::VectorXd::Constant(1, est);
    out.influence.resize(n_universe_, 1);
    out.influence.col(0) = infl;
    BootstrapResult bs = multiplier_bootstrap(out.influence, reps, seed);
    out.se = bs.se;
    out.crit_val = bs.crit95;
    out.ci_low = out.estimates - bs.crit95 * out.se;
    out.ci_high = out.estimates + bs.crit95 * out.se;
    return out;
}

EventStudy DidEngine::event_study(int e_min, int e_max, int reps, std::uint64_t seed) {
    cells();
    if (e_min > -2 || e_max < 0)
        throw ConfigError("event-study window must cover at least one pre (e <= -2) "
                          "and one post (e >= 0) exposure");

    // universe cohort shares
    std::map<int, double> pg_all;
    for (int f = 0; f < n_universe_; ++f)
        if (panel_.cohort[f] != kNeverTreated)
            pg_all[panel_.cohort[f]] += 1.0 / static_cast<double>(n_universe_);

    EventStudy out;
    AggregatedEffect& agg = out.by_exposure;
    agg.kind = "by_exposure";
    std::vector<Eigen::VectorXd> ifs;
    std::vector<double> ests;
    const int skip_e = -1 - design_.anticipation; // identically-zero base bin

    for (int e = e_min; e <= e_max; ++e) {
        if (e == skip_e)
            continue;
        std::vector<const AttGt*> used;
        std::vector<int> used_cohorts;
        for (const auto& c : cells_)
            if (c.feasible && c.t - c.g == e) {
                used.push_back(&c);
                used_cohorts.push_back(c.g);
            }
        if (used.empty())
            continue; // empty exposure bin omitted
        std::vector<double> pg(used.size());
        double S = 0.0;
        for (std::size_t k = 0; k < used.size(); ++k) {
            pg[k] = pg_all.count(used_cohorts[k]) ? pg_all[used_cohorts[k]] : 0.0;
            S += pg[k];
        }
        double est = 0.0;
        Eigen::VectorXd infl = Eigen::VectorXd::Zero(n_universe_);
        for (std::size_t k = 0; k < used.size(); ++k) {
            est += pg[k] / S * used[k]->estimate;
            infl += pg[k] / S * used[k]->influence;
        }
        Eigen::MatrixXd wif = weight_if(panel_, used_cohorts, pg, n_universe_);
        for (std::size_t k = 0; k < used.size(); ++k)
            infl += used[k]->estimate * wif.col(k);
        agg.index.push_back(e);
        ests.push_back(est);
        ifs.push_back(infl);
    }
    if (agg.index.empty())
        throw EstimationError("event study: no feasible exposure bins in the window");

    agg.estimates = Eigen::Map<Eigen::VectorXd>(ests.data(), ests.size());
    agg.influence.resize(n_universe_, ifs.size());
    for (std::size_t j = 0; j < ifs.size(); ++j)
        agg.influence.col(j) = ifs[j];
    BootstrapResult bs = multiplier_bootstrap(agg.influence, reps, seed);
    agg.se = bs.se;
    agg.crit_val = bs.crit95;
    agg.ci_low = agg.estimates - bs.crit95 * agg.se;
    agg.ci_high = agg.estimates + bs.crit95 * agg.se;

    // pre / post simple averages
    std::vector<int> pre_cols, post_cols;
    for (std::size_t j = 0; j < agg.index.size(); ++j) {
        if (agg.index[j] < skip_e)
            pre_cols.push_back(static_cast<int>(j));
        else if (agg.index[j] >= 0)
            post_cols.push_back(static_cast<int>(j));
    }
    auto simple_avg = [&](const std::vector<int>& cols, double& avg, double& se_out) {
        if (cols.empty()) {
            avg = 0.0;
            se_out = 0.0;
            return;
        }
        Eigen::VectorXd infl = Eigen::VectorXd::Zero(n_universe_);
        avg = 0.0;
        for (int j : cols) {
            avg += agg.estimates[j];
            infl += agg.influence.col(j);
        }
        avg /= static_cast<double>(cols.size());
        infl /= static_cast<double>(cols.size());
        Eigen::MatrixXd one(n_universe_, 1);
        one.col(0) = infl;
        se_out = multiplier_bootstrap(one, reps, seed).se[0];
    };
    simple_avg(pre_cols, out.pre_avg, out.pre_avg_se);
    simple_avg(post_cols, out.post_avg, out.post_avg_se);

    // joint Wald test that all pre-treatment coefficients are zero, using the
    // bootstrap covariance; zero-variance coordinates are dropped
    if (!pre_cols.empty()) {
        Eigen::MatrixXd pre_infl(n_universe_, pre_cols.size());
        Eigen::VectorXd theta(pre_cols.size());
        for (std::size_t j = 0; j < pre_cols.size(); ++j) {
            pre_infl.col(j) = agg.influence.col(pre_cols[j]);
            theta[j] = agg.estimates[pre_cols[j]];
        }
        Eigen::MatrixXd V = bootstrap_cov(pre_infl, reps, seed);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
        const double tol = 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
        double stat = 0.0;
        int df = 0;
        for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
            if (es.eigenvalues()[j] > tol) {
                const double proj = es.eigenvectors().col(j).dot(theta);
                stat += proj * proj / es.eigenvalues()[j];
                ++df;
            }
        }
        out.pretrend_chi2 = stat;
        out.pretrend_df = df;
        out.pretrend_pvalue = df > 0 ? chi2_sf(stat, df) : 1.0;
    }
    return out;
}

std::vector<double> make_outcome(const Panel& panel, const std::string& name,
                                 long long* n_undefined) {
    std::vector<double> v(panel.rows.size());
    long long undef = 0;
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const FirmYear& fy = panel.rows[i];
        double x;
        if (name == "markup") x = log_or_nan(fy.markup);
        else if (name == "market_share") x = log_or_nan(fy.market_share);
        else if (name == "sales") x = log_or_nan(fy.sales);
        else if (name == "variable_cost") x = log_or_nan(fy.variable_cost);
        else if (name == "variable_cost_ratio") x = log_or_nan(fy.variable_cost_ratio);
        else if (name == "tfp") x = fy.tfp; // already log scale
        else if (name == "roi") x = log_or_nan(fy.roi);
        else if (name == "capital_intensity") x = log_or_nan(fy.capital_intensity);
        else if (name == "liquidity") x = log_or_nan(fy.liquidity);
        else if (name == "solvency") x = log_or_nan(fy.solvency);
        else throw ConfigError("unknown outcome: " + name);
        if (!std::isfinite(x))
            ++undef;
        v[i] = x;
    }
    if (n_undefined)
        *n_undefined = undef;
    return v;
}

const std::vector<std::string>& dashboard_outcomes() {
    static const std::vector<std::string> names = {
        "markup",  "market_share", "sales",             "variable_cost",
        "variable_cost_ratio", "tfp", "roi", "capital_intensity",
        "liquidity", "solvency"};
    return names;
}

} // namespace firmfx::did

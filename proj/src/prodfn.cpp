#include "firmfx/prodfn.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/linreg.hpp"
#include "firmfx/rng.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <set>

namespace firmfx::prodfn {

namespace {

struct IndustrySample {
    std::vector<int> row_index; // into panel.rows
    std::vector<int> firm;
    std::vector<int> year;
    Eigen::VectorXd y, l, k, m;
    double mean_mat_share = 0.0;
    double mean_lab_share = 0.0;
};

IndustrySample collect(const Panel& panel, int industry) {
    IndustrySample s;
    std::vector<double> y, l, k, m;
    double mat_share = 0.0, lab_share = 0.0;
    for (std::size_t r = 0; r < panel.rows.size(); ++r) {
        const FirmYear& fy = panel.rows[r];
        if (fy.industry != industry)
            continue;
        const double yy = log_or_nan(fy.sales);
        const double ll = log_or_nan(fy.employees);
        const double kk = log_or_nan(fy.fixed_assets);
        const double mm = log_or_nan(fy.materials);
        if (!std::isfinite(yy) || !std::isfinite(ll) || !std::isfinite(kk) ||
            !std::isfinite(mm))
            continue;
        s.row_index.push_back(static_cast<int>(r));
        s.firm.push_back(fy.firm);
        s.year.push_back(fy.year);
        y.push_back(yy);
        l.push_back(ll);
        k.push_back(kk);
        m.push_back(mm);
        mat_share += fy.materials / fy.sales;
        lab_share += fy.labor_cost / fy.sales;
    }
    s.y = Eigen::Map<Eigen::VectorXd>(y.data(), y.size());
    s.l = Eigen::Map<Eigen::VectorXd>(l.data(), l.size());
    s.k = Eigen::Map<Eigen::VectorXd>(k.data(), k.size());
    s.m = Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
    if (!y.empty()) {
        s.mean_mat_share = mat_share / static_cast<double>(y.size());
        s.mean_lab_share = lab_share / static_cast<double>(y.size());
    }
    return s;
}

int n_terms(const TranslogSpec& spec) { return spec.cobb_douglas ? 3 : 9; }

template <typename Row>
void fill_terms(Row&& row, double l, double k, double m, bool cobb_douglas) {
    row[0] = l;
    row[1] = k;
    row[2] = m;
    if (!cobb_douglas) {
        row[3] = l * l;
        row[4] = k * k;
        row[5] = m * m;
        row[6] = l * k;
        row[7] = l * m;
        row[8] = k * m;
    }
}

Eigen::MatrixXd term_matrix(const IndustrySample& s, const TranslogSpec& spec) {
    Eigen::MatrixXd T(s.y.size(), n_terms(spec));
    for (Eigen::Index i = 0; i < s.y.size(); ++i)
        fill_terms(T.row(i), s.l[i], s.k[i], s.m[i], spec.cobb_douglas);
    return T;
}

std::vector<int> year_levels(const IndustrySample& s) {
    std::set<int> ys(s.year.begin(), s.year.end());
    return {ys.begin(), ys.end()};
}

// [T | intercept | year dummies (drop first)]
Eigen::MatrixXd with_intercept_dummies(const Eigen::MatrixXd& T, const IndustrySample& s,
                                       bool time_dummies,
                                       std::vector<std::string>& names) {
    const std::vector<int> years = year_levels(s);
    const int extra = 1 + (time_dummies ? static_cast<int>(years.size()) - 1 : 0);
    Eigen::MatrixXd X(T.rows(), T.cols() + extra);
    X.leftCols(T.cols()) = T;
    X.col(T.cols()).setOnes();
    names.clear();
    for (int j = 0; j < T.cols(); ++j)
        names.push_back(term_names()[j]);
    names.push_back("intercept");
    if (time_dummies) {
        for (std::size_t yi = 1; yi < years.size(); ++yi) {
            const int c = T.cols() + 1 + static_cast<int>(yi) - 1;
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                X(i, c) = (s.year[i] == years[yi]) ? 1.0 : 0.0;
            names.push_back("year_" + std::to_string(years[yi]));
        }
    }
    return X;
}

void scatter(const IndustrySample& s, const Eigen::VectorXd& v, std::vector<double>& out,
             std::size_t n_rows) {
    out.assign(n_rows, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[s.row_index[i]] = v[i];
}

std::map<std::string, double> beta_map(const Eigen::VectorXd& b, bool cobb_douglas) {
    std::map<std::string, double> out;
    for (const auto& t : term_names())
        out[t] = 0.0;
    const int kt = cobb_douglas ? 3 : 9;
    for (int j = 0; j < kt; ++j)
        out[term_names()[j]] = b[j];
    return out;
}

// ---------------------------------------------------------------------
// Nelder-Mead simplex minimizer (standard reflection/expansion/contraction)
struct NmResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    bool converged = false;
};

NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                     const Eigen::VectorXd& start, double tol, int max_iter) {
    const int d = static_cast<int>(start.size());
    std::vector<Eigen::VectorXd> x(d + 1, start);
    std::vector<double> f(d + 1);
    for (int i = 0; i < d; ++i)
        x[i + 1][i] += 0.1;
    for (int i = 0; i <= d; ++i)
        f[i] = fn(x[i]);

    NmResult res;
    for (int it = 0; it < max_iter; ++it) {
        // order
        std::vector<int> ord(d + 1);
        for (int i = 0; i <= d; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](int a, int b) { return f[a] < f[b]; });
        std::vector<Eigen::VectorXd> xs(d + 1);
        std::vector<double> fs(d + 1);
        for (int i = 0; i <= d; ++i) {
            xs[i] = x[ord[i]];
            fs[i] = f[ord[i]];
        }
        x = xs;
        f = fs;
        if (std::abs(f[d] - f[0]) < tol * (1.0 + std::abs(f[0]))) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < d; ++i)
            centroid += x[i];
        centroid /= d;

        Eigen::VectorXd xr = centroid + (centroid - x[d]);
        const double fr = fn(xr);
        if (fr < f[0]) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - x[d]);
            const double fe = fn(xe);
            if (fe < fr) { x[d] = xe; f[d] = fe; }
            else { x[d] = xr; f[d] = fr; }
        } else if (fr < f[d - 1]) {
            x[d] = xr;
            f[d] = fr;
        } else {
            Eigen::VectorXd xc = centroid + 0.5 * (x[d] - centroid);
            const double fc = fn(xc);
            if (fc < f[d]) {
                x[d] = xc;
                f[d] = fc;
            } else {
                for (int i = 1; i <= d; ++i) {
                    x[i] = x[0] + 0.5 * (x[i] - x[0]);
                    f[i] = fn(x[i]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= d; ++i)
        if (f[i] < f[best]) best = i;
    res.x = x[best];
    res.f = f[best];
    return res;
}

} // namespace

double output_elasticity_m(const std::map<std::string, double>& beta, double l, double k,
                           double m) {
    return beta.at("m") + 2.0 * beta.at("m2") * m + beta.at("lm") * l + beta.at("km") * k;
}

double output_elasticity_l(const std::map<std::string, double>& beta, double l, double k,
                           double m) {
    return beta.at("l") + 2.0 * beta.at("l2") * l + beta.at("lm") * m + beta.at("lk") * k;
}

double ElasticitySet::theta_m_at(double l, double k, double m) const {
    return output_elasticity_m(beta, l, k, m);
}
double ElasticitySet::theta_l_at(double l, double k, double m) const {
    return output_elasticity_l(beta, l, k, m);
}

ElasticitySet ols_translog(const Panel& panel, int industry, const TranslogSpec& spec,
                           int min_obs) {
    IndustrySample s = collect(panel, industry);
    if (static_cast<int>(s.y.size()) < min_obs)
        throw DataError("industry " + std::to_string(industry) + ": " +
                        std::to_string(s.y.size()) + " observations, need " +
                        std::to_string(min_obs));
    Eigen::MatrixXd T = term_matrix(s, spec);
    std::vector<std::string> names;
    Eigen::MatrixXd X = with_intercept_dummies(T, s, spec.include_time_dummies, names);
    OlsFit fit = ols(X, s.y, true, &names);

    ElasticitySet es;
    es.industry = industry;
    es.method = "ols";
    es.n_obs = static_cast<int>(s.y.size());
    es.beta = beta_map(fit.coef.head(n_terms(spec)), spec.cobb_douglas);

    Eigen::VectorXd theta_m(s.y.size()), theta_l(s.y.size()), omega(s.y.size());
    Eigen::VectorXd fterm = T * fit.coef.head(n_terms(spec));
    for (Eigen::Index i = 0; i < s.y.size(); ++i) {
        theta_m[i] = output_elasticity_m(es.beta, s.l[i], s.k[i], s.m[i]);
        theta_l[i] = output_elasticity_l(es.beta, s.l[i], s.k[i], s.m[i]);
        omega[i] = fit.fitted[i] - fterm[i];
    }
    scatter(s, theta_m, es.theta_m, panel.rows.size());
    scatter(s, theta_l, es.theta_l, panel.rows.size());
    scatter(s, fit.fitted, es.phi_hat, panel.rows.size());
    scatter(s, fit.residuals, es.epsilon_hat, panel.rows.size());
    scatter(s, omega, es.omega_hat, panel.rows.size());
    return es;
}

ElasticitySet acf_estimate(const Panel& panel, int industry, const TranslogSpec& spec,
                           const AcfConfig& config, int min_obs) {
    if (config.first_stage_degree < 2 || config.law_of_motion_degree < 1 ||
        config.tolerance <= 0.0)
        throw ConfigError("invalid proxy-estimator configuration");
    IndustrySample s = collect(panel, industry);
    const Eigen::Index n = s.y.size();
    if (static_cast<int>(n) < min_obs)
        throw DataError("industry " + std::to_string(industry) + ": " +
                        std::to_string(n) + " observations, need " +
                        std::to_string(min_obs));

    // ---- stage 1: polynomial in (l,k,m) of the configured degree + years;
    // with first_stage_lagged_m the conditioning set also carries lagged
    // materials terms (the z_it slot), restricted to observations with a lag
    const int deg = config.first_stage_degree;
    std::vector<std::array<int, 3>> powers;
    for (int a = 0; a <= deg; ++a)
        for (int b = 0; b + a <= deg; ++b)
            for (int c = 0; c + b + a <= deg; ++c)
                if (a + b + c >= 1)
                    powers.push_back({a, b, c});
    const std::vector<int> years = year_levels(s);

    std::map<std::pair<int, int>, int> obs_pos; // (firm, year) -> sample index
    for (Eigen::Index i = 0; i < n; ++i)
        obs_pos[{s.firm[i], s.year[i]}] = static_cast<int>(i);
    std::vector<int> lag_of(n, -1);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = obs_pos.find({s.firm[i], s.year[i] - 1});
        if (it != obs_pos.end())
            lag_of[i] = it->second;
    }

    std::vector<int> s1; // stage-1 sample indices
    for (Eigen::Index i = 0; i < n; ++i)
        if (!config.first_stage_lagged_m || lag_of[i] >= 0)
            s1.push_back(static_cast<int>(i));
    const Eigen::Index n1 = static_cast<Eigen::Index>(s1.size());
    if (n1 < static_cast<Eigen::Index>(min_obs))
        throw DataError("industry " + std::to_string(industry) +
                        ": first-stage sample too small (" + std::to_string(n1) + ")");

    const int kpoly = static_cast<int>(powers.size());
    const int kdum = static_cast<int>(years.size()) - 1;
    const int klagm = config.first_stage_lagged_m ? 6 : 0;
    Eigen::MatrixXd X1(n1, kpoly + klagm + 1 + kdum);
    Eigen::VectorXd y1(n1);
    for (Eigen::Index r = 0; r < n1; ++r) {
        const int i = s1[r];
        y1[r] = s.y[i];
        for (int j = 0; j < kpoly; ++j)
            X1(r, j) = std::pow(s.l[i], powers[j][0]) * std::pow(s.k[i], powers[j][1]) *
                       std::pow(s.m[i], powers[j][2]);
        if (klagm > 0) {
            const double ml = s.m[lag_of[i]];
            X1(r, kpoly + 0) = ml;
            X1(r, kpoly + 1) = ml * ml;
            X1(r, kpoly + 2) = ml * ml * ml;
            X1(r, kpoly + 3) = ml * s.l[i];
            X1(r, kpoly + 4) = ml * s.k[i];
            X1(r, kpoly + 5) = ml * s.m[i];
        }
        X1(r, kpoly + klagm) = 1.0;
        for (int yj = 0; yj < kdum; ++yj)
            X1(r, kpoly + klagm + 1 + yj) = (s.year[i] == years[yj + 1]) ? 1.0 : 0.0;
    }
    OlsFit first = ols(X1, y1, false);
    const double nanv = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd phi = Eigen::VectorXd::Constant(n, nanv);
    Eigen::VectorXd eps = Eigen::VectorXd::Constant(n, nanv);
    for (Eigen::Index r = 0; r < n1; ++r) {
        phi[s1[r]] = first.fitted[r];
        eps[s1[r]] = first.residuals[r];
    }

    // ---- stage 2 sample: observations whose lag also carries a first-stage
    // fit (with lagged-m conditioning this needs two consecutive lags)
    std::vector<int> cur, lag;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int il = lag_of[i];
        if (il >= 0 && std::isfinite(phi[i]) && std::isfinite(phi[il])) {
            cur.push_back(static_cast<int>(i));
            lag.push_back(il);
        }
    }
    const Eigen::Index n2 = static_cast<Eigen::Index>(cur.size());
    if (n2 < static_cast<Eigen::Index>(std::max(min_obs / 2, n_terms(spec) + 2)))
        throw DataError("industry " + std::to_string(industry) +
                        ": not enough consecutive firm-years for the lagged "
                        "law of motion (" + std::to_string(n2) + ")");

    const int kb = n_terms(spec);
    Eigen::MatrixXd Tcur(n2, kb), Tlag(n2, kb);
    Eigen::VectorXd phi_cur(n2), phi_lag(n2);
    for (Eigen::Index j = 0; j < n2; ++j) {
        const int i = cur[j], il = lag[j];
        fill_terms(Tcur.row(j), s.l[i], s.k[i], s.m[i], spec.cobb_douglas);
        fill_terms(Tlag.row(j), s.l[il], s.k[il], s.m[il], spec.cobb_douglas);
        phi_cur[j] = phi[i];
        phi_lag[j] = phi[il];
    }

    // instruments: current k and l, lagged m, squares, pairwise interactions
    const int kz = 10;
    Eigen::MatrixXd Z(n2, kz);
    for (Eigen::Index j = 0; j < n2; ++j) {
        const int i = cur[j], il = lag[j];
        const double kt = s.k[i], lt = s.l[i], ml = s.m[il];
        Z.row(j) << 1.0, kt, lt, ml, kt * kt, lt * lt, ml * ml, kt * lt, kt * ml, lt * ml;
    }
    Eigen::MatrixXd W =
        (Z.transpose() * Z / static_cast<double>(n2))
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(kz, kz));

    // share-moment block: corrected log share of materials against the
    // model-implied log elasticity, weighted by demeaned inputs
    std::vector<int> sh_idx;
    Eigen::VectorXd log_share;
    Eigen::MatrixXd Xi_sh;
    Eigen::MatrixXd Wsh;
    if (config.share_moments) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::isfinite(phi[i]))
                sh_idx.push_back(static_cast<int>(i));
        const Eigen::Index nsh = static_cast<Eigen::Index>(sh_idx.size());
        log_share.resize(nsh);
        Xi_sh.resize(nsh, 3);
        for (Eigen::Index r = 0; r < nsh; ++r) {
            const int i = sh_idx[r];
            log_share[r] = s.m[i] - phi[i];
            Xi_sh(r, 0) = s.l[i];
            Xi_sh(r, 1) = s.k[i];
            Xi_sh(r, 2) = s.m[i];
        }
        Xi_sh.rowwise() -= Xi_sh.colwise().mean();
        Wsh = (Xi_sh.transpose() * Xi_sh / static_cast<double>(nsh))
                  .ldlt()
                  .solve(Eigen::MatrixXd::Identity(3, 3));
    }

    // law of motion g_t: polynomial in lagged productivity with year
    // intercepts (the t subscript), so common year shocks land in g_t rather
    // than in the innovation
    const int gdeg = config.law_of_motion_degree;
    std::vector<int> s2_years;
    {
        std::set<int> ys;
        for (Eigen::Index j = 0; j < n2; ++j)
            ys.insert(s.year[cur[j]]);
        s2_years.assign(ys.begin(), ys.end());
    }
    const int gdum = static_cast<int>(s2_years.size()) - 1;
    auto objective_full = [&](const Eigen::VectorXd& b, Eigen::VectorXd* gbar_out) {
        Eigen::VectorXd om_cur = phi_cur - Tcur * b;
        Eigen::VectorXd om_lag = phi_lag - Tlag * b;
        Eigen::MatrixXd G(n2, gdeg + 1 + gdum);
        for (Eigen::Index j = 0; j < n2; ++j) {
            double p = 1.0;
            for (int d = 0; d <= gdeg; ++d) {
                G(j, d) = p;
                p *= om_lag[j];
            }
            for (int yj = 0; yj < gdum; ++yj)
                G(j, gdeg + 1 + yj) = (s.year[cur[j]] == s2_years[yj + 1]) ? 1.0 : 0.0;
        }
        Eigen::VectorXd gamma =
            (G.transpose() * G).ldlt().solve(G.transpose() * om_cur);
        Eigen::VectorXd xi = om_cur - G * gamma;
        Eigen::VectorXd gbar = Z.transpose() * xi / static_cast<double>(n2);

        double share_part = 0.0;
        Eigen::VectorXd gsh = Eigen::VectorXd::Zero(config.share_moments ? 3 : 0);
        if (config.share_moments) {
            const Eigen::Index nsh = log_share.size();
            Eigen::VectorXd r(nsh);
            bool infeasible = false;
            for (Eigen::Index j = 0; j < nsh; ++j) {
                const int i = sh_idx[j];
                const double th = spec.cobb_douglas
                                      ? b[2]
                                      : b[2] + 2.0 * b[5] * s.m[i] + b[7] * s.l[i] +
                                            b[8] * s.k[i];
                if (th < 1e-6) { infeasible = true; break; } // elasticity must stay positive
                r[j] = log_share[j] - std::log(th);
            }
            if (infeasible) {
                if (gbar_out) {
                    gbar_out->resize(gbar.size() + 3);
                    *gbar_out << gbar, Eigen::Vector3d::Constant(1e3);
                }
                return 1e12;
            }
            r.array() -= r.mean(); // markup level is not a target
            gsh = Xi_sh.transpose() * r / static_cast<double>(nsh);
            share_part = gsh.dot(Wsh * gsh);
        }
        if (gbar_out) {
            if (config.share_moments) {
                gbar_out->resize(gbar.size() + gsh.size());
                *gbar_out << gbar, gsh;
            } else {
                *gbar_out = gbar;
            }
        }
        return gbar.dot(W * gbar) + share_part;
    };
    auto objective = [&](const Eigen::VectorXd& b) { return objective_full(b, nullptr); };

    // weight over the stacked moment vector (for the Gauss-Newton polish)
    const int kz_total = kz + (config.share_moments ? 3 : 0);
    Eigen::MatrixXd Wfull = Eigen::MatrixXd::Zero(kz_total, kz_total);
    Wfull.topLeftCorner(kz, kz) = W;
    if (config.share_moments)
        Wfull.bottomRightCorner(3, 3) = Wsh;

    // OLS starting values
    TranslogSpec ols_spec = spec;
    ElasticitySet start_set = ols_translog(panel, industry, ols_spec, min_obs);
    Eigen::VectorXd b0(kb);
    for (int j = 0; j < kb; ++j)
        b0[j] = start_set.beta.at(term_names()[j]);

    const double f0 = objective(b0);

    // base starts: OLS, cost shares (the classic production-function prior,
    // which escapes the degenerate revenue==materials basin), and an
    // optional caller-provided point
    std::vector<Eigen::VectorXd> base_starts = {b0};
    {
        auto clip = [](double v, double lo, double hi) {
            return std::min(hi, std::max(lo, v));
        };
        Eigen::VectorXd bs = Eigen::VectorXd::Zero(kb);
        const double ms = clip(s.mean_mat_share, 0.05, 0.90);
        const double ls = clip(s.mean_lab_share, 0.05, 0.90);
        bs[0] = ls;
        bs[1] = clip(1.0 - ms - ls, 0.03, 0.90);
        bs[2] = ms;
        base_starts.push_back(bs);
    }
    if (static_cast<int>(config.start_override.size()) == kb) {
        Eigen::VectorXd ov(kb);
        for (int j = 0; j < kb; ++j)
            ov[j] = config.start_override[j];
        base_starts.push_back(ov);
    }

    Eigen::VectorXd best = b0;
    double fbest = f0;
    bool any_converged = false;
    Rng rng(config.seed);
    const int total_runs = static_cast<int>(base_starts.size()) + config.restarts;
    for (int run = 0; run < total_runs; ++run) {
        Eigen::VectorXd startb = base_starts[run % base_starts.size()];
        if (run >= static_cast<int>(base_starts.size()))
            for (int j = 0; j < kb; ++j)
                startb[j] += 0.15 * (1.0 + std::abs(startb[j])) * rng.normal();
        NmResult r = nelder_mead(objective, startb, config.tolerance,
                                 config.max_iterations);
        any_converged = any_converged || r.converged;
        // per-run polish so each basin is resolved before comparison
        Eigen::VectorXd gbar;
        double f = objective_full(r.x, &gbar);
        for (int it = 0; it < 40; ++it) {
            Eigen::MatrixXd J(kz, kb);
            for (int j = 0; j < kb; ++j) {
                const double h = 1e-6 * std::max(1.0, std::abs(r.x[j]));
                Eigen::VectorXd bp = r.x, bm2 = r.x;
                bp[j] += h;
                bm2[j] -= h;
                Eigen::VectorXd gp, gm;
                objective_full(bp, &gp);
                objective_full(bm2, &gm);
                J.col(j) = (gp - gm) / (2.0 * h);
            }
            Eigen::VectorXd delta =
                (J.transpose() * W * J).ldlt().solve(-J.transpose() * W * gbar);
            if (!delta.allFinite())
                break;
            double step = 1.0;
            bool improved = false;
            for (int hlv = 0; hlv < 30; ++hlv) {
                Eigen::VectorXd cand = r.x + step * delta;
                Eigen::VectorXd gc;
                const double fc = objective_full(cand, &gc);
                if (fc < f) {
                    r.x = cand;
                    f = fc;
                    gbar = gc;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!improved || f < 1e-30)
                break;
        }
        if (f < fbest) {
            fbest = f;
            best = r.x;
        }
#ifdef FIRMFX_ACF_TRACE
        Eigen::VectorXd gs;
        std::cerr << "acf run " << run << ": start=(" << startb.transpose()
                  << ") f0=" << objective_full(startb, &gs) << " gbar=(" << gs.transpose()
                  << ")\n         -> x=(" << r.x.transpose() << ") f=" << f << "\n";
#endif
    }
    if (!any_converged)
        throw EstimationError("proxy estimator: simplex search did not converge after " +
                              std::to_string(config.restarts) +
                              " restarts; best objective " + std::to_string(fbest));

    ElasticitySet es;
    es.industry = industry;
    es.method = "acf";
    es.n_obs = static_cast<int>(n);
    es.converged = true;
    es.objective = fbest;
    es.objective_at_start = f0;
    es.beta = beta_map(best, spec.cobb_douglas);

    Eigen::VectorXd theta_m(n), theta_l(n), omega(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        theta_m[i] = output_elasticity_m(es.beta, s.l[i], s.k[i], s.m[i]);
        theta_l[i] = output_elasticity_l(es.beta, s.l[i], s.k[i], s.m[i]);
        Eigen::RowVectorXd term(kb);
        fill_terms(term, s.l[i], s.k[i], s.m[i], spec.cobb_douglas);
        omega[i] = phi[i] - term.dot(best);
    }
    scatter(s, theta_m, es.theta_m, panel.rows.size());
    scatter(s, theta_l, es.theta_l, panel.rows.size());
    scatter(s, phi, es.phi_hat, panel.rows.size());
    scatter(s, eps, es.epsilon_hat, panel.rows.size());
    scatter(s, omega, es.omega_hat, panel.rows.size());
    return es;
}

Bundle estimate_all(const Panel& panel, const TranslogSpec& spec, bool use_acf,
                    const AcfConfig& config, int min_obs) {
    std::set<int> codes;
    for (const auto& fy : panel.rows)
        codes.insert(fy.industry);
    std::vector<int> industries(codes.begin(), codes.end());

    Bundle b;
    const double nanv = std::numeric_limits<double>::quiet_NaN();
    b.theta_m.assign(panel.rows.size(), nanv);
    b.theta_l.assign(panel.rows.size(), nanv);
    b.phi_hat.assign(panel.rows.size(), nanv);
    b.epsilon_hat.assign(panel.rows.size(), nanv);
    b.omega_hat.assign(panel.rows.size(), nanv);

    std::vector<ElasticitySet> sets(industries.size());
    std::vector<std::string> errors(industries.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(industries.size()); ++i) {
        try {
            sets[i] = use_acf ? acf_estimate(panel, industries[i], spec, config, min_obs)
                              : ols_translog(panel, industries[i], spec, min_obs);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < industries.size(); ++i) {
        if (!errors[i].empty()) {
            std::cerr << "warning: industry " << industries[i] << " skipped: " << errors[i]
                      << "\n";
            continue;
        }
        for (std::size_t r = 0; r < panel.rows.size(); ++r) {
            if (!std::isnan(sets[i].theta_m[r])) {
                b.theta_m[r] = sets[i].theta_m[r];
                b.theta_l[r] = sets[i].theta_l[r];
                b.phi_hat[r] = sets[i].phi_hat[r];
                b.epsilon_hat[r] = sets[i].epsilon_hat[r];
                b.omega_hat[r] = sets[i].omega_hat[r];
            }
        }
        b.industries.push_back(std::move(sets[i]));
    }
    return b;
}

} // namespace firmfx::prodfn

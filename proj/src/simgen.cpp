#include "firmfx/simgen.hpp"
#include "firmfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace firmfx::sim {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// materials choice under the FOC: m solves
//   m = log(theta_m(l,k,m) / mu) + f(l,k,m) + omega
double solve_m_foc(const Technology& tech, double l, double k, double omega, double mu) {
    const double denom = 1.0 - tech.bm;
    if (denom <= 0.05)
        throw ConfigError("materials coefficient too close to 1 for the FOC fixed point");
    double m = (std::log(tech.bm / mu) + tech.b0 + tech.bl * l + tech.bk * k + omega) / denom;
    if (tech.is_cobb_douglas())
        return m;
    for (int it = 0; it < 80; ++it) {
        double th = tech.theta_m(l, k, m);
        if (th < 1e-8)
            throw ConfigError("translog technology yields nonpositive materials elasticity");
        const double F = tech.f(l, k, m) + omega + std::log(th / mu) - m;
        const double Fp = th + 2.0 * tech.bmm / th - 1.0;
        const double step = F / Fp;
        m -= step;
        if (std::abs(step) < 1e-13)
            return m;
    }
    // bisection fallback on an expanding bracket
    auto F = [&](double mm) {
        double th = std::max(tech.theta_m(l, k, mm), 1e-8);
        return tech.f(l, k, mm) + omega + std::log(th / mu) - mm;
    };
    double lo = m - 5.0, hi = m + 5.0;
    for (int e = 0; e < 20 && F(lo) * F(hi) > 0.0; ++e) {
        lo -= 5.0;
        hi += 5.0;
    }
    if (F(lo) * F(hi) > 0.0)
        throw ConfigError("materials FOC has no solution for the given technology");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F(lo) * F(mid) <= 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

void validate(const SimConfig& c) {
    std::ostringstream why;
    if (c.n_firms_per_industry < 1) why << "n_firms_per_industry < 1; ";
    if (c.industry_codes.empty()) why << "no industries; ";
    if (c.technologies.size() != c.industry_codes.size())
        why << "technologies/industry_codes size mismatch; ";
    if (c.year_end <= c.year_start) why << "year_end <= year_start; ";
    if (c.n_countries < 1) why << "n_countries < 1; ";
    if (!(c.rho >= 0.0 && c.rho < 1.0)) why << "rho outside [0,1); ";
    if (c.sigma_xi < 0.0 || c.sigma_eps < 0.0) why << "negative noise sd; ";
    if (c.cohort_years.size() != c.cohort_shares.size())
        why << "cohort_years/cohort_shares size mismatch; ";
    double share_sum = 0.0;
    for (std::size_t i = 0; i < c.cohort_years.size(); ++i) {
        const int g = c.cohort_years[i];
        if (g <= c.year_start || g > c.year_end)
            why << "cohort year " << g << " outside (year_start, year_end]; ";
        if (i > 0 && c.cohort_years[i] <= c.cohort_years[i - 1])
            why << "cohort years not strictly increasing; ";
        const double s = c.cohort_shares[i];
        if (!(s > 0.0 && s < 1.0)) why << "cohort share outside (0,1); ";
        share_sum += s;
    }
    if (share_sum >= 0.95)
        why << "cohort shares leave (almost) no control group; ";
    const std::string msg = why.str();
    if (!msg.empty())
        throw ConfigError("infeasible sim config: " + msg);
}

} // namespace

SimOutput generate(const SimConfig& cfg) {
    validate(cfg);

    const int n_years = cfg.year_end - cfg.year_start + 1;
    const int n_ind = static_cast<int>(cfg.industry_codes.size());
    const int n_firms = n_ind * cfg.n_firms_per_industry;
    const int n_cohorts = static_cast<int>(cfg.cohort_years.size());

    SimOutput out;
    Panel& panel = out.panel;
    SimTruth& truth = out.truth;
    truth.technologies = cfg.technologies;
    truth.industry_codes = cfg.industry_codes;
    truth.effect = cfg.effect;

    // panel-level draws: year-level markup shocks
    Rng top(derive_seed(cfg.seed, 0xA11CE));
    std::vector<double> mu_year_shock(n_years, 0.0);
    for (int t = 0; t < n_years; ++t)
        mu_year_shock[t] = cfg.mu_year_sigma > 0.0 ? cfg.mu_year_sigma * top.normal() : 0.0;

    // cohort intercepts: calibrated so the expected share at mean covariates
    // matches the configured share
    const double xbar_size = cfg.mean_l;
    const double xbar_capint = cfg.mean_k - cfg.mean_l;
    truth.pscore_coef.resize(n_cohorts);
    for (int ci = 0; ci < n_cohorts; ++ci) {
        const bool use_slopes = !cfg.selection_first_cohort_only || ci == 0;
        const double bs = use_slopes ? cfg.sel_size : 0.0;
        const double bc = use_slopes ? cfg.sel_capint : 0.0;
        const double bt = use_slopes ? cfg.sel_tfp : 0.0;
        const double a0 = logit(cfg.cohort_shares[ci]) - bs * xbar_size - bc * xbar_capint;
        truth.pscore_coef[ci] = {a0, bs, bc, bt};
    }

    panel.firm_ids.resize(n_firms);
    panel.country_codes.resize(cfg.n_countries);
    for (int c = 0; c < cfg.n_countries; ++c) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "C%02d", c);
        panel.country_codes[c] = buf;
    }
    panel.cohort.assign(n_firms, kNeverTreated);
    panel.deals.assign(n_firms, DealInfo{});
    panel.rows.resize(static_cast<std::size_t>(n_firms) * n_years);
    truth.omega.resize(panel.rows.size());
    truth.epsilon.resize(panel.rows.size());
    truth.mu.resize(panel.rows.size());
    truth.theta_m.resize(panel.rows.size());
    truth.theta_l.resize(panel.rows.size());
    truth.delta_applied.resize(panel.rows.size());

    std::vector<double> deflator(n_years);
    for (int t = 0; t < n_years; ++t)
        deflator[t] = std::pow(1.0 + cfg.deflator_growth, t);

    // firm trajectories are independent; each firm has its own derived seed,
    // so the output is identical at any thread count
    std::string config_err;
#pragma omp parallel for schedule(static)
    for (int fi = 0; fi < n_firms; ++fi) {
        try {
            const int ind = fi / cfg.n_firms_per_industry;
            const Technology& tech = cfg.technologies[ind];
            Rng rng(derive_seed(cfg.seed, 1000003ULL + static_cast<std::uint64_t>(fi)));

            std::vector<double> l(n_years), k(n_years), omega(n_years), m(n_years),
                logS(n_years), eps(n_years);

            // unit-variance, mean-zero innovation draw
            auto xi_draw = [&]() {
                if (cfg.xi_dist == SimConfig::XiDist::SkewedExponential) {
                    double u = rng.uniform();
                    while (u <= 0.0) u = rng.uniform();
                    return -std::log(u) - 1.0; // Exp(1) centered
                }
                return rng.normal();
            };

            const double regime =
                cfg.omega_regime_shift > 0.0
                    ? (rng.bernoulli(0.5) ? cfg.omega_regime_shift : -cfg.omega_regime_shift)
                    : 0.0;
            l[0] = cfg.mean_l + cfg.sd_l0 * rng.normal();
            k[0] = cfg.mean_k + cfg.sd_k0 * rng.normal();
            omega[0] = regime + ((cfg.sigma_xi > 0.0)
                                     ? cfg.sigma_xi / std::sqrt(1.0 - cfg.rho * cfg.rho) *
                                           xi_draw()
                                     : 0.0);
            for (int t = 1; t < n_years; ++t) {
                // l_t, k_t decided before xi_t is realized
                l[t] = cfg.mean_l * (1.0 - cfg.rho_l) + cfg.rho_l * l[t - 1] +
                       cfg.react_l * omega[t - 1] + cfg.sigma_l * rng.normal();
                k[t] = cfg.mean_k * (1.0 - cfg.rho_k) + cfg.rho_k * k[t - 1] +
                       cfg.react_k * omega[t - 1] + cfg.sigma_k * rng.normal();
                omega[t] = regime + cfg.rho * (omega[t - 1] - regime) +
                           (cfg.sigma_xi > 0.0 ? cfg.sigma_xi * xi_draw() : 0.0);
            }

            double mu_firm = cfg.mu_level;
            if (cfg.mu_rule == SimConfig::MuRule::FirmLognormal)
                mu_firm = cfg.mu_level * std::exp(cfg.mu_firm_sigma * rng.normal());
            auto mu_at = [&](int t) {
                double mu = mu_firm * std::exp(mu_year_shock[t]);
                if (cfg.mu_rule == SimConfig::MuRule::CapitalLinked) {
                    const double z = (k[t] - l[t]) - (cfg.mean_k - cfg.mean_l);
                    mu *= std::exp(cfg.mu_cap_lin * z + cfg.mu_cap_quad * z * z);
                } else if (cfg.mu_rule == SimConfig::MuRule::ProductivityLinked) {
                    const double w = omega[t];
                    mu *= std::exp(cfg.mu_omega_lin * w + cfg.mu_omega_quad * w * w);
                }
                return mu;
            };

            for (int t = 0; t < n_years; ++t) {
                const double mu_it = mu_at(t);
                if (cfg.materials_rule == SimConfig::MaterialsRule::Foc) {
                    m[t] = solve_m_foc(tech, l[t], k[t], omega[t], mu_it);
                    if (cfg.materials_adjustment > 0.0 && t > 0)
                        m[t] = cfg.materials_adjustment * m[t - 1] +
                               (1.0 - cfg.materials_adjustment) * m[t];
                    if (cfg.materials_noise_sigma > 0.0)
                        m[t] += cfg.materials_noise_sigma * rng.normal();
                } else {
                    const double drive = cfg.exo_omega_coef * omega[t] +
                                         cfg.exo_l_coef * (l[t] - cfg.mean_l) +
                                         cfg.exo_k_coef * (k[t] - cfg.mean_k);
                    m[t] = (t == 0)
                               ? cfg.exo_mean_m + drive + cfg.exo_sigma_m * rng.normal()
                               : cfg.exo_mean_m * (1.0 - cfg.exo_rho_m) +
                                     cfg.exo_rho_m * m[t - 1] + drive +
                                     cfg.exo_sigma_m * rng.normal();
                }
                logS[t] = tech.f(l[t], k[t], m[t]) + omega[t];
                eps[t] = cfg.sigma_eps > 0.0 ? cfg.sigma_eps * rng.normal() : 0.0;
            }

            // accounting noise, drawn before the treatment draws so the
            // stream position is identical whether or not a firm is treated
            std::vector<double> lab_noise(n_years), liq(n_years), sol(n_years);
            for (int t = 0; t < n_years; ++t) {
                lab_noise[t] = 0.05 * rng.normal();
                liq[t] = std::exp(-0.5 + 0.4 * rng.normal());
                sol[t] = std::exp(0.2 + 0.3 * rng.normal());
            }
            const double inc_year =
                static_cast<double>(cfg.year_start - 1 - static_cast<int>(rng.below(40)));

            // staggered treatment assignment on (g-1) covariates
            Rng trng(derive_seed(cfg.seed, 7000019ULL + static_cast<std::uint64_t>(fi)));
            int cohort = kNeverTreated;
            for (int ci = 0; ci < n_cohorts && cohort == kNeverTreated; ++ci) {
                const int g = cfg.cohort_years[ci];
                const int tg = g - 1 - cfg.year_start;
                const auto& b = truth.pscore_coef[ci];
                const double idx = b[0] + b[1] * l[tg] + b[2] * (k[tg] - l[tg]) + b[3] * omega[tg];
                if (trng.bernoulli(sigmoid(idx)))
                    cohort = g;
            }
            panel.cohort[fi] = cohort;
            if (cohort != kNeverTreated) {
                DealInfo d;
                d.acquirer_id = "ACQ" + std::to_string(fi);
                d.acquirer_nace2 = cfg.industry_codes[static_cast<int>(
                    trng.below(static_cast<std::uint64_t>(n_ind)))];
                d.acquirer_country = panel.country_codes[fi % cfg.n_countries];
                d.acquirer_perimeter = 1 + static_cast<long long>(trng.below(200));
                panel.deals[fi] = d;
            }

            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "F%06d", fi);
            panel.firm_ids[fi] = idbuf;

            for (int t = 0; t < n_years; ++t) {
                const std::size_t r = static_cast<std::size_t>(fi) * n_years + t;
                FirmYear& fy = panel.rows[r];
                fy.firm = fi;
                fy.year = cfg.year_start + t;
                fy.country = fi % cfg.n_countries;
                fy.industry = cfg.industry_codes[ind];
                fy.incorporation_year = inc_year;

                const double mu_it = mu_at(t);
                const double th_m = tech.theta_m(l[t], k[t], m[t]);
                const double th_l = tech.theta_l(l[t], k[t], m[t]);
                const double delta =
                    cohort != kNeverTreated ? cfg.effect(cohort, fy.year) : 0.0;

                const double S_true = std::exp(logS[t] + delta);
                const double sales_real = S_true * std::exp(eps[t]);
                // materials expenditure is the input actually used; the true
                // markup is the realized theta/alpha, so alpha = theta/mu by
                // construction even under the implementation wedge
                const double mat_real = std::exp(m[t] + delta);
                const double mu_true = th_m * S_true / mat_real; // deltas cancel
                const double lab_real = (th_l / mu_it) * S_true * std::exp(lab_noise[t]);
                const double d = deflator[t];

                fy.sales = sales_real * d;
                fy.materials = mat_real * d;
                fy.labor_cost = lab_real * d;
                fy.employees = std::exp(l[t]);
                fy.fixed_assets = std::exp(k[t]) * d;
                fy.value_added = (sales_real - mat_real) * d;
                fy.roi = (sales_real - mat_real - lab_real) / std::exp(k[t]);
                fy.liquidity = liq[t];
                fy.solvency = sol[t];

                truth.omega[r] = omega[t];
                truth.epsilon[r] = eps[t];
                truth.mu[r] = mu_true;
                truth.theta_m[r] = th_m;
                truth.theta_l[r] = th_l;
                truth.delta_applied[r] = delta;
            }
        } catch (const std::exception& e) {
#pragma omp critical
            if (config_err.empty()) config_err = e.what();
        }
    }
    if (!config_err.empty())
        throw ConfigError(config_err);

    panel.rebuild_index();

    // deflator table covering every cell in the panel
    for (int c = 0; c < cfg.n_countries; ++c)
        for (int i = 0; i < n_ind; ++i)
            for (int t = 0; t < n_years; ++t)
                out.deflators.cells[{panel.country_codes[c], cfg.industry_codes[i],
                                     cfg.year_start + t}] = deflator[t];
    return out;
}

} // namespace firmfx::sim

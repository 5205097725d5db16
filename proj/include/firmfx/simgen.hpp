#pragma once
// Synthetic firm panels with fully known ground truth. The data-generating
// process satisfies the timing assumptions of the two-stage proxy estimator
// (capital and labor set from t-1 information, materials chosen after
// observing productivity) and prices output at markup x marginal cost, so
// the expenditure-share identity mu = theta/alpha holds exactly on every
// observation before measurement noise.
//
// Identifiability note: materials measured as deflated expenditure under an
// exact FOC makes log sales = log materials + log(mu/theta). The elasticity
// of the flexible input is therefore only identified when theta/mu varies
// across observations: either year-level markup shocks (absorbed by the
// first-stage year dummies) or translog curvature. Configs for estimator
// recovery enable one of the two.
#include "firmfx/panel.hpp"
#include "firmfx/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace firmfx::sim {

// translog coefficient block; Cobb-Douglas = all second-order terms zero
struct Technology {
    double b0 = 1.0;
    double bl = 0.25, bk = 0.10, bm = 0.65;
    double bll = 0.0, bkk = 0.0, bmm = 0.0;
    double blk = 0.0, blm = 0.0, bkm = 0.0;

    bool is_cobb_douglas() const {
        return bll == 0.0 && bkk == 0.0 && bmm == 0.0 && blk == 0.0 && blm == 0.0 &&
               bkm == 0.0;
    }
    // log output net of productivity at (l, k, m)
    double f(double l, double k, double m) const {
        return b0 + bl * l + bk * k + bm * m + bll * l * l + bkk * k * k + bmm * m * m +
               blk * l * k + blm * l * m + bkm * k * m;
    }
    double theta_m(double l, double k, double m) const {
        return bm + 2.0 * bmm * m + blm * l + bkm * k;
    }
    double theta_l(double l, double k, double m) const {
        return bl + 2.0 * bll * l + blm * m + blk * k;
    }
};

struct EffectPath {
    enum class Kind { None, Constant, LinearInExposure };
    Kind kind = Kind::None;
    double delta = 0.0;

    // effect on the log outcome for cohort g at calendar year t (t >= g)
    double operator()(int g, int t) const {
        if (kind == Kind::None || t < g) return 0.0;
        if (kind == Kind::Constant) return delta;
        return delta * static_cast<double>(t - g + 1);
    }
};

struct SimConfig {
    int n_firms_per_industry = 200;
    std::vector<int> industry_codes = {10};
    std::vector<Technology> technologies = {Technology{}}; // one per industry
    int year_start = 2007;
    int year_end = 2021;
    int n_countries = 1;

    // productivity process: omega_t = rho * omega_{t-1} + xi_t
    double rho = 0.8;
    double sigma_xi = 0.2;
    // innovation shape; the skewed option makes E[omega | inputs] nonlinear
    // under a noisy materials choice, which rules out the degenerate
    // "productivity is constant" representation of the proxy moments
    enum class XiDist { Gaussian, SkewedExponential };
    XiDist xi_dist = XiDist::Gaussian;
    // firm-permanent productivity regime: omega gets +/- this shift (coin
    // flip per firm). Bimodality makes E[omega | inputs] strongly nonlinear
    // under a noisy materials choice, and the conditional mean of omega given
    // its lag stays a smooth one-argument function that the cubic law of
    // motion tracks.
    double omega_regime_shift = 0.0;
    double sigma_eps = 0.1; // measurement noise on log sales

    // markup rule. CapitalLinked prices a markup that varies with observed
    // capital intensity, log mu = log mu_level + c1*z + c2*z^2 with
    // z = (k - l) - (mean_k - mean_l); the quadratic term is what lets the
    // flexible-input elasticity be identified under an exact FOC (a purely
    // firm-random markup collapses the proxy inversion onto one index).
    enum class MuRule { Constant, FirmLognormal, CapitalLinked, ProductivityLinked };
    MuRule mu_rule = MuRule::Constant;
    double mu_level = 1.3;
    double mu_firm_sigma = 0.0;  // log-scale dispersion for FirmLognormal
    double mu_year_sigma = 0.0;  // i.i.d. year-level shock on log mu
    double mu_cap_lin = 0.0;     // c1 for CapitalLinked, z = capital intensity
    double mu_cap_quad = 0.05;   // c2 for CapitalLinked
    // ProductivityLinked: log mu = log mu_level + c1*omega + c2*omega^2.
    // Markups rising nonlinearly with productivity keep the FOC exact while
    // making the materials-demand inverse nonlinear in omega, which is what
    // identifies a Cobb-Douglas flexible-input coefficient from the proxy
    // moments (a linear inverse admits observationally equivalent
    // reparametrizations).
    double mu_omega_lin = 0.0;
    double mu_omega_quad = 0.0;

    // materials behavior
    enum class MaterialsRule { Foc, Exogenous };
    MaterialsRule materials_rule = MaterialsRule::Foc;
    // transitory implementation wedge on the FOC materials choice; the wedge
    // enters production and the true markup is the realized theta/alpha, so
    // the share identity stays exact observation by observation
    double materials_noise_sigma = 0.0;
    // partial adjustment toward the FOC target: m_t = a*m_{t-1} + (1-a)*m*_t.
    // A strictly positive value gives materials demand a second state
    // variable, which is what identifies the flexible-input elasticity for
    // Cobb-Douglas technologies (with the first stage conditioning on lagged
    // materials); the realized markup then fluctuates around the target and
    // is emitted as truth.
    double materials_adjustment = 0.0;
    // Exogenous mode: materials demand with its own innovation plus a
    // response to current productivity and the quasi-fixed inputs
    //   m_t = (1-rho_m)*mean + rho_m*m_{t-1} + c_omega*omega_t
    //         + c_l*(l_t-mean_l) + c_k*(k_t-mean_k) + sigma_m*u_t
    double exo_mean_m = 6.0, exo_rho_m = 0.6, exo_sigma_m = 0.7;
    double exo_omega_coef = 0.0, exo_l_coef = 0.0, exo_k_coef = 0.0;

    // quasi-fixed inputs, decided on t-1 information
    double mean_l = 3.0, sd_l0 = 0.8, rho_l = 0.9, sigma_l = 0.10, react_l = 0.20;
    double mean_k = 8.0, sd_k0 = 1.0, rho_k = 0.9, sigma_k = 0.15, react_k = 0.20;

    // treatment
    std::vector<int> cohort_years;
    std::vector<double> cohort_shares;
    double sel_size = 0.0, sel_capint = 0.0, sel_tfp = 0.0;
    bool selection_first_cohort_only = true; // keeps conditional parallel trends exact
    EffectPath effect; // applied to log sales and log materials from g onward

    // deflator series: deflator(t) = (1 + deflator_growth)^(t - year_start)
    double deflator_growth = 0.0;

    std::uint64_t seed = 1;
};

struct SimTruth {
    std::vector<Technology> technologies; // per industry, same order as config
    std::vector<int> industry_codes;
    // aligned with panel rows
    std::vector<double> omega;
    std::vector<double> epsilon;
    std::vector<double> mu;
    std::vector<double> theta_m;
    std::vector<double> theta_l;
    std::vector<double> delta_applied;
    // selection model actually used per cohort: intercept + slopes on
    // (log size, log capital intensity, tfp), measured at g-1
    std::vector<std::array<double, 4>> pscore_coef;
    EffectPath effect;
};

struct SimOutput {
    Panel panel; // nominal values; run apply_deflators + derive_variables
    DeflatorTable deflators;
    SimTruth truth;
};

// Deterministic given config.seed, at any thread count.
// Throws ConfigError on infeasible configurations.
SimOutput generate(const SimConfig& config);

// ---------------------------------------------------------------------------
// Independent oracle for the cohort-time treatment effect: a direct,
// plain-loop evaluation of the doubly robust sample analogue with its own
// Newton logistic and Householder QR, sharing no numerical code with the
// main estimator.
struct BruteForceOptions {
    bool never_treated_only = false;
    int anticipation = 0;
    double overlap_ceiling = 0.999;
    // covariates: any of "size", "age", "capint", "tfp", "industry"
    std::vector<std::string> covariates;
};

struct BruteForceResult {
    bool feasible = false;
    double estimate = 0.0;
    int n_treated = 0;
    int n_control = 0;
};

BruteForceResult brute_force_att(const Panel& panel, const std::vector<double>& outcome,
                                 int g, int t, const BruteForceOptions& opts);

} // namespace firmfx::sim

#pragma once
// Per-industry production functions on deflated revenue: least squares and
// the two-stage proxy estimator (flexible-input demand inverts unobserved
// productivity; technology parameters from law-of-motion moment conditions).
#include "firmfx/panel.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace firmfx::prodfn {

// translog term order used throughout: l, k, m, l2, k2, m2, lk, lm, km
inline const std::vector<std::string>& term_names() {
    static const std::vector<std::string> t = {"l", "k", "m", "l2", "k2",
                                               "m2", "lk", "lm", "km"};
    return t;
}

struct TranslogSpec {
    bool cobb_douglas = false;     // restrict all second-order terms to zero
    bool include_time_dummies = true;
};

struct AcfConfig {
    int first_stage_degree = 3;
    int law_of_motion_degree = 3;
    // adds lagged materials (levels, powers, interactions) to the first-stage
    // conditioning set, the z_it slot of the proxy regression; needed when
    // materials demand carries its own state (adjustment frictions)
    bool first_stage_lagged_m = false;
    // augments the law-of-motion moments with flexible-input share moments
    // E[(log share - log theta_m(beta)) * demeaned (l,k,m)] = 0, valid when
    // the markup is uncorrelated with inputs; this is what pins down the
    // flexible-input coefficient of a translog, where the GMM objective is
    // otherwise flat along a reparametrization ridge
    bool share_moments = false;
    double tolerance = 1e-8;
    int max_iterations = 4000;
    int restarts = 5;
    std::uint64_t seed = 12345;
    // optional starting point in term order (tests and diagnostics); the OLS
    // and cost-share starts are still searched
    std::vector<double> start_override;
};

struct ElasticitySet {
    int industry = 0;
    // beta maps term name -> coefficient; intercept/time effects are part of
    // the first-stage fit, not of beta
    std::map<std::string, double> beta;
    // aligned with panel rows; NaN outside this industry's estimation sample
    std::vector<double> theta_m;
    std::vector<double> theta_l;
    std::vector<double> phi_hat;
    std::vector<double> epsilon_hat;
    std::vector<double> omega_hat;
    // diagnostics
    std::string method;            // "ols" | "acf"
    bool converged = true;
    double objective = 0.0;        // GMM objective at the returned beta (acf)
    double objective_at_start = 0.0;
    int n_obs = 0;

    double theta_m_at(double l, double k, double m) const;
    double theta_l_at(double l, double k, double m) const;
};

// OLS of log deflated revenue on translog terms (plus year dummies).
// Throws EstimationError on rank deficiency, naming the collinear terms.
ElasticitySet ols_translog(const Panel& panel, int industry, const TranslogSpec& spec,
                           int min_obs = 30);

// Two-stage proxy estimator. Stage 1: polynomial regression of output on
// (l,k,m) with year dummies -> expected output and the measurement residual.
// Stage 2: GMM on law-of-motion innovations against {k_t, l_t, m_{t-1}} plus
// squares and pairwise interactions, minimized by Nelder-Mead restarts from
// the OLS start with a Gauss-Newton polish.
ElasticitySet acf_estimate(const Panel& panel, int industry, const TranslogSpec& spec,
                           const AcfConfig& config, int min_obs = 30);

// evaluates per-observation elasticities for a coefficient map
double output_elasticity_m(const std::map<std::string, double>& beta, double l, double k,
                           double m);
double output_elasticity_l(const std::map<std::string, double>& beta, double l, double k,
                           double m);

// Estimates every industry in the panel (parallel across industries) and
// merges the per-observation vectors onto full panel length.
struct Bundle {
    std::vector<ElasticitySet> industries;
    std::vector<double> theta_m, theta_l, phi_hat, epsilon_hat, omega_hat;
};
Bundle estimate_all(const Panel& panel, const TranslogSpec& spec, bool use_acf,
                    const AcfConfig& config, int min_obs = 30);

} // namespace firmfx::prodfn

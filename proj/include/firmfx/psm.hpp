#pragma once
// Robustness path: one-nearest-neighbor propensity matching on a pooled
// logit, balance diagnostics, and the two-way fixed-effects DiD regression
// on the matched sample.
#include "firmfx/panel.hpp"

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace firmfx::psm {

struct MatchOptions {
    // logit covariates; "country", "industry" and "year" expand to dummies
    std::vector<std::string> covariates = {"size", "capint", "tfp", "age",
                                           "country", "industry", "year"};
    double caliper = std::numeric_limits<double>::quiet_NaN(); // disabled
    bool with_replacement = false;
};

struct MatchedPair {
    int treated_firm = -1;
    int control_firm = -1;
    int event_year = 0; // treated firm's cohort year, assigned to the control
    double p_treated = 0.0;
    double p_control = 0.0;
    double distance = 0.0;
};

struct MatchedSample {
    std::vector<MatchedPair> pairs;
    double support_lo = 0.0, support_hi = 1.0; // control p-score range
    int n_dropped_support = 0;
    int n_unmatched = 0; // inside support but no control left / caliper miss
    Eigen::VectorXd pscore_coef;
    std::vector<std::string> coef_names;
};

// Greedy match in descending treated p-score order, without replacement by
// default; ties on distance break on the lexicographically smallest external
// control id. Treated units are measured at their last pre-treatment year;
// control candidates are never-treated firms observed in the same years.
MatchedSample nn_match(const Panel& panel, const MatchOptions& opts);

struct BalanceRow {
    std::string covariate;
    bool after = false;
    double mean_treated = 0.0;
    double mean_control = 0.0;
    double pct_bias = 0.0; // 100 * (mT - mC) / sqrt((vT + vC)/2)
    double t_stat = 0.0;
    double p_value = 1.0;
    double variance_ratio = 1.0;
    bool flagged = false;     // variance ratio outside [0.80, 1.20]
    bool undefined = false;   // zero-variance covariate
};

// before/after side by side for the continuous covariates
std::vector<BalanceRow> balance_diagnostics(const Panel& panel, const MatchedSample& m,
                                            const std::vector<std::string>& covariates = {
                                                "size", "capint", "tfp", "age"});

struct TwfeOptions {
    std::vector<std::string> controls = {"capint", "age", "tfp", "size"};
    bool absorb_fixed_effects = true; // year, country, 2-digit industry
    double demean_tol = 1e-10;
};

struct TwfeResult {
    double beta3 = 0.0; // coefficient on T x Post
    double se = 0.0;    // firm-clustered
    long long n_obs = 0;
    long long n_treated_obs = 0;
    long long n_control_obs = 0;
    Eigen::VectorXd coef;
    std::vector<std::string> names;
    std::vector<std::string> dropped_terms; // absorbed by the within transform
};

// log outcome on T, Post, T x Post and controls with year/country/industry
// effects absorbed by iterative within-demeaning
TwfeResult twfe_did(const Panel& panel, const MatchedSample& m,
                    const std::vector<double>& outcome, const TwfeOptions& opts);

} // namespace firmfx::psm

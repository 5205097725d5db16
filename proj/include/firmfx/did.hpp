#pragma once
// Staggered difference-in-differences with a doubly robust cohort-time
// estimator: per-(g,t) effects, overall / by-cohort / event-study
// aggregations with estimated-weight corrections, and a firm-clustered
// multiplier bootstrap over influence functions.
//
// Conventions shared with the independent brute-force oracle:
//   base period   base = g - 1 - anticipation (universal, pre and post)
//   treated       cohort == g, outcome finite at t and base
//   control       never treated, or cohort > max(t, base) and != g
//   covariates    intercept, named columns at the base year, industry
//                 dummies over ascending distinct codes among cell
//                 participants with the smallest code dropped
//   overlap       controls with fitted p >= ceiling dropped after the fit
#include "firmfx/panel.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace firmfx::did {

enum class ControlRule { NeverTreatedOnly, NeverPlusNotYet };

struct CohortDesign {
    std::vector<int> cohorts; // ascending treatment years
    ControlRule control_rule = ControlRule::NeverPlusNotYet;
    int anticipation = 0;
    std::vector<std::string> pscore_covariates = {"size", "age", "capint", "tfp", "industry"};
    std::vector<std::string> outcome_covariates = {"size", "age", "capint", "tfp", "industry"};
    double overlap_ceiling = 0.999;
};

struct AttGt {
    int g = 0;
    int t = 0;
    bool feasible = false;
    double estimate = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN(); // filled by bootstrap
    int n_treated = 0;
    int n_control = 0;
    int n_dropped_overlap = 0;
    Eigen::VectorXd pscore_coef;
    Eigen::VectorXd outcome_coef;
    Eigen::VectorXd influence; // over the firm universe, scaled by n/n_cell
    std::string note;
};

struct PscoreFit {
    Eigen::VectorXd coef;
    std::vector<std::string> column_names;
    std::vector<int> firms;  // universe firm indices in the fit sample
    Eigen::VectorXd prob;    // fitted p_g(X) per sample unit
    int n_treated = 0;
    int n_control = 0;
};

struct AggregatedEffect {
    std::string kind;              // "overall" | "by_group" | "by_exposure"
    std::vector<int> index;        // cohort g or exposure e; single 0 for overall
    Eigen::VectorXd estimates;
    Eigen::VectorXd se;
    Eigen::VectorXd ci_low;        // simultaneous 95% band
    Eigen::VectorXd ci_high;
    double crit_val = 1.959963984540054;
    Eigen::MatrixXd influence;     // universe x n_params
};

struct EventStudy {
    AggregatedEffect by_exposure;
    double pre_avg = 0.0, pre_avg_se = 0.0;
    double post_avg = 0.0, post_avg_se = 0.0;
    double pretrend_chi2 = 0.0;
    int pretrend_df = 0;
    double pretrend_pvalue = 1.0;
};

struct BootstrapResult {
    Eigen::VectorXd se;            // per parameter
    double crit95 = 1.959963984540054; // simultaneous critical value
    int reps = 0;
};

// Logistic cohort-membership model over {cohort g} u {eligible controls at
// horizon t}, covariates measured at the base period.
PscoreFit fit_pscore(const Panel& panel, const CohortDesign& design, int g, int t);

class DidEngine {
public:
    // outcome: one value per panel row (already on the analysis scale, e.g.
    // log sales); NaN marks an unusable observation
    DidEngine(const Panel& panel, std::vector<double> outcome, CohortDesign design);

    // all (g, t) cells for t in [min data year + anticipation + 1, max year],
    // computed in parallel; cached
    const std::vector<AttGt>& cells();

    // bootstrap the per-cell standard errors into cells()
    void attach_cell_ses(int reps, std::uint64_t seed);

    AggregatedEffect aggregate_overall(int reps, std::uint64_t seed);
    AggregatedEffect aggregate_by_group(int reps, std::uint64_t seed);
    EventStudy event_study(int e_min, int e_max, int reps, std::uint64_t seed);

    // firm-level Rademacher multiplier bootstrap over influence columns
    BootstrapResult multiplier_bootstrap(const Eigen::MatrixXd& influence, int reps,
                                         std::uint64_t seed) const;
    // covariance of the bootstrap distribution (for Wald tests)
    Eigen::MatrixXd bootstrap_cov(const Eigen::MatrixXd& influence, int reps,
                                  std::uint64_t seed) const;

    int universe_size() const { return n_universe_; }
    const CohortDesign& design() const { return design_; }
    int year_min() const { return year_min_; }
    int year_max() const { return year_max_; }

private:
    AttGt compute_cell(int g, int t) const;

    const Panel& panel_;
    std::vector<double> outcome_;
    CohortDesign design_;
    int n_universe_ = 0;
    int year_min_ = 0, year_max_ = 0;
    std::vector<AttGt> cells_;
    bool cells_done_ = false;
};

// helper shared with the CLI: log-scale outcome accessor by name; returns a
// per-row vector with NaN where undefined, and counts dropped rows
std::vector<double> make_outcome(const Panel& panel, const std::string& name,
                                 long long* n_undefined = nullptr);

// the ten dashboard outcomes in reporting order
const std::vector<std::string>& dashboard_outcomes();

} // namespace firmfx::did

#pragma once
// Least squares and logistic maximum likelihood on Eigen types. These back
// the module contracts; estimator logic (DR DiD, ACF, matching) lives in
// the respective modules.
#include <Eigen/Dense>
#include <string>
#include <vector>

namespace firmfx {

struct OlsFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    int rank = 0;
    bool full_rank = true;
    std::vector<int> collinear_cols; // columns beyond the detected rank
};

// OLS via column-pivoted Householder QR. Throws EstimationError naming the
// collinear columns when require_full_rank is set and the design is rank
// deficient; otherwise returns a minimum-norm-style fit with the dependent
// columns zeroed out.
OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           bool require_full_rank = true,
           const std::vector<std::string>* col_names = nullptr);

struct LogitFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd prob;    // fitted probabilities
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    Eigen::MatrixXd hessian; // negative expected Hessian X' W X at the optimum
};

// Logistic regression by Newton-Raphson with step halving.
// Throws EstimationError on perfect separation (naming the covariate) or
// non-convergence (with the iteration trace in the message).
LogitFit logit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double tol = 1e-10, int max_iter = 100,
                   const std::vector<std::string>* col_names = nullptr);

// Firm-clustered covariance (CR1) for an OLS fit: (X'X)^-1 meat (X'X)^-1
// with meat = sum_c X_c' e_c e_c' X_c and the usual small-sample factor.
Eigen::MatrixXd cluster_robust_cov(const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& residuals,
                                   const std::vector<int>& cluster_ids);

} // namespace firmfx

#include "firmfx/linreg.hpp"
#include "firmfx/errors.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace firmfx {

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           bool require_full_rank, const std::vector<std::string>* col_names) {
    OlsFit fit;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    fit.rank = static_cast<int>(qr.rank());
    fit.full_rank = (fit.rank == X.cols());
    if (!fit.full_rank) {
        const auto& perm = qr.colsPermutation().indices();
        for (int i = fit.rank; i < X.cols(); ++i)
            fit.collinear_cols.push_back(perm[i]);
        if (require_full_rank) {
            std::ostringstream msg;
            msg << "rank-deficient design (rank " << fit.rank << " of " << X.cols()
                << "); collinear terms:";
            for (int c : fit.collinear_cols) {
                if (col_names && c < static_cast<int>(col_names->size()))
                    msg << " " << (*col_names)[c];
                else
                    msg << " col" << c;
            }
            throw EstimationError(msg.str());
        }
    }
    fit.coef = qr.solve(y);
    if (!fit.full_rank)
        for (int c : fit.collinear_cols)
            fit.coef[c] = 0.0;
    fit.fitted = X * fit.coef;
    fit.residuals = y - fit.fitted;
    return fit;
}

static double logit_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = eta[i];
        // log(1+exp(e)) computed stably
        const double lse = (e > 0) ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y[i] * e - lse;
    }
    return ll;
}

LogitFit logit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double tol, int max_iter, const std::vector<std::string>* col_names) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    LogitFit fit;
    fit.coef = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    double ll = logit_loglik(eta, y);
    std::ostringstream trace;

    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
            w[i] = p[i] * (1.0 - p[i]);
        }
        Eigen::VectorXd grad = X.transpose() * (y - p);
        Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw EstimationError("logit: singular Hessian");
        Eigen::VectorXd step = ldlt.solve(grad);

        // step halving on log-likelihood decrease
        double scale = 1.0;
        Eigen::VectorXd coef_new, eta_new;
        double ll_new = -std::numeric_limits<double>::infinity();
        for (int h = 0; h < 40; ++h) {
            coef_new = fit.coef + scale * step;
            eta_new = X * coef_new;
            ll_new = logit_loglik(eta_new, y);
            if (ll_new >= ll - 1e-12)
                break;
            scale *= 0.5;
        }
        const double step_size = (scale * step).cwiseAbs().maxCoeff();
        fit.coef = coef_new;
        eta = eta_new;
        trace << "iter " << it << ": loglik " << ll_new << ", step " << step_size << "\n";
        fit.iterations = it + 1;

        // separation: coefficients diverging while fitted probabilities
        // saturate at 0/1 on the boundary observations
        if (fit.coef.cwiseAbs().maxCoeff() > 1e4) {
            int worst = 0;
            fit.coef.cwiseAbs().maxCoeff(&worst);
            std::string name = (col_names && worst < static_cast<int>(col_names->size()))
                                   ? (*col_names)[worst]
                                   : ("col" + std::to_string(worst));
            throw EstimationError("logit: perfect separation suspected on covariate " + name);
        }
        if (step_size < tol && std::abs(ll_new - ll) < tol * (1.0 + std::abs(ll))) {
            ll = ll_new;
            fit.converged = true;
            break;
        }
        ll = ll_new;
    }
    if (!fit.converged)
        throw EstimationError("logit: no convergence after " + std::to_string(max_iter) +
                              " iterations\n" + trace.str());
    fit.loglik = ll;
    fit.prob.resize(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        fit.prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
        w[i] = fit.prob[i] * (1.0 - fit.prob[i]);
    }
    fit.hessian = X.transpose() * w.asDiagonal() * X;
    return fit;
}

Eigen::MatrixXd cluster_robust_cov(const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& residuals,
                                   const std::vector<int>& cluster_ids) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);

    std::map<int, Eigen::VectorXd> scores;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [it, inserted] = scores.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(k));
        it->second += X.row(i).transpose() * residuals[i];
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [cid, s] : scores)
        meat += s * s.transpose();

    const double g = static_cast<double>(scores.size());
    const double nn = static_cast<double>(n);
    const double kk = static_cast<double>(k);
    double c = 1.0;
    if (g > 1.0 && nn > kk)
        c = (g / (g - 1.0)) * ((nn - 1.0) / (nn - kk));
    Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    return c * bread * meat * bread;
}

} // namespace firmfx

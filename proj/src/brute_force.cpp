// Plain-loop reference implementation of the cohort-time treatment effect.
// Deliberately shares no numerical code with the main estimator: it carries
// its own Householder least squares and its own Newton logistic over
// std::vector<double>. Conventions are pinned to the same documented rules
// the engine follows:
//   base period   base = g - 1 - anticipation
//   treated       cohort == g, outcome finite at t and base, covariates finite
//   control       never treated, or cohort > max(t, base) and != g
//   covariates    intercept, then named columns at the base year, then
//                 industry dummies over ascending distinct codes among cell
//                 participants with the smallest code dropped
//   overlap       controls with fitted p >= ceiling dropped after the fit
//   outcome reg   OLS of (Y_t - Y_base) on covariates over retained controls
#include "firmfx/simgen.hpp"
#include "firmfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace firmfx::sim {

namespace {

using Matrix = std::vector<std::vector<double>>; // row major

// least squares via Householder QR without pivoting; A is n x k, n >= k
std::vector<double> householder_lsq(Matrix A, std::vector<double> b) {
    const std::size_t n = A.size();
    const std::size_t k = n ? A[0].size() : 0;
    for (std::size_t j = 0; j < k; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += A[i][j] * A[i][j];
        norm = std::sqrt(norm);
        if (norm == 0.0)
            throw EstimationError("brute-force lsq: zero column");
        double alpha = (A[j][j] > 0.0) ? -norm : norm;
        std::vector<double> v(n, 0.0);
        for (std::size_t i = j; i < n; ++i) v[i] = A[i][j];
        v[j] -= alpha;
        double vtv = 0.0;
        for (std::size_t i = j; i < n; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        for (std::size_t c = j; c < k; ++c) {
            double dot = 0.0;
            for (std::size_t i = j; i < n; ++i) dot += v[i] * A[i][c];
            const double f = 2.0 * dot / vtv;
            for (std::size_t i = j; i < n; ++i) A[i][c] -= f * v[i];
        }
        double dotb = 0.0;
        for (std::size_t i = j; i < n; ++i) dotb += v[i] * b[i];
        const double fb = 2.0 * dotb / vtv;
        for (std::size_t i = j; i < n; ++i) b[i] -= fb * v[i];
    }
    // back substitution on the upper triangle
    std::vector<double> x(k, 0.0);
    for (std::size_t jj = k; jj-- > 0;) {
        double s = b[jj];
        for (std::size_t c = jj + 1; c < k; ++c) s -= A[jj][c] * x[c];
        if (A[jj][jj] == 0.0)
            throw EstimationError("brute-force lsq: singular design");
        x[jj] = s / A[jj][jj];
    }
    return x;
}

std::vector<double> newton_logit(const Matrix& X, const std::vector<double>& y) {
    const std::size_t n = X.size();
    const std::size_t k = n ? X[0].size() : 0;
    std::vector<double> beta(k, 0.0);
    for (int it = 0; it < 100; ++it) {
        // weighted least squares form of the Newton step
        Matrix A(n, std::vector<double>(k));
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = 0.0;
            for (std::size_t j = 0; j < k; ++j) eta += X[i][j] * beta[j];
            const double p = 1.0 / (1.0 + std::exp(-eta));
            const double w = std::sqrt(std::max(p * (1.0 - p), 1e-12));
            for (std::size_t j = 0; j < k; ++j) A[i][j] = w * X[i][j];
            r[i] = (y[i] - p) / w;
        }
        std::vector<double> step = householder_lsq(std::move(A), std::move(r));
        double maxstep = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            beta[j] += step[j];
            maxstep = std::max(maxstep, std::abs(step[j]));
        }
        if (maxstep < 1e-13)
            break;
    }
    return beta;
}

} // namespace

BruteForceResult brute_force_att(const Panel& panel, const std::vector<double>& outcome,
                                 int g, int t, const BruteForceOptions& opts) {
    BruteForceResult res;
    const int base = g - 1 - opts.anticipation;

    struct Unit {
        int firm;
        double dy;
        int industry;
        std::vector<double> x; // named covariates, no intercept/dummies yet
        bool treated;
    };
    std::vector<Unit> units;

    for (int f = 0; f < panel.n_firms(); ++f) {
        const int cohort = panel.cohort[f];
        bool treated = (cohort == g);
        bool control = false;
        if (!treated) {
            if (cohort == kNeverTreated)
                control = true;
            else if (!opts.never_treated_only && cohort > std::max(t, base) && cohort != g)
                control = true;
        }
        if (!treated && !control)
            continue;
        const int rt = panel.find(f, t);
        const int rb = panel.find(f, base);
        if (rt < 0 || rb < 0)
            continue;
        if (!std::isfinite(outcome[rt]) || !std::isfinite(outcome[rb]))
            continue;
        const FirmYear& fb = panel.rows[rb];
        Unit u;
        u.firm = f;
        u.dy = outcome[rt] - outcome[rb];
        u.industry = fb.industry;
        u.treated = treated;
        bool ok = true;
        for (const auto& name : opts.covariates) {
            double v;
            if (name == "size") v = std::log(fb.employees);
            else if (name == "age") v = std::log1p(fb.age);
            else if (name == "capint") v = std::log(fb.capital_intensity);
            else if (name == "tfp") v = fb.tfp;
            else if (name == "industry") continue; // expanded below
            else throw ConfigError("unknown covariate: " + name);
            if (!std::isfinite(v)) { ok = false; break; }
            u.x.push_back(v);
        }
        if (ok)
            units.push_back(std::move(u));
    }

    int n_treated = 0, n_control = 0;
    for (const auto& u : units)
        (u.treated ? n_treated : n_control)++;
    res.n_treated = n_treated;
    res.n_control = n_control;
    if (n_treated < 1 || n_control < 1)
        return res;

    const bool want_industry =
        std::find(opts.covariates.begin(), opts.covariates.end(), "industry") !=
        opts.covariates.end();
    std::vector<int> dummy_codes;
    if (want_industry) {
        std::set<int> codes;
        for (const auto& u : units) codes.insert(u.industry);
        dummy_codes.assign(codes.begin(), codes.end());
        dummy_codes.erase(dummy_codes.begin()); // drop the smallest code
    }

    const std::size_t k = 1 + (units.empty() ? 0 : units[0].x.size()) + dummy_codes.size();
    Matrix X(units.size(), std::vector<double>(k, 0.0));
    std::vector<double> yv(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        X[i][0] = 1.0;
        std::size_t c = 1;
        for (double v : units[i].x) X[i][c++] = v;
        for (int code : dummy_codes) X[i][c++] = (units[i].industry == code) ? 1.0 : 0.0;
        yv[i] = units[i].treated ? 1.0 : 0.0;
    }

    std::vector<double> beta = newton_logit(X, yv);
    std::vector<double> p(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        double eta = 0.0;
        for (std::size_t j = 0; j < k; ++j) eta += X[i][j] * beta[j];
        p[i] = 1.0 / (1.0 + std::exp(-eta));
    }

    // overlap: drop controls at or above the ceiling
    std::vector<char> keep(units.size(), 1);
    int retained_controls = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!units[i].treated && p[i] >= opts.overlap_ceiling)
            keep[i] = 0;
        else if (!units[i].treated)
            ++retained_controls;
    }
    res.n_control = retained_controls;
    if (retained_controls < 1)
        return res;

    // outcome regression over retained controls
    Matrix Xc;
    std::vector<double> yc;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (keep[i] && !units[i].treated) {
            Xc.push_back(X[i]);
            yc.push_back(units[i].dy);
        }
    std::vector<double> gamma = householder_lsq(std::move(Xc), std::move(yc));

    double sum_wT = 0.0, sum_wC = 0.0, acc_T = 0.0, acc_C = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!keep[i])
            continue;
        double mfit = 0.0;
        for (std::size_t j = 0; j < k; ++j) mfit += X[i][j] * gamma[j];
        const double resid = units[i].dy - mfit;
        if (units[i].treated) {
            sum_wT += 1.0;
            acc_T += resid;
        } else {
            const double w = p[i] / (1.0 - p[i]);
            sum_wC += w;
            acc_C += w * resid;
        }
    }
    res.feasible = true;
    res.estimate = acc_T / sum_wT - acc_C / sum_wC;
    return res;
}

} // namespace firmfx::sim

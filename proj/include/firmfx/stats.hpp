#pragma once
// Small statistics toolbox: descriptive moments, type-7 quantiles, normal
// and chi-square tail probabilities, a two-sample KS test, and FNV hashing
// for output manifests.
#include <cstdint>
#include <string>
#include <vector>

namespace firmfx {

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v); // n-1 denominator; 0 for n<2
double sample_var(const std::vector<double>& v);

// linear-interpolation quantile (R type 7); p in [0,1]; input need not be sorted
double quantile(std::vector<double> v, double p);
double median(std::vector<double> v);

// Phi(x) and upper-tail probabilities
double norm_cdf(double x);
double norm_sf(double x);
// two-sided p-value for a z statistic
double z_pvalue(double z);

// regularized incomplete gamma P(a,x) and Q(a,x)
double gamma_p(double a, double x);
double gamma_q(double a, double x);
// P(X > x) for X ~ chi-square with df degrees of freedom
double chi2_sf(double x, double df);

struct KsResult {
    double statistic;
    double p_value;
};
// asymptotic two-sample Kolmogorov-Smirnov test
KsResult ks_2sample(std::vector<double> a, std::vector<double> b);

std::uint64_t fnv1a64(const std::string& s);

// significance stars per the reporting convention: *** p<0.01, ** p<0.05, * p<0.1
std::string stars(double p);

} // namespace firmfx

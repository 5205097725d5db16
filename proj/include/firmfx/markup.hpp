#pragma once
// Firm-year markups from output elasticities and expenditure shares:
// mu = theta / alpha with alpha the revenue share of the flexible input.
#include "firmfx/panel.hpp"
#include "firmfx/prodfn.hpp"

#include <map>
#include <string>
#include <vector>

namespace firmfx::markup {

enum class FlexibleInput { Materials, Labor, Composite };

FlexibleInput parse_flexible_input(const std::string& s);
std::string to_string(FlexibleInput f);

struct MarkupRecord {
    int row = -1; // panel row index
    int firm = -1;
    int year = 0;
    double mu = 0.0;
    double theta_used = 0.0;
    double alpha = 0.0;
};

struct MarkupOptions {
    FlexibleInput flexible_input = FlexibleInput::Materials;
    bool correct_shares = true; // divide sales by exp(first-stage residual)
};

// One record per observation with an elasticity and positive expenditure;
// zero-expenditure rows are excluded and counted in n_excluded.
std::vector<MarkupRecord> compute_markups(const Panel& panel,
                                          const prodfn::Bundle& elasticities,
                                          const MarkupOptions& opts,
                                          long long* n_excluded = nullptr);

// writes mu back onto a panel copy owned by the caller
void attach_markups(Panel& panel, const std::vector<MarkupRecord>& records);

struct SeriesPoint {
    int year = 0;
    int industry = -1; // -1 for all-industry series
    double weighted_mean = 0.0;
    long long n = 0;
};

enum class Weighting { Sales, None };

// weighted mean per year or industry-year; empty groups are omitted
std::vector<SeriesPoint> aggregate_markups(const Panel& panel,
                                           const std::vector<MarkupRecord>& records,
                                           Weighting weighting, bool by_industry);

struct DistributionSummary {
    int year = 0;
    long long n = 0;
    double mean = 0.0, median = 0.0, sd = 0.0;
    std::vector<double> deciles;     // d1..d9
    std::vector<long long> hist;     // counts over [0, 10] in 0.25 bins
    double hist_lo = 0.0, hist_hi = 10.0, hist_width = 0.25;
};

// Summary over records with mu in (0, 10] (display trim only; estimation
// outputs are never trimmed).
DistributionSummary markup_distribution(const std::vector<MarkupRecord>& records, int year);

} // namespace firmfx::markup

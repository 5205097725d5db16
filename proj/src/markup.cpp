#include "firmfx/markup.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace firmfx::markup {

FlexibleInput parse_flexible_input(const std::string& s) {
    if (s == "materials") return FlexibleInput::Materials;
    if (s == "labor") return FlexibleInput::Labor;
    if (s == "composite") return FlexibleInput::Composite;
    throw ConfigError("unknown flexible input: " + s);
}

std::string to_string(FlexibleInput f) {
    switch (f) {
        case FlexibleInput::Materials: return "materials";
        case FlexibleInput::Labor: return "labor";
        default: return "composite";
    }
}

std::vector<MarkupRecord> compute_markups(const Panel& panel,
                                          const prodfn::Bundle& elasticities,
                                          const MarkupOptions& opts,
                                          long long* n_excluded) {
    std::vector<MarkupRecord> out;
    out.reserve(panel.rows.size());
    long long excluded = 0;
    bool coverage_gap = false;
    int gap_industry = 0;

    for (std::size_t r = 0; r < panel.rows.size(); ++r) {
        const FirmYear& fy = panel.rows[r];
        const double th_m = elasticities.theta_m[r];
        const double th_l = elasticities.theta_l[r];
        if (std::isnan(th_m) || std::isnan(th_l)) {
            // no elasticity for this observation; a whole missing industry is
            // a coverage error, individual gaps are counted
            coverage_gap = true;
            gap_industry = fy.industry;
            ++excluded;
            continue;
        }
        double theta = 0.0, expenditure = 0.0;
        switch (opts.flexible_input) {
            case FlexibleInput::Materials:
                theta = th_m;
                expenditure = fy.materials;
                break;
            case FlexibleInput::Labor:
                theta = th_l;
                expenditure = fy.labor_cost;
                break;
            case FlexibleInput::Composite:
                theta = th_m + th_l;
                expenditure = fy.materials + fy.labor_cost;
                break;
        }
        if (!(expenditure > 0.0)) {
            ++excluded;
            continue;
        }
        double sales = fy.sales;
        if (opts.correct_shares && !std::isnan(elasticities.epsilon_hat[r]))
            sales /= std::exp(elasticities.epsilon_hat[r]);
        MarkupRecord rec;
        rec.row = static_cast<int>(r);
        rec.firm = fy.firm;
        rec.year = fy.year;
        rec.alpha = expenditure / sales;
        rec.theta_used = theta;
        rec.mu = theta / rec.alpha;
        out.push_back(rec);
    }
    if (n_excluded)
        *n_excluded = excluded;
    if (out.empty() && coverage_gap)
        throw EstimationError("no elasticity coverage (industry " +
                              std::to_string(gap_industry) + " and possibly others)");
    return out;
}

void attach_markups(Panel& panel, const std::vector<MarkupRecord>& records) {
    for (const auto& r : records)
        panel.rows[r.row].markup = r.mu;
}

std::vector<SeriesPoint> aggregate_markups(const Panel& panel,
                                           const std::vector<MarkupRecord>& records,
                                           Weighting weighting, bool by_industry) {
    if (records.empty())
        throw DataError("aggregate_markups: no records");
    struct Acc {
        double wsum = 0.0, wmu = 0.0;
        long long n = 0;
    };
    std::map<std::pair<int, int>, Acc> groups; // (year, industry or -1)
    for (const auto& rec : records) {
        const FirmYear& fy = panel.rows[rec.row];
        const double w = weighting == Weighting::Sales ? fy.sales : 1.0;
        if (!(w > 0.0))
            continue; // zero-weight observations drop out
        Acc& a = groups[{rec.year, by_industry ? fy.industry : -1}];
        a.wsum += w;
        a.wmu += w * rec.mu;
        a.n += 1;
    }
    std::vector<SeriesPoint> out;
    for (const auto& [key, a] : groups) {
        if (a.wsum <= 0.0 || a.n == 0) {
            std::cerr << "warning: empty markup group (" << key.first << ", " << key.second
                      << ") omitted\n";
            continue;
        }
        out.push_back({key.first, key.second, a.wmu / a.wsum, a.n});
    }
    return out;
}

DistributionSummary markup_distribution(const std::vector<MarkupRecord>& records, int year) {
    std::vector<double> mus;
    for (const auto& r : records)
        if (r.year == year && r.mu > 0.0 && r.mu <= 10.0)
            mus.push_back(r.mu);
    if (mus.empty())
        throw DataError("markup_distribution: no records in year " + std::to_string(year));
    DistributionSummary d;
    d.year = year;
    d.n = static_cast<long long>(mus.size());
    d.mean = mean(mus);
    d.median = median(mus);
    d.sd = sample_sd(mus);
    for (int i = 1; i <= 9; ++i)
        d.deciles.push_back(quantile(mus, i / 10.0));
    const int nbins = static_cast<int>((d.hist_hi - d.hist_lo) / d.hist_width + 0.5);
    d.hist.assign(nbins, 0);
    for (double m : mus) {
        int b = static_cast<int>((m - d.hist_lo) / d.hist_width);
        if (b >= nbins) b = nbins - 1;
        if (b < 0) b = 0;
        ++d.hist[b];
    }
    return d;
}

} // namespace firmfx::markup

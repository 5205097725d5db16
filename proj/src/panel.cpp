#include "firmfx/panel.hpp"
#include "firmfx/csv.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace firmfx {

double FirmYear::nan_() { return std::numeric_limits<double>::quiet_NaN(); }

double log_or_nan(double v) {
    return (v > 0.0 && std::isfinite(v)) ? std::log(v) : FirmYear::nan_();
}

std::string QualityReport::to_text() const {
    std::ostringstream os;
    os << "rows read: " << rows_read << "\n";
    os << "rows kept: " << rows_kept << "\n";
    os << "drops:\n";
    if (drops.empty())
        os << "  (none)\n";
    for (const auto& [rule, n] : drops)
        os << "  " << rule << ": " << n << "\n";
    if (!missing_counts.empty()) {
        os << "missing (optional columns):\n";
        for (const auto& [col, n] : missing_counts)
            os << "  " << col << ": " << n << "\n";
    }
    for (const auto& w : warnings)
        os << "warning: " << w << "\n";
    return os.str();
}

int Panel::find(int firm, int year) const {
    auto [b, e] = firm_span(firm);
    for (int i = b; i < e; ++i)
        if (rows[i].year == year)
            return i;
    return -1;
}

std::pair<int, int> Panel::firm_span(int firm) const {
    if (firm < 0 || firm >= static_cast<int>(firm_begin_.size()))
        return {0, 0};
    return {firm_begin_[firm], firm_end_[firm]};
}

int Panel::firm_index(const std::string& external_id) const {
    auto it = firm_lookup_.find(external_id);
    return it == firm_lookup_.end() ? -1 : it->second;
}

int Panel::country_index(const std::string& code) const {
    auto it = country_lookup_.find(code);
    return it == country_lookup_.end() ? -1 : it->second;
}

void Panel::rebuild_index() {
    std::sort(rows.begin(), rows.end(), [](const FirmYear& a, const FirmYear& b) {
        return a.firm != b.firm ? a.firm < b.firm : a.year < b.year;
    });
    const int nf = n_firms();
    firm_begin_.assign(nf, 0);
    firm_end_.assign(nf, 0);
    for (int f = 0, i = 0; f < nf; ++f) {
        firm_begin_[f] = i;
        while (i < static_cast<int>(rows.size()) && rows[i].firm == f)
            ++i;
        firm_end_[f] = i;
    }
    firm_lookup_.clear();
    for (int f = 0; f < nf; ++f)
        firm_lookup_[firm_ids[f]] = f;
    country_lookup_.clear();
    for (int c = 0; c < static_cast<int>(country_codes.size()); ++c)
        country_lookup_[country_codes[c]] = c;
    if (cohort.size() != static_cast<std::size_t>(nf))
        cohort.assign(nf, kNeverTreated);
    if (deals.size() != static_cast<std::size_t>(nf))
        deals.assign(nf, DealInfo{});
}

double DeflatorTable::at(const std::string& country, int industry, int year) const {
    auto it = cells.find({country, industry, year});
    if (it == cells.end()) {
        std::ostringstream msg;
        msg << "missing deflator cell (" << country << ", " << industry << ", " << year << ")";
        throw DataError(msg.str());
    }
    return it->second;
}

namespace {

struct RawRow {
    std::string firm_id;
    FirmYear fy;
};

int intern(std::vector<std::string>& pool, std::map<std::string, int>& lut,
           const std::string& key) {
    auto it = lut.find(key);
    if (it != lut.end())
        return it->second;
    const int idx = static_cast<int>(pool.size());
    pool.push_back(key);
    lut[key] = idx;
    return idx;
}

} // namespace

Panel load_panel(const std::string& csv_path, const SchemaMap& schema,
                 QualityReport& report, const LoadOptions& opts) {
    CsvTable t = read_csv(csv_path);
    // required columns up front, named in the error
    const int c_firm = t.col(schema.firm_id);
    const int c_year = t.col(schema.year);
    const int c_ctry = t.col(schema.country);
    const int c_ind = t.col(schema.nace2);
    const int c_sales = t.col(schema.sales);
    const int c_mat = t.col(schema.materials);
    const int c_lab = t.col(schema.labor_cost);
    const int c_emp = t.col(schema.employees);
    const int c_fa = t.col(schema.fixed_assets);
    const int c_va = t.col(schema.value_added);
    const int c_inc = t.has_column(schema.incorporation_year) ? t.col(schema.incorporation_year) : -1;
    const int c_liq = t.has_column(schema.liquidity) ? t.col(schema.liquidity) : -1;
    const int c_sol = t.has_column(schema.solvency) ? t.col(schema.solvency) : -1;
    const int c_roi = t.has_column(schema.roi) ? t.col(schema.roi) : -1;

    std::vector<RawRow> raw;
    raw.reserve(t.rows.size());
    report.rows_read = static_cast<long long>(t.rows.size());

    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = csv_path + " row " + std::to_string(r + 2);
        RawRow rr;
        rr.firm_id = t.cell(r, c_firm);
        rr.fy.year = static_cast<int>(parse_int(t.cell(r, c_year), ctx + " year"));
        rr.fy.industry = static_cast<int>(parse_int(t.cell(r, c_ind), ctx + " nace2"));
        rr.fy.sales = parse_double(t.cell(r, c_sales), ctx + " sales");
        rr.fy.materials = parse_double(t.cell(r, c_mat), ctx + " materials");
        rr.fy.labor_cost = parse_double(t.cell(r, c_lab), ctx + " labor_cost");
        rr.fy.employees = parse_double(t.cell(r, c_emp), ctx + " employees");
        rr.fy.fixed_assets = parse_double(t.cell(r, c_fa), ctx + " fixed_assets");
        rr.fy.value_added = parse_double(t.cell(r, c_va), ctx + " value_added");
        if (c_inc >= 0) rr.fy.incorporation_year = parse_double_opt(t.cell(r, c_inc), ctx);
        if (c_liq >= 0) rr.fy.liquidity = parse_double_opt(t.cell(r, c_liq), ctx);
        if (c_sol >= 0) rr.fy.solvency = parse_double_opt(t.cell(r, c_sol), ctx);
        if (c_roi >= 0) rr.fy.roi = parse_double_opt(t.cell(r, c_roi), ctx);

        // interned later; keep the code string for now
        rr.fy.country = -1;
        raw.push_back(std::move(rr));
        // country strings stored aside to keep RawRow simple
    }

    // duplicate (firm_id, year) detection before any row exclusion
    {
        std::map<std::pair<std::string, int>, int> seen;
        std::vector<std::string> offenders;
        for (std::size_t r = 0; r < raw.size(); ++r) {
            auto key = std::make_pair(raw[r].firm_id, raw[r].fy.year);
            auto [it, inserted] = seen.try_emplace(key, static_cast<int>(r));
            if (!inserted && offenders.size() < 10)
                offenders.push_back(raw[r].firm_id + "/" + std::to_string(raw[r].fy.year));
        }
        if (!offenders.empty()) {
            std::string msg = "duplicate (firm_id, year) keys:";
            for (const auto& o : offenders)
                msg += " " + o;
            throw DataError(msg);
        }
    }

    Panel p;
    std::map<std::string, int> firm_lut, ctry_lut;

    auto keep_row = [&](const FirmYear& fy, QualityReport& rep) -> bool {
        if (!(fy.sales > 0.0)) { rep.drop("nonpositive sales"); return false; }
        if (!(fy.materials > 0.0)) { rep.drop("nonpositive materials"); return false; }
        if (!(fy.labor_cost > 0.0)) { rep.drop("nonpositive labor_cost"); return false; }
        if (!(fy.employees > 0.0)) { rep.drop("nonpositive employees"); return false; }
        if (!(fy.fixed_assets > 0.0)) { rep.drop("nonpositive fixed_assets"); return false; }
        return true;
    };

    std::vector<char> kept(raw.size(), 0);
    for (std::size_t r = 0; r < raw.size(); ++r)
        kept[r] = keep_row(raw[r].fy, report) ? 1 : 0;

    if (opts.trim_log_tails) {
        // symmetric 1%/99% trim on each log monetary variable, applied to the
        // surviving sample
        const auto fields = {&FirmYear::sales, &FirmYear::materials,
                             &FirmYear::labor_cost, &FirmYear::fixed_assets};
        for (auto fld : fields) {
            std::vector<double> logs;
            for (std::size_t r = 0; r < raw.size(); ++r)
                if (kept[r]) logs.push_back(std::log(raw[r].fy.*fld));
            if (logs.size() < 3) continue;
            const double lo = quantile(logs, 0.01);
            const double hi = quantile(logs, 0.99);
            for (std::size_t r = 0; r < raw.size(); ++r) {
                if (!kept[r]) continue;
                const double lv = std::log(raw[r].fy.*fld);
                if (lv < lo || lv > hi) {
                    kept[r] = 0;
                    report.drop("log-tail trim");
                }
            }
        }
    }

    for (std::size_t r = 0; r < raw.size(); ++r) {
        if (!kept[r]) continue;
        FirmYear fy = raw[r].fy;
        fy.firm = intern(p.firm_ids, firm_lut, raw[r].firm_id);
        fy.country = -2; // patched below from the csv table
        p.rows.push_back(fy);
    }
    // second pass for country interning (needs the original strings)
    {
        std::size_t out = 0;
        for (std::size_t r = 0; r < raw.size(); ++r) {
            if (!kept[r]) continue;
            p.rows[out].country = intern(p.country_codes, ctry_lut, t.cell(r, c_ctry));
            ++out;
        }
    }

    // optional-column missing rates over kept rows
    auto count_missing = [&](const char* name, double FirmYear::*fld) {
        long long n = 0;
        for (const auto& fy : p.rows)
            if (std::isnan(fy.*fld)) ++n;
        if (n > 0) report.missing_counts[name] = n;
    };
    count_missing("incorporation_year", &FirmYear::incorporation_year);
    count_missing("liquidity", &FirmYear::liquidity);
    count_missing("solvency", &FirmYear::solvency);
    count_missing("roi", &FirmYear::roi);

    report.rows_kept = static_cast<long long>(p.rows.size());
    p.rebuild_index();
    return p;
}

DeflatorTable load_deflators(const std::string& csv_path) {
    CsvTable t = read_csv(csv_path);
    const int c_ctry = t.col("country");
    const int c_ind = t.col("nace2");
    const int c_year = t.col("year");
    const int c_def = t.col("deflator");
    DeflatorTable d;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = csv_path + " row " + std::to_string(r + 2);
        const double v = parse_double(t.cell(r, c_def), ctx + " deflator");
        if (!(v > 0.0))
            throw DataError(ctx + ": nonpositive deflator");
        d.cells[{t.cell(r, c_ctry), static_cast<int>(parse_int(t.cell(r, c_ind), ctx)),
                 static_cast<int>(parse_int(t.cell(r, c_year), ctx))}] = v;
    }
    return d;
}

void apply_deflators(Panel& panel, const DeflatorTable& deflators) {
    for (auto& fy : panel.rows) {
        const double d = deflators.at(panel.country_codes[fy.country], fy.industry, fy.year);
        fy.sales /= d;
        fy.materials /= d;
        fy.labor_cost /= d;
        fy.fixed_assets /= d;
        fy.value_added /= d;
    }
}

void derive_variables(Panel& panel, QualityReport& report) {
    // cell sums for market shares: (country, industry, year) -> total sales
    std::map<std::tuple<int, int, int>, double> cell_sales;
    for (const auto& fy : panel.rows)
        cell_sales[{fy.country, fy.industry, fy.year}] += fy.sales;

    long long zero_emp = 0;
    bool missing_age = false;
    for (auto& fy : panel.rows) {
        fy.variable_cost = fy.materials + fy.labor_cost;
        fy.variable_cost_ratio = fy.variable_cost / fy.sales;
        if (fy.employees > 0.0) {
            fy.capital_intensity = fy.fixed_assets / fy.employees;
        } else {
            fy.capital_intensity = FirmYear::nan_();
            ++zero_emp;
        }
        fy.market_share = fy.sales / cell_sales[{fy.country, fy.industry, fy.year}];
        if (!std::isnan(fy.incorporation_year)) {
            fy.age = static_cast<double>(fy.year) - fy.incorporation_year;
            if (fy.age < 0.0) fy.age = 0.0;
        } else {
            missing_age = true;
        }
    }
    if (zero_emp > 0)
        report.drops["excluded from capital-intensity sample (zero employees)"] = zero_emp;
    if (missing_age)
        report.warnings.push_back(
            "incorporation_year absent for some rows; age-based covariates disabled there");
}

Panel subset(const Panel& panel, const std::vector<char>& keep_row) {
    Panel out;
    std::vector<int> firm_map(panel.n_firms(), -1);
    for (std::size_t r = 0; r < panel.rows.size(); ++r) {
        if (!keep_row[r])
            continue;
        const FirmYear& fy = panel.rows[r];
        if (firm_map[fy.firm] < 0) {
            firm_map[fy.firm] = static_cast<int>(out.firm_ids.size());
            out.firm_ids.push_back(panel.firm_ids[fy.firm]);
            out.cohort.push_back(panel.cohort[fy.firm]);
            out.deals.push_back(panel.deals[fy.firm]);
        }
        FirmYear copy = fy;
        copy.firm = firm_map[fy.firm];
        out.rows.push_back(copy);
    }
    out.country_codes = panel.country_codes;
    out.rebuild_index();
    return out;
}

void load_treatments(Panel& panel, const std::string& csv_path, QualityReport& report) {
    CsvTable t = read_csv(csv_path);
    const int c_firm = t.col("firm_id");
    const int c_cohort = t.col("cohort_year");
    const int c_acq = t.has_column("acquirer_id") ? t.col("acquirer_id") : -1;
    const int c_anace = t.has_column("acquirer_nace2") ? t.col("acquirer_nace2") : -1;
    const int c_actry = t.has_column("acquirer_country") ? t.col("acquirer_country") : -1;
    const int c_perim = t.has_column("acquirer_perimeter") ? t.col("acquirer_perimeter") : -1;

    std::set<std::string> seen;
    long long unmatched = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = csv_path + " row " + std::to_string(r + 2);
        const std::string id = t.cell(r, c_firm);
        if (!seen.insert(id).second)
            throw DataError("firm " + id + " appears more than once in " + csv_path +
                            " (treatment can occur at most once per firm)");
        const int f = panel.firm_index(id);
        if (f < 0) {
            ++unmatched;
            continue;
        }
        panel.cohort[f] = static_cast<int>(parse_int(t.cell(r, c_cohort), ctx + " cohort_year"));
        DealInfo d;
        if (c_acq >= 0) d.acquirer_id = t.cell(r, c_acq);
        if (c_anace >= 0 && !t.cell(r, c_anace).empty())
            d.acquirer_nace2 = static_cast<int>(parse_int(t.cell(r, c_anace), ctx));
        if (c_actry >= 0) d.acquirer_country = t.cell(r, c_actry);
        if (c_perim >= 0 && !t.cell(r, c_perim).empty())
            d.acquirer_perimeter = parse_int(t.cell(r, c_perim), ctx);
        panel.deals[f] = std::move(d);
    }
    if (unmatched > 0)
        report.warnings.push_back(std::to_string(unmatched) +
                                  " treated firm ids not present in the panel");
}

} // namespace firmfx

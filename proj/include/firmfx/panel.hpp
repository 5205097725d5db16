#pragma once
// Firm-year panel: ingestion, validation, deflation, derived variables and
// treatment cohorts. A Panel is immutable once built; downstream modules
// only read it.
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace firmfx {

constexpr int kNeverTreated = 0; // cohort value for never-treated firms

struct FirmYear {
    int firm = -1;     // interned firm index
    int year = 0;
    int country = -1;  // interned country index
    int industry = 0;  // 2-digit sector code

    double sales = 0.0;
    double materials = 0.0;
    double labor_cost = 0.0;
    double employees = 0.0;
    double fixed_assets = 0.0;
    double value_added = 0.0;
    double incorporation_year = nan_();
    double liquidity = nan_();
    double solvency = nan_();
    double roi = nan_();

    // derived
    double variable_cost = nan_();
    double capital_intensity = nan_();
    double variable_cost_ratio = nan_();
    double market_share = nan_();
    double age = nan_();

    // filled by later pipeline stages
    double tfp = nan_();
    double markup = nan_();

    static double nan_();
};

struct QualityReport {
    long long rows_read = 0;
    long long rows_kept = 0;
    std::map<std::string, long long> drops;           // rule -> count
    std::map<std::string, long long> missing_counts;  // optional column -> missing
    std::vector<std::string> warnings;

    void drop(const std::string& rule) { ++drops[rule]; }
    std::string to_text() const;
};

struct DealInfo {
    std::string acquirer_id;
    int acquirer_nace2 = -1;        // -1 when absent
    std::string acquirer_country;   // empty when absent
    long long acquirer_perimeter = -1;
};

class Panel {
public:
    std::vector<FirmYear> rows;              // sorted by (firm, year)
    std::vector<std::string> firm_ids;       // firm index -> external id
    std::vector<std::string> country_codes;  // country index -> code
    std::vector<int> cohort;                 // per firm; kNeverTreated if never
    std::vector<DealInfo> deals;             // per firm; default-constructed if none

    int n_firms() const { return static_cast<int>(firm_ids.size()); }

    // row index of (firm, year), or -1
    int find(int firm, int year) const;
    // [begin, end) row span of a firm
    std::pair<int, int> firm_span(int firm) const;

    int firm_index(const std::string& external_id) const; // -1 if unknown
    int country_index(const std::string& code) const;     // -1 if unknown

    void rebuild_index();

private:
    std::vector<int> firm_begin_, firm_end_;
    std::map<std::string, int> firm_lookup_;
    std::map<std::string, int> country_lookup_;
};

struct DeflatorTable {
    // (country code, industry, year) -> strictly positive index, base 1.0
    std::map<std::tuple<std::string, int, int>, double> cells;

    double at(const std::string& country, int industry, int year) const;
};

struct LoadOptions {
    bool trim_log_tails = false; // symmetric 1%/99% trim on log monetary variables
};

// column mapping for firms.csv; defaults follow the documented schema
struct SchemaMap {
    std::string firm_id = "firm_id";
    std::string year = "year";
    std::string country = "country";
    std::string nace2 = "nace2";
    std::string sales = "sales";
    std::string materials = "materials";
    std::string labor_cost = "labor_cost";
    std::string employees = "employees";
    std::string fixed_assets = "fixed_assets";
    std::string value_added = "value_added";
    std::string incorporation_year = "incorporation_year"; // optional
    std::string liquidity = "liquidity";                   // optional
    std::string solvency = "solvency";                     // optional
    std::string roi = "roi";                               // optional
};

Panel load_panel(const std::string& csv_path, const SchemaMap& schema,
                 QualityReport& report, const LoadOptions& opts = {});

DeflatorTable load_deflators(const std::string& csv_path);

// Divides every monetary field by the matching (country, nace2, year) cell.
// Throws DataError naming the cell when one is missing.
void apply_deflators(Panel& panel, const DeflatorTable& deflators);

// Populates variable_cost, capital_intensity, variable_cost_ratio, age and
// market shares within (country, industry, year) cells.
void derive_variables(Panel& panel, QualityReport& report);

// Reads treatments.csv and attaches cohorts/deal info. Throws DataError if a
// firm appears more than once (treatment can occur at most once per firm).
void load_treatments(Panel& panel, const std::string& csv_path, QualityReport& report);

// New panel keeping only flagged rows; firms left without rows are removed
// and indices remapped.
Panel subset(const Panel& panel, const std::vector<char>& keep_row);

// log helpers used by estimators; NaN when the argument is nonpositive
double log_or_nan(double v);

} // namespace firmfx

#include "firmfx/vertical.hpp"
#include "firmfx/csv.hpp"
#include "firmfx/errors.hpp"
#include "firmfx/stats.hpp"

#include <algorithm>
#include <cmath>

namespace firmfx::vertical {

IOTable load_io_table(const std::string& csv_path) {
    CsvTable t = read_csv(csv_path);
    const int ci = t.col("input_code");
    const int co = t.col("output_code");
    const int cc = t.col("coefficient");
    IOTable io;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = csv_path + " row " + std::to_string(r + 2);
        const double v = parse_double(t.cell(r, cc), ctx + " coefficient");
        if (v < 0.0)
            throw DataError(ctx + ": negative technical coefficient");
        io.a[{static_cast<int>(parse_int(t.cell(r, ci), ctx)),
              static_cast<int>(parse_int(t.cell(r, co), ctx))}] = v;
    }
    return io;
}

int IndustryBridge::map_code(int nace2) const {
    auto it = nace_to_io.find(nace2);
    if (it == nace_to_io.end())
        throw DataError("industry code " + std::to_string(nace2) +
                        " not present in the industry bridge");
    return it->second;
}

IndustryBridge load_bridge(const std::string& csv_path) {
    CsvTable t = read_csv(csv_path);
    const int cn = t.col("nace2");
    const int ci = t.col("io_code");
    IndustryBridge b;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = csv_path + " row " + std::to_string(r + 2);
        b.nace_to_io[static_cast<int>(parse_int(t.cell(r, cn), ctx))] =
            static_cast<int>(parse_int(t.cell(r, ci), ctx));
    }
    return b;
}

std::string to_string(DealClass c) {
    switch (c) {
        case DealClass::Horizontal: return "horizontal";
        case DealClass::Vertical: return "vertical";
        default: return "other";
    }
}

ClassifyResult classify_deals(std::vector<Deal> deals, const IOTable& io,
                              const IndustryBridge& bridge, double threshold_percentile) {
    if (threshold_percentile <= 0.0 || threshold_percentile >= 100.0)
        throw ConfigError("threshold percentile must lie in (0, 100)");

    // reference distribution: both directional coefficients pooled over the
    // sample deals
    std::vector<double> pool;
    for (const auto& d : deals) {
        const int ti = bridge.map_code(d.target_nace2);
        const int ai = bridge.map_code(d.acquirer_nace2);
        pool.push_back(io.coefficient(ti, ai));
        pool.push_back(io.coefficient(ai, ti));
    }
    if (pool.empty())
        throw DataError("classify_deals: no deals");
    const double threshold = quantile(pool, threshold_percentile / 100.0);

    ClassifyResult out;
    out.threshold_value = threshold;
    for (auto& d : deals) {
        const int ti = bridge.map_code(d.target_nace2);
        const int ai = bridge.map_code(d.acquirer_nace2);
        const double c = std::max(io.coefficient(ti, ai), io.coefficient(ai, ti));
        d.coefficient_used = c;
        d.foreign = !d.acquirer_country.empty() && !d.target_country.empty() &&
                    d.acquirer_country != d.target_country;
        if (d.target_nace2 == d.acquirer_nace2) {
            d.classification = DealClass::Horizontal; // same-code rule first
            ++out.n_horizontal;
        } else if (c > threshold) {
            d.classification = DealClass::Vertical;
            ++out.n_vertical;
        } else {
            d.classification = DealClass::Other;
            ++out.n_other;
        }
    }
    out.deals = std::move(deals);
    return out;
}

std::string to_string(PerimeterBin b) {
    switch (b) {
        case PerimeterBin::B1to5: return "1-5";
        case PerimeterBin::B6to30: return "6-30";
        case PerimeterBin::B31to100: return "31-100";
        case PerimeterBin::BOver100: return ">100";
        default: return "missing";
    }
}

PerimeterBin perimeter_bin(long long perimeter) {
    if (perimeter < 1)
        return PerimeterBin::Missing;
    if (perimeter <= 5) return PerimeterBin::B1to5;
    if (perimeter <= 30) return PerimeterBin::B6to30;
    if (perimeter <= 100) return PerimeterBin::B31to100;
    return PerimeterBin::BOver100;
}

PerimeterBin parse_perimeter_bin(const std::string& label) {
    if (label == "1-5") return PerimeterBin::B1to5;
    if (label == "6-30") return PerimeterBin::B6to30;
    if (label == "31-100") return PerimeterBin::B31to100;
    if (label == ">100") return PerimeterBin::BOver100;
    throw ConfigError("unknown perimeter bin: " + label);
}

} // namespace firmfx::vertical

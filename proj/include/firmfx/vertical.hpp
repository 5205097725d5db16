#pragma once
// Takeover classification from industry codes and input-output technical
// coefficients: horizontal when target and acquirer share the 2-digit code,
// vertical when the stronger of the two directional coefficients exceeds a
// percentile of the sample coefficient distribution, other otherwise.
#include <map>
#include <string>
#include <vector>

namespace firmfx::vertical {

struct IOTable {
    // (input sector, output sector) -> technical coefficient a_ij >= 0;
    // pairs absent from a sparse table read as zero
    std::map<std::pair<int, int>, double> a;

    double coefficient(int input_sector, int output_sector) const {
        auto it = a.find({input_sector, output_sector});
        return it == a.end() ? 0.0 : it->second;
    }
};

IOTable load_io_table(const std::string& csv_path);

// nace2 -> I-O sector code correspondence
struct IndustryBridge {
    std::map<int, int> nace_to_io;
    int map_code(int nace2) const; // throws DataError naming the code
};

IndustryBridge load_bridge(const std::string& csv_path);

enum class DealClass { Horizontal, Vertical, Other };
std::string to_string(DealClass c);

struct Deal {
    std::string deal_id;
    int target_firm = -1;       // panel firm index (optional, -1 if detached)
    std::string target_id;
    int target_nace2 = 0;
    std::string acquirer_id;
    int acquirer_nace2 = 0;
    std::string acquirer_country;
    std::string target_country;
    int year = 0;
    long long acquirer_perimeter = -1; // -1 when missing
    bool foreign = false;

    // filled by classify_deals
    DealClass classification = DealClass::Other;
    double coefficient_used = 0.0;
};

struct ClassifyResult {
    std::vector<Deal> deals;
    double threshold_value = 0.0; // percentile of the coefficient distribution
    int n_horizontal = 0, n_vertical = 0, n_other = 0;
};

// Classifies every deal at the given percentile (25/50/75 in the reporting
// configurations). The reference distribution pools both directional
// coefficients across the sample deals. Horizontal takes precedence.
ClassifyResult classify_deals(std::vector<Deal> deals, const IOTable& io,
                              const IndustryBridge& bridge, double threshold_percentile);

// perimeter bins driving the subsample analyses
enum class PerimeterBin { B1to5, B6to30, B31to100, BOver100, Missing };
std::string to_string(PerimeterBin b);
PerimeterBin perimeter_bin(long long perimeter);
PerimeterBin parse_perimeter_bin(const std::string& label); // "1-5" etc.

} // namespace firmfx::vertical

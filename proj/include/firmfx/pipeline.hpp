#pragma once
// Batch orchestration: flat key=value configuration, stage execution in
// dependency order, manifest-stamped artifacts, dashboard reporting.
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace firmfx::pipeline {

struct RunConfig {
    std::map<std::string, std::string> kv;

    static RunConfig from_file(const std::string& path);

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;

    // canonical text for hashing: sorted key=value lines, threads excluded
    // so that thread count never changes output bytes
    std::string canonical() const;
    std::uint64_t hash() const;
};

// valid stage names in dependency order
const std::vector<std::string>& stage_order();

struct RunResult {
    int exit_code = 0;           // 0 ok, 2 config, 3 data, 4 estimation
    std::string failed_stage;
    std::string error;
};

// Executes the requested stages (config key "stages", or the single stage
// passed as `only_stage`) in dependency order. Writes artifacts under the
// "out" directory; on failure retains partial outputs next to a FAILED
// marker file.
RunResult run(const RunConfig& config, const std::string& only_stage = "");

} // namespace firmfx::pipeline

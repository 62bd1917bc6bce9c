#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "certiformer/verifier.hpp"

namespace certiformer {

using json = nlohmann::ordered_json;

// What was actually certified, echoed back into the report.
struct InputEcho {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<int> ids;
    bool clipped = false;
};

struct RunSettings {
    Norm p = Norm::L2;
    int t = 1;
    Method method = Method::BackwardForward;
    double eps_max = 10.0;
    int max_sets = 128;
    std::uint64_t seed = 0;
    int threads = 1;
    bool timings = false;  // wall-clock fields only on request, so default reports are reproducible
};

struct SetCertificate {
    std::vector<int> positions;  // 1-based
    Certificate cert;
};

json certify_report(const std::string& model_path, const InputEcho& input,
                    const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                    const std::vector<SetCertificate>& sets, bool truncated,
                    const Counters& counters, double wall_seconds);

json importance_report(const std::string& model_path, const InputEcho& input,
                       const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                       const ImportanceReport& ranking, double wall_seconds);

json ablate_report(const std::string& model_path, const InputEcho& input,
                   const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                   const std::vector<AblationRow>& rows);

// Aligned-text view of a report. Every number is read back out of the JSON,
// so the table can never disagree with the canonical output.
std::string render_table(const json& report);

// Canonical serialization: two-space indent, trailing newline.
std::string dump_report(const json& report);

}  // namespace certiformer

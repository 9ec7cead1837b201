#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmcalib/calibrate.hpp"
#include "rmcalib/error.hpp"
#include "rmcalib/ingest.hpp"
#include "rmcalib/style.hpp"

namespace rmcalib {

// Report files are JSONL; each line carries a "type": manifest, calibration,
// mismatch, pattern, zscore_group, or zscore_summary. The report subcommand
// aggregates any mix of them into plot-ready delimiter-separated tables.

inline nlohmann::json calibration_record(const CalibrationResult& result,
                                         const std::optional<std::string>& category = {}) {
    nlohmann::json obj;
    obj["type"] = "calibration";
    obj["over_valued"] = result.over_valued;
    obj["reference"] = result.reference;
    if (category) obj["category"] = *category;
    obj["offsets"] = result.offsets;
    obj["achieved_win_rate"] = result.achieved_win_rate;
    obj["target_win_rate"] = result.target_win_rate;
    obj["residual_loss"] = result.residual_loss;
    obj["iterations"] = result.iterations;
    obj["converged"] = result.converged;
    return obj;
}

inline nlohmann::json mismatch_record(const MismatchReport& report, double offset,
                                      const std::string& phase,
                                      const std::optional<std::string>& category = {}) {
    nlohmann::json obj;
    obj["type"] = "mismatch";
    obj["over_valued"] = report.over_valued;
    obj["reference"] = report.reference;
    if (category) obj["category"] = *category;
    obj["offset"] = offset;
    obj["empirical"] = report.empirical;
    obj["expected"] = report.expected;
    obj["md"] = report.md;
    obj["direction"] = mismatch_direction_name(report.direction);
    obj["phase"] = phase; // "pre" or "post"
    return obj;
}

inline nlohmann::json pattern_record(const PatternStats& stats) {
    nlohmann::json obj;
    obj["type"] = "pattern";
    obj["pattern"] = pattern_name(stats.pattern);
    obj["chosen"] = stats.chosen_count;
    obj["rejected"] = stats.rejected_count;
    if (stats.preference_ratio)
        obj["ratio"] = *stats.preference_ratio;
    else
        obj["ratio_undefined"] = true;
    return obj;
}

inline nlohmann::json zscore_group_record(const StyleGroupStats& stats) {
    return {{"type", "zscore_group"},
            {"group", stats.group_label},
            {"mean_z", stats.mean_z},
            {"count", stats.count}};
}

inline nlohmann::json zscore_summary_record(const ZScoreReport& report) {
    return {{"type", "zscore_summary"},
            {"variance_across_groups", report.variance_across_groups},
            {"degenerate", report.degenerate}};
}

struct ReportBundle {
    std::vector<nlohmann::json> calibrations;
    std::vector<nlohmann::json> mismatches;
    std::vector<nlohmann::json> patterns;
    std::vector<nlohmann::json> zscore_groups;
    std::vector<nlohmann::json> zscore_summaries;

    bool empty() const {
        return calibrations.empty() && mismatches.empty() && patterns.empty() &&
               zscore_groups.empty() && zscore_summaries.empty();
    }

    void merge_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::ingest, "cannot open report file '" + path.string() + "'");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (detail::blank_line(line)) continue;
            nlohmann::json obj = detail::parse_json_line(line, path.string(), line_no);
            const std::string type = obj.value("type", "");
            if (type == "calibration")
                calibrations.push_back(std::move(obj));
            else if (type == "mismatch")
                mismatches.push_back(std::move(obj));
            else if (type == "pattern")
                patterns.push_back(std::move(obj));
            else if (type == "zscore_group")
                zscore_groups.push_back(std::move(obj));
            else if (type == "zscore_summary")
                zscore_summaries.push_back(std::move(obj));
            // other types (manifest, recovery_report, ...) pass through
        }
    }
};

namespace detail {

inline std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) return value;
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline std::string csv_number(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    return buf;
}

} // namespace detail

/// (expected, empirical) win-rate points, one row per pair/category/phase.
/// Rows whose phase is "post" should sit closer to the diagonal.
inline void emit_winrate_points_csv(const ReportBundle& bundle, std::ostream& out,
                                    const std::string& manifest_comment = {}) {
    if (!manifest_comment.empty()) out << "# " << manifest_comment << '\n';
    out << "over_valued,reference,category,phase,expected,empirical\n";
    for (const nlohmann::json& rec : bundle.mismatches)
        out << detail::csv_field(rec.value("over_valued", "")) << ','
            << detail::csv_field(rec.value("reference", "")) << ','
            << detail::csv_field(rec.value("category", "")) << ','
            << rec.value("phase", "") << ','
            << detail::csv_number(rec.value("expected", 0.0)) << ','
            << detail::csv_number(rec.value("empirical", 0.0)) << '\n';
}

/// Per-pair mismatch-degree table with pre/post columns (bar-plot data).
inline void emit_md_table_csv(const ReportBundle& bundle, std::ostream& out,
                              const std::string& manifest_comment = {}) {
    if (!manifest_comment.empty()) out << "# " << manifest_comment << '\n';
    out << "over_valued,reference,category,md_pre,md_post,direction_pre\n";
    std::map<std::string, std::array<std::optional<nlohmann::json>, 2>> rows;
    for (const nlohmann::json& rec : bundle.mismatches) {
        const std::string key = rec.value("over_valued", "") + "\x1f" +
                                rec.value("reference", "") + "\x1f" + rec.value("category", "");
        rows[key][rec.value("phase", "") == "post" ? 1 : 0] = rec;
    }
    for (const auto& [key, pair] : rows) {
        const auto& pre = pair[0];
        const auto& post = pair[1];
        const nlohmann::json& any = pre ? *pre : *post;
        out << detail::csv_field(any.value("over_valued", "")) << ','
            << detail::csv_field(any.value("reference", "")) << ','
            << detail::csv_field(any.value("category", "")) << ','
            << (pre ? detail::csv_number(pre->value("md", 0.0)) : std::string()) << ','
            << (post ? detail::csv_number(post->value("md", 0.0)) : std::string()) << ','
            << (pre ? pre->value("direction", "") : std::string()) << '\n';
    }
}

/// Stylistic-pattern table: pattern, chosen, rejected, ratio.
inline void emit_patterns_csv(const ReportBundle& bundle, std::ostream& out,
                              const std::string& manifest_comment = {}) {
    if (!manifest_comment.empty()) out << "# " << manifest_comment << '\n';
    out << "pattern,chosen,rejected,ratio\n";
    for (const nlohmann::json& rec : bundle.patterns) {
        out << rec.value("pattern", "") << ',' << rec.value("chosen", 0ull) << ','
            << rec.value("rejected", 0ull) << ',';
        if (rec.contains("ratio"))
            out << detail::csv_number(rec["ratio"].get<double>());
        out << '\n';
    }
}

} // namespace rmcalib

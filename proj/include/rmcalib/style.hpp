#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rmcalib/error.hpp"
#include "rmcalib/prefs.hpp"

namespace rmcalib {

enum class StylePattern { emoji, length, bold, exclamation, list };

inline constexpr std::array<StylePattern, 5> kAllPatterns = {
    StylePattern::emoji, StylePattern::length, StylePattern::bold, StylePattern::exclamation,
    StylePattern::list};

inline const char* pattern_name(StylePattern pattern) {
    switch (pattern) {
        case StylePattern::emoji: return "emoji";
        case StylePattern::length: return "length";
        case StylePattern::bold: return "bold";
        case StylePattern::exclamation: return "exclamation";
        case StylePattern::list: return "list";
    }
    return "?";
}

namespace detail {

/// Decode one UTF-8 code point starting at `pos`; advances `pos`. Invalid
/// bytes are consumed one at a time and returned as-is.
inline char32_t next_codepoint(std::string_view text, std::size_t& pos) {
    const unsigned char b0 = static_cast<unsigned char>(text[pos]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0) {
        len = 4;
        cp = b0 & 0x07u;
    } else if (b0 >= 0xE0) {
        len = 3;
        cp = b0 & 0x0Fu;
    } else if (b0 >= 0xC0) {
        len = 2;
        cp = b0 & 0x1Fu;
    }
    if (pos + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
        const unsigned char b = static_cast<unsigned char>(text[pos + k]);
        if ((b & 0xC0u) != 0x80u) {
            len = 1;
            cp = b0;
            break;
        }
        cp = (cp << 6) | (b & 0x3Fu);
    }
    pos += len;
    return len == 1 ? b0 : cp;
}

inline std::size_t count_codepoints(std::string_view text) {
    std::size_t count = 0, pos = 0;
    while (pos < text.size()) {
        next_codepoint(text, pos);
        ++count;
    }
    return count;
}

// Designated emoji blocks: Miscellaneous Symbols, Dingbats, regional
// indicators, Misc Symbols & Pictographs, Emoticons, Transport & Map,
// Supplemental Symbols & Pictographs, Symbols & Pictographs Extended-A.
inline bool is_emoji(char32_t cp) {
    return (cp >= 0x2600 && cp <= 0x26FF) || (cp >= 0x2700 && cp <= 0x27BF) ||
           (cp >= 0x1F1E6 && cp <= 0x1F1FF) || (cp >= 0x1F300 && cp <= 0x1F5FF) ||
           (cp >= 0x1F600 && cp <= 0x1F64F) || (cp >= 0x1F680 && cp <= 0x1F6FF) ||
           (cp >= 0x1F900 && cp <= 0x1F9FF) || (cp >= 0x1FA70 && cp <= 0x1FAFF);
}

/// Non-overlapping marker...marker spans with non-empty content.
inline std::uint64_t count_spans(std::string_view text, std::string_view marker) {
    std::uint64_t count = 0;
    std::size_t pos = 0;
    while (true) {
        const std::size_t open = text.find(marker, pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = text.find(marker, open + marker.size() + 1);
        if (close == std::string_view::npos) break;
        ++count;
        pos = close + marker.size();
    }
    return count;
}

/// A list line starts (after leading blanks) with '-', '*', '•', or a
/// decimal number followed by '.' or ')'.
inline bool is_list_line(std::string_view line) {
    std::size_t pos = line.find_first_not_of(" \t");
    if (pos == std::string_view::npos) return false;
    const char c = line[pos];
    if (c == '-' || c == '*') return true;
    if (line.substr(pos).starts_with("\xE2\x80\xA2")) return true; // U+2022 bullet
    if (c >= '0' && c <= '9') {
        while (pos < line.size() && line[pos] >= '0' && line[pos] <= '9') ++pos;
        return pos < line.size() && (line[pos] == '.' || line[pos] == ')');
    }
    return false;
}

} // namespace detail

struct PatternCounts {
    std::uint64_t emoji = 0;
    std::uint64_t bold = 0;
    std::uint64_t exclamation = 0;
    std::uint64_t list = 0;
};

/// Per-text occurrence counts of the four countable patterns. Length is not
/// counted here: it is a pairwise chosen-vs-rejected comparison.
inline PatternCounts detect_patterns(std::string_view text) {
    PatternCounts counts;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = detail::next_codepoint(text, pos);
        if (cp == U'!') ++counts.exclamation;
        if (detail::is_emoji(cp)) ++counts.emoji;
    }
    counts.bold = detail::count_spans(text, "**") + detail::count_spans(text, "__");

    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (detail::is_list_line(line)) ++counts.list;
        if (end == text.size()) break;
        start = end + 1;
    }
    return counts;
}

struct PatternStats {
    StylePattern pattern = StylePattern::emoji;
    std::uint64_t chosen_count = 0;
    std::uint64_t rejected_count = 0;
    // chosen / rejected; unset when rejected_count is zero
    std::optional<double> preference_ratio;
};

struct PatternReport {
    std::array<PatternStats, 5> stats;
    std::size_t pairs_counted = 0;
    std::size_t pairs_skipped = 0; // pairs missing a response text
};

/// Aggregate pattern occurrences over the chosen and rejected sides of a
/// preference dataset. "length" counts pairs whose chosen text is strictly
/// longer (in code points) on the chosen side, and strictly shorter on the
/// rejected side.
inline PatternReport pattern_stats(const PreferenceDataset& dataset) {
    PatternReport report;
    for (std::size_t k = 0; k < kAllPatterns.size(); ++k)
        report.stats[k].pattern = kAllPatterns[k];

    auto& emoji = report.stats[0];
    auto& length = report.stats[1];
    auto& bold = report.stats[2];
    auto& excl = report.stats[3];
    auto& list = report.stats[4];

    for (const PreferencePair& pair : dataset.pairs) {
        if (!pair.chosen_text || !pair.rejected_text) {
            ++report.pairs_skipped;
            continue;
        }
        ++report.pairs_counted;
        const PatternCounts chosen = detect_patterns(*pair.chosen_text);
        const PatternCounts rejected = detect_patterns(*pair.rejected_text);
        emoji.chosen_count += chosen.emoji;
        emoji.rejected_count += rejected.emoji;
        bold.chosen_count += chosen.bold;
        bold.rejected_count += rejected.bold;
        excl.chosen_count += chosen.exclamation;
        excl.rejected_count += rejected.exclamation;
        list.chosen_count += chosen.list;
        list.rejected_count += rejected.list;
        const std::size_t chosen_len = detail::count_codepoints(*pair.chosen_text);
        const std::size_t rejected_len = detail::count_codepoints(*pair.rejected_text);
        if (chosen_len > rejected_len) ++length.chosen_count;
        if (chosen_len < rejected_len) ++length.rejected_count;
    }

    for (PatternStats& stats : report.stats)
        if (stats.rejected_count > 0)
            stats.preference_ratio = static_cast<double>(stats.chosen_count) /
                                     static_cast<double>(stats.rejected_count);
    return report;
}

struct StyleGroupStats {
    std::string group_label;
    double mean_z = 0.0;
    std::size_t count = 0;
};

struct ZScoreReport {
    std::vector<StyleGroupStats> groups; // lexicographic by label
    double variance_across_groups = 0.0; // population variance of group means
    bool degenerate = false;             // all scores equal: every z is 0
};

/// Z-score normalization over ALL records, then per-group mean z and the
/// population variance of those group means.
inline ZScoreReport style_zscores(std::span<const std::pair<double, std::string>> records) {
    if (records.size() < 2) fail(ErrorKind::usage, "z-score analysis needs at least two records");
    const double n = static_cast<double>(records.size());
    double mean = 0.0;
    for (const auto& [score, _] : records) {
        if (!std::isfinite(score)) fail(ErrorKind::ingest, "non-finite score in z-score input");
        mean += score;
    }
    mean /= n;
    double var = 0.0;
    for (const auto& [score, _] : records) var += (score - mean) * (score - mean);
    var /= n;
    const double stddev = std::sqrt(var);

    ZScoreReport report;
    report.degenerate = stddev == 0.0;

    std::map<std::string, std::pair<double, std::size_t>> groups; // sum_z, count
    for (const auto& [score, label] : records) {
        const double z = report.degenerate ? 0.0 : (score - mean) / stddev;
        auto& [sum_z, count] = groups[label];
        sum_z += z;
        ++count;
    }
    double group_mean_sum = 0.0;
    for (const auto& [label, agg] : groups) {
        StyleGroupStats stats;
        stats.group_label = label;
        stats.mean_z = agg.first / static_cast<double>(agg.second);
        stats.count = agg.second;
        group_mean_sum += stats.mean_z;
        report.groups.push_back(std::move(stats));
    }
    const double g = static_cast<double>(report.groups.size());
    const double grand = group_mean_sum / g;
    for (const StyleGroupStats& stats : report.groups)
        report.variance_across_groups += (stats.mean_z - grand) * (stats.mean_z - grand);
    report.variance_across_groups /= g;
    return report;
}

} // namespace rmcalib

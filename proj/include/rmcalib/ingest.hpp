#pragma once

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmcalib/error.hpp"
#include "rmcalib/types.hpp"

namespace rmcalib {

enum class ScoreDialect { jsonl, tsv };

inline ScoreDialect score_dialect_from_name(std::string_view name) {
    if (name == "jsonl") return ScoreDialect::jsonl;
    if (name == "tsv") return ScoreDialect::tsv;
    fail(ErrorKind::usage, "unknown score-file dialect '" + std::string(name) +
                               "' (expected jsonl or tsv)");
}

inline const char* score_dialect_name(ScoreDialect dialect) {
    return dialect == ScoreDialect::jsonl ? "jsonl" : "tsv";
}

namespace detail {

inline std::string location(std::string_view source, std::size_t line_no) {
    return std::string(source) + ":" + std::to_string(line_no);
}

inline bool blank_line(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline double parse_finite_number(std::string_view text, std::string_view source,
                                  std::size_t line_no, const char* what) {
    std::string buf(text);
    char* end = nullptr;
    const double value = std::strtod(buf.c_str(), &end);
    if (end == buf.c_str() || *end != '\0')
        fail(ErrorKind::ingest,
             location(source, line_no) + ": malformed " + what + " '" + buf + "'");
    if (!std::isfinite(value))
        fail(ErrorKind::ingest,
             location(source, line_no) + ": non-finite " + what + " '" + buf + "'");
    return value;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
        fields.back().remove_suffix(1);
    return fields;
}

inline nlohmann::json parse_json_line(std::string_view line, std::string_view source,
                                      std::size_t line_no) {
    nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
        fail(ErrorKind::ingest, location(source, line_no) + ": malformed record");
    return parsed;
}

inline std::optional<std::string> optional_string_field(const nlohmann::json& obj,
                                                        const char* key,
                                                        std::string_view source,
                                                        std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string())
        fail(ErrorKind::ingest,
             location(source, line_no) + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

} // namespace detail

/// Parse a line-delimited score file. Malformed lines, duplicate
/// (prompt, model) keys, and non-finite scores are reported with their line
/// number; unknown JSONL fields are ignored with a warning.
inline ScoreTable parse_scores(std::istream& in, ScoreDialect dialect,
                               std::string_view source,
                               std::vector<std::string>* warnings = nullptr) {
    static const std::set<std::string> known_keys = {
        "prompt_id", "model_id", "score", "response_text", "category", "style_label"};

    std::vector<ScoreRecord> records;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;

        ScoreRecord rec;
        if (dialect == ScoreDialect::jsonl) {
            nlohmann::json obj = detail::parse_json_line(line, source, line_no);
            for (auto it = obj.begin(); it != obj.end(); ++it) {
                if (!known_keys.count(it.key()) && warnings)
                    warnings->push_back(detail::location(source, line_no) +
                                        ": unknown field '" + it.key() + "' ignored");
            }
            auto prompt = detail::optional_string_field(obj, "prompt_id", source, line_no);
            auto model = detail::optional_string_field(obj, "model_id", source, line_no);
            if (!prompt || !model || !obj.contains("score"))
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": record needs prompt_id, model_id, and score");
            if (!obj["score"].is_number())
                fail(ErrorKind::ingest,
                     detail::location(source, line_no) + ": score must be a number");
            rec.prompt_id = *prompt;
            rec.model_id = *model;
            rec.score = obj["score"].get<double>();
            rec.response_text = detail::optional_string_field(obj, "response_text", source, line_no);
            rec.category = detail::optional_string_field(obj, "category", source, line_no);
            rec.style_label = detail::optional_string_field(obj, "style_label", source, line_no);
        } else {
            // tsv columns: prompt_id, model_id, score[, response_text[, category[, style_label]]]
            auto fields = detail::split_tabs(line);
            if (fields.size() < 3 || fields.size() > 6)
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": expected 3-6 tab-separated fields, got " +
                                            std::to_string(fields.size()));
            rec.prompt_id = std::string(fields[0]);
            rec.model_id = std::string(fields[1]);
            rec.score = detail::parse_finite_number(fields[2], source, line_no, "score");
            if (fields.size() > 3 && !fields[3].empty()) rec.response_text = std::string(fields[3]);
            if (fields.size() > 4 && !fields[4].empty()) rec.category = std::string(fields[4]);
            if (fields.size() > 5 && !fields[5].empty()) rec.style_label = std::string(fields[5]);
        }

        if (rec.prompt_id.empty() || rec.model_id.empty())
            fail(ErrorKind::ingest,
                 detail::location(source, line_no) + ": empty prompt_id or model_id");
        if (!std::isfinite(rec.score))
            fail(ErrorKind::ingest, detail::location(source, line_no) + ": non-finite score");
        if (!seen.emplace(rec.prompt_id, rec.model_id).second)
            fail(ErrorKind::ingest, detail::location(source, line_no) +
                                        ": duplicate record for (" + rec.prompt_id + ", " +
                                        rec.model_id + ")");
        records.push_back(std::move(rec));
    }
    return ScoreTable::from_records(std::move(records));
}

inline ScoreTable load_scores(const std::filesystem::path& path, ScoreDialect dialect,
                              std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ingest, "cannot open score file '" + path.string() + "'");
    return parse_scores(in, dialect, path.string(), warnings);
}

inline void write_scores(const ScoreTable& table, std::ostream& out, ScoreDialect dialect) {
    for (const ScoreRecord& rec : table.records()) {
        if (dialect == ScoreDialect::jsonl) {
            nlohmann::json obj;
            obj["prompt_id"] = rec.prompt_id;
            obj["model_id"] = rec.model_id;
            obj["score"] = rec.score;
            if (rec.response_text) obj["response_text"] = *rec.response_text;
            if (rec.category) obj["category"] = *rec.category;
            if (rec.style_label) obj["style_label"] = *rec.style_label;
            out << obj.dump() << '\n';
        } else {
            out << rec.prompt_id << '\t' << rec.model_id << '\t';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", rec.score);
            out << buf << '\t' << rec.response_text.value_or("") << '\t'
                << rec.category.value_or("") << '\t' << rec.style_label.value_or("") << '\n';
        }
    }
}

inline void save_scores(const ScoreTable& table, const std::filesystem::path& path,
                        ScoreDialect dialect) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::ingest, "cannot write score file '" + path.string() + "'");
    write_scores(table, out, dialect);
}

/// Parse an Elo file: one (model_id, elo) record per line, either a JSON
/// object {"model_id": ..., "elo": ...} or a model<TAB>elo pair.
inline EloTable parse_elo(std::istream& in, std::string_view source) {
    EloTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;
        std::string model;
        double elo = 0.0;
        const std::size_t first = line.find_first_not_of(" \t");
        if (line[first] == '{') {
            nlohmann::json obj = detail::parse_json_line(line, source, line_no);
            auto id = detail::optional_string_field(obj, "model_id", source, line_no);
            if (!id || !obj.contains("elo") || !obj["elo"].is_number())
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": record needs model_id and a numeric elo");
            model = *id;
            elo = obj["elo"].get<double>();
        } else {
            auto fields = detail::split_tabs(line);
            if (fields.size() != 2)
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": expected model_id<TAB>elo");
            model = std::string(fields[0]);
            elo = detail::parse_finite_number(fields[1], source, line_no, "elo");
        }
        if (model.empty())
            fail(ErrorKind::ingest, detail::location(source, line_no) + ": empty model_id");
        if (!std::isfinite(elo))
            fail(ErrorKind::ingest, detail::location(source, line_no) + ": non-finite elo");
        if (table.has(model))
            fail(ErrorKind::ingest, detail::location(source, line_no) +
                                        ": duplicate Elo entry for '" + model + "'");
        table.insert(model, elo);
    }
    return table;
}

inline EloTable load_elo(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ingest, "cannot open Elo file '" + path.string() + "'");
    return parse_elo(in, path.string());
}

inline void write_elo(const EloTable& table, std::ostream& out) {
    for (const auto& [model, elo] : table.entries()) {
        nlohmann::json obj;
        obj["model_id"] = model;
        obj["elo"] = elo;
        out << obj.dump() << '\n';
    }
}

} // namespace rmcalib

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmcalib/error.hpp"
#include "rmcalib/ingest.hpp"
#include "rmcalib/logistic.hpp"
#include "rmcalib/types.hpp"

namespace rmcalib {

enum class TiePolicy { drop, prefer_reference };

inline const char* tie_policy_name(TiePolicy policy) {
    return policy == TiePolicy::drop ? "drop" : "prefer_reference";
}

inline TiePolicy tie_policy_from_name(std::string_view name) {
    if (name == "drop") return TiePolicy::drop;
    if (name == "prefer_reference" || name == "prefer-reference") return TiePolicy::prefer_reference;
    fail(ErrorKind::usage, "unknown tie policy '" + std::string(name) + "'");
}

struct PreferencePair {
    std::string prompt_id;
    std::string chosen_model;
    std::string rejected_model;
    std::optional<std::string> chosen_text;
    std::optional<std::string> rejected_text;
    double chosen_score = 0.0;   // raw reward score, before any offset
    double rejected_score = 0.0;
    std::map<std::string, double> applied_offsets;
    bool calibrated = false;
};

struct PreferenceDataset {
    std::vector<PreferencePair> pairs;
    std::size_t dropped_ties = 0;
    std::set<std::string> source_models;
    std::map<std::string, double> offsets;
    TiePolicy tie_policy = TiePolicy::drop;
};

namespace detail {

/// Shared pair-emission rule: pick argmax/argmin of (score + offset) over the
/// candidate records (in list order; the first strict max/min wins). A full
/// tie (max == min) falls to the tie policy: drop, or prefer the last model
/// in the list — which for a pairwise [over, reference] list is the
/// reference.
inline void emit_pair(PreferenceDataset& dataset, const std::string& prompt,
                      const std::vector<const ScoreRecord*>& candidates,
                      const std::map<std::string, double>& offsets, TiePolicy policy,
                      bool calibrated) {
    const auto offset_of = [&](const ScoreRecord* rec) {
        auto it = offsets.find(rec->model_id);
        return it == offsets.end() ? 0.0 : it->second;
    };
    std::size_t best = 0, worst = 0;
    for (std::size_t k = 1; k < candidates.size(); ++k) {
        const double v = candidates[k]->score + offset_of(candidates[k]);
        if (v > candidates[best]->score + offset_of(candidates[best])) best = k;
        if (v < candidates[worst]->score + offset_of(candidates[worst])) worst = k;
    }
    const double top = candidates[best]->score + offset_of(candidates[best]);
    const double bottom = candidates[worst]->score + offset_of(candidates[worst]);
    if (top == bottom) {
        if (policy == TiePolicy::drop) {
            ++dataset.dropped_ties;
            return;
        }
        best = candidates.size() - 1;
        worst = 0;
    }
    PreferencePair pair;
    pair.prompt_id = prompt;
    pair.chosen_model = candidates[best]->model_id;
    pair.rejected_model = candidates[worst]->model_id;
    pair.chosen_text = candidates[best]->response_text;
    pair.rejected_text = candidates[worst]->response_text;
    pair.chosen_score = candidates[best]->score;
    pair.rejected_score = candidates[worst]->score;
    pair.applied_offsets = offsets;
    pair.calibrated = calibrated;
    dataset.pairs.push_back(std::move(pair));
}

} // namespace detail

/// Build the pairwise preference dataset: for each shared prompt the chosen
/// response is argmax(s_over + offset, s_ref). offset = 0 reproduces the
/// uncalibrated dataset.
inline PreferenceDataset build_pairs(const ScoreTable& table, const std::string& over_valued,
                                     const std::string& reference, double offset,
                                     TiePolicy policy = TiePolicy::drop) {
    if (over_valued == reference)
        fail(ErrorKind::usage, "over-valued and reference model must differ");
    table.require_model(over_valued);
    table.require_model(reference);
    const auto shared = table.shared_prompts(over_valued, reference);
    if (shared.empty())
        fail(ErrorKind::ingest,
             "no shared prompts between '" + over_valued + "' and '" + reference + "'");

    PreferenceDataset dataset;
    dataset.tie_policy = policy;
    dataset.source_models = {over_valued, reference};
    dataset.offsets = {{over_valued, offset}, {reference, 0.0}};
    const bool calibrated = offset != 0.0;
    for (const std::string& prompt : shared)
        detail::emit_pair(dataset, prompt,
                          {table.find(prompt, over_valued), table.find(prompt, reference)},
                          dataset.offsets, policy, calibrated);
    return dataset;
}

/// Multi-model variant: per prompt with at least two scored models, chosen =
/// argmax of (score + offset), rejected = argmin. Offsets shifted by a
/// common constant yield the identical dataset.
inline PreferenceDataset build_pairs_multi(const ScoreTable& table,
                                           const std::vector<std::string>& models,
                                           const std::map<std::string, double>& offsets,
                                           TiePolicy policy = TiePolicy::drop) {
    if (models.size() < 2) fail(ErrorKind::usage, "need at least two models");
    for (const std::string& model : models) table.require_model(model);

    PreferenceDataset dataset;
    dataset.tie_policy = policy;
    dataset.source_models.insert(models.begin(), models.end());
    dataset.offsets = offsets;
    bool calibrated = false;
    for (const auto& [_, delta] : offsets)
        if (delta != 0.0) calibrated = true;

    bool any_prompt = false;
    for (const std::string& prompt : table.prompts()) {
        std::vector<const ScoreRecord*> candidates;
        for (const std::string& model : models)
            if (const ScoreRecord* rec = table.find(prompt, model)) candidates.push_back(rec);
        if (candidates.size() < 2) continue;
        any_prompt = true;
        detail::emit_pair(dataset, prompt, candidates, offsets, policy, calibrated);
    }
    if (!any_prompt)
        fail(ErrorKind::ingest, "no prompt is scored by at least two of the given models");
    return dataset;
}

/// Mean Bradley-Terry loss -log sigmoid(score(chosen) - score(rejected)) of
/// an arbitrary score assignment on the dataset. Evaluation only.
inline double bt_loss(const PreferenceDataset& dataset,
                      const std::function<std::optional<double>(const std::string&,
                                                                const std::string&)>& scorer) {
    if (dataset.pairs.empty()) fail(ErrorKind::usage, "empty preference dataset");
    double sum = 0.0;
    for (const PreferencePair& pair : dataset.pairs) {
        const auto chosen = scorer(pair.prompt_id, pair.chosen_model);
        const auto rejected = scorer(pair.prompt_id, pair.rejected_model);
        if (!chosen || !rejected)
            fail(ErrorKind::ingest, "missing score for pair on prompt '" + pair.prompt_id + "'");
        sum += neg_log_sigmoid(*chosen - *rejected);
    }
    return sum / static_cast<double>(dataset.pairs.size());
}

/// Convenience scorer: raw table scores plus optional per-model offsets.
inline double bt_loss(const PreferenceDataset& dataset, const ScoreTable& table,
                      const std::map<std::string, double>& offsets = {}) {
    return bt_loss(dataset, [&](const std::string& prompt,
                                const std::string& model) -> std::optional<double> {
        const ScoreRecord* rec = table.find(prompt, model);
        if (!rec) return std::nullopt;
        auto it = offsets.find(model);
        return rec->score + (it == offsets.end() ? 0.0 : it->second);
    });
}

// ---------------------------------------------------------------------------
// Preference file: one header record (offsets, tie policy, source models,
// optional manifest) followed by one record per pair.
// ---------------------------------------------------------------------------

inline void write_prefs(const PreferenceDataset& dataset, std::ostream& out,
                        const nlohmann::json* manifest = nullptr) {
    nlohmann::json header;
    header["type"] = "header";
    header["tie_policy"] = tie_policy_name(dataset.tie_policy);
    header["dropped_ties"] = dataset.dropped_ties;
    header["source_models"] = dataset.source_models;
    header["offsets"] = dataset.offsets;
    if (manifest) header["manifest"] = *manifest;
    out << header.dump() << '\n';
    for (const PreferencePair& pair : dataset.pairs) {
        nlohmann::json obj;
        obj["type"] = "pair";
        obj["prompt_id"] = pair.prompt_id;
        obj["chosen_model"] = pair.chosen_model;
        obj["rejected_model"] = pair.rejected_model;
        if (pair.chosen_text) obj["chosen_text"] = *pair.chosen_text;
        if (pair.rejected_text) obj["rejected_text"] = *pair.rejected_text;
        obj["chosen_score"] = pair.chosen_score;
        obj["rejected_score"] = pair.rejected_score;
        obj["calibrated"] = pair.calibrated;
        // category-merged datasets carry per-pair offsets that differ from
        // the header (one offset per category slice)
        if (pair.applied_offsets != dataset.offsets)
            obj["applied_offsets"] = pair.applied_offsets;
        out << obj.dump() << '\n';
    }
}

inline PreferenceDataset read_prefs(std::istream& in, std::string_view source) {
    PreferenceDataset dataset;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;
        nlohmann::json obj = detail::parse_json_line(line, source, line_no);
        const std::string type = obj.value("type", "");
        if (type == "header") {
            saw_header = true;
            dataset.tie_policy = tie_policy_from_name(obj.value("tie_policy", "drop"));
            dataset.dropped_ties = obj.value("dropped_ties", std::size_t{0});
            if (obj.contains("source_models"))
                for (const auto& model : obj["source_models"])
                    dataset.source_models.insert(model.get<std::string>());
            if (obj.contains("offsets"))
                for (auto it = obj["offsets"].begin(); it != obj["offsets"].end(); ++it)
                    dataset.offsets[it.key()] = it.value().get<double>();
        } else if (type == "pair") {
            PreferencePair pair;
            pair.prompt_id = obj.at("prompt_id").get<std::string>();
            pair.chosen_model = obj.at("chosen_model").get<std::string>();
            pair.rejected_model = obj.at("rejected_model").get<std::string>();
            pair.chosen_text = detail::optional_string_field(obj, "chosen_text", source, line_no);
            pair.rejected_text =
                detail::optional_string_field(obj, "rejected_text", source, line_no);
            pair.chosen_score = obj.value("chosen_score", 0.0);
            pair.rejected_score = obj.value("rejected_score", 0.0);
            pair.calibrated = obj.value("calibrated", false);
            if (obj.contains("applied_offsets"))
                for (auto it = obj["applied_offsets"].begin(); it != obj["applied_offsets"].end();
                     ++it)
                    pair.applied_offsets[it.key()] = it.value().get<double>();
            dataset.pairs.push_back(std::move(pair));
        } else if (type != "manifest") {
            fail(ErrorKind::ingest,
                 detail::location(source, line_no) + ": unknown record type '" + type + "'");
        }
    }
    if (!saw_header && dataset.pairs.empty())
        fail(ErrorKind::ingest, std::string(source) + ": not a preference dataset file");
    for (PreferencePair& pair : dataset.pairs)
        if (pair.applied_offsets.empty()) pair.applied_offsets = dataset.offsets;
    return dataset;
}

inline PreferenceDataset load_prefs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ingest, "cannot open preference file '" + path.string() + "'");
    return read_prefs(in, path.string());
}

inline void save_prefs(const PreferenceDataset& dataset, const std::filesystem::path& path,
                       const nlohmann::json* manifest = nullptr) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::ingest, "cannot write preference file '" + path.string() + "'");
    write_prefs(dataset, out, manifest);
}

} // namespace rmcalib

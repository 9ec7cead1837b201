#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rmcalib/error.hpp"

namespace rmcalib {

/// One reward score assigned to (prompt, policy model).
struct ScoreRecord {
    std::string prompt_id;
    std::string model_id;
    double score = 0.0;
    std::optional<std::string> response_text;
    std::optional<std::string> category;
    std::optional<std::string> style_label;
};

/// Immutable index over one ingested score set.
///
/// Construction enforces the two ingest invariants: every score is finite
/// and (prompt_id, model_id) is unique. Prompts are kept in lexicographic
/// order so every downstream mean over i = 1..N is reproducible.
class ScoreTable {
public:
    ScoreTable() = default;

    static ScoreTable from_records(std::vector<ScoreRecord> records) {
        ScoreTable table;
        table.records_ = std::move(records);
        std::set<std::string> prompt_set;
        for (std::size_t i = 0; i < table.records_.size(); ++i) {
            const ScoreRecord& rec = table.records_[i];
            if (!std::isfinite(rec.score))
                fail(ErrorKind::ingest, "non-finite score for (" + rec.prompt_id + ", " +
                                            rec.model_id + ")");
            auto [it, inserted] =
                table.index_.emplace(std::make_pair(rec.prompt_id, rec.model_id), i);
            if (!inserted)
                fail(ErrorKind::ingest, "duplicate record for (" + rec.prompt_id + ", " +
                                            rec.model_id + ")");
            table.models_.insert(rec.model_id);
            prompt_set.insert(rec.prompt_id);
            table.prompts_by_model_[rec.model_id].push_back(rec.prompt_id);
        }
        table.prompts_.assign(prompt_set.begin(), prompt_set.end());
        for (auto& [model, prompts] : table.prompts_by_model_)
            std::sort(prompts.begin(), prompts.end());
        return table;
    }

    const std::vector<ScoreRecord>& records() const { return records_; }
    const std::set<std::string>& models() const { return models_; }
    const std::vector<std::string>& prompts() const { return prompts_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    bool has_model(const std::string& model_id) const { return models_.count(model_id) > 0; }

    /// Record lookup; nullptr when the pair is absent.
    const ScoreRecord* find(const std::string& prompt_id, const std::string& model_id) const {
        auto it = index_.find(std::make_pair(prompt_id, model_id));
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    /// Prompts answered by both models, lexicographic. This intersection
    /// defines the N used by every pairwise win-rate computation.
    std::vector<std::string> shared_prompts(const std::string& a, const std::string& b) const {
        require_model(a);
        require_model(b);
        const auto& pa = prompts_by_model_.at(a);
        const auto& pb = prompts_by_model_.at(b);
        std::vector<std::string> shared;
        std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(),
                              std::back_inserter(shared));
        return shared;
    }

    void require_model(const std::string& model_id) const {
        if (!has_model(model_id))
            fail(ErrorKind::usage, "unknown model '" + model_id + "' in score table");
    }

private:
    std::vector<ScoreRecord> records_;
    std::set<std::string> models_;
    std::vector<std::string> prompts_;
    std::map<std::pair<std::string, std::string>, std::size_t> index_;
    std::map<std::string, std::vector<std::string>> prompts_by_model_;
};

/// Map from policy-model identifier to its arena Elo rating.
class EloTable {
public:
    EloTable() = default;

    static EloTable from_entries(std::map<std::string, double> entries) {
        for (const auto& [model, elo] : entries)
            if (!std::isfinite(elo))
                fail(ErrorKind::ingest, "non-finite Elo rating for '" + model + "'");
        EloTable table;
        table.entries_ = std::move(entries);
        return table;
    }

    void insert(const std::string& model_id, double elo) {
        if (!std::isfinite(elo))
            fail(ErrorKind::ingest, "non-finite Elo rating for '" + model_id + "'");
        if (!entries_.emplace(model_id, elo).second)
            fail(ErrorKind::ingest, "duplicate Elo entry for '" + model_id + "'");
    }

    bool has(const std::string& model_id) const { return entries_.count(model_id) > 0; }

    double rating(const std::string& model_id) const {
        auto it = entries_.find(model_id);
        if (it == entries_.end())
            fail(ErrorKind::usage, "model '" + model_id + "' has no Elo rating");
        return it->second;
    }

    const std::map<std::string, double>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, double> entries_;
};

} // namespace rmcalib

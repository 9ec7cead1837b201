#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmcalib/error.hpp"
#include "rmcalib/ingest.hpp"
#include "rmcalib/logistic.hpp"
#include "rmcalib/types.hpp"

namespace rmcalib {

// Chatbot-Arena rating semantics: base 10, scale 400. Not configurable.
inline constexpr double kEloBase = 10.0;
inline constexpr double kEloScale = 400.0;

/// Expected win rate of the first player: 1 / (1 + 10^((elo_r - elo_o)/400)).
/// Evaluated as a logistic sigmoid of the rating difference, which is
/// overflow-safe and symmetric: value(a,b) + value(b,a) = 1 up to rounding.
inline double expected_win_rate(double elo_o, double elo_r) {
    if (!std::isfinite(elo_o) || !std::isfinite(elo_r))
        fail(ErrorKind::usage, "expected_win_rate requires finite ratings");
    static const double ln_base = std::log(kEloBase);
    return sigmoid((elo_o - elo_r) * ln_base / kEloScale);
}

/// Effective win probability of a win/tie/loss process scored 1/0.5/0:
/// ties split evenly between wins and losses.
inline double split_ties(double p_win, double p_tie) {
    if (!(p_win >= 0.0) || !(p_tie >= 0.0) || p_win + p_tie > 1.0 + 1e-12)
        fail(ErrorKind::usage, "split_ties requires p_win, p_tie >= 0 and p_win + p_tie <= 1");
    return p_win + 0.5 * p_tie;
}

enum class BattleResult { a_wins, b_wins, tie };

inline const char* battle_result_name(BattleResult result) {
    switch (result) {
        case BattleResult::a_wins: return "a_wins";
        case BattleResult::b_wins: return "b_wins";
        case BattleResult::tie: return "tie";
    }
    return "?";
}

inline BattleResult battle_result_from_name(std::string_view name, std::string_view source,
                                            std::size_t line_no) {
    if (name == "a_wins") return BattleResult::a_wins;
    if (name == "b_wins") return BattleResult::b_wins;
    if (name == "tie") return BattleResult::tie;
    fail(ErrorKind::ingest, detail::location(source, line_no) + ": unknown battle result '" +
                                std::string(name) + "'");
}

/// One pairwise comparison between two distinct models.
struct BattleOutcome {
    std::string model_a;
    std::string model_b;
    BattleResult result = BattleResult::tie;
};

struct EloFitOptions {
    double k_factor = 32.0;
    double initial_rating = 1000.0;
};

/// Online Elo rating fit: after each battle, R <- R + K * (S - E) with
/// S in {1, 0.5, 0} and E from expected_win_rate. Order-dependent by
/// definition; both players use the pre-update ratings, so total rating
/// points are conserved.
inline EloTable fit_elo(std::span<const BattleOutcome> battles,
                        const EloFitOptions& options = {}) {
    if (!(options.k_factor > 0.0))
        fail(ErrorKind::usage, "fit_elo requires a positive k_factor");
    if (battles.empty()) fail(ErrorKind::usage, "fit_elo requires at least one battle");

    std::map<std::string, double> ratings;
    for (const BattleOutcome& battle : battles) {
        if (battle.model_a == battle.model_b)
            fail(ErrorKind::ingest,
                 "battle pits '" + battle.model_a + "' against itself");
        double& ra = ratings.try_emplace(battle.model_a, options.initial_rating).first->second;
        double& rb = ratings.try_emplace(battle.model_b, options.initial_rating).first->second;
        const double ea = expected_win_rate(ra, rb);
        const double eb = expected_win_rate(rb, ra);
        double sa = 0.5;
        if (battle.result == BattleResult::a_wins) sa = 1.0;
        if (battle.result == BattleResult::b_wins) sa = 0.0;
        const double sb = 1.0 - sa;
        ra += options.k_factor * (sa - ea);
        rb += options.k_factor * (sb - eb);
    }
    return EloTable::from_entries(std::move(ratings));
}

/// Battle log: one (model_a, model_b, result) record per line, JSON object
/// or model_a<TAB>model_b<TAB>result. Lines carrying a "type" field (e.g. an
/// embedded manifest) are skipped.
inline std::vector<BattleOutcome> parse_battles(std::istream& in, std::string_view source) {
    std::vector<BattleOutcome> battles;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;
        BattleOutcome battle;
        const std::size_t first = line.find_first_not_of(" \t");
        if (line[first] == '{') {
            nlohmann::json obj = detail::parse_json_line(line, source, line_no);
            if (obj.contains("type")) continue;
            auto a = detail::optional_string_field(obj, "model_a", source, line_no);
            auto b = detail::optional_string_field(obj, "model_b", source, line_no);
            auto r = detail::optional_string_field(obj, "result", source, line_no);
            if (!a || !b || !r)
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": record needs model_a, model_b, and result");
            battle.model_a = *a;
            battle.model_b = *b;
            battle.result = battle_result_from_name(*r, source, line_no);
        } else {
            auto fields = detail::split_tabs(line);
            if (fields.size() != 3)
                fail(ErrorKind::ingest, detail::location(source, line_no) +
                                            ": expected model_a<TAB>model_b<TAB>result");
            battle.model_a = std::string(fields[0]);
            battle.model_b = std::string(fields[1]);
            battle.result = battle_result_from_name(fields[2], source, line_no);
        }
        battles.push_back(std::move(battle));
    }
    return battles;
}

inline std::vector<BattleOutcome> load_battles(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ingest, "cannot open battle log '" + path.string() + "'");
    return parse_battles(in, path.string());
}

inline void write_battles(std::span<const BattleOutcome> battles, std::ostream& out) {
    for (const BattleOutcome& battle : battles) {
        nlohmann::json obj;
        obj["model_a"] = battle.model_a;
        obj["model_b"] = battle.model_b;
        obj["result"] = battle_result_name(battle.result);
        out << obj.dump() << '\n';
    }
}

} // namespace rmcalib

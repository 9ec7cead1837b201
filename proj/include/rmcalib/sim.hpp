#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmcalib/calibrate.hpp"
#include "rmcalib/elo.hpp"
#include "rmcalib/error.hpp"
#include "rmcalib/rng.hpp"
#include "rmcalib/types.hpp"

namespace rmcalib {

/// One synthetic policy model: its true arena strength, an injected
/// per-model score bias, and the reward-score noise level.
struct SyntheticModelSpec {
    std::string model_id;
    double true_elo = 1000.0;
    double bias = 0.0;
    double score_noise_std = 0.0;
};

struct SimConfig {
    std::uint64_t seed = 1;
    std::size_t n_prompts = 0;
    std::size_t n_battles = 0;
    double p_tie = 0.0;
    std::vector<SyntheticModelSpec> models;
};

inline SimConfig parse_sim_config(std::istream& in, std::string_view source) {
    nlohmann::json obj = nlohmann::json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
        fail(ErrorKind::ingest, std::string(source) + ": malformed simulation config");
    SimConfig config;
    config.seed = obj.value("seed", std::uint64_t{1});
    config.n_prompts = obj.value("n_prompts", std::size_t{0});
    config.n_battles = obj.value("n_battles", std::size_t{0});
    config.p_tie = obj.value("p_tie", 0.0);
    if (!(config.p_tie >= 0.0 && config.p_tie < 1.0))
        fail(ErrorKind::ingest, std::string(source) + ": p_tie must lie in [0, 1)");
    if (!obj.contains("models") || !obj["models"].is_array())
        fail(ErrorKind::ingest, std::string(source) + ": config needs a models array");
    for (const auto& entry : obj["models"]) {
        SyntheticModelSpec spec;
        spec.model_id = entry.value("model_id", "");
        spec.true_elo = entry.value("true_elo", 1000.0);
        spec.bias = entry.value("bias", 0.0);
        spec.score_noise_std = entry.value("score_noise_std", 0.0);
        if (spec.model_id.empty())
            fail(ErrorKind::ingest, std::string(source) + ": every model needs a model_id");
        if (!(spec.score_noise_std >= 0.0))
            fail(ErrorKind::ingest, std::string(source) + ": score_noise_std must be >= 0");
        if (!std::isfinite(spec.true_elo) || !std::isfinite(spec.bias))
            fail(ErrorKind::ingest, std::string(source) + ": non-finite model parameter");
        config.models.push_back(std::move(spec));
    }
    return config;
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ingest, "cannot open simulation config '" + path.string() + "'");
    return parse_sim_config(in, path.string());
}

/// Monotone map from arena rating to latent score skill, chosen so that at
/// zero noise and zero bias the sigmoid of score differences reproduces the
/// rating-based expected win rate exactly.
inline double skill_from_elo(double elo) {
    static const double ln_base = std::log(kEloBase);
    return (elo - 1000.0) / kEloScale * ln_base;
}

/// Sample pairwise battles from the true ratings. Ties occur independently
/// with probability p_tie; the win probability is adjusted so the expected
/// score (1/0.5/0) equals the rating-based expected win rate exactly.
inline std::vector<BattleOutcome> simulate_battles(const SimConfig& config) {
    const std::size_t m = config.models.size();
    if (m < 2) fail(ErrorKind::usage, "battle simulation needs at least two models");
    if (config.n_battles < 1) fail(ErrorKind::usage, "battle simulation needs n_battles >= 1");

    Rng rng(config.seed);
    std::vector<BattleOutcome> battles;
    battles.reserve(config.n_battles);
    for (std::size_t b = 0; b < config.n_battles; ++b) {
        const std::size_t i = rng.uniform_index(m);
        std::size_t j = rng.uniform_index(m - 1);
        if (j >= i) ++j;
        const double p =
            expected_win_rate(config.models[i].true_elo, config.models[j].true_elo);
        const double p_win = std::clamp(p - 0.5 * config.p_tie, 0.0, 1.0 - config.p_tie);
        const double u = rng.uniform01();
        BattleOutcome battle;
        battle.model_a = config.models[i].model_id;
        battle.model_b = config.models[j].model_id;
        if (u < p_win)
            battle.result = BattleResult::a_wins;
        else if (u < p_win + config.p_tie)
            battle.result = BattleResult::tie;
        else
            battle.result = BattleResult::b_wins;
        battles.push_back(std::move(battle));
    }
    return battles;
}

/// Synthetic reward scores: per prompt a latent difficulty u ~ N(0,1), per
/// model score = u + skill(elo) + bias + noise_std * N(0,1). The random
/// stream does not depend on bias or noise_std values, so two configs
/// differing only in biases share identical noise draws.
inline ScoreTable simulate_scores(const SimConfig& config) {
    if (config.n_prompts < 1) fail(ErrorKind::usage, "score simulation needs n_prompts >= 1");
    if (config.models.empty()) fail(ErrorKind::usage, "score simulation needs models");

    const int width = static_cast<int>(std::to_string(config.n_prompts).size());
    Rng rng(config.seed);
    std::vector<ScoreRecord> records;
    records.reserve(config.n_prompts * config.models.size());
    for (std::size_t p = 0; p < config.n_prompts; ++p) {
        std::ostringstream id;
        id << 'p' << std::setw(width) << std::setfill('0') << p;
        const std::string prompt_id = id.str();
        const double difficulty = rng.normal();
        for (const SyntheticModelSpec& model : config.models) {
            ScoreRecord rec;
            rec.prompt_id = prompt_id;
            rec.model_id = model.model_id;
            rec.score = difficulty + skill_from_elo(model.true_elo) + model.bias +
                        model.score_noise_std * rng.normal();
            records.push_back(std::move(rec));
        }
    }
    return ScoreTable::from_records(std::move(records));
}

// ---------------------------------------------------------------------------
// Recovery suite: end-to-end oracles for rating fits and offset recovery.
// ---------------------------------------------------------------------------

struct RecoveryOptions {
    // Small K keeps the online fit tight enough for ordering checks; the
    // CLI replay default stays at 32.
    EloFitOptions elo_fit{8.0, 1000.0};
    double solver_tol = 1e-10;
    double offset_tolerance = 0.15;
    JointOptions joint;
};

struct ModelRecovery {
    std::string model_id;
    double true_elo = 0.0;
    double recovered_elo = 0.0;
    double injected_bias = 0.0;
    double joint_offset = 0.0;    // from the biased run
    double baseline_offset = 0.0; // from the zero-bias run on identical noise
    double predicted_offset = 0.0;
    double offset_error = 0.0;
};

struct PairRecovery {
    std::string over_valued; // higher injected bias first
    std::string reference;
    bool biased = false;
    double expected = 0.0;
    double pre_md = 0.0;
    double post_md = 0.0;
    double solved_offset = 0.0;
    double md_bound = 0.0;
    std::size_t battle_count = 0;
    double battle_fraction = 0.0;
    double battle_sigma = 0.0;
    bool battle_within_3sigma = true;
};

struct RecoveryReport {
    std::vector<ModelRecovery> models;
    std::vector<PairRecovery> pairs;
    std::string anchor;
    double max_offset_error = 0.0;
    bool ordering_recovered = false;
    bool battles_within_3sigma = false;
    bool md_reduced_on_biased_pairs = false;
    bool post_md_within_bound = false;
    bool offsets_recovered = false;

    bool all_checks_passed() const {
        return ordering_recovered && battles_within_3sigma && md_reduced_on_biased_pairs &&
               post_md_within_bound && offsets_recovered;
    }
};

/// Run the full loop: fit ratings from simulated battles, calibrate
/// simulated scores, and verify every oracle the harness provides.
///
/// Offset recovery is checked against the exact shift-invariance oracle: a
/// second, zero-bias simulation on the identical noise stream is solved and
/// the biased offsets must differ from it by -(bias - bias_anchor).
inline RecoveryReport run_recovery_suite(const SimConfig& config,
                                         const RecoveryOptions& options = {}) {
    const std::size_t m = config.models.size();
    if (m < 2) fail(ErrorKind::usage, "recovery suite needs at least two models");

    RecoveryReport report;

    // --- battle side -------------------------------------------------------
    const std::vector<BattleOutcome> battles = simulate_battles(config);
    const EloTable fitted = fit_elo(battles, options.elo_fit);

    std::vector<std::string> by_true(m), by_fit(m);
    for (std::size_t i = 0; i < m; ++i) by_true[i] = config.models[i].model_id;
    by_fit = by_true;
    const auto true_elo_of = [&](const std::string& id) {
        for (const auto& spec : config.models)
            if (spec.model_id == id) return spec.true_elo;
        return 0.0;
    };
    std::sort(by_true.begin(), by_true.end(), [&](const auto& a, const auto& b) {
        return std::make_pair(true_elo_of(a), a) < std::make_pair(true_elo_of(b), b);
    });
    std::sort(by_fit.begin(), by_fit.end(), [&](const auto& a, const auto& b) {
        return std::make_pair(fitted.rating(a), a) < std::make_pair(fitted.rating(b), b);
    });
    report.ordering_recovered = by_true == by_fit;

    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, double>> battle_stats;
    for (const BattleOutcome& battle : battles) {
        const bool flip = battle.model_a > battle.model_b;
        const auto key = flip ? std::make_pair(battle.model_b, battle.model_a)
                              : std::make_pair(battle.model_a, battle.model_b);
        double score_first = 0.5;
        if (battle.result == BattleResult::a_wins) score_first = 1.0;
        if (battle.result == BattleResult::b_wins) score_first = 0.0;
        if (flip) score_first = 1.0 - score_first;
        auto& [count, sum] = battle_stats[key];
        ++count;
        sum += score_first;
    }

    // --- score side --------------------------------------------------------
    const ScoreTable scores = simulate_scores(config);
    SimConfig baseline_config = config;
    for (SyntheticModelSpec& spec : baseline_config.models) spec.bias = 0.0;
    const ScoreTable baseline_scores = simulate_scores(baseline_config);

    EloTable true_elo;
    std::vector<std::string> model_ids;
    for (const SyntheticModelSpec& spec : config.models) {
        true_elo.insert(spec.model_id, spec.true_elo);
        model_ids.push_back(spec.model_id);
    }

    JointOptions joint = options.joint;
    if (joint.anchor.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (config.models[i].true_elo > config.models[best].true_elo) best = i;
        joint.anchor = config.models[best].model_id;
    }
    const JointCalibrationResult biased_fit =
        solve_offsets_joint(scores, true_elo, model_ids, joint);
    const JointCalibrationResult baseline_fit =
        solve_offsets_joint(baseline_scores, true_elo, model_ids, joint);
    report.anchor = biased_fit.anchor;

    const auto bias_of = [&](const std::string& id) {
        for (const auto& spec : config.models)
            if (spec.model_id == id) return spec.bias;
        return 0.0;
    };
    const double anchor_bias = bias_of(joint.anchor);
    report.offsets_recovered = true;
    for (const SyntheticModelSpec& spec : config.models) {
        ModelRecovery rec;
        rec.model_id = spec.model_id;
        rec.true_elo = spec.true_elo;
        rec.recovered_elo = fitted.has(spec.model_id) ? fitted.rating(spec.model_id)
                                                      : options.elo_fit.initial_rating;
        rec.injected_bias = spec.bias;
        rec.joint_offset = biased_fit.offsets.at(spec.model_id);
        rec.baseline_offset = baseline_fit.offsets.at(spec.model_id);
        rec.predicted_offset = rec.baseline_offset - (spec.bias - anchor_bias);
        rec.offset_error = rec.joint_offset - rec.predicted_offset;
        report.max_offset_error = std::max(report.max_offset_error, std::fabs(rec.offset_error));
        if (std::fabs(rec.offset_error) > options.offset_tolerance)
            report.offsets_recovered = false;
        report.models.push_back(std::move(rec));
    }

    // --- per-pair mismatch before/after scalar calibration ------------------
    report.battles_within_3sigma = true;
    report.md_reduced_on_biased_pairs = true;
    report.post_md_within_bound = true;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const SyntheticModelSpec& a = config.models[i];
            const SyntheticModelSpec& b = config.models[j];
            const bool a_over = a.bias != b.bias ? a.bias > b.bias : a.model_id < b.model_id;
            const SyntheticModelSpec& over = a_over ? a : b;
            const SyntheticModelSpec& ref = a_over ? b : a;

            PairRecovery pair;
            pair.over_valued = over.model_id;
            pair.reference = ref.model_id;
            pair.biased = a.bias != b.bias;

            const PairwiseScores ps =
                PairwiseScores::from_table(scores, over.model_id, ref.model_id);
            pair.expected = expected_win_rate(over.true_elo, ref.true_elo);
            pair.pre_md = mismatch_degree(ps, true_elo, 0.0).md;
            const CalibrationResult solved =
                solve_offset(ps, pair.expected, options.solver_tol);
            pair.solved_offset = solved.offset();
            pair.post_md = mismatch_degree(ps, true_elo, pair.solved_offset).md;
            pair.md_bound = std::max(2.0 * options.solver_tol,
                                     1.0 / static_cast<double>(ps.n()));
            if (pair.biased && pair.post_md > pair.pre_md)
                report.md_reduced_on_biased_pairs = false;
            if (pair.post_md > pair.md_bound) report.post_md_within_bound = false;

            const auto key = over.model_id < ref.model_id
                                 ? std::make_pair(over.model_id, ref.model_id)
                                 : std::make_pair(ref.model_id, over.model_id);
            auto it = battle_stats.find(key);
            if (it != battle_stats.end()) {
                const auto [count, sum] = it->second;
                pair.battle_count = count;
                double frac = sum / static_cast<double>(count);
                double p = expected_win_rate(true_elo_of(key.first), true_elo_of(key.second));
                // Var of the 1/0.5/0 score under the tie-splitting sampler.
                const double p_win = std::clamp(p - 0.5 * config.p_tie, 0.0, 1.0 - config.p_tie);
                const double var = p_win + 0.25 * config.p_tie - p * p;
                pair.battle_fraction = frac;
                pair.battle_sigma = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
                pair.battle_within_3sigma = std::fabs(frac - p) <= 3.0 * pair.battle_sigma;
                if (!pair.battle_within_3sigma) report.battles_within_3sigma = false;
            }
            report.pairs.push_back(std::move(pair));
        }

    return report;
}

inline nlohmann::json recovery_report_to_json(const RecoveryReport& report) {
    nlohmann::json obj;
    obj["type"] = "recovery_report";
    obj["anchor"] = report.anchor;
    obj["max_offset_error"] = report.max_offset_error;
    obj["checks"] = {{"ordering_recovered", report.ordering_recovered},
                     {"battles_within_3sigma", report.battles_within_3sigma},
                     {"md_reduced_on_biased_pairs", report.md_reduced_on_biased_pairs},
                     {"post_md_within_bound", report.post_md_within_bound},
                     {"offsets_recovered", report.offsets_recovered},
                     {"all_passed", report.all_checks_passed()}};
    obj["models"] = nlohmann::json::array();
    for (const ModelRecovery& rec : report.models)
        obj["models"].push_back({{"model_id", rec.model_id},
                                 {"true_elo", rec.true_elo},
                                 {"recovered_elo", rec.recovered_elo},
                                 {"injected_bias", rec.injected_bias},
                                 {"joint_offset", rec.joint_offset},
                                 {"baseline_offset", rec.baseline_offset},
                                 {"predicted_offset", rec.predicted_offset},
                                 {"offset_error", rec.offset_error}});
    obj["pairs"] = nlohmann::json::array();
    for (const PairRecovery& pair : report.pairs)
        obj["pairs"].push_back({{"over_valued", pair.over_valued},
                                {"reference", pair.reference},
                                {"biased", pair.biased},
                                {"expected", pair.expected},
                                {"pre_md", pair.pre_md},
                                {"post_md", pair.post_md},
                                {"solved_offset", pair.solved_offset},
                                {"md_bound", pair.md_bound},
                                {"battle_count", pair.battle_count},
                                {"battle_fraction", pair.battle_fraction},
                                {"battle_sigma", pair.battle_sigma},
                                {"battle_within_3sigma", pair.battle_within_3sigma}});
    return obj;
}

inline void print_recovery_summary(const RecoveryReport& report, std::ostream& out) {
    out << "recovery suite (anchor " << report.anchor << ")\n";
    out << "  model            true_elo  fitted  bias   offset  predicted  error\n";
    for (const ModelRecovery& rec : report.models) {
        out << "  " << std::left << std::setw(16) << rec.model_id << std::right << std::fixed
            << std::setprecision(1) << std::setw(8) << rec.true_elo << std::setw(8)
            << rec.recovered_elo << std::setprecision(2) << std::setw(7) << rec.injected_bias
            << std::setprecision(4) << std::setw(9) << rec.joint_offset << std::setw(10)
            << rec.predicted_offset << std::setw(9) << rec.offset_error << "\n";
    }
    out << "  pair (over vs ref)                 pre_md    post_md   battle|3sigma\n";
    for (const PairRecovery& pair : report.pairs) {
        out << "  " << std::left << std::setw(33) << (pair.over_valued + " vs " + pair.reference)
            << std::right << std::fixed << std::setprecision(6) << std::setw(9) << pair.pre_md
            << std::setw(11) << pair.post_md << "   "
            << (pair.battle_within_3sigma ? "ok" : "FAIL") << "\n";
    }
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
    out << "  checks: ordering=" << (report.ordering_recovered ? "ok" : "FAIL")
        << " battles=" << (report.battles_within_3sigma ? "ok" : "FAIL")
        << " md_reduction=" << (report.md_reduced_on_biased_pairs ? "ok" : "FAIL")
        << " md_bound=" << (report.post_md_within_bound ? "ok" : "FAIL")
        << " offsets=" << (report.offsets_recovered ? "ok" : "FAIL")
        << " (max offset error " << report.max_offset_error << ")\n";
}

} // namespace rmcalib

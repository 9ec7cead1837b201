#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "rmcalib/elo.hpp"
#include "rmcalib/error.hpp"
#include "rmcalib/logistic.hpp"
#include "rmcalib/types.hpp"

namespace rmcalib {

/// Score differences s_over - s_ref on the shared prompt set, in
/// lexicographic prompt order.
struct PairwiseScores {
    std::string over_valued;
    std::string reference;
    std::vector<std::string> prompt_ids;
    std::vector<double> diffs;

    std::size_t n() const { return diffs.size(); }

    static PairwiseScores from_table(const ScoreTable& table, const std::string& over_valued,
                                     const std::string& reference) {
        if (over_valued == reference)
            fail(ErrorKind::usage, "over-valued and reference model must differ");
        PairwiseScores scores;
        scores.over_valued = over_valued;
        scores.reference = reference;
        scores.prompt_ids = table.shared_prompts(over_valued, reference);
        if (scores.prompt_ids.empty())
            fail(ErrorKind::ingest, "no shared prompts between '" + over_valued + "' and '" +
                                        reference + "'");
        scores.diffs.reserve(scores.prompt_ids.size());
        for (const std::string& prompt : scores.prompt_ids) {
            const double d = table.find(prompt, over_valued)->score -
                             table.find(prompt, reference)->score;
            if (!std::isfinite(d))
                fail(ErrorKind::ingest, "non-finite score difference on prompt '" + prompt + "'");
            scores.diffs.push_back(d);
        }
        return scores;
    }
};

/// Empirical win rate (1/N) * sum sigmoid(d_i + offset). offset = 0 gives
/// the uncalibrated value.
inline double empirical_win_rate(const PairwiseScores& scores, double offset) {
    double sum = 0.0;
    for (double d : scores.diffs) sum += sigmoid(d + offset);
    return sum / static_cast<double>(scores.diffs.size());
}

/// Squared deviation of the empirical win rate from the target probability.
inline double mse_loss(const PairwiseScores& scores, double offset, double target) {
    if (!(target > 0.0 && target < 1.0))
        fail(ErrorKind::usage, "target win rate must lie in (0, 1)");
    const double r = empirical_win_rate(scores, offset) - target;
    return r * r;
}

struct CalibrationResult {
    std::string over_valued;
    std::string reference;
    std::map<std::string, double> offsets; // reference pinned at 0
    double achieved_win_rate = 0.0;
    double target_win_rate = 0.0;
    double residual_loss = 0.0;
    int iterations = 0;
    bool converged = false;

    double offset() const { return offsets.at(over_valued); }
};

/// Solve for the offset driving the empirical win rate to the target.
///
/// The map offset -> win rate is continuous and strictly increasing with
/// limits 0 and 1, so a unique root exists for any target in (0, 1). The
/// root is bracketed by doubling outward from 0, then bisected; bisection
/// continues past the win-rate tolerance until the bracket itself is tight,
/// so the returned offset is pinned independently of the local slope.
inline CalibrationResult solve_offset(const PairwiseScores& scores, double target,
                                      double tol = 1e-10) {
    if (!(target > 0.0 && target < 1.0))
        fail(ErrorKind::usage, "target win rate must lie in (0, 1)");
    if (!(tol > 0.0)) fail(ErrorKind::usage, "solver tolerance must be positive");

    constexpr double kBracketCap = 1e9;
    const auto residual = [&](double offset) { return empirical_win_rate(scores, offset) - target; };

    int iterations = 0;
    double lo = -1.0, hi = 1.0;
    while (residual(lo) > 0.0) {
        hi = lo;
        lo *= 2.0;
        ++iterations;
        if (-lo > kBracketCap)
            fail(ErrorKind::solver, "offset bracket exceeded 1e9; input looks pathological");
    }
    while (residual(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        ++iterations;
        if (hi > kBracketCap)
            fail(ErrorKind::solver, "offset bracket exceeded 1e9; input looks pathological");
    }

    double mid = 0.5 * (lo + hi);
    for (int i = 0; i < 300 && hi - lo > 1e-11 * std::max(1.0, std::fabs(mid)); ++i) {
        mid = 0.5 * (lo + hi);
        if (residual(mid) <= 0.0)
            lo = mid;
        else
            hi = mid;
        ++iterations;
    }

    CalibrationResult result;
    result.over_valued = scores.over_valued;
    result.reference = scores.reference;
    const double offset = 0.5 * (lo + hi);
    result.offsets[scores.over_valued] = offset;
    result.offsets[scores.reference] = 0.0;
    result.achieved_win_rate = empirical_win_rate(scores, offset);
    result.target_win_rate = target;
    const double r = result.achieved_win_rate - target;
    result.residual_loss = r * r;
    result.iterations = iterations;
    result.converged = std::fabs(r) <= tol;
    if (!result.converged)
        fail(ErrorKind::solver, "bisection failed to reach the requested tolerance");
    return result;
}

enum class MismatchDirection { over_valued, under_valued, aligned };

inline const char* mismatch_direction_name(MismatchDirection direction) {
    switch (direction) {
        case MismatchDirection::over_valued: return "over_valued";
        case MismatchDirection::under_valued: return "under_valued";
        case MismatchDirection::aligned: return "aligned";
    }
    return "?";
}

struct MismatchReport {
    std::string over_valued;
    std::string reference;
    double empirical = 0.0;
    double expected = 0.0;
    double md = 0.0;
    MismatchDirection direction = MismatchDirection::aligned;
};

/// Mismatch Degree: |empirical - expected| / max(expected, 1 - expected).
inline double mismatch_degree_value(double empirical, double expected) {
    return std::fabs(empirical - expected) / std::max(expected, 1.0 - expected);
}

inline MismatchReport mismatch_degree(const PairwiseScores& scores, const EloTable& elo,
                                      double offset) {
    MismatchReport report;
    report.over_valued = scores.over_valued;
    report.reference = scores.reference;
    report.empirical = empirical_win_rate(scores, offset);
    report.expected = expected_win_rate(elo.rating(scores.over_valued),
                                        elo.rating(scores.reference));
    report.md = mismatch_degree_value(report.empirical, report.expected);
    if (report.empirical > report.expected)
        report.direction = MismatchDirection::over_valued;
    else if (report.empirical < report.expected)
        report.direction = MismatchDirection::under_valued;
    else
        report.direction = MismatchDirection::aligned;
    return report;
}

inline const std::string kOtherCategory = "Others";

struct CategoryCalibration {
    std::map<std::string, CalibrationResult> by_category;
    std::map<std::string, PairwiseScores> scores_by_category;
    std::vector<std::string> skipped; // categories with zero shared prompts
};

/// Split the shared prompts by category label and solve each slice
/// independently against the same Elo-derived target. A prompt's category
/// comes from the over-valued model's record (falling back to the
/// reference's); unlabeled prompts go to the reserved "Others" bucket.
inline CategoryCalibration calibrate_per_category(const ScoreTable& table, const EloTable& elo,
                                                  const std::string& over_valued,
                                                  const std::string& reference,
                                                  double tol = 1e-10) {
    PairwiseScores all = PairwiseScores::from_table(table, over_valued, reference);
    const double target = expected_win_rate(elo.rating(over_valued), elo.rating(reference));

    CategoryCalibration result;
    for (std::size_t i = 0; i < all.prompt_ids.size(); ++i) {
        const std::string& prompt = all.prompt_ids[i];
        const ScoreRecord* over_rec = table.find(prompt, over_valued);
        const ScoreRecord* ref_rec = table.find(prompt, reference);
        std::string category = kOtherCategory;
        if (over_rec->category)
            category = *over_rec->category;
        else if (ref_rec->category)
            category = *ref_rec->category;
        PairwiseScores& slice = result.scores_by_category[category];
        if (slice.prompt_ids.empty()) {
            slice.over_valued = over_valued;
            slice.reference = reference;
        }
        slice.prompt_ids.push_back(prompt);
        slice.diffs.push_back(all.diffs[i]);
    }

    // Categories present in either model's records but absent from the
    // shared-prompt partition are reported, not fatal.
    std::set<std::string> seen_categories;
    for (const ScoreRecord& rec : table.records())
        if ((rec.model_id == over_valued || rec.model_id == reference) && rec.category)
            seen_categories.insert(*rec.category);
    for (const std::string& category : seen_categories)
        if (!result.scores_by_category.count(category)) result.skipped.push_back(category);

    for (const auto& [category, slice] : result.scores_by_category)
        result.by_category.emplace(category, solve_offset(slice, target, tol));
    return result;
}

// ---------------------------------------------------------------------------
// Joint calibration over N models against the full Elo win-rate matrix.
// ---------------------------------------------------------------------------

using WinRateMatrix = std::vector<std::vector<double>>;

/// Elo-derived target matrix; diagonal entries are set to 0.5 but excluded
/// from every loss computation.
inline WinRateMatrix elo_target_matrix(const EloTable& elo,
                                       const std::vector<std::string>& models) {
    const std::size_t m = models.size();
    WinRateMatrix target(m, std::vector<double>(m, 0.5));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j)
                target[i][j] = expected_win_rate(elo.rating(models[i]), elo.rating(models[j]));
    return target;
}

namespace detail {

struct JointWorkspace {
    std::vector<std::string> models;
    // diffs for each unordered pair i < j, keyed by i*m + j
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> diffs;

    static JointWorkspace build(const ScoreTable& table, const std::vector<std::string>& models) {
        if (models.size() < 2)
            fail(ErrorKind::usage, "joint calibration needs at least two models");
        JointWorkspace ws;
        ws.models = models;
        for (std::size_t i = 0; i < models.size(); ++i)
            for (std::size_t j = i + 1; j < models.size(); ++j) {
                PairwiseScores ps = PairwiseScores::from_table(table, models[i], models[j]);
                ws.diffs.emplace(std::make_pair(i, j), std::move(ps.diffs));
            }
        return ws;
    }

    /// Mean sigmoid and mean sigmoid-derivative for pair (i, j) at the
    /// current offsets. Entry (j, i) is the mirror 1 - value.
    void pair_stats(std::size_t i, std::size_t j, double shift, double& mean_sig,
                    double& mean_slope) const {
        const std::vector<double>& d = diffs.at(std::make_pair(i, j));
        double sum = 0.0, slope = 0.0;
        for (double v : d) {
            const double s = sigmoid(v + shift);
            sum += s;
            slope += s * (1.0 - s);
        }
        mean_sig = sum / static_cast<double>(d.size());
        mean_slope = slope / static_cast<double>(d.size());
    }
};

} // namespace detail

/// Pairwise empirical win-rate matrix under per-model offsets:
/// entry (i, j) = mean sigmoid(s_i + offset_i - s_j - offset_j).
inline WinRateMatrix win_rate_matrix(const ScoreTable& table,
                                     const std::vector<std::string>& models,
                                     const std::map<std::string, double>& offsets) {
    auto ws = detail::JointWorkspace::build(table, models);
    const std::size_t m = models.size();
    WinRateMatrix matrix(m, std::vector<double>(m, 0.5));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double shift = (offsets.count(models[i]) ? offsets.at(models[i]) : 0.0) -
                                 (offsets.count(models[j]) ? offsets.at(models[j]) : 0.0);
            double mean_sig = 0.0, mean_slope = 0.0;
            ws.pair_stats(i, j, shift, mean_sig, mean_slope);
            matrix[i][j] = mean_sig;
            matrix[j][i] = 1.0 - mean_sig;
        }
    return matrix;
}

/// Mean squared error between the off-diagonal entries of the current and
/// target win-rate matrices; both (i, j) and (j, i) contribute.
inline double matrix_mse(const WinRateMatrix& current, const WinRateMatrix& target) {
    const std::size_t m = current.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) {
                const double r = current[i][j] - target[i][j];
                loss += r * r;
            }
    return loss / static_cast<double>(m * (m - 1));
}

inline double joint_loss(const ScoreTable& table, const EloTable& elo,
                         const std::vector<std::string>& models,
                         const std::map<std::string, double>& offsets) {
    return matrix_mse(win_rate_matrix(table, models, offsets), elo_target_matrix(elo, models));
}

struct JointOptions {
    std::string anchor;     // empty: highest-Elo model
    double step = 0.5;
    int max_iters = 10000;
    double tol = 1e-12;     // stop when the loss improvement falls below this
};

struct JointCalibrationResult {
    std::vector<std::string> models;
    std::string anchor;
    std::map<std::string, double> offsets;
    WinRateMatrix achieved;
    WinRateMatrix target;
    double residual_loss = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Gradient descent on the per-model offsets, minimizing matrix_mse with the
/// anchor offset pinned at 0 (the loss depends only on offset differences,
/// so one gauge pin is required for identifiability). The step is halved
/// whenever a proposed move fails to decrease the loss; ten consecutive loss
/// increases at the minimum step size abort with a solver error.
inline JointCalibrationResult solve_offsets_joint(const ScoreTable& table, const EloTable& elo,
                                                  const std::vector<std::string>& models,
                                                  const JointOptions& options = {}) {
    auto ws = detail::JointWorkspace::build(table, models);
    const std::size_t m = models.size();
    const WinRateMatrix target = elo_target_matrix(elo, models);

    std::size_t anchor_index = 0;
    if (options.anchor.empty()) {
        for (std::size_t i = 1; i < m; ++i)
            if (elo.rating(models[i]) > elo.rating(models[anchor_index])) anchor_index = i;
    } else {
        auto it = std::find(models.begin(), models.end(), options.anchor);
        if (it == models.end())
            fail(ErrorKind::usage, "anchor '" + options.anchor + "' is not among the models");
        anchor_index = static_cast<std::size_t>(it - models.begin());
    }
    if (!(options.step > 0.0)) fail(ErrorKind::usage, "joint solver step must be positive");

    const double norm = static_cast<double>(m * (m - 1));
    std::vector<double> offsets(m, 0.0), gradient(m, 0.0);

    const auto eval = [&](const std::vector<double>& delta, std::vector<double>* grad) {
        double loss = 0.0;
        if (grad) std::fill(grad->begin(), grad->end(), 0.0);
        for (const auto& [pair_key, _] : ws.diffs) {
            const auto [i, j] = pair_key;
            double mean_sig = 0.0, mean_slope = 0.0;
            ws.pair_stats(i, j, delta[i] - delta[j], mean_sig, mean_slope);
            const double r_ij = mean_sig - target[i][j];
            const double r_ji = (1.0 - mean_sig) - target[j][i];
            loss += r_ij * r_ij + r_ji * r_ji;
            if (grad) {
                const double g = 2.0 * (r_ij - r_ji) * mean_slope / norm;
                (*grad)[i] += g;
                (*grad)[j] -= g;
            }
        }
        return loss / norm;
    };

    double loss = eval(offsets, &gradient);
    double step = options.step;
    constexpr double kMinStep = 1e-12;
    int iterations = 0;
    int uphill_at_min_step = 0;
    bool converged = false;

    std::vector<double> candidate(m, 0.0);
    while (iterations < options.max_iters) {
        ++iterations;
        gradient[anchor_index] = 0.0;
        double grad_max = 0.0;
        for (double g : gradient) grad_max = std::max(grad_max, std::fabs(g));
        if (grad_max == 0.0) {
            converged = true;
            break;
        }
        for (std::size_t i = 0; i < m; ++i) candidate[i] = offsets[i] - step * gradient[i];
        const double candidate_loss = eval(candidate, nullptr);
        if (candidate_loss < loss) {
            const double improvement = loss - candidate_loss;
            offsets.swap(candidate);
            loss = eval(offsets, &gradient);
            uphill_at_min_step = 0;
            if (improvement <= options.tol) {
                converged = true;
                break;
            }
        } else if (step > kMinStep) {
            step = std::max(step * 0.5, kMinStep);
        } else {
            // Forced minimum-size step; repeated loss increases mean the
            // gradient no longer points downhill anywhere reachable.
            if (std::fabs(candidate_loss - loss) <=
                std::max(options.tol, 1e-18 * std::max(1.0, loss))) {
                converged = true;
                break;
            }
            if (++uphill_at_min_step >= 10)
                fail(ErrorKind::solver,
                     "joint solver diverged: loss increased 10 times at the minimum step size");
            offsets.swap(candidate);
            loss = eval(offsets, &gradient);
        }
    }

    JointCalibrationResult result;
    result.models = models;
    result.anchor = models[anchor_index];
    for (std::size_t i = 0; i < m; ++i) result.offsets[models[i]] = offsets[i];
    result.target = target;
    result.achieved = WinRateMatrix(m, std::vector<double>(m, 0.5));
    for (const auto& [pair_key, _] : ws.diffs) {
        const auto [i, j] = pair_key;
        double mean_sig = 0.0, mean_slope = 0.0;
        ws.pair_stats(i, j, offsets[i] - offsets[j], mean_sig, mean_slope);
        result.achieved[i][j] = mean_sig;
        result.achieved[j][i] = 1.0 - mean_sig;
    }
    result.residual_loss = matrix_mse(result.achieved, target);
    result.iterations = iterations;
    result.converged = converged;
    return result;
}

} // namespace rmcalib

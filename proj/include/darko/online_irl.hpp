#pragma once

// Online projected-gradient MaxEnt IRL, the batch comparator fit in
// hindsight, and regret bookkeeping.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "darko/mdp.hpp"
#include "darko/planner.hpp"

namespace darko {

struct RewardParams {
    Vec theta;
    double bound = 10.0;  // L2 radius B
};

struct Step {
    StateId state;
    Action action;
};

/// Steps between two goal arrivals; the last step enters terminal_goal.
struct Episode {
    StateId start = 0;
    std::vector<Step> steps;
    StateId terminal_goal = 0;
};

class EmptyEpisodeError : public std::invalid_argument {
public:
    EmptyEpisodeError() : std::invalid_argument("episode has no scored steps") {}
};

class NoGoalReachableError : public std::runtime_error {
public:
    NoGoalReachableError() : std::runtime_error("no goal reachable") {}
};

/// A step is scored when it leaves a non-goal state through a planning
/// action. Steps out of goal states have no policy (goals are absorbing).
bool is_scored(const GrowingMdp& mdp, const Step& step);
std::size_t scored_length(const GrowingMdp& mdp, const Episode& xi);

/// Sum and mean of f(s,a) over the scored steps.
Vec empirical_feature_sum(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features);
Vec empirical_feature_mean(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features);

/// Expected feature counts under a policy, goals absorbing.
struct ExpectedFeatures {
    Vec feature_sum;
    double expected_steps = 0.0;
    double residual_mass = 0.0;  // probability still unabsorbed at the horizon

    /// feature_sum / expected_steps (zero vector when no steps are expected).
    Vec mean() const;
};

struct Sampling {
    bool exact = true;
    std::size_t samples = 0;
    std::uint64_t seed = 0;

    static Sampling exact_mode() { return {}; }
    static Sampling monte_carlo(std::size_t n, std::uint64_t seed) { return {false, n, seed}; }
};

/// Occupancy propagation from start for at most horizon steps; stops early
/// once the unabsorbed mass drops below 1e-15.
ExpectedFeatures expected_features(const Policy& policy, const GrowingMdp& mdp, const FeatureMap& features,
                                   StateId start, std::size_t horizon, const Sampling& sampling = {});

Vec expected_feature_mean(const Policy& policy, StateId start, const GrowingMdp& mdp, const FeatureMap& features,
                          std::size_t horizon, const Sampling& sampling = {});

Vec project_to_ball(const Vec& theta, double bound);

/// theta' = proj(theta + lambda (f_emp - f_exp)).
RewardParams online_update(const RewardParams& params, const Vec& f_emp, const Vec& f_exp, double lambda);

struct NllResult {
    double value = 0.0;
    std::optional<std::size_t> zero_prob_step;  // first step with pi(a|s) = 0
};

/// -(1/|xi|) sum log pi(a_i|s_i) over scored steps; +inf when an observed
/// step has zero probability.
NllResult episode_nll(const Episode& xi, const Policy& policy, const GrowingMdp& mdp);

/// B / (2 sqrt(2 t d)).
double lambda_schedule(std::size_t t, std::size_t d, double bound);

/// Regret bound 2 B sqrt(2 t d).
double regret_bound(std::size_t t, std::size_t d, double bound);

struct LearnerOptions {
    double bound = 10.0;
    double step_cost = 2.0;
    GoalConfidenceMode goal_mode = GoalConfidenceMode::LogRho;
    PlannerOptions planner;
    std::optional<double> constant_lambda;
    Sampling sampling;
};

/// Loss and gradient of one episode. With offset_tracks_theta the reward
/// offset is recomputed from theta (the loss used for regret); otherwise
/// the offset stored in the supplied model is held fixed.
struct EpisodeObjective {
    double loss = 0.0;
    Vec gradient;
    bool finite = true;
    double expected_steps = 0.0;
    double residual_mass = 0.0;
};

EpisodeObjective episode_objective(const Episode& xi, const GrowingMdp& mdp, const RewardModel& reward,
                                   GoalConfidenceMode mode, const PlannerOptions& opts, bool offset_tracks_theta,
                                   bool with_gradient = true);

/// Per-episode loss at theta. Without a shift the offset is recomputed from
/// theta; with one, the reward is theta . f - shift.
double episode_loss(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features, const Vec& theta,
                    const LearnerOptions& opts, std::optional<double> shift = std::nullopt);

struct UpdateReport {
    std::size_t t = 0;
    double lambda = 0.0;
    double loss_before = 0.0;  // l_t(theta_t)
    Vec f_emp;
    Vec f_exp;
    bool planner_converged = true;
    bool skipped = false;
};

class OnlineIrl {
public:
    OnlineIrl(FeatureMap features, LearnerOptions opts);

    const RewardParams& params() const { return params_; }
    const FeatureMap& features() const { return features_; }
    const LearnerOptions& options() const { return opts_; }
    RewardModel reward() const { return RewardModel(features_, params_.theta, opts_.step_cost); }
    std::size_t updates() const { return t_; }
    /// Incremented whenever theta changes.
    std::uint64_t version() const { return version_; }

    /// One round: plan under theta_t, score the episode, then step theta.
    UpdateReport update(const Episode& xi, const GrowingMdp& mdp);

private:
    FeatureMap features_;
    LearnerOptions opts_;
    RewardParams params_;
    std::size_t t_ = 0;
    std::uint64_t version_ = 0;
};

/// An episode together with the MDP as it stood when the episode ended.
/// With a shift, the episode's loss is scored under the reward offset the
/// online learner planned with, which keeps the loss smooth and convex in
/// theta.
struct ScoredEpisode {
    Episode episode;
    std::shared_ptr<const GrowingMdp> snapshot;
    std::optional<double> shift;
};

struct HindsightFit {
    RewardParams params;
    double objective = 0.0;  // mean loss at params
    std::size_t iterations = 0;
    bool converged = false;
};

/// Projected gradient descent on the mean episode loss with backtracking.
/// Descends from zero and, when given, also from init; keeps the better.
HindsightFit batch_hindsight_fit(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features,
                                 const LearnerOptions& opts, double tol = 1e-5, std::size_t max_iters = 200,
                                 const std::optional<Vec>& init = std::nullopt);

double mean_episode_loss(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features, const Vec& theta,
                         const LearnerOptions& opts);

struct RegretRow {
    std::size_t t;
    double loss_online;
    double loss_hindsight;
    double regret;
    double avg_regret;
    double bound;
};

class RegretLedger {
public:
    RegretLedger(std::size_t dim, double bound) : dim_(dim), bound_(bound) {}

    void add(double loss_online, double loss_hindsight);
    std::size_t size() const { return online_.size(); }
    const std::vector<double>& online_losses() const { return online_; }
    const std::vector<double>& hindsight_losses() const { return hindsight_; }
    std::size_t dim() const { return dim_; }
    double bound() const { return bound_; }

private:
    std::size_t dim_;
    double bound_;
    std::vector<double> online_;
    std::vector<double> hindsight_;
};

/// Cumulative regret recomputed from stored losses, one row per episode.
std::vector<RegretRow> regret_report(const RegretLedger& ledger);

/// CSV with header t,loss_online,loss_hindsight,regret,avg_regret,bound.
void write_regret_csv(std::ostream& os, const std::vector<RegretRow>& rows);

}  // namespace darko

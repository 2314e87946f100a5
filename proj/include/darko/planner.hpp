#pragma once

// Soft (maximum-entropy) value iteration over a GrowingMdp snapshot.
//
// Goals are absorbing with pinned values; every other state backs up
//   V(s) = logsumexp_a [ R(s,a) + V(T(s,a)) ]
// over its observed non-AtGoal transitions. States with no path to a goal
// keep V = -inf, so downstream softmaxes drop them exactly.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "darko/mdp.hpp"

namespace darko {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class NoGoalsError : public std::runtime_error {
public:
    NoGoalsError() : std::runtime_error("no goals discovered yet") {}
};

enum class GoalConfidenceMode { Binary, LogRho };

GoalConfidenceMode parse_goal_confidence_mode(const std::string& name);
std::string to_string(GoalConfidenceMode m);

/// V(g) = ln(rho).
double goal_value_from_confidence(double rho);

using GoalValues = std::map<StateId, double>;

/// Terminal values for every registered goal: 0 in binary mode, ln(rho) otherwise.
GoalValues goal_values(const GrowingMdp& mdp, GoalConfidenceMode mode);

using RewardFn = std::function<double(StateId, const Action&)>;

/// R(s,a) = theta . f(s,a) - offset. The offset is fixed when the model is
/// built; by default it is the maximum of theta . f over the feature box
/// [0,1]^d plus a step cost, so every reward is <= -step_cost.
class RewardModel {
public:
    RewardModel(FeatureMap features, Vec theta, double step_cost);

    static RewardModel with_offset(FeatureMap features, Vec theta, double offset);
    static double planning_offset(const Vec& theta, double step_cost);

    double operator()(const StateVec& s, const Action& a) const {
        return features_.dot(theta_, s, a) - offset_;
    }
    RewardFn bind(const GrowingMdp& mdp) const;

    const Vec& theta() const { return theta_; }
    double offset() const { return offset_; }
    const FeatureMap& features() const { return features_; }

private:
    RewardModel(FeatureMap features, Vec theta, double offset, int);

    FeatureMap features_;
    Vec theta_;
    double offset_;
};

struct PlannerOptions {
    double tol = 1e-6;
    int max_sweeps = 0;  // 0 selects 10*|S| + 100
    double divergence_cap = 1e6;
};

/// Which states a solve covers. Values are exact for any state whose
/// forward-reachable set lies inside the scope.
struct PlanScope {
    enum class Kind { All, ForwardFrom, Explicit };
    Kind kind = Kind::All;
    std::vector<StateId> states;

    static PlanScope all() { return {}; }
    static PlanScope forward_from(std::vector<StateId> roots) { return {Kind::ForwardFrom, std::move(roots)}; }
    static PlanScope exactly(std::vector<StateId> states) { return {Kind::Explicit, std::move(states)}; }
};

/// Per-state slices aligned with GrowingMdp::out_edges(s).
class EdgeLayout {
public:
    EdgeLayout() = default;
    EdgeLayout(const GrowingMdp& mdp, std::span<const StateId> scope);

    bool contains(StateId s) const { return s < slot_.size() && slot_[s] >= 0; }
    std::int32_t slot(StateId s) const { return s < slot_.size() ? slot_[s] : -1; }
    std::span<const StateId> scope() const { return scope_; }
    std::size_t begin(StateId s) const { return begin_[static_cast<std::size_t>(slot_[s])]; }
    std::size_t end(StateId s) const { return begin_[static_cast<std::size_t>(slot_[s]) + 1]; }
    std::size_t total() const { return begin_.empty() ? 0 : begin_.back(); }

private:
    std::vector<StateId> scope_;
    std::vector<std::int32_t> slot_;
    std::vector<std::size_t> begin_;
};

struct ValueTables {
    std::vector<double> V;  // indexed by StateId, -inf outside scope
    EdgeLayout layout;
    std::vector<double> q_flat;
    GoalValues goal_values;
    bool converged = false;
    bool diverged = false;
    int sweeps = 0;
    double max_delta = 0.0;

    double value(StateId s) const { return s < V.size() ? V[s] : kNegInf; }
    std::span<const double> Q(StateId s) const;
    double q(const GrowingMdp& mdp, StateId s, const Action& a) const;
};

class Policy {
public:
    Policy() = default;
    Policy(EdgeLayout layout, std::vector<double> probs) : layout_(std::move(layout)), probs_(std::move(probs)) {}

    /// Action distribution at s aligned with out_edges(s); empty for goals,
    /// out-of-scope states and states that cannot reach a goal.
    std::span<const double> probs(StateId s) const;
    double prob(const GrowingMdp& mdp, StateId s, const Action& a) const;
    bool defined_at(StateId s) const { return !probs(s).empty(); }

private:
    EdgeLayout layout_;
    std::vector<double> probs_;
    std::vector<char> active_;  // per scope slot
    friend Policy policy_from(const ValueTables&);
};

bool plans_over(const Action& a);

/// States reachable from roots through planning edges; expansion stops at
/// states for which stop_at returns true.
std::vector<StateId> forward_closure(const GrowingMdp& mdp, std::span<const StateId> roots,
                                     const std::function<bool(StateId)>& stop_at);

/// States with a planning-edge path to target (including target).
std::vector<StateId> ancestors(const GrowingMdp& mdp, StateId target);

ValueTables soft_value_iteration(const GrowingMdp& mdp, const RewardFn& reward, const GoalValues& goals,
                                 const PlannerOptions& opts = {}, const PlanScope& scope = PlanScope::all());

ValueTables soft_value_iteration(const GrowingMdp& mdp, const RewardModel& reward, GoalConfidenceMode mode,
                                 const PlannerOptions& opts = {}, const PlanScope& scope = PlanScope::all());

/// Same backup with S_g = {g}; other goals are ordinary states. Solved on
/// the ancestors of g, which is exact for every state.
ValueTables goal_conditioned_values(const GrowingMdp& mdp, const RewardFn& reward, StateId g,
                                    GoalConfidenceMode mode, const PlannerOptions& opts = {});

Policy policy_from(const ValueTables& values);

double logsumexp(std::span<const double> xs);

}  // namespace darko

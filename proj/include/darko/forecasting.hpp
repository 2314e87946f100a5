#pragma once

// Future-behavior queries from a policy and a partial trajectory: expected
// visitation of states, subspaces and actions, remaining length, and the
// posterior over discovered goals.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "darko/mdp.hpp"
#include "darko/online_irl.hpp"
#include "darko/planner.hpp"

namespace darko {

struct VisitationDistribution {
    std::vector<double> counts;  // indexed by StateId
    std::size_t horizon = 0;
    double residual_mass = 0.0;

    double count(StateId s) const { return s < counts.size() ? counts[s] : 0.0; }
    bool truncated(double tol = 1e-3) const { return residual_mass > tol; }
};

/// Expected visits at tau = t+1 .. t+horizon starting from s_t, goals
/// absorbing (an arrival at a goal counts once).
VisitationDistribution state_visitation(const Policy& policy, const GrowingMdp& mdp, StateId s_t,
                                        std::size_t horizon, const Sampling& sampling = {});

double subspace_visitation(const VisitationDistribution& d, std::span<const StateId> subset);

/// pi(a|s) D(s); zero when a is not available at s.
double action_state_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                               const Action& a, StateId s);

double action_subspace_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                                  const Action& a, std::span<const StateId> subset);

double joint_subspace_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                                 std::span<const Action> actions, std::span<const StateId> subset);

double expected_length(const VisitationDistribution& d);

using GoalDistribution = std::map<StateId, double>;

struct GoalPosterior {
    GoalDistribution probs;
    GoalDistribution prior;
    bool fallback = false;  // no candidate had positive weight
};

/// (w(g) + 1) / sum over goals, for every goal currently in the MDP.
GoalDistribution smoothed_goal_prior(const GrowingMdp& mdp, const std::map<StateId, double>& visit_weight);

/// Keeps one goal-conditioned value table per goal, reused while neither
/// the reward nor the MDP has changed.
class GoalPosteriorEngine {
public:
    explicit GoalPosteriorEngine(GoalConfidenceMode mode = GoalConfidenceMode::LogRho, PlannerOptions opts = {})
        : mode_(mode), opts_(opts) {}

    /// P(g) exp(V_{s_t}(g) - V_{s_0}(g)) normalized over goals in the prior.
    GoalPosterior posterior(const GrowingMdp& mdp, const RewardFn& reward, std::uint64_t reward_version,
                            const GoalDistribution& prior, StateId s0, StateId st);

    std::size_t solves() const { return solves_; }

private:
    struct Cached {
        std::uint64_t reward_version;
        std::uint64_t mdp_version;
        ValueTables values;
    };
    const ValueTables& table(const GrowingMdp& mdp, const RewardFn& reward, std::uint64_t reward_version,
                             StateId g);

    GoalConfidenceMode mode_;
    PlannerOptions opts_;
    std::map<StateId, Cached> cache_;
    std::size_t solves_ = 0;
};

GoalPosterior goal_posterior(const GrowingMdp& mdp, const RewardFn& reward, const GoalDistribution& prior,
                             StateId s0, StateId st, GoalConfidenceMode mode = GoalConfidenceMode::LogRho,
                             const PlannerOptions& opts = {});

}  // namespace darko

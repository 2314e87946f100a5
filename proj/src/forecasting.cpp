#include "darko/forecasting.hpp"

#include <cmath>
#include <random>

#include "darko/occupancy.hpp"

namespace darko {

VisitationDistribution state_visitation(const Policy& policy, const GrowingMdp& mdp, StateId s_t,
                                        std::size_t horizon, const Sampling& sampling) {
    VisitationDistribution d;
    d.counts.assign(mdp.num_states(), 0.0);
    d.horizon = horizon;
    if (mdp.is_goal(s_t)) return d;
    if (!policy.defined_at(s_t)) throw NoGoalReachableError();

    if (sampling.exact) {
        d.residual_mass = propagate_occupancy(policy, mdp, s_t, horizon,
                                              [&](StateId, const Edge& e, double w) { d.counts[e.next] += w; });
        return d;
    }

    if (sampling.samples == 0) throw std::invalid_argument("monte carlo mode needs at least one sample");
    std::mt19937_64 rng(sampling.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t unabsorbed = 0;
    for (std::size_t n = 0; n < sampling.samples; ++n) {
        StateId s = s_t;
        for (std::size_t k = 0; k < horizon && policy.defined_at(s); ++k) {
            const auto probs = policy.probs(s);
            const auto edges = mdp.out_edges(s);
            double u = unif(rng);
            std::size_t pick = probs.size() - 1;
            for (std::size_t i = 0; i < probs.size(); ++i) {
                if (u < probs[i]) {
                    pick = i;
                    break;
                }
                u -= probs[i];
            }
            while (probs[pick] <= 0.0 && pick > 0) --pick;
            s = edges[pick].next;
            d.counts[s] += 1.0;
        }
        if (policy.defined_at(s)) ++unabsorbed;
    }
    const double inv = 1.0 / static_cast<double>(sampling.samples);
    for (double& c : d.counts) c *= inv;
    d.residual_mass = static_cast<double>(unabsorbed) * inv;
    return d;
}

double subspace_visitation(const VisitationDistribution& d, std::span<const StateId> subset) {
    double acc = 0.0;
    for (StateId s : subset) acc += d.count(s);
    return acc;
}

double action_state_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                               const Action& a, StateId s) {
    if (s >= mdp.num_states()) return 0.0;
    const double c = d.count(s);
    if (c == 0.0) return 0.0;
    return policy.prob(mdp, s, a) * c;
}

double action_subspace_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                                  const Action& a, std::span<const StateId> subset) {
    double acc = 0.0;
    for (StateId s : subset) acc += action_state_visitation(d, policy, mdp, a, s);
    return acc;
}

double joint_subspace_visitation(const VisitationDistribution& d, const Policy& policy, const GrowingMdp& mdp,
                                 std::span<const Action> actions, std::span<const StateId> subset) {
    double acc = 0.0;
    for (const auto& a : actions) acc += action_subspace_visitation(d, policy, mdp, a, subset);
    return acc;
}

double expected_length(const VisitationDistribution& d) {
    double acc = 0.0;
    for (double c : d.counts) acc += c;
    return acc;
}

GoalDistribution smoothed_goal_prior(const GrowingMdp& mdp, const std::map<StateId, double>& visit_weight) {
    GoalDistribution out;
    double total = 0.0;
    for (const auto& [g, rec] : mdp.goals()) {
        (void)rec;
        const auto it = visit_weight.find(g);
        const double w = (it == visit_weight.end() ? 0.0 : it->second) + 1.0;
        out[g] = w;
        total += w;
    }
    for (auto& [g, w] : out) w /= total;
    return out;
}

const ValueTables& GoalPosteriorEngine::table(const GrowingMdp& mdp, const RewardFn& reward,
                                              std::uint64_t reward_version, StateId g) {
    auto it = cache_.find(g);
    if (it != cache_.end() && it->second.reward_version == reward_version &&
        it->second.mdp_version == mdp.value_version())
        return it->second.values;
    ++solves_;
    auto values = goal_conditioned_values(mdp, reward, g, mode_, opts_);
    Cached c{reward_version, mdp.value_version(), std::move(values)};
    if (it == cache_.end()) return cache_.emplace(g, std::move(c)).first->second.values;
    it->second = std::move(c);
    return it->second.values;
}

GoalPosterior GoalPosteriorEngine::posterior(const GrowingMdp& mdp, const RewardFn& reward,
                                             std::uint64_t reward_version, const GoalDistribution& prior,
                                             StateId s0, StateId st) {
    if (mdp.goals().empty()) throw NoGoalsError();
    GoalPosterior out;
    out.prior = prior;

    // Goals that st can reach at all; everything else gets weight zero
    // without a solve.
    const StateId roots[] = {st};
    std::vector<char> reach(mdp.num_states(), 0);
    for (StateId s : forward_closure(mdp, roots, nullptr)) reach[s] = 1;

    double total = 0.0;
    for (const auto& [g, p] : prior) {
        double w = 0.0;
        if (p > 0.0 && reach[g] && mdp.is_goal(g)) {
            const auto& vt = table(mdp, reward, reward_version, g);
            const double vt_st = vt.value(st);
            const double vt_s0 = vt.value(s0);
            if (vt_st != kNegInf && vt_s0 != kNegInf) w = p * std::exp(vt_st - vt_s0);
        }
        out.probs[g] = w;
        total += w;
    }
    if (total > 0.0 && std::isfinite(total)) {
        for (auto& [g, w] : out.probs) w /= total;
        return out;
    }
    out.fallback = true;
    std::size_t n = 0;
    for (const auto& [g, p] : prior)
        if (p > 0.0) ++n;
    for (auto& [g, w] : out.probs) w = (prior.at(g) > 0.0 && n > 0) ? 1.0 / static_cast<double>(n) : 0.0;
    return out;
}

GoalPosterior goal_posterior(const GrowingMdp& mdp, const RewardFn& reward, const GoalDistribution& prior,
                             StateId s0, StateId st, GoalConfidenceMode mode, const PlannerOptions& opts) {
    GoalPosteriorEngine engine(mode, opts);
    return engine.posterior(mdp, reward, 0, prior, s0, st);
}

}  // namespace darko

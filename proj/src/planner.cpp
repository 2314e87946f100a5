#include "darko/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace darko {

GoalConfidenceMode parse_goal_confidence_mode(const std::string& name) {
    if (name == "binary") return GoalConfidenceMode::Binary;
    if (name == "log_rho") return GoalConfidenceMode::LogRho;
    throw std::invalid_argument("unknown goal confidence mode '" + name + "'");
}

std::string to_string(GoalConfidenceMode m) { return m == GoalConfidenceMode::Binary ? "binary" : "log_rho"; }

double goal_value_from_confidence(double rho) {
    if (!(rho > 0.0) || rho > 1.0) throw std::invalid_argument("goal confidence rho must lie in (0,1]");
    return std::log(rho);
}

GoalValues goal_values(const GrowingMdp& mdp, GoalConfidenceMode mode) {
    GoalValues out;
    for (const auto& [id, rec] : mdp.goals())
        out[id] = mode == GoalConfidenceMode::Binary ? 0.0 : goal_value_from_confidence(rec.rho);
    return out;
}

RewardModel::RewardModel(FeatureMap features, Vec theta, double step_cost)
    : features_(std::move(features)), theta_(std::move(theta)), offset_(planning_offset(theta_, step_cost)) {
    if (static_cast<std::size_t>(theta_.size()) != features_.dim())
        throw std::invalid_argument("theta dimension does not match feature map");
}

RewardModel::RewardModel(FeatureMap features, Vec theta, double offset, int)
    : features_(std::move(features)), theta_(std::move(theta)), offset_(offset) {
    if (static_cast<std::size_t>(theta_.size()) != features_.dim())
        throw std::invalid_argument("theta dimension does not match feature map");
}

RewardModel RewardModel::with_offset(FeatureMap features, Vec theta, double offset) {
    return RewardModel(std::move(features), std::move(theta), offset, 0);
}

double RewardModel::planning_offset(const Vec& theta, double step_cost) {
    return theta.cwiseMax(0.0).sum() + step_cost;
}

RewardFn RewardModel::bind(const GrowingMdp& mdp) const {
    return [this, &mdp](StateId s, const Action& a) { return (*this)(mdp.state(s), a); };
}

EdgeLayout::EdgeLayout(const GrowingMdp& mdp, std::span<const StateId> scope)
    : scope_(scope.begin(), scope.end()), slot_(mdp.num_states(), -1) {
    begin_.reserve(scope_.size() + 1);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < scope_.size(); ++i) {
        slot_[scope_[i]] = static_cast<std::int32_t>(i);
        begin_.push_back(offset);
        offset += mdp.out_edges(scope_[i]).size();
    }
    begin_.push_back(offset);
}

std::span<const double> ValueTables::Q(StateId s) const {
    if (!layout.contains(s)) return {};
    return std::span<const double>(q_flat).subspan(layout.begin(s), layout.end(s) - layout.begin(s));
}

double ValueTables::q(const GrowingMdp& mdp, StateId s, const Action& a) const {
    const auto qs = Q(s);
    const auto edges = mdp.out_edges(s);
    for (std::size_t i = 0; i < qs.size(); ++i)
        if (edges[i].action == a) return qs[i];
    return kNegInf;
}

std::span<const double> Policy::probs(StateId s) const {
    const auto slot = layout_.slot(s);
    if (slot < 0) return {};
    if (!active_.empty() && !active_[static_cast<std::size_t>(slot)]) return {};
    return std::span<const double>(probs_).subspan(layout_.begin(s), layout_.end(s) - layout_.begin(s));
}

double Policy::prob(const GrowingMdp& mdp, StateId s, const Action& a) const {
    const auto ps = probs(s);
    const auto edges = mdp.out_edges(s);
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (edges[i].action == a) return ps[i];
    return 0.0;
}

bool plans_over(const Action& a) { return a.kind != ActionKind::AtGoal; }

std::vector<StateId> forward_closure(const GrowingMdp& mdp, std::span<const StateId> roots,
                                     const std::function<bool(StateId)>& stop_at) {
    std::vector<char> seen(mdp.num_states(), 0);
    std::vector<StateId> out;
    std::deque<StateId> queue;
    for (StateId r : roots) {
        if (r >= mdp.num_states()) throw std::out_of_range("unknown root state");
        if (!seen[r]) {
            seen[r] = 1;
            out.push_back(r);
            queue.push_back(r);
        }
    }
    while (!queue.empty()) {
        const StateId s = queue.front();
        queue.pop_front();
        if (stop_at && stop_at(s)) continue;
        for (const auto& e : mdp.out_edges(s)) {
            if (!plans_over(e.action) || seen[e.next]) continue;
            seen[e.next] = 1;
            out.push_back(e.next);
            queue.push_back(e.next);
        }
    }
    return out;
}

std::vector<StateId> ancestors(const GrowingMdp& mdp, StateId target) {
    std::vector<char> seen(mdp.num_states(), 0);
    std::vector<StateId> out{target};
    seen.at(target) = 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (const auto& p : mdp.predecessors(out[i])) {
            if (!plans_over(p.action) || seen[p.from]) continue;
            seen[p.from] = 1;
            out.push_back(p.from);
        }
    }
    return out;
}

double logsumexp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double x : xs)
        if (x != kNegInf) acc += std::exp(x - m);
    return m + std::log(acc);
}

namespace {

// Tarjan over the active subgraph; emits states sinks-first so a single
// Gauss-Seidel pass is exact on acyclic regions.
std::vector<StateId> sink_first_order(const GrowingMdp& mdp, const std::vector<StateId>& active,
                                      const std::vector<char>& is_active) {
    const std::size_t n = mdp.num_states();
    std::vector<std::int32_t> index(n, -1), low(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<StateId> stack, order;
    order.reserve(active.size());
    std::int32_t counter = 0;

    struct Frame {
        StateId s;
        std::size_t edge;
    };
    std::vector<Frame> call;
    for (StateId root : active) {
        if (index[root] >= 0) continue;
        call.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& fr = call.back();
            const auto edges = mdp.out_edges(fr.s);
            if (fr.edge < edges.size()) {
                const auto& e = edges[fr.edge++];
                if (!plans_over(e.action) || !is_active[e.next]) continue;
                if (index[e.next] < 0) {
                    index[e.next] = low[e.next] = counter++;
                    stack.push_back(e.next);
                    on_stack[e.next] = 1;
                    call.push_back({e.next, 0});
                } else if (on_stack[e.next]) {
                    low[fr.s] = std::min(low[fr.s], index[e.next]);
                }
                continue;
            }
            const StateId s = fr.s;
            call.pop_back();
            if (!call.empty()) low[call.back().s] = std::min(low[call.back().s], low[s]);
            if (low[s] == index[s]) {
                StateId w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    order.push_back(w);
                } while (w != s);
            }
        }
    }
    return order;
}

}  // namespace

ValueTables soft_value_iteration(const GrowingMdp& mdp, const RewardFn& reward, const GoalValues& goals,
                                 const PlannerOptions& opts, const PlanScope& scope) {
    if (goals.empty()) throw NoGoalsError();
    const std::size_t n = mdp.num_states();

    std::vector<StateId> states;
    switch (scope.kind) {
        case PlanScope::Kind::All:
            states.resize(n);
            for (StateId i = 0; i < n; ++i) states[i] = i;
            break;
        case PlanScope::Kind::ForwardFrom:
            states = forward_closure(mdp, scope.states, [&](StateId s) { return goals.count(s) != 0; });
            break;
        case PlanScope::Kind::Explicit:
            states = scope.states;
            break;
    }

    ValueTables out;
    out.layout = EdgeLayout(mdp, states);
    out.V.assign(n, kNegInf);
    out.q_flat.assign(out.layout.total(), kNegInf);

    std::vector<char> is_goal(n, 0), reaches(n, 0), is_active(n, 0);
    std::vector<StateId> frontier;
    for (const auto& [g, v] : goals) {
        if (!out.layout.contains(g)) continue;
        is_goal[g] = 1;
        reaches[g] = 1;
        out.V[g] = v;
        out.goal_values[g] = v;
        frontier.push_back(g);
    }
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        for (const auto& p : mdp.predecessors(frontier[i])) {
            if (!plans_over(p.action) || reaches[p.from] || !out.layout.contains(p.from)) continue;
            reaches[p.from] = 1;
            frontier.push_back(p.from);
        }
    }
    std::vector<StateId> active;
    for (StateId s : states)
        if (reaches[s] && !is_goal[s]) {
            active.push_back(s);
            is_active[s] = 1;
        }

    const auto order = sink_first_order(mdp, active, is_active);

    // Per-edge rewards, -inf where the successor cannot reach a goal.
    std::vector<double> rew(out.layout.total(), kNegInf);
    for (StateId s : order) {
        const auto edges = mdp.out_edges(s);
        const std::size_t b = out.layout.begin(s);
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto& e = edges[i];
            if (!plans_over(e.action) || !reaches[e.next] || !out.layout.contains(e.next)) continue;
            rew[b + i] = reward(s, e.action);
        }
    }

    const int max_sweeps = opts.max_sweeps > 0 ? opts.max_sweeps : static_cast<int>(10 * states.size() + 100);
    std::vector<double> terms;
    out.converged = order.empty();
    out.max_delta = 0.0;
    for (int sweep = 0; sweep < max_sweeps && !order.empty(); ++sweep) {
        double max_delta = 0.0;
        for (StateId s : order) {
            const auto edges = mdp.out_edges(s);
            const std::size_t b = out.layout.begin(s);
            terms.clear();
            for (std::size_t i = 0; i < edges.size(); ++i)
                if (rew[b + i] != kNegInf) terms.push_back(rew[b + i] + out.V[edges[i].next]);
            const double v = logsumexp(terms);
            const double old = out.V[s];
            const double delta = old == kNegInf ? (v == kNegInf ? 0.0 : HUGE_VAL) : std::abs(v - old);
            max_delta = std::max(max_delta, delta);
            out.V[s] = v;
            if (v > opts.divergence_cap) out.diverged = true;
        }
        out.sweeps = sweep + 1;
        out.max_delta = max_delta;
        if (out.diverged) break;
        if (max_delta < opts.tol) {
            out.converged = true;
            break;
        }
    }

    for (StateId s : order) {
        const auto edges = mdp.out_edges(s);
        const std::size_t b = out.layout.begin(s);
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (rew[b + i] != kNegInf) out.q_flat[b + i] = rew[b + i] + out.V[edges[i].next];
        out.V[s] = logsumexp(std::span<const double>(out.q_flat).subspan(b, edges.size()));
    }
    return out;
}

ValueTables soft_value_iteration(const GrowingMdp& mdp, const RewardModel& reward, GoalConfidenceMode mode,
                                 const PlannerOptions& opts, const PlanScope& scope) {
    return soft_value_iteration(mdp, reward.bind(mdp), goal_values(mdp, mode), opts, scope);
}

ValueTables goal_conditioned_values(const GrowingMdp& mdp, const RewardFn& reward, StateId g,
                                    GoalConfidenceMode mode, const PlannerOptions& opts) {
    if (!mdp.is_goal(g)) throw std::invalid_argument("state " + std::to_string(g) + " is not a goal");
    const auto& rec = mdp.goal(g);
    GoalValues single{{g, mode == GoalConfidenceMode::Binary ? 0.0 : goal_value_from_confidence(rec.rho)}};
    return soft_value_iteration(mdp, reward, single, opts, PlanScope::exactly(ancestors(mdp, g)));
}

Policy policy_from(const ValueTables& values) {
    Policy p;
    p.layout_ = values.layout;
    p.probs_.assign(values.q_flat.size(), 0.0);
    const auto scope = values.layout.scope();
    p.active_.assign(scope.size(), 0);
    for (std::size_t i = 0; i < scope.size(); ++i) {
        const StateId s = scope[i];
        const double v = values.V[s];
        if (v == kNegInf || values.goal_values.count(s)) continue;
        p.active_[i] = 1;
        const std::size_t b = values.layout.begin(s);
        const std::size_t e = values.layout.end(s);
        for (std::size_t k = b; k < e; ++k)
            p.probs_[k] = values.q_flat[k] == kNegInf ? 0.0 : std::exp(values.q_flat[k] - v);
    }
    return p;
}

}  // namespace darko

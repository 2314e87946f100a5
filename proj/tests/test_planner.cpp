#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/LU>

#include "darko/planner.hpp"
#include "oracles.hpp"

using namespace darko;

namespace {

Domain line_domain(int length, int scenes = 2) {
    Domain d;
    d.bounds = {length, 0, 0};
    d.num_scenes = scenes;
    return d;
}

RewardFn table_reward(std::map<std::pair<StateId, std::uint32_t>, double> r) {
    return [r](StateId s, const Action& a) { return r.at({s, a.code()}); };
}

// Grid of w x h cells; every neighboring pair linked both ways.
GrowingMdp open_grid(int w, int h) {
    Domain d;
    d.bounds = {w - 1, h - 1, 0};
    d.num_scenes = 3;
    GrowingMdp mdp(d);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) mdp.intern({{x, y, 0}});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (const auto& delta : move_deltas(Neighborhood::Axis6)) {
                const Position p{x + delta.x, y + delta.y, 0};
                if (!d.in_bounds(p)) continue;
                mdp.record_transition(*mdp.find({{x, y, 0}}), Action::move(delta), *mdp.find({p}));
            }
    return mdp;
}

}  // namespace

TEST_CASE("goal values from confidence") {
    CHECK(goal_value_from_confidence(1.0) == 0.0);
    CHECK(goal_value_from_confidence(0.5) == doctest::Approx(-0.6931471805599453).epsilon(1e-15));
    CHECK_THROWS(goal_value_from_confidence(0.0));
    CHECK_THROWS(goal_value_from_confidence(-0.1));
    CHECK_THROWS(goal_value_from_confidence(1.01));
    CHECK(parse_goal_confidence_mode("binary") == GoalConfidenceMode::Binary);
    CHECK(to_string(GoalConfidenceMode::LogRho) == "log_rho");
}

TEST_CASE("one-step backup") {
    GrowingMdp mdp(line_domain(1));
    const auto s = mdp.intern({{0, 0, 0}});
    const auto g = mdp.intern({{1, 0, 0}});
    const auto a = Action::move({1, 0, 0});
    mdp.record_transition(s, a, g);
    mdp.add_goal(g, 0, 1.0);
    const double r = -0.37;
    const auto vt = soft_value_iteration(mdp, [&](StateId, const Action&) { return r; },
                                         goal_values(mdp, GoalConfidenceMode::Binary));
    CHECK(vt.converged);
    CHECK(vt.value(s) == doctest::Approx(r).epsilon(1e-15));
    CHECK(vt.q(mdp, s, a) == doctest::Approx(r).epsilon(1e-15));
    CHECK(vt.value(g) == 0.0);
    const auto pi = policy_from(vt);
    CHECK(pi.prob(mdp, s, a) == doctest::Approx(1.0));
    CHECK_FALSE(pi.defined_at(g));
}

TEST_CASE("two equal actions into the goal") {
    Domain d;
    d.bounds = {1, 1, 0};
    d.num_scenes = 1;
    GrowingMdp mdp(d);
    const auto s = mdp.intern({{0, 0, 0}});
    const auto g1 = mdp.intern({{1, 0, 0}});
    const auto g2 = mdp.intern({{0, 1, 0}});
    mdp.record_transition(s, Action::move({1, 0, 0}), g1);
    mdp.record_transition(s, Action::move({0, 1, 0}), g2);
    mdp.add_goal(g1, 0, 1.0);
    mdp.add_goal(g2, 0, 1.0);
    const double r = -1.25;
    const auto vt = soft_value_iteration(mdp, [&](StateId, const Action&) { return r; },
                                         goal_values(mdp, GoalConfidenceMode::Binary));
    CHECK(vt.value(s) == doctest::Approx(r + std::log(2.0)).epsilon(1e-14));
    const auto pi = policy_from(vt);
    CHECK(pi.probs(s)[0] == doctest::Approx(0.5));
    CHECK(pi.probs(s)[1] == doctest::Approx(0.5));
}

TEST_CASE("two-way softmax") {
    const auto a1 = Action::move({1, 0, 0});
    const auto a2 = Action::acquire(0);
    Domain d = line_domain(2);
    d.num_objects = 1;
    GrowingMdp m2(d);
    const auto s2 = m2.intern({{0, 0, 0}});
    const auto g2 = m2.intern({{1, 0, 0}});
    const auto h2 = m2.intern({{0, 0, 0}, 1, -1});
    m2.record_transition(s2, a1, g2);
    m2.record_transition(s2, a2, h2);
    m2.add_goal(g2, 0, 1.0);
    m2.add_goal(h2, 1, 1.0);
    const auto reward = table_reward({{{s2, a1.code()}, -1.0}, {{s2, a2.code()}, -2.0}});
    const auto vt = soft_value_iteration(m2, reward, goal_values(m2, GoalConfidenceMode::Binary));
    const auto pi = policy_from(vt);
    CHECK(pi.prob(m2, s2, a1) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(pi.prob(m2, s2, a1) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(pi.prob(m2, s2, Action::release(0)) == 0.0);
}

TEST_CASE("empty goal set is an error") {
    GrowingMdp mdp(line_domain(1));
    mdp.intern({{0, 0, 0}});
    CHECK_THROWS_AS(soft_value_iteration(mdp, [](StateId, const Action&) { return -1.0; }, GoalValues{}),
                    NoGoalsError);
}

TEST_CASE("policy matches brute-force trajectory enumeration on random layered MDPs") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 200 && checked < 60; ++seed) {
        auto inst = oracle::random_layered_mdp(seed);
        const RewardModel model(inst.features, inst.theta, 1.0);
        const auto reward = model.bind(inst.mdp);
        for (auto mode : {GoalConfidenceMode::Binary, GoalConfidenceMode::LogRho}) {
            const auto gv = goal_values(inst.mdp, mode);
            const int start = oracle::pick_start(inst.mdp, reward, gv, rng);
            if (start < 0) continue;
            const auto vt = soft_value_iteration(inst.mdp, reward, gv);
            REQUIRE(vt.converged);
            const auto pi = policy_from(vt);
            const auto paths = oracle::enumerate_paths(inst.mdp, reward, gv, static_cast<StateId>(start), 8);
            const auto p_enum = oracle::path_probabilities(paths);
            double tv = 0.0, covered = 0.0;
            for (std::size_t i = 0; i < paths.size(); ++i) {
                double p = 1.0;
                for (std::size_t k = 0; k < paths[i].actions.size(); ++k)
                    p *= pi.prob(inst.mdp, paths[i].states[k], paths[i].actions[k]);
                covered += p;
                tv += std::abs(p - p_enum[i]);
            }
            tv = 0.5 * (tv + std::abs(1.0 - covered));
            CHECK(tv < 1e-9);
            CHECK(vt.value(static_cast<StateId>(start)) ==
                  doctest::Approx(oracle::log_partition(paths)).epsilon(1e-10));
            ++checked;
        }
    }
    CHECK(checked >= 50);
}

TEST_CASE("states that cannot reach a goal get -inf and no policy") {
    GrowingMdp mdp(line_domain(3));
    const auto a = mdp.intern({{0, 0, 0}});
    const auto b = mdp.intern({{1, 0, 0}});
    const auto c = mdp.intern({{2, 0, 0}});
    const auto dead = mdp.intern({{3, 0, 0}});
    mdp.record_transition(a, Action::move({1, 0, 0}), b);
    mdp.record_transition(b, Action::move({1, 0, 0}), c);
    mdp.record_transition(b, Action::move({-1, 0, 0}), dead);
    mdp.add_goal(c, 0, 1.0);
    const auto vt = soft_value_iteration(mdp, [](StateId, const Action&) { return -1.0; },
                                         goal_values(mdp, GoalConfidenceMode::Binary));
    CHECK(vt.value(dead) == kNegInf);
    CHECK(vt.q(mdp, b, Action::move({-1, 0, 0})) == kNegInf);
    const auto pi = policy_from(vt);
    CHECK_FALSE(pi.defined_at(dead));
    CHECK(pi.prob(mdp, b, Action::move({1, 0, 0})) == doctest::Approx(1.0));
    CHECK(pi.prob(mdp, b, Action::move({-1, 0, 0})) == 0.0);
}

TEST_CASE("cyclic grid: convergence, pinning, normalization and linear-system oracle") {
    auto mdp = open_grid(3, 3);
    const auto g = *mdp.find({{2, 2, 0}});
    const auto g2 = *mdp.find({{0, 2, 0}});
    mdp.add_goal(g, 0, 0.7);
    mdp.add_goal(g2, 1, 0.2);
    const auto reward = [](StateId s, const Action& a) { return -3.0 - 0.1 * s - (a.delta.x > 0 ? 0.3 : 0.0); };
    PlannerOptions opts;
    opts.tol = 1e-13;
    const auto gv = goal_values(mdp, GoalConfidenceMode::LogRho);
    const auto vt = soft_value_iteration(mdp, reward, gv, opts);
    CHECK(vt.converged);
    CHECK_FALSE(vt.diverged);
    CHECK(vt.value(g) == std::log(0.7));
    CHECK(vt.value(g2) == std::log(0.2));
    const auto pi = policy_from(vt);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        if (mdp.is_goal(s)) continue;
        double sum = 0.0;
        for (double p : pi.probs(s)) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    // Independent oracle: the partition function solves the linear system
    // Z(s) = sum_a e^{R(s,a)} Z(T(s,a)), Z(g) = rho_g.
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        if (mdp.is_goal(s)) {
            b[s] = mdp.goal(s).rho;
            continue;
        }
        for (const auto& e : mdp.out_edges(s)) A(s, e.next) -= std::exp(reward(s, e.action));
    }
    const Eigen::VectorXd z = A.partialPivLu().solve(b);
    for (StateId s = 0; s < mdp.num_states(); ++s)
        CHECK(vt.value(s) == doctest::Approx(std::log(z[s])).epsilon(1e-10));
}

TEST_CASE("divergence guard on positive cycles") {
    auto grid = open_grid(3, 1);
    grid.add_goal(*grid.find({{2, 0, 0}}), 0, 1.0);
    PlannerOptions opts;
    opts.max_sweeps = 100000;
    const auto vt = soft_value_iteration(grid, [](StateId, const Action&) { return 50.0; },
                                         goal_values(grid, GoalConfidenceMode::Binary), opts);
    CHECK(vt.diverged);
    CHECK_FALSE(vt.converged);
    PlannerOptions few;
    few.max_sweeps = 3;
    const auto slow = soft_value_iteration(grid, [](StateId, const Action&) { return -0.01; },
                                           goal_values(grid, GoalConfidenceMode::Binary), few);
    CHECK_FALSE(slow.converged);
    CHECK(slow.sweeps == 3);
}

TEST_CASE("planning offset keeps every reward at most -step_cost") {
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = oracle::random_layered_mdp(1000 + trial);
        inst.theta *= 5.0;
        const RewardModel model(inst.features, inst.theta, 0.5);
        for (StateId s = 0; s < inst.mdp.num_states(); ++s)
            for (const auto& a : oracle::action_pool()) CHECK(model(inst.mdp.state(s), a) <= -0.5 + 1e-12);
    }
    const auto inst = oracle::random_layered_mdp(3);
    const Vec theta = inst.theta;
    CHECK_THROWS(RewardModel(inst.features, Vec::Zero(3), 1.0));
    const auto frozen = RewardModel::with_offset(inst.features, theta, 4.0);
    CHECK(frozen.offset() == 4.0);
}

TEST_CASE("scoped solves agree with the full solve") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto inst = oracle::random_layered_mdp(300 + seed);
        const RewardModel model(inst.features, inst.theta, 1.0);
        const auto full = soft_value_iteration(inst.mdp, model, GoalConfidenceMode::LogRho);
        const StateId root = static_cast<StateId>(seed % inst.mdp.num_states());
        const auto scoped = soft_value_iteration(inst.mdp, model, GoalConfidenceMode::LogRho, {},
                                                 PlanScope::forward_from({root}));
        for (StateId s : scoped.layout.scope()) CHECK(scoped.value(s) == doctest::Approx(full.value(s)));
    }
}

TEST_CASE("confidence weighting routes mass toward the surer goal") {
    // Symmetric two-corridor world: s -> u1 -> g1 and s -> u2 -> g2 with
    // identical rewards; g1 and g2 sit in the same place with different rho.
    Domain d;
    d.bounds = {2, 2, 0};
    d.num_scenes = 2;
    d.num_objects = 1;
    GrowingMdp mdp(d);
    const auto s = mdp.intern({{0, 0, 0}});
    const auto u1 = mdp.intern({{1, 0, 0}});
    const auto u2 = mdp.intern({{0, 1, 0}});
    const auto g1 = mdp.intern({{1, 1, 0}, 0, -1});
    const auto g2 = mdp.intern({{1, 1, 0}, 1, -1});
    mdp.record_transition(s, Action::move({1, 0, 0}), u1);
    mdp.record_transition(s, Action::move({0, 1, 0}), u2);
    mdp.record_transition(u1, Action::move({0, 1, 0}), g1);
    mdp.record_transition(u2, Action::move({1, 0, 0}), g2);
    mdp.add_goal(g1, 0, 0.9);
    mdp.add_goal(g2, 1, 0.1);
    const RewardFn reward = [](StateId, const Action&) { return -1.0; };
    const auto gv = goal_values(mdp, GoalConfidenceMode::LogRho);
    const auto pi = policy_from(soft_value_iteration(mdp, reward, gv));
    const auto paths = oracle::enumerate_paths(mdp, reward, gv, s, 8);
    const auto visits = oracle::expected_visits(mdp, paths);
    CHECK(visits[g1] >= 2.0 * visits[g2]);
    CHECK(visits[g1] == doctest::Approx(0.9));
    CHECK(pi.prob(mdp, s, Action::move({1, 0, 0})) == doctest::Approx(visits[u1]).epsilon(1e-12));
    const auto binary = policy_from(soft_value_iteration(mdp, reward, goal_values(mdp, GoalConfidenceMode::Binary)));
    CHECK(binary.prob(mdp, s, Action::move({1, 0, 0})) == doctest::Approx(0.5));
}

TEST_CASE("goal-conditioned values") {
    SUBCASE("single goal equals the ordinary solve") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            auto inst = oracle::random_layered_mdp(500 + seed);
            const auto goals = inst.mdp.goals();
            GrowingMdp mdp(inst.mdp.domain());
            for (StateId s = 0; s < inst.mdp.num_states(); ++s) mdp.intern(inst.mdp.state(s));
            for (StateId s = 0; s < inst.mdp.num_states(); ++s)
                for (const auto& e : inst.mdp.out_edges(s)) mdp.record_transition(s, e.action, e.next);
            const auto g = goals.begin()->first;
            mdp.add_goal(g, goals.begin()->second.scene_type, goals.begin()->second.rho);
            const RewardModel model(inst.features, inst.theta, 1.0);
            const auto reward = model.bind(mdp);
            const auto a = soft_value_iteration(mdp, reward, goal_values(mdp, GoalConfidenceMode::LogRho));
            const auto b = goal_conditioned_values(mdp, reward, g, GoalConfidenceMode::LogRho);
            for (StateId s = 0; s < mdp.num_states(); ++s) {
                if (a.value(s) == kNegInf) {
                    CHECK(b.value(s) == kNegInf);
                } else {
                    CHECK(b.value(s) == doctest::Approx(a.value(s)).epsilon(1e-12));
                }
            }
        }
    }
    SUBCASE("three goals on a monotone grid match per-goal enumeration") {
        Domain d;
        d.bounds = {3, 3, 0};
        d.num_scenes = 3;
        GrowingMdp mdp(d);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) mdp.intern({{x, y, 0}});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const auto s = *mdp.find({{x, y, 0}});
                if (x < 3) mdp.record_transition(s, Action::move({1, 0, 0}), *mdp.find({{x + 1, y, 0}}));
                if (y < 3) mdp.record_transition(s, Action::move({0, 1, 0}), *mdp.find({{x, y + 1, 0}}));
            }
        const StateId goals[] = {*mdp.find({{3, 3, 0}}), *mdp.find({{1, 2, 0}}), *mdp.find({{3, 0, 0}})};
        for (int k = 0; k < 3; ++k) mdp.add_goal(goals[k], k, 0.25 * (k + 1));
        const RewardFn reward = [&](StateId s, const Action& a) {
            return -0.5 - 0.2 * mdp.state(s).position.x - (a.delta.y > 0 ? 0.4 : 0.1);
        };
        for (StateId g : goals) {
            const auto vt = goal_conditioned_values(mdp, reward, g, GoalConfidenceMode::LogRho);
            const GoalValues only{{g, std::log(mdp.goal(g).rho)}};
            for (StateId s = 0; s < mdp.num_states(); ++s) {
                if (s == g) {
                    CHECK(vt.value(s) == std::log(mdp.goal(g).rho));
                    continue;
                }
                const auto paths = oracle::enumerate_paths(mdp, reward, only, s, 8);
                if (paths.empty()) {
                    CHECK(vt.value(s) == kNegInf);
                } else {
                    CHECK(vt.value(s) == doctest::Approx(oracle::log_partition(paths)).epsilon(1e-6));
                }
            }
        }
        CHECK_THROWS(goal_conditioned_values(mdp, reward, *mdp.find({{0, 0, 0}}), GoalConfidenceMode::Binary));
    }
}

TEST_CASE("logsumexp") {
    const double xs[] = {kNegInf, kNegInf};
    CHECK(logsumexp(xs) == kNegInf);
    const double ys[] = {1000.0, 1000.0};
    CHECK(logsumexp(ys) == doctest::Approx(1000.0 + std::log(2.0)));
    const double zs[] = {-1.0, kNegInf};
    CHECK(logsumexp(zs) == -1.0);
}

#include "darko/online_irl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "darko/occupancy.hpp"

namespace darko {

namespace {

// Large enough that propagation always ends on the negligible-mass test.
constexpr std::size_t kExactHorizon = 1'000'000;

std::vector<StateId> episode_states(const Episode& xi) {
    std::vector<StateId> out{xi.start};
    for (const auto& st : xi.steps) out.push_back(st.state);
    out.push_back(xi.terminal_goal);
    return out;
}

// First scored state of every maximal run of scored steps.
std::vector<StateId> segment_starts(const Episode& xi, const GrowingMdp& mdp) {
    std::vector<StateId> out;
    bool prev_scored = false;
    for (const auto& st : xi.steps) {
        const bool scored = is_scored(mdp, st);
        if (scored && !prev_scored) out.push_back(st.state);
        prev_scored = scored;
    }
    return out;
}

struct Plan {
    ValueTables values;
    Policy policy;
};

Plan plan_episode(const Episode& xi, const GrowingMdp& mdp, const RewardModel& reward, GoalConfidenceMode mode,
                  const PlannerOptions& opts) {
    Plan p;
    p.values = soft_value_iteration(mdp, reward, mode, opts, PlanScope::forward_from(episode_states(xi)));
    p.policy = policy_from(p.values);
    return p;
}

ExpectedFeatures segment_expectations(const Episode& xi, const GrowingMdp& mdp, const Policy& policy,
                                      const FeatureMap& features, std::size_t horizon) {
    ExpectedFeatures total{Vec::Zero(static_cast<Eigen::Index>(features.dim())), 0.0, 0.0};
    for (StateId u : segment_starts(xi, mdp)) {
        const auto e = expected_features(policy, mdp, features, u, horizon);
        total.feature_sum += e.feature_sum;
        total.expected_steps += e.expected_steps;
        total.residual_mass += e.residual_mass;
    }
    return total;
}

Vec offset_gradient(const Vec& theta) {
    return (theta.array() > 0.0).cast<double>().matrix();
}

}  // namespace

bool is_scored(const GrowingMdp& mdp, const Step& step) {
    return plans_over(step.action) && !mdp.is_goal(step.state);
}

std::size_t scored_length(const GrowingMdp& mdp, const Episode& xi) {
    return static_cast<std::size_t>(
        std::count_if(xi.steps.begin(), xi.steps.end(), [&](const Step& s) { return is_scored(mdp, s); }));
}

Vec empirical_feature_sum(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features) {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(features.dim()));
    for (const auto& st : xi.steps)
        if (is_scored(mdp, st)) features.accumulate(mdp.state(st.state), st.action, 1.0, out);
    return out;
}

Vec empirical_feature_mean(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features) {
    const std::size_t n = scored_length(mdp, xi);
    if (n == 0) throw EmptyEpisodeError();
    return empirical_feature_sum(xi, mdp, features) / static_cast<double>(n);
}

Vec ExpectedFeatures::mean() const {
    if (expected_steps <= 0.0) return Vec::Zero(feature_sum.size());
    return feature_sum / expected_steps;
}

ExpectedFeatures expected_features(const Policy& policy, const GrowingMdp& mdp, const FeatureMap& features,
                                   StateId start, std::size_t horizon, const Sampling& sampling) {
    ExpectedFeatures out{Vec::Zero(static_cast<Eigen::Index>(features.dim())), 0.0, 0.0};
    if (mdp.is_goal(start)) return out;
    if (!policy.defined_at(start)) throw NoGoalReachableError();

    if (sampling.exact) {
        out.residual_mass = propagate_occupancy(policy, mdp, start, horizon, [&](StateId s, const Edge& e, double w) {
            features.accumulate(mdp.state(s), e.action, w, out.feature_sum);
            out.expected_steps += w;
        });
        return out;
    }

    if (sampling.samples == 0) throw std::invalid_argument("monte carlo mode needs at least one sample");
    std::mt19937_64 rng(sampling.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t unabsorbed = 0;
    for (std::size_t n = 0; n < sampling.samples; ++n) {
        StateId s = start;
        std::size_t k = 0;
        for (; k < horizon && policy.defined_at(s); ++k) {
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
            features.accumulate(mdp.state(s), edges[pick].action, 1.0, out.feature_sum);
            out.expected_steps += 1.0;
            s = edges[pick].next;
        }
        if (policy.defined_at(s)) ++unabsorbed;
    }
    const double inv = 1.0 / static_cast<double>(sampling.samples);
    out.feature_sum *= inv;
    out.expected_steps *= inv;
    out.residual_mass = static_cast<double>(unabsorbed) * inv;
    return out;
}

Vec expected_feature_mean(const Policy& policy, StateId start, const GrowingMdp& mdp, const FeatureMap& features,
                          std::size_t horizon, const Sampling& sampling) {
    return expected_features(policy, mdp, features, start, horizon, sampling).mean();
}

Vec project_to_ball(const Vec& theta, double bound) {
    const double norm = theta.norm();
    if (norm <= bound) return theta;
    return theta * (bound / norm);
}

RewardParams online_update(const RewardParams& params, const Vec& f_emp, const Vec& f_exp, double lambda) {
    if (f_emp.size() != params.theta.size() || f_exp.size() != params.theta.size())
        throw std::invalid_argument("feature dimension does not match theta");
    if (!(lambda > 0.0)) throw std::invalid_argument("step size must be positive");
    return {project_to_ball(params.theta + lambda * (f_emp - f_exp), params.bound), params.bound};
}

NllResult episode_nll(const Episode& xi, const Policy& policy, const GrowingMdp& mdp) {
    NllResult out;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < xi.steps.size(); ++i) {
        const auto& st = xi.steps[i];
        if (!is_scored(mdp, st)) continue;
        ++n;
        const double p = policy.prob(mdp, st.state, st.action);
        if (p <= 0.0) {
            if (!out.zero_prob_step) out.zero_prob_step = i;
            continue;
        }
        acc -= std::log(p);
    }
    if (n == 0) throw EmptyEpisodeError();
    out.value = out.zero_prob_step ? HUGE_VAL : acc / static_cast<double>(n);
    return out;
}

double lambda_schedule(std::size_t t, std::size_t d, double bound) {
    if (t < 1) throw std::invalid_argument("episode index starts at 1");
    return bound / (2.0 * std::sqrt(2.0 * static_cast<double>(t) * static_cast<double>(d)));
}

double regret_bound(std::size_t t, std::size_t d, double bound) {
    return 2.0 * bound * std::sqrt(2.0 * static_cast<double>(t) * static_cast<double>(d));
}

EpisodeObjective episode_objective(const Episode& xi, const GrowingMdp& mdp, const RewardModel& reward,
                                   GoalConfidenceMode mode, const PlannerOptions& opts, bool offset_tracks_theta,
                                   bool with_gradient) {
    const std::size_t n = scored_length(mdp, xi);
    if (n == 0) throw EmptyEpisodeError();
    const Plan plan = plan_episode(xi, mdp, reward, mode, opts);
    EpisodeObjective out;
    // Outside the region where the soft values exist the likelihood is
    // undefined; score it as +inf so descent stays inside.
    if (plan.values.diverged || !plan.values.converged) {
        out.loss = HUGE_VAL;
        out.finite = false;
        return out;
    }
    const auto nll = episode_nll(xi, plan.policy, mdp);
    out.loss = nll.value;
    out.finite = !nll.zero_prob_step;
    if (!with_gradient || !out.finite) return out;

    const auto& features = reward.features();
    const auto e = segment_expectations(xi, mdp, plan.policy, features, kExactHorizon);
    const double dn = static_cast<double>(n);
    out.gradient = (e.feature_sum - empirical_feature_sum(xi, mdp, features)) / dn;
    if (offset_tracks_theta) out.gradient += offset_gradient(reward.theta()) * ((dn - e.expected_steps) / dn);
    out.expected_steps = e.expected_steps;
    out.residual_mass = e.residual_mass;
    return out;
}

double episode_loss(const Episode& xi, const GrowingMdp& mdp, const FeatureMap& features, const Vec& theta,
                    const LearnerOptions& opts, std::optional<double> shift) {
    const auto reward = shift ? RewardModel::with_offset(features, theta, *shift)
                              : RewardModel(features, theta, opts.step_cost);
    return episode_objective(xi, mdp, reward, opts.goal_mode, opts.planner, !shift, false).loss;
}

OnlineIrl::OnlineIrl(FeatureMap features, LearnerOptions opts)
    : features_(std::move(features)),
      opts_(opts),
      params_{Vec::Zero(static_cast<Eigen::Index>(features_.dim())), opts.bound} {
    if (!(opts.bound > 0.0)) throw std::invalid_argument("parameter bound must be positive");
}

UpdateReport OnlineIrl::update(const Episode& xi, const GrowingMdp& mdp) {
    UpdateReport rep;
    const std::size_t n = scored_length(mdp, xi);
    if (n == 0) {
        rep.skipped = true;
        return rep;
    }
    rep.t = ++t_;
    const Plan plan = plan_episode(xi, mdp, reward(), opts_.goal_mode, opts_.planner);
    rep.planner_converged = plan.values.converged && !plan.values.diverged;
    rep.loss_before = episode_nll(xi, plan.policy, mdp).value;
    if (!rep.planner_converged) {
        rep.skipped = true;
        return rep;
    }
    const std::size_t horizon = std::max<std::size_t>(4 * xi.steps.size(), 10 * mdp.num_states());
    rep.f_emp = empirical_feature_mean(xi, mdp, features_);
    rep.f_exp = segment_expectations(xi, mdp, plan.policy, features_, horizon).mean();
    rep.lambda = opts_.constant_lambda ? *opts_.constant_lambda : lambda_schedule(rep.t, features_.dim(), params_.bound);
    params_ = online_update(params_, rep.f_emp, rep.f_exp, rep.lambda);
    ++version_;
    return rep;
}

double mean_episode_loss(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features, const Vec& theta,
                         const LearnerOptions& opts) {
    double acc = 0.0;
    for (const auto& ep : episodes) acc += episode_loss(ep.episode, *ep.snapshot, features, theta, opts, ep.shift);
    return acc / static_cast<double>(episodes.size());
}

namespace {

std::pair<double, Vec> batch_objective(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features,
                                       const Vec& theta, const LearnerOptions& opts) {
    const RewardModel tracked(features, theta, opts.step_cost);
    double loss = 0.0;
    Vec grad = Vec::Zero(theta.size());
    for (const auto& ep : episodes) {
        const auto obj =
            ep.shift ? episode_objective(ep.episode, *ep.snapshot, RewardModel::with_offset(features, theta, *ep.shift),
                                         opts.goal_mode, opts.planner, false)
                     : episode_objective(ep.episode, *ep.snapshot, tracked, opts.goal_mode, opts.planner, true);
        loss += obj.loss;
        if (obj.finite) grad += obj.gradient;
    }
    const double inv = 1.0 / static_cast<double>(episodes.size());
    return {loss * inv, grad * inv};
}

}  // namespace

namespace {

HindsightFit descend_from(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features,
                          const LearnerOptions& opts, double tol, std::size_t max_iters, Vec theta) {
    auto [loss, grad] = batch_objective(episodes, features, theta, opts);
    HindsightFit best{{theta, opts.bound}, loss, 0, false};
    double eta = 1.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        best.iterations = it + 1;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Vec cand = project_to_ball(theta - eta * grad, opts.bound);
            const Vec diff = cand - theta;
            if (diff.norm() / eta < tol) {
                best.converged = true;
                return best;
            }
            auto [cand_loss, cand_grad] = batch_objective(episodes, features, cand, opts);
            if (std::isfinite(cand_loss) && cand_loss <= loss + grad.dot(diff) + diff.squaredNorm() / (2.0 * eta)) {
                theta = cand;
                loss = cand_loss;
                grad = std::move(cand_grad);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;
        if (loss < best.objective) {
            best.params.theta = theta;
            best.objective = loss;
        }
        eta *= 2.0;
    }
    return best;
}

}  // namespace

HindsightFit batch_hindsight_fit(const std::vector<ScoredEpisode>& episodes, const FeatureMap& features,
                                 const LearnerOptions& opts, double tol, std::size_t max_iters,
                                 const std::optional<Vec>& init) {
    if (episodes.empty()) throw std::invalid_argument("hindsight fit needs at least one episode");
    // A tracked reward shift makes the loss non-smooth at theta_i = 0, so a
    // warm start is tried alongside the zero start and the better kept.
    auto best = descend_from(episodes, features, opts, tol, max_iters,
                             Vec::Zero(static_cast<Eigen::Index>(features.dim())));
    if (init) {
        auto warm = descend_from(episodes, features, opts, tol, max_iters, project_to_ball(*init, opts.bound));
        if (warm.objective < best.objective) best = std::move(warm);
    }
    return best;
}

void RegretLedger::add(double loss_online, double loss_hindsight) {
    online_.push_back(loss_online);
    hindsight_.push_back(loss_hindsight);
}

std::vector<RegretRow> regret_report(const RegretLedger& ledger) {
    std::vector<RegretRow> rows;
    double cum = 0.0;
    for (std::size_t i = 0; i < ledger.size(); ++i) {
        const std::size_t t = i + 1;
        cum += ledger.online_losses()[i] - ledger.hindsight_losses()[i];
        rows.push_back({t, ledger.online_losses()[i], ledger.hindsight_losses()[i], cum, cum / static_cast<double>(t),
                        regret_bound(t, ledger.dim(), ledger.bound())});
    }
    return rows;
}

void write_regret_csv(std::ostream& os, const std::vector<RegretRow>& rows) {
    os << "t,loss_online,loss_hindsight,regret,avg_regret,bound\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.t << ',' << r.loss_online << ',' << r.loss_hindsight << ',' << r.regret << ',' << r.avg_regret << ','
           << r.bound << '\n';
}

}  // namespace darko

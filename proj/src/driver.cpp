#include "darko/driver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace darko {

namespace {

using nlohmann::json;

std::string channel_name(DetectorChannel c) { return c == DetectorChannel::GroundTruth ? "ground_truth" : "detected"; }

DetectorChannel parse_channel(const std::string& name) {
    if (name == "ground_truth") return DetectorChannel::GroundTruth;
    if (name == "detected") return DetectorChannel::Detected;
    throw std::invalid_argument("unknown detector channel '" + name + "'");
}

template <class K>
json map_to_json(const std::map<K, double>& m) {
    json out = json::object();
    for (const auto& [k, v] : m) out[std::to_string(k)] = v;
    return out;
}

template <class K>
std::map<K, double> map_from_json(const json& j) {
    std::map<K, double> out;
    for (const auto& [k, v] : j.items()) out[static_cast<K>(std::stoll(k))] = v.template get<double>();
    return out;
}

}  // namespace

DriverConfig DriverConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "feature_mode",   "detector_channel", "goal_confidence_mode", "bound",     "step_cost",
        "tol",            "horizon",          "lambda_mode",          "constant_lambda", "forecast_stride",
        "forecasts",      "length_forecast",  "logistic",             "hindsight", "hindsight_tol",
        "hindsight_max_iters", "mc_samples",  "seed"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");

    DriverConfig c;
    c.feature_mode = parse_feature_mode(j.value("feature_mode", to_string(c.feature_mode)));
    c.detector_channel = parse_channel(j.value("detector_channel", channel_name(c.detector_channel)));
    c.goal_confidence_mode =
        parse_goal_confidence_mode(j.value("goal_confidence_mode", to_string(c.goal_confidence_mode)));
    c.bound = j.value("bound", c.bound);
    c.step_cost = j.value("step_cost", c.step_cost);
    c.tol = j.value("tol", c.tol);
    c.horizon = j.value("horizon", c.horizon);
    const auto lambda_mode = j.value("lambda_mode", std::string("schedule"));
    if (lambda_mode == "constant") {
        if (!j.contains("constant_lambda")) throw std::invalid_argument("lambda_mode constant needs constant_lambda");
        c.constant_lambda = j.at("constant_lambda").get<double>();
    } else if (lambda_mode != "schedule") {
        throw std::invalid_argument("unknown lambda_mode '" + lambda_mode + "'");
    }
    c.forecast_stride = j.value("forecast_stride", c.forecast_stride);
    c.forecasts = j.value("forecasts", c.forecasts);
    c.length_forecast = j.value("length_forecast", c.length_forecast);
    c.logistic = j.value("logistic", c.logistic);
    c.hindsight = j.value("hindsight", c.hindsight);
    c.hindsight_tol = j.value("hindsight_tol", c.hindsight_tol);
    c.hindsight_max_iters = j.value("hindsight_max_iters", c.hindsight_max_iters);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.seed = j.value("seed", c.seed);

    if (!(c.bound > 0.0)) throw std::invalid_argument("bound must be positive");
    if (!(c.step_cost > 0.0)) throw std::invalid_argument("step_cost must be positive");
    if (!(c.tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (c.forecast_stride < 1) throw std::invalid_argument("forecast_stride must be at least 1");
    if (c.constant_lambda && !(*c.constant_lambda > 0.0)) throw std::invalid_argument("constant_lambda must be positive");
    return c;
}

json DriverConfig::to_json() const {
    json j = {{"feature_mode", darko::to_string(feature_mode)},
              {"detector_channel", channel_name(detector_channel)},
              {"goal_confidence_mode", darko::to_string(goal_confidence_mode)},
              {"bound", bound},
              {"step_cost", step_cost},
              {"tol", tol},
              {"horizon", horizon},
              {"lambda_mode", constant_lambda ? "constant" : "schedule"},
              {"forecast_stride", forecast_stride},
              {"forecasts", forecasts},
              {"length_forecast", length_forecast},
              {"logistic", logistic},
              {"hindsight", hindsight},
              {"hindsight_tol", hindsight_tol},
              {"hindsight_max_iters", hindsight_max_iters},
              {"mc_samples", mc_samples},
              {"seed", seed}};
    if (constant_lambda) j["constant_lambda"] = *constant_lambda;
    return j;
}

// ---------------------------------------------------------------------------

void LogisticBaseline::add_episode(const std::vector<Vec>& inputs, int label) {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
    if (it == classes_.end() || *it != label) {
        const auto row = static_cast<Eigen::Index>(it - classes_.begin());
        classes_.insert(it, label);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes_.size()),
                                                  static_cast<Eigen::Index>(dim_ + 1));
        for (Eigen::Index r = 0, src = 0; r < w.rows(); ++r) {
            if (r == row) continue;
            w.row(r) = weights_.row(src++);
        }
        weights_ = std::move(w);
        for (auto& l : labels_)
            if (static_cast<Eigen::Index>(l) >= row) ++l;
    }
    const auto idx = static_cast<std::size_t>(std::lower_bound(classes_.begin(), classes_.end(), label) - classes_.begin());
    for (const auto& x : inputs) {
        if (static_cast<std::size_t>(x.size()) != dim_) throw std::invalid_argument("logistic input has wrong dimension");
        inputs_.push_back(x);
        labels_.push_back(idx);
    }
}

namespace {

Vec softmax(const Vec& z) {
    const double m = z.maxCoeff();
    Vec p = (z.array() - m).exp();
    return p / p.sum();
}

Vec with_bias(const Vec& x) {
    Vec out(x.size() + 1);
    out.head(x.size()) = x;
    out(x.size()) = 1.0;
    return out;
}

}  // namespace

void LogisticBaseline::refit() {
    if (classes_.size() < 2) return;
    for (int pass = 0; pass < passes_; ++pass) {
        for (std::size_t i = 0; i < inputs_.size(); ++i) {
            const Vec x = with_bias(inputs_[i]);
            Vec grad = softmax(weights_ * x);
            grad(static_cast<Eigen::Index>(labels_[i])) -= 1.0;
            weights_.noalias() -= step_ * grad * x.transpose();
        }
    }
}

std::map<int, double> LogisticBaseline::predict(const Vec& x) const {
    std::map<int, double> out;
    if (classes_.empty()) return out;
    const Vec p = softmax(weights_ * with_bias(x));
    for (std::size_t k = 0; k < classes_.size(); ++k) out[classes_[k]] = p(static_cast<Eigen::Index>(k));
    return out;
}

std::map<int, double> uniform_baseline(const std::set<int>& scenes) {
    std::map<int, double> out;
    for (int s : scenes) out[s] = 1.0 / static_cast<double>(scenes.size());
    return out;
}

// ---------------------------------------------------------------------------

json ForecastRecord::to_json() const {
    json j = {{"t", t},
              {"episode", episode},
              {"state", state},
              {"goal_posterior", map_to_json(goal_posterior)},
              {"scene_posterior", map_to_json(scene_posterior)},
              {"uniform", map_to_json(uniform)},
              {"logistic", map_to_json(logistic)},
              {"expected_length", nullptr},
              {"flags", flags}};
    if (expected_length) j["expected_length"] = *expected_length;
    return j;
}

ForecastRecord ForecastRecord::from_json(const json& j) {
    ForecastRecord r;
    r.t = j.at("t").get<int>();
    r.episode = j.at("episode").get<std::size_t>();
    r.state = j.at("state").get<StateId>();
    r.goal_posterior = map_from_json<StateId>(j.at("goal_posterior"));
    r.scene_posterior = map_from_json<int>(j.at("scene_posterior"));
    r.uniform = map_from_json<int>(j.at("uniform"));
    r.logistic = map_from_json<int>(j.at("logistic"));
    if (!j.at("expected_length").is_null()) r.expected_length = j.at("expected_length").get<double>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    return r;
}

std::vector<ForecastRecord> read_forecasts_jsonl(std::istream& is) {
    std::vector<ForecastRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(ForecastRecord::from_json(json::parse(line)));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

class Runner {
public:
    Runner(const EventStream& stream, const DriverConfig& config)
        : cfg_(config),
          domain_(stream.domain()),
          features_(domain_, config.feature_mode),
          state_features_(domain_, FeatureMode::StateOnly),
          learner_(features_, learner_options(config)),
          engine_(config.goal_confidence_mode, PlannerOptions{config.tol}),
          logistic_(state_features_.dim()),
          out_{config, {}, {}, {}, {}, std::nullopt, GrowingMdp(domain_), {}} {}

    RunArtifacts finish(const EventStream& stream) {
        for (const auto& e : stream.events) handle(e);
        if (cfg_.hindsight && !scored_.empty()) regret();
        out_.counters.irl_updates = learner_.updates();
        return std::move(out_);
    }

private:
    static LearnerOptions learner_options(const DriverConfig& c) {
        LearnerOptions o;
        o.bound = c.bound;
        o.step_cost = c.step_cost;
        o.goal_mode = c.goal_confidence_mode;
        o.planner.tol = c.tol;
        o.constant_lambda = c.constant_lambda;
        if (c.mc_samples > 0) o.sampling = Sampling::monte_carlo(c.mc_samples, c.seed);
        return o;
    }

    GrowingMdp& mdp() { return out_.mdp; }

    void handle(const Event& e) {
        ++out_.counters.events;
        const bool truth = cfg_.detector_channel == DetectorChannel::GroundTruth;
        switch (e.kind) {
            case EventKind::Position: on_position(e); break;
            case EventKind::Action:
                if (!truth) on_action(e.step, e.action, e.object);
                break;
            case EventKind::Goal:
                if (!truth) on_goal(e.step, e.scene, e.rho);
                break;
            case EventKind::Truth:
                if (!truth) break;
                if (e.marker == TruthMarker::Goal)
                    on_goal(e.step, e.scene, 1.0);
                else
                    on_action(e.step, e.marker == TruthMarker::Acquire ? ActionKind::Acquire : ActionKind::Release,
                              e.object);
                break;
        }
    }

    void start_episode() {
        xi_ = Episode{sid_, {}, sid_};
        visited_.clear();
    }

    void on_position(const Event& e) {
        if (!domain_.in_bounds(e.position)) {
            ++out_.counters.malformed;
            return;
        }
        if (!started_) {
            s_ = StateVec{e.position, 0, -1};
            sid_ = mdp().intern(s_);
            started_ = true;
            start_episode();
            return;
        }
        const Position delta = e.position - s_.position;
        if (delta == Position{}) {
            ++out_.counters.dropped_still_ticks;
            return;
        }
        if (!domain_.valid_move(delta)) {
            // Resync without inventing a transition; the partial episode is
            // no longer a contiguous path.
            ++out_.counters.position_jumps;
            s_.position = e.position;
            sid_ = mdp().intern(s_);
            start_episode();
            return;
        }
        transition(e.step, Action::move(delta));
    }

    void on_action(int step, ActionKind kind, int object) {
        if (!started_ || object < 0 || object >= domain_.num_objects) {
            ++out_.counters.invalid_actions;
            return;
        }
        const bool held = s_.holds(object);
        if ((kind == ActionKind::Acquire && held) || (kind == ActionKind::Release && !held)) {
            ++out_.counters.invalid_actions;
            return;
        }
        transition(step, kind == ActionKind::Acquire ? Action::acquire(object) : Action::release(object));
    }

    void transition(int step, const Action& a) {
        const StateVec next = apply_action(s_, a);
        const StateId nid = mdp().intern(next);
        mdp().record_transition(sid_, a, nid);
        xi_.steps.push_back({sid_, a});
        s_ = next;
        sid_ = nid;
        visited_.push_back(state_features_(s_, Action::move({})));
        if (cfg_.forecasts && !mdp().goals().empty() && (++since_forecast_ % cfg_.forecast_stride) == 0)
            forecast(step);
    }

    void on_goal(int step, int scene, double rho) {
        if (!started_ || scene < 0 || scene >= domain_.num_scenes || !(rho > 0.0) || rho > 1.0) {
            ++out_.counters.malformed;
            return;
        }
        ++out_.counters.goal_detections;
        mdp().add_goal(sid_, scene, rho);
        scenes_.insert(scene);
        visit_weight_[sid_] += cfg_.goal_confidence_mode == GoalConfidenceMode::LogRho ? rho : 1.0;

        xi_.terminal_goal = sid_;
        LedgerRow row;
        row.episode = out_.ledger.size() + 1;
        row.step = step;
        row.start = xi_.start;
        row.goal = sid_;
        row.scene = scene;
        row.rho = rho;
        row.length = scored_length(mdp(), xi_);
        if (row.length == 0) {
            ++out_.counters.empty_episodes;
            row.skipped = true;
        } else {
            const double shift = learner_.reward().offset();
            const auto rep = learner_.update(xi_, mdp());
            row.loss_online = rep.loss_before;
            row.lambda = rep.lambda;
            row.converged = rep.planner_converged;
            row.skipped = rep.skipped;
            if (rep.skipped) ++out_.counters.skipped_updates;
            if (!rep.skipped && std::isfinite(rep.loss_before)) {
                scored_.push_back(
                    {xi_, cfg_.hindsight ? std::make_shared<const GrowingMdp>(mdp()) : nullptr, shift});
                online_losses_.push_back(rep.loss_before);
            }
        }
        out_.ledger.push_back(row);
        out_.theta_history.push_back(learner_.params().theta);

        if (cfg_.logistic && !visited_.empty()) {
            logistic_.add_episode(visited_, scene);
            logistic_.refit();
        }

        const StateVec next = apply_at_goal(s_, scene);
        if (next != s_) {
            const StateId nid = mdp().intern(next);
            mdp().record_transition(sid_, Action::at_goal(), nid);
            s_ = next;
            sid_ = nid;
        }
        start_episode();
    }

    void forecast(int step) {
        ForecastRecord r;
        r.t = step;
        r.episode = out_.ledger.size() + 1;
        r.state = sid_;
        const auto reward = learner_.reward();
        const auto bound = reward.bind(mdp());
        const auto prior = smoothed_goal_prior(mdp(), visit_weight_);
        const auto post = engine_.posterior(mdp(), bound, learner_.version(), prior, xi_.start, sid_);
        r.goal_posterior = post.probs;
        if (post.fallback) r.flags.push_back("fallback");
        for (const auto& [g, p] : post.probs) r.scene_posterior[mdp().goal(g).scene_type] += p;
        r.uniform = uniform_baseline(scenes_);
        if (cfg_.logistic) {
            r.logistic = logistic_.predict(state_features_(s_, Action::move({})));
            if (r.logistic.empty()) r.logistic = r.uniform;
        }
        if (cfg_.length_forecast) length_forecast(r, reward);
        out_.forecasts.push_back(std::move(r));
        ++out_.counters.forecasts;
    }

    void length_forecast(ForecastRecord& r, const RewardModel& reward) {
        if (mdp().is_goal(sid_)) {
            r.expected_length = 0.0;
            return;
        }
        if (!policy_ || policy_version_ != learner_.version() || policy_value_version_ != mdp().value_version()) {
            const auto values =
                soft_value_iteration(mdp(), reward, cfg_.goal_confidence_mode, PlannerOptions{cfg_.tol});
            policy_converged_ = values.converged && !values.diverged;
            policy_ = policy_from(values);
            policy_version_ = learner_.version();
            policy_value_version_ = mdp().value_version();
        }
        if (!policy_converged_) r.flags.push_back("planner_not_converged");
        if (!policy_->defined_at(sid_)) {
            r.flags.push_back("no_goal_reachable");
            return;
        }
        const std::size_t horizon =
            cfg_.horizon > 0 ? cfg_.horizon : std::max<std::size_t>(200, 10 * mdp().num_states());
        const auto d = state_visitation(*policy_, mdp(), sid_, horizon);
        if (d.truncated()) r.flags.push_back("truncated");
        r.expected_length = expected_length(d);
    }

    void regret() {
        const auto opts = learner_options(cfg_);
        out_.hindsight = batch_hindsight_fit(scored_, features_, opts, cfg_.hindsight_tol, cfg_.hindsight_max_iters,
                                             learner_.params().theta);
        RegretLedger ledger(features_.dim(), cfg_.bound);
        for (std::size_t i = 0; i < scored_.size(); ++i)
            ledger.add(online_losses_[i],
                       episode_loss(scored_[i].episode, *scored_[i].snapshot, features_, out_.hindsight->params.theta,
                                    opts, scored_[i].shift));
        out_.regret = regret_report(ledger);
    }

    DriverConfig cfg_;
    Domain domain_;
    FeatureMap features_;
    FeatureMap state_features_;
    OnlineIrl learner_;
    GoalPosteriorEngine engine_;
    LogisticBaseline logistic_;
    RunArtifacts out_;

    bool started_ = false;
    StateVec s_;
    StateId sid_ = 0;
    Episode xi_;
    std::vector<Vec> visited_;  // state features after each step of the current episode
    std::set<int> scenes_;
    std::map<StateId, double> visit_weight_;
    std::vector<ScoredEpisode> scored_;
    std::vector<double> online_losses_;
    std::size_t since_forecast_ = 0;

    std::optional<Policy> policy_;
    bool policy_converged_ = true;
    std::uint64_t policy_version_ = 0;
    std::uint64_t policy_value_version_ = 0;
};

}  // namespace

RunArtifacts run(const EventStream& stream, const DriverConfig& config) {
    Runner runner(stream, config);
    return runner.finish(stream);
}

// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << std::setprecision(17);
    return os;
}

}  // namespace

void RunArtifacts::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        auto os = open_out(dir / "forecasts.jsonl");
        for (const auto& r : forecasts) os << r.to_json().dump() << '\n';
    }
    {
        auto os = open_out(dir / "ledger.csv");
        os << "episode,step,start,goal,scene,rho,length,loss_online,lambda,converged,skipped\n";
        for (const auto& r : ledger)
            os << r.episode << ',' << r.step << ',' << r.start << ',' << r.goal << ',' << r.scene << ',' << r.rho
               << ',' << r.length << ',' << r.loss_online << ',' << r.lambda << ',' << int(r.converged) << ','
               << int(r.skipped) << '\n';
    }
    {
        auto os = open_out(dir / "theta.csv");
        const auto d = theta_history.empty() ? 0 : theta_history.front().size();
        os << "episode";
        for (Eigen::Index i = 0; i < d; ++i) os << ",theta_" << i;
        os << '\n';
        for (std::size_t n = 0; n < theta_history.size(); ++n) {
            os << n + 1;
            for (Eigen::Index i = 0; i < d; ++i) os << ',' << theta_history[n](i);
            os << '\n';
        }
    }
    {
        auto os = open_out(dir / "mdp.jsonl");
        mdp.dump_jsonl(os);
    }
    {
        auto os = open_out(dir / "regret.csv");
        write_regret_csv(os, regret);
    }
    {
        json theta = json::array();
        if (!theta_history.empty())
            for (Eigen::Index i = 0; i < theta_history.back().size(); ++i) theta.push_back(theta_history.back()(i));
        json s = {{"config", config.to_json()},
                  {"states", mdp.num_states()},
                  {"transitions", mdp.num_transitions()},
                  {"goals", mdp.goals().size()},
                  {"conflicts", mdp.conflict_count()},
                  {"episodes", ledger.size()},
                  {"theta", theta},
                  {"counters",
                   {{"events", counters.events},
                    {"malformed", counters.malformed},
                    {"invalid_actions", counters.invalid_actions},
                    {"position_jumps", counters.position_jumps},
                    {"dropped_still_ticks", counters.dropped_still_ticks},
                    {"goal_detections", counters.goal_detections},
                    {"empty_episodes", counters.empty_episodes},
                    {"irl_updates", counters.irl_updates},
                    {"skipped_updates", counters.skipped_updates},
                    {"forecasts", counters.forecasts}}}};
        if (hindsight)
            s["hindsight"] = {{"objective", hindsight->objective},
                              {"iterations", hindsight->iterations},
                              {"converged", hindsight->converged}};
        auto os = open_out(dir / "summary.json");
        os << s.dump(2) << '\n';
    }
}

}  // namespace darko

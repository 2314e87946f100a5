#pragma once

// The online loop over an event stream: track the agent's state, grow the
// MDP, cut episodes at goal detections, update the reward after each one,
// and forecast at every step. Also hosts the Uniform and Logistic baselines.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "darko/forecasting.hpp"
#include "darko/mdp.hpp"
#include "darko/online_irl.hpp"
#include "darko/planner.hpp"
#include "darko/sim.hpp"

namespace darko {

enum class DetectorChannel { GroundTruth, Detected };

struct DriverConfig {
    FeatureMode feature_mode = FeatureMode::Full;
    DetectorChannel detector_channel = DetectorChannel::Detected;
    GoalConfidenceMode goal_confidence_mode = GoalConfidenceMode::LogRho;
    double bound = 10.0;
    double step_cost = 2.0;
    double tol = 1e-6;
    std::size_t horizon = 0;  // forecast horizon; 0 selects max(200, 10|S|)
    std::optional<double> constant_lambda;
    int forecast_stride = 1;  // forecast every n-th step
    bool forecasts = true;
    bool length_forecast = true;
    bool logistic = true;
    bool hindsight = true;
    double hindsight_tol = 1e-4;
    std::size_t hindsight_max_iters = 100;
    std::size_t mc_samples = 0;  // 0 keeps exact occupancy propagation
    std::uint64_t seed = 0;

    static DriverConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Multinomial logistic regression from state features to the scene type of
/// the episode's terminal goal, refit by plain SGD after every episode.
class LogisticBaseline {
public:
    explicit LogisticBaseline(std::size_t dim, double step = 0.1, int passes = 50)
        : dim_(dim), step_(step), passes_(passes) {}

    void add_episode(const std::vector<Vec>& inputs, int label);
    void refit();
    /// Uniform over known classes before any training data.
    std::map<int, double> predict(const Vec& x) const;
    const std::vector<int>& classes() const { return classes_; }

private:
    std::size_t dim_;
    double step_;
    int passes_;
    std::vector<int> classes_;
    Eigen::MatrixXd weights_;  // classes x (dim + 1)
    std::vector<Vec> inputs_;
    std::vector<std::size_t> labels_;  // index into classes_
};

/// 1/K_n over the scene types discovered so far.
std::map<int, double> uniform_baseline(const std::set<int>& scenes);

struct ForecastRecord {
    int t = 0;
    std::size_t episode = 0;
    StateId state = 0;
    std::map<StateId, double> goal_posterior;
    std::map<int, double> scene_posterior;
    std::map<int, double> uniform;
    std::map<int, double> logistic;
    std::optional<double> expected_length;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    static ForecastRecord from_json(const nlohmann::json& j);
};

struct LedgerRow {
    std::size_t episode = 0;
    int step = 0;
    StateId start = 0;
    StateId goal = 0;
    int scene = 0;
    double rho = 1.0;
    std::size_t length = 0;
    double loss_online = 0.0;
    double lambda = 0.0;
    bool converged = true;
    bool skipped = false;
};

struct RunCounters {
    std::size_t events = 0;
    std::size_t malformed = 0;
    std::size_t invalid_actions = 0;
    std::size_t position_jumps = 0;
    std::size_t dropped_still_ticks = 0;
    std::size_t goal_detections = 0;
    std::size_t empty_episodes = 0;
    std::size_t irl_updates = 0;
    std::size_t skipped_updates = 0;
    std::size_t forecasts = 0;
};

struct RunArtifacts {
    DriverConfig config;
    std::vector<ForecastRecord> forecasts;
    std::vector<LedgerRow> ledger;
    std::vector<Vec> theta_history;  // theta after each ledger row
    std::vector<RegretRow> regret;
    std::optional<HindsightFit> hindsight;
    GrowingMdp mdp;
    RunCounters counters;

    /// Writes forecasts.jsonl, ledger.csv, mdp.jsonl, theta.csv, regret.csv
    /// and summary.json.
    void write(const std::filesystem::path& dir) const;
};

RunArtifacts run(const EventStream& stream, const DriverConfig& config);

std::vector<ForecastRecord> read_forecasts_jsonl(std::istream& is);

}  // namespace darko

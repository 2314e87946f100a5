#pragma once

// Forecast scoring against the simulator's ground-truth markers. Everything
// here is a pure function of a serialized stream and forecast records.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "darko/driver.hpp"
#include "darko/sim.hpp"

namespace darko {

/// Ground-truth episode n covers ticks (end of n-1, end] and terminates at
/// the scene of its goal marker.
struct TruthEpisode {
    int begin = 0;  // exclusive
    int end = 0;    // inclusive; tick of the goal marker
    int scene = 0;
};

struct GroundTruth {
    std::vector<TruthEpisode> episodes;
    std::vector<int> change_ticks;  // sorted ticks with a move or an interaction

    static GroundTruth from_stream(const EventStream& stream);

    /// Index of the episode containing tick t, if any.
    std::optional<std::size_t> episode_at(int t) const;
    /// State changes in (t, end of the episode containing t].
    int remaining_steps(int t) const;
};

enum class Predictor { Darko, Uniform, Logistic };

Predictor parse_predictor(const std::string& name);
std::string to_string(Predictor p);

/// Probability the predictor gives the true scene; 0 when absent.
double true_goal_prob(const ForecastRecord& r, Predictor p, int true_scene);

/// Forecasts grouped by ground-truth episode, in tick order. Forecasts past
/// the last marker are dropped.
std::vector<std::vector<const ForecastRecord*>> group_by_episode(const std::vector<ForecastRecord>& forecasts,
                                                                 const GroundTruth& truth);

struct MeanProbability {
    double value = 0.0;
    std::size_t episodes = 0;
    std::size_t skipped = 0;  // episodes without forecasts
};

/// (1/N) sum_n (1/T_n) sum_t P_n(g*_n | xi_nt).
MeanProbability mean_true_goal_prob(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth,
                                    Predictor p = Predictor::Darko);

struct Curve {
    std::vector<double> fraction;
    std::vector<double> mean;
    std::vector<double> stdev;
    std::vector<std::size_t> count;
};

/// Each episode is resampled at fraction f by the forecast at index
/// min(floor(f T), T-1), then averaged across episodes. The pooled variant
/// instead bins every forecast at its own fraction k/T and averages within
/// bins; empty bins hold NaN.
Curve fractional_time_curve(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth,
                            Predictor p = Predictor::Darko, std::size_t grid = 101, bool pooled = false);

struct LengthErrors {
    double median = 0.0;  // percent
    double mean = 0.0;    // percent
    std::vector<double> per_episode;
};

/// eps_n = mean_t |tau - tau_hat| / tau over steps with tau > 0; a missing
/// forecast counts as tau_hat = 0.
LengthErrors length_error_stats(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth);

/// Remaining-length baseline: at each forecast step, the remaining length of
/// the nearest stored state (feature distance) from earlier episodes.
LengthErrors nearest_neighbor_length_errors(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth,
                                            const std::vector<StateVec>& states, const Domain& domain);

/// States from a GrowingMdp::dump_jsonl file, indexed by id.
std::vector<StateVec> read_state_dump(std::istream& is);

double median(std::vector<double> xs);

}  // namespace darko

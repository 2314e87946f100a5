#pragma once

// Simulator-to-metrics pipelines used by the CLI and the acceptance run:
// stream construction per detector, scoring of a run, the paired
// goal-noise sweep and regret exports.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "darko/driver.hpp"
#include "darko/metrics.hpp"
#include "darko/sim.hpp"

namespace darko {

/// gt: the ground-truth channel (truth markers, rho = 1). truth: goal
/// detections copied from the truth markers with rho = true_rho. stop and
/// scene: the two detectors.
enum class DetectorKind { GroundTruth, Truth, Stop, Scene };

DetectorKind parse_detector(const std::string& name);
std::string to_string(DetectorKind k);
DetectorChannel channel_for(DetectorKind k);

struct StreamSpec {
    std::string env_template = "home1";
    int days = 3;
    double agent_noise = 0.0;
    DetectorKind detector = DetectorKind::GroundTruth;
    int window = 5;
    double velocity_threshold = 0.2;
    double false_fire_rate = 0.02;
    double true_rho = 0.95;
    double goal_noise_rate = 0.0;
    double action_accuracy = 1.0;
    std::uint64_t seed = 0;
};

/// Script, simulation, detector and noise injection, each seeded from
/// spec.seed.
EventStream make_stream(const StreamSpec& spec);

struct RunScores {
    double darko = 0.0;
    double uniform = 0.0;
    double logistic = 0.0;
    std::size_t episodes = 0;
    LengthErrors length;
    Curve curve;
};

RunScores score_run(const EventStream& stream, const std::vector<ForecastRecord>& forecasts);

struct SweepPair {
    double rate = 0.0;
    int repeat = 0;
    std::uint64_t hash_log_rho = 0;
    std::uint64_t hash_binary = 0;
    double score_log_rho = 0.0;
    double score_binary = 0.0;
    double delta = 0.0;
};

struct SweepRate {
    double rate = 0.0;
    std::size_t pairs = 0;
    double mean = 0.0;
    double stdev = 0.0;
    double frac_positive = 0.0;
};

struct NoiseSweep {
    std::string env_template;
    std::vector<SweepPair> pairs;
    std::vector<SweepRate> by_rate;
    bool pairing_verified = true;  // every pair saw byte-identical streams
};

/// For each (rate, repeat), builds the corrupted stream once per goal
/// confidence mode from the same seed, checks the two hashes agree, runs
/// both modes and records score(log_rho) - score(binary).
NoiseSweep noise_sweep(const StreamSpec& base, const std::vector<double>& rates, int repeats,
                       const DriverConfig& config);

std::vector<double> default_sweep_rates();

void write_sweep_csv(std::ostream& os, const std::vector<NoiseSweep>& sweeps);
void write_sweep_summary_csv(std::ostream& os, const std::vector<NoiseSweep>& sweeps);
void write_curve_jsonl(std::ostream& os, const Curve& curve);
void write_metrics_csv(std::ostream& os, const std::string& label, const RunScores& s);
void write_metrics_header(std::ostream& os);

/// Regret rows with an environment column, for plotting R_t/t against the
/// bound across environments.
void write_regret_figure_csv(std::ostream& os, const std::vector<std::pair<std::string, std::vector<RegretRow>>>& runs);

}  // namespace darko

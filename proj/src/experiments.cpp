#include "darko/experiments.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "darko/templates.hpp"

namespace darko {

DetectorKind parse_detector(const std::string& name) {
    if (name == "gt") return DetectorKind::GroundTruth;
    if (name == "truth") return DetectorKind::Truth;
    if (name == "stop") return DetectorKind::Stop;
    if (name == "scene") return DetectorKind::Scene;
    throw std::invalid_argument("unknown detector '" + name + "'");
}

std::string to_string(DetectorKind k) {
    switch (k) {
        case DetectorKind::GroundTruth: return "gt";
        case DetectorKind::Truth: return "truth";
        case DetectorKind::Stop: return "stop";
        case DetectorKind::Scene: return "scene";
    }
    return "gt";
}

DetectorChannel channel_for(DetectorKind k) {
    return k == DetectorKind::GroundTruth ? DetectorChannel::GroundTruth : DetectorChannel::Detected;
}

namespace {

// Independent sub-seeds so changing one stage's randomness leaves the
// others alone.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stage) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

EventStream make_stream(const StreamSpec& spec) {
    const auto env = build_environment(environment_template(spec.env_template));
    const auto script = routine_script(spec.env_template, spec.days, sub_seed(spec.seed, 0));
    auto stream = simulate(env, script, spec.agent_noise, sub_seed(spec.seed, 1));
    switch (spec.detector) {
        case DetectorKind::GroundTruth: break;
        case DetectorKind::Truth: stream = truth_detections(stream, spec.true_rho); break;
        case DetectorKind::Stop: stream = stop_detector(stream, env, spec.velocity_threshold, spec.window); break;
        case DetectorKind::Scene:
            stream = scene_detector(stream, env, spec.window, spec.false_fire_rate, sub_seed(spec.seed, 2));
            break;
    }
    if (spec.goal_noise_rate > 0.0) stream = inject_goal_noise(stream, spec.goal_noise_rate, sub_seed(spec.seed, 3));
    if (spec.action_accuracy < 1.0) stream = inject_action_noise(stream, spec.action_accuracy, sub_seed(spec.seed, 4));
    return stream;
}

RunScores score_run(const EventStream& stream, const std::vector<ForecastRecord>& forecasts) {
    const auto truth = GroundTruth::from_stream(stream);
    RunScores s;
    const auto d = mean_true_goal_prob(forecasts, truth, Predictor::Darko);
    s.darko = d.value;
    s.episodes = d.episodes;
    s.uniform = mean_true_goal_prob(forecasts, truth, Predictor::Uniform).value;
    s.logistic = mean_true_goal_prob(forecasts, truth, Predictor::Logistic).value;
    s.length = length_error_stats(forecasts, truth);
    s.curve = fractional_time_curve(forecasts, truth, Predictor::Darko);
    return s;
}

std::vector<double> default_sweep_rates() {
    std::vector<double> r;
    for (int k = 1; k <= 9; ++k) r.push_back(k / 10.0);
    return r;
}

NoiseSweep noise_sweep(const StreamSpec& base, const std::vector<double>& rates, int repeats,
                       const DriverConfig& config) {
    NoiseSweep out;
    out.env_template = base.env_template;
    for (double rate : rates) {
        SweepRate agg;
        agg.rate = rate;
        double sum = 0.0, sq = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            StreamSpec spec = base;
            spec.goal_noise_rate = rate;
            spec.seed = sub_seed(base.seed, 1000 + static_cast<std::uint64_t>(std::lround(rate * 1000)) * 64 +
                                                static_cast<std::uint64_t>(rep));
            SweepPair pair;
            pair.rate = rate;
            pair.repeat = rep;

            auto cfg = config;
            cfg.detector_channel = channel_for(spec.detector);
            const auto for_log = make_stream(spec);
            pair.hash_log_rho = for_log.hash();
            cfg.goal_confidence_mode = GoalConfidenceMode::LogRho;
            pair.score_log_rho = score_run(for_log, run(for_log, cfg).forecasts).darko;

            const auto for_bin = make_stream(spec);
            pair.hash_binary = for_bin.hash();
            cfg.goal_confidence_mode = GoalConfidenceMode::Binary;
            pair.score_binary = score_run(for_bin, run(for_bin, cfg).forecasts).darko;

            if (pair.hash_log_rho != pair.hash_binary) out.pairing_verified = false;
            pair.delta = pair.score_log_rho - pair.score_binary;
            sum += pair.delta;
            sq += pair.delta * pair.delta;
            if (pair.delta > 0.0) agg.frac_positive += 1.0;
            ++agg.pairs;
            out.pairs.push_back(pair);
        }
        if (agg.pairs) {
            const double n = static_cast<double>(agg.pairs);
            agg.mean = sum / n;
            agg.stdev = std::sqrt(std::max(0.0, sq / n - agg.mean * agg.mean));
            agg.frac_positive /= n;
        }
        out.by_rate.push_back(agg);
    }
    return out;
}

void write_sweep_csv(std::ostream& os, const std::vector<NoiseSweep>& sweeps) {
    os << std::setprecision(17);
    os << "env,rate,repeat,hash_log_rho,hash_binary,score_log_rho,score_binary,delta\n";
    for (const auto& s : sweeps)
        for (const auto& p : s.pairs)
            os << s.env_template << ',' << p.rate << ',' << p.repeat << ',' << p.hash_log_rho << ',' << p.hash_binary
               << ',' << p.score_log_rho << ',' << p.score_binary << ',' << p.delta << '\n';
}

void write_sweep_summary_csv(std::ostream& os, const std::vector<NoiseSweep>& sweeps) {
    os << std::setprecision(17);
    os << "env,rate,pairs,mean_delta,std_delta,frac_positive,pairing_verified\n";
    for (const auto& s : sweeps)
        for (const auto& r : s.by_rate)
            os << s.env_template << ',' << r.rate << ',' << r.pairs << ',' << r.mean << ',' << r.stdev << ','
               << r.frac_positive << ',' << int(s.pairing_verified) << '\n';
}

void write_curve_jsonl(std::ostream& os, const Curve& curve) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    for (std::size_t i = 0; i < curve.fraction.size(); ++i)
        os << nlohmann::json{{"fraction", curve.fraction[i]},
                             {"mean", num(curve.mean[i])},
                             {"std", num(curve.stdev[i])},
                             {"episodes", curve.count[i]}}
                  .dump()
           << '\n';
}

void write_metrics_header(std::ostream& os) {
    os << "run,episodes,p_darko,p_logistic,p_uniform,length_median_pct,length_mean_pct,curve_at_0.1,curve_at_1.0\n";
}

void write_metrics_csv(std::ostream& os, const std::string& label, const RunScores& s) {
    os << std::setprecision(17);
    const double c01 = s.curve.mean.size() > 10 ? s.curve.mean[10] : std::nan("");
    const double c10 = s.curve.mean.empty() ? std::nan("") : s.curve.mean.back();
    os << label << ',' << s.episodes << ',' << s.darko << ',' << s.logistic << ',' << s.uniform << ','
       << s.length.median << ',' << s.length.mean << ',' << c01 << ',' << c10 << '\n';
}

void write_regret_figure_csv(std::ostream& os,
                             const std::vector<std::pair<std::string, std::vector<RegretRow>>>& runs) {
    os << std::setprecision(17);
    os << "env,t,loss_online,loss_hindsight,regret,avg_regret,bound\n";
    for (const auto& [env, rows] : runs)
        for (const auto& r : rows)
            os << env << ',' << r.t << ',' << r.loss_online << ',' << r.loss_hindsight << ',' << r.regret << ','
               << r.avg_regret << ',' << r.bound << '\n';
}

}  // namespace darko

// darko: simulate streams, run the online learner, score forecasts, and run
// the noise sweep and regret experiments. All randomness comes from --seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "darko/driver.hpp"
#include "darko/experiments.hpp"
#include "darko/metrics.hpp"
#include "darko/templates.hpp"

namespace fs = std::filesystem;
using namespace darko;

namespace {

EventStream load_stream(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stream " + path);
    return EventStream::read_jsonl(in);
}

DriverConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return DriverConfig::from_json(nlohmann::json::parse(in));
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

std::vector<std::string> templates_or_all(const std::string& name) {
    return name.empty() || name == "all" ? template_names() : std::vector<std::string>{name};
}

struct StreamFlags {
    StreamSpec spec;
    std::string detector = "gt";

    void add(CLI::App* app, bool allow_all = false) {
        auto names = template_names();
        if (allow_all) names.push_back("all");
        app->add_option("--env-template", spec.env_template, "environment template, or all")
            ->check(CLI::IsMember(names));
        app->add_option("--days", spec.days, "simulated days");
        app->add_option("--agent-noise", spec.agent_noise, "per-tick random step probability");
        app->add_option("--detector", detector, "goal channel")->check(CLI::IsMember({"gt", "truth", "stop", "scene"}));
        app->add_option("--noise-rate", spec.goal_noise_rate, "spurious goal detections per true one");
        app->add_option("--false-fire-rate", spec.false_fire_rate, "scene detector false fires per tick");
        app->add_option("--action-accuracy", spec.action_accuracy, "probability an action is reported correctly");
    }
    StreamSpec finish(std::uint64_t seed) {
        spec.detector = parse_detector(detector);
        spec.seed = seed;
        return spec;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online goal forecasting and reward learning over egocentric event streams"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "random seed")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "write a simulated event stream as JSONL");
    StreamFlags sim_flags;
    sim_flags.add(sim);
    std::string sim_out = "-";
    sim->add_option("--out", sim_out, "output file, - for stdout");

    // run
    auto* run_cmd = app.add_subcommand("run", "run the online learner over a stream");
    std::string run_stream, run_config, run_out = "run", run_feature, run_detector;
    run_cmd->add_option("--stream", run_stream, "event stream JSONL")->required();
    run_cmd->add_option("--config", run_config, "driver config JSON");
    run_cmd->add_option("--out", run_out, "artifact directory");
    run_cmd->add_option("--feature-mode", run_feature, "full, state_only or position_only");
    run_cmd->add_option("--detector", run_detector, "gt uses truth markers; others use detections")
        ->check(CLI::IsMember({"gt", "truth", "stop", "scene"}));

    // eval
    auto* eval = app.add_subcommand("eval", "score forecasts against a stream's truth markers");
    std::string eval_stream, eval_run, eval_out = "eval", eval_label = "run";
    bool eval_pooled = false, eval_nn = false;
    eval->add_option("--stream", eval_stream, "event stream JSONL")->required();
    eval->add_option("--run", eval_run, "artifact directory of `darko run`")->required();
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--label", eval_label, "row label in metrics.csv");
    eval->add_flag("--pooled", eval_pooled, "pool (episode, fraction) samples for the curve");
    eval->add_flag("--nn", eval_nn, "also score the nearest-neighbor length baseline");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "paired log_rho vs binary goal-noise sweep");
    StreamFlags sweep_flags;
    sweep_flags.detector = "truth";
    sweep_flags.spec.env_template = "all";
    sweep_flags.add(sweep, true);
    int repeats = 5;
    std::vector<double> rates = default_sweep_rates();
    std::string sweep_config, sweep_out = "sweep";
    sweep->add_option("--repeats", repeats, "repeats per rate");
    sweep->add_option("--rates", rates, "goal-noise rates");
    sweep->add_option("--config", sweep_config, "driver config JSON");
    sweep->add_option("--out", sweep_out, "output directory");

    // regret
    auto* regret = app.add_subcommand("regret", "online vs hindsight regret per environment");
    StreamFlags regret_flags;
    regret_flags.spec.env_template = "all";
    regret_flags.add(regret, true);
    std::string regret_config, regret_out = "regret";
    regret->add_option("--config", regret_config, "driver config JSON");
    regret->add_option("--out", regret_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            const auto stream = make_stream(sim_flags.finish(seed));
            if (sim_out == "-") {
                stream.write_jsonl(std::cout);
            } else {
                auto os = open_out(sim_out);
                stream.write_jsonl(os);
            }
        } else if (*run_cmd) {
            auto cfg = load_config(run_config);
            cfg.seed = seed;
            if (!run_feature.empty()) cfg.feature_mode = parse_feature_mode(run_feature);
            if (!run_detector.empty()) cfg.detector_channel = channel_for(parse_detector(run_detector));
            const auto art = run(load_stream(run_stream), cfg);
            art.write(run_out);
            std::cerr << "episodes " << art.ledger.size() << ", forecasts " << art.forecasts.size() << ", states "
                      << art.mdp.num_states() << "\n";
        } else if (*eval) {
            const auto stream = load_stream(eval_stream);
            std::ifstream fin(fs::path(eval_run) / "forecasts.jsonl");
            if (!fin) throw std::runtime_error("no forecasts.jsonl in " + eval_run);
            const auto forecasts = read_forecasts_jsonl(fin);
            const auto truth = GroundTruth::from_stream(stream);
            auto scores = score_run(stream, forecasts);
            if (eval_pooled) scores.curve = fractional_time_curve(forecasts, truth, Predictor::Darko, 101, true);
            fs::create_directories(eval_out);
            {
                auto os = open_out(fs::path(eval_out) / "metrics.csv");
                write_metrics_header(os);
                write_metrics_csv(os, eval_label, scores);
            }
            {
                auto os = open_out(fs::path(eval_out) / "curve.jsonl");
                write_curve_jsonl(os, scores.curve);
            }
            if (eval_nn) {
                std::ifstream min(fs::path(eval_run) / "mdp.jsonl");
                if (!min) throw std::runtime_error("no mdp.jsonl in " + eval_run);
                const auto nn = nearest_neighbor_length_errors(forecasts, truth, read_state_dump(min), stream.domain());
                auto os = open_out(fs::path(eval_out) / "length_nn.csv");
                os << "median_pct,mean_pct\n" << nn.median << ',' << nn.mean << '\n';
            }
            std::cout << "P_darko " << scores.darko << " P_logistic " << scores.logistic << " P_uniform "
                      << scores.uniform << " length_median " << scores.length.median << "% length_mean "
                      << scores.length.mean << "%\n";
        } else if (*sweep) {
            auto cfg = load_config(sweep_config);
            cfg.hindsight = false;
            cfg.length_forecast = false;
            cfg.logistic = false;
            std::vector<NoiseSweep> all;
            for (const auto& name : templates_or_all(sweep_flags.spec.env_template)) {
                auto spec = sweep_flags.finish(seed);
                spec.env_template = name;
                all.push_back(noise_sweep(spec, rates, repeats, cfg));
                std::cerr << name << (all.back().pairing_verified ? " pairing ok" : " PAIRING MISMATCH") << "\n";
            }
            fs::create_directories(sweep_out);
            auto a = open_out(fs::path(sweep_out) / "sweep.csv");
            write_sweep_csv(a, all);
            auto b = open_out(fs::path(sweep_out) / "sweep_summary.csv");
            write_sweep_summary_csv(b, all);
        } else if (*regret) {
            auto cfg = load_config(regret_config);
            cfg.hindsight = true;
            cfg.forecasts = false;
            std::vector<std::pair<std::string, std::vector<RegretRow>>> rows;
            for (const auto& name : templates_or_all(regret_flags.spec.env_template)) {
                auto spec = regret_flags.finish(seed);
                spec.env_template = name;
                auto run_cfg = cfg;
                run_cfg.detector_channel = channel_for(spec.detector);
                run_cfg.seed = seed;
                rows.emplace_back(name, run(make_stream(spec), run_cfg).regret);
                if (!rows.back().second.empty()) {
                    const auto& last = rows.back().second.back();
                    std::cerr << name << " t=" << last.t << " R_t/t=" << last.avg_regret << " bound=" << last.bound
                              << "\n";
                }
            }
            auto os = open_out(fs::path(regret_out) / "regret.csv");
            write_regret_figure_csv(os, rows);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

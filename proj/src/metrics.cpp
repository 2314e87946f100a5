#include "darko/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace darko {

GroundTruth GroundTruth::from_stream(const EventStream& stream) {
    GroundTruth g;
    std::optional<Position> last;
    int prev_end = -1;
    for (const auto& e : stream.events) {
        if (e.kind == EventKind::Position) {
            if (last && *last != e.position) g.change_ticks.push_back(e.step);
            last = e.position;
        } else if (e.kind == EventKind::Truth) {
            if (e.marker == TruthMarker::Goal) {
                g.episodes.push_back({prev_end, e.step, e.scene});
                prev_end = e.step;
            } else {
                g.change_ticks.push_back(e.step);
            }
        }
    }
    std::sort(g.change_ticks.begin(), g.change_ticks.end());
    return g;
}

std::optional<std::size_t> GroundTruth::episode_at(int t) const {
    const auto it = std::lower_bound(episodes.begin(), episodes.end(), t,
                                     [](const TruthEpisode& e, int tick) { return e.end < tick; });
    if (it == episodes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - episodes.begin());
}

int GroundTruth::remaining_steps(int t) const {
    const auto n = episode_at(t);
    if (!n) return 0;
    const auto lo = std::upper_bound(change_ticks.begin(), change_ticks.end(), t);
    const auto hi = std::upper_bound(change_ticks.begin(), change_ticks.end(), episodes[*n].end);
    return static_cast<int>(std::max<std::ptrdiff_t>(0, hi - lo));
}

Predictor parse_predictor(const std::string& name) {
    if (name == "darko") return Predictor::Darko;
    if (name == "uniform") return Predictor::Uniform;
    if (name == "logistic") return Predictor::Logistic;
    throw std::invalid_argument("unknown predictor '" + name + "'");
}

std::string to_string(Predictor p) {
    switch (p) {
        case Predictor::Darko: return "darko";
        case Predictor::Uniform: return "uniform";
        case Predictor::Logistic: return "logistic";
    }
    return "darko";
}

double true_goal_prob(const ForecastRecord& r, Predictor p, int true_scene) {
    const auto& m = p == Predictor::Darko ? r.scene_posterior : p == Predictor::Uniform ? r.uniform : r.logistic;
    const auto it = m.find(true_scene);
    return it == m.end() ? 0.0 : it->second;
}

std::vector<std::vector<const ForecastRecord*>> group_by_episode(const std::vector<ForecastRecord>& forecasts,
                                                                 const GroundTruth& truth) {
    std::vector<std::vector<const ForecastRecord*>> out(truth.episodes.size());
    for (const auto& r : forecasts)
        if (const auto n = truth.episode_at(r.t)) out[*n].push_back(&r);
    for (auto& ep : out)
        std::stable_sort(ep.begin(), ep.end(), [](const ForecastRecord* a, const ForecastRecord* b) { return a->t < b->t; });
    return out;
}

MeanProbability mean_true_goal_prob(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth,
                                    Predictor p) {
    MeanProbability out;
    const auto groups = group_by_episode(forecasts, truth);
    double acc = 0.0;
    for (std::size_t n = 0; n < groups.size(); ++n) {
        if (groups[n].empty()) {
            ++out.skipped;
            continue;
        }
        double s = 0.0;
        for (const auto* r : groups[n]) s += true_goal_prob(*r, p, truth.episodes[n].scene);
        acc += s / static_cast<double>(groups[n].size());
        ++out.episodes;
    }
    out.value = out.episodes ? acc / static_cast<double>(out.episodes) : 0.0;
    return out;
}

Curve fractional_time_curve(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth, Predictor p,
                            std::size_t grid, bool pooled) {
    if (grid < 2) throw std::invalid_argument("fraction grid needs at least two points");
    Curve c;
    std::vector<double> sum(grid, 0.0), sq(grid, 0.0);
    c.count.assign(grid, 0);
    for (std::size_t i = 0; i < grid; ++i) c.fraction.push_back(static_cast<double>(i) / static_cast<double>(grid - 1));

    auto add = [&](std::size_t i, double v) {
        sum[i] += v;
        sq[i] += v * v;
        ++c.count[i];
    };
    const auto groups = group_by_episode(forecasts, truth);
    for (std::size_t n = 0; n < groups.size(); ++n) {
        const auto& ep = groups[n];
        const auto T = ep.size();
        if (T == 0) continue;
        const int scene = truth.episodes[n].scene;
        if (pooled) {
            for (std::size_t k = 0; k < T; ++k) {
                const double f = static_cast<double>(k) / static_cast<double>(T);
                add(static_cast<std::size_t>(std::lround(f * static_cast<double>(grid - 1))),
                    true_goal_prob(*ep[k], p, scene));
            }
        } else {
            for (std::size_t i = 0; i < grid; ++i) {
                const auto k = std::min(static_cast<std::size_t>(std::floor(c.fraction[i] * static_cast<double>(T))), T - 1);
                add(i, true_goal_prob(*ep[k], p, scene));
            }
        }
    }
    for (std::size_t i = 0; i < grid; ++i) {
        if (c.count[i] == 0) {
            c.mean.push_back(std::numeric_limits<double>::quiet_NaN());
            c.stdev.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double n = static_cast<double>(c.count[i]);
        const double m = sum[i] / n;
        c.mean.push_back(m);
        c.stdev.push_back(std::sqrt(std::max(0.0, sq[i] / n - m * m)));
    }
    return c;
}

double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace {

LengthErrors summarize(std::vector<double> per_episode) {
    LengthErrors out;
    out.per_episode = std::move(per_episode);
    if (out.per_episode.empty()) {
        out.median = out.mean = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    double acc = 0.0;
    for (double e : out.per_episode) acc += e;
    out.mean = 100.0 * acc / static_cast<double>(out.per_episode.size());
    out.median = 100.0 * median(out.per_episode);
    return out;
}

}  // namespace

LengthErrors length_error_stats(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth) {
    std::vector<double> eps;
    for (const auto& ep : group_by_episode(forecasts, truth)) {
        double acc = 0.0;
        std::size_t n = 0;
        for (const auto* r : ep) {
            const int tau = truth.remaining_steps(r->t);
            if (tau == 0) continue;
            const double hat = r->expected_length.value_or(0.0);
            acc += std::abs(tau - hat) / tau;
            ++n;
        }
        if (n) eps.push_back(acc / static_cast<double>(n));
    }
    return summarize(std::move(eps));
}

LengthErrors nearest_neighbor_length_errors(const std::vector<ForecastRecord>& forecasts, const GroundTruth& truth,
                                            const std::vector<StateVec>& states, const Domain& domain) {
    const FeatureMap fm(domain, FeatureMode::StateOnly);
    std::vector<std::pair<Vec, int>> library;
    std::vector<double> eps;
    for (const auto& ep : group_by_episode(forecasts, truth)) {
        std::vector<std::pair<Vec, int>> seen;
        double acc = 0.0;
        std::size_t n = 0;
        for (const auto* r : ep) {
            if (r->state >= states.size()) throw std::out_of_range("forecast refers to an unknown state");
            const Vec x = fm(states[r->state], Action::move({}));
            const int tau = truth.remaining_steps(r->t);
            seen.emplace_back(x, tau);
            if (tau == 0) continue;
            double hat = 0.0, best = std::numeric_limits<double>::infinity();
            for (const auto& [y, len] : library) {
                const double d = (x - y).squaredNorm();
                if (d < best) {
                    best = d;
                    hat = len;
                }
            }
            acc += std::abs(tau - hat) / tau;
            ++n;
        }
        if (n) eps.push_back(acc / static_cast<double>(n));
        library.insert(library.end(), seen.begin(), seen.end());
    }
    return summarize(std::move(eps));
}

std::vector<StateVec> read_state_dump(std::istream& is) {
    std::vector<StateVec> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto id = j.at("id").get<std::size_t>();
        if (id != out.size()) throw std::runtime_error("state dump ids must be dense and ordered");
        StateVec s;
        const auto& p = j.at("position");
        s.position = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
        const auto held = j.at("held").get<std::vector<int>>();
        for (std::size_t k = 0; k < held.size(); ++k)
            if (held[k]) s.held |= std::uint64_t{1} << k;
        s.prev_goal = j.at("prev_goal").get<int>();
        out.push_back(s);
    }
    return out;
}

}  // namespace darko

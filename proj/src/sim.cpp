#include "darko/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace darko {

using nlohmann::json;

namespace {

int manhattan(const Position& a, const Position& b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z);
}

json to_json(const Position& p) { return json::array({p.x, p.y, p.z}); }

Position position_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

const char* marker_name(TruthMarker m) {
    switch (m) {
        case TruthMarker::Goal: return "goal";
        case TruthMarker::Acquire: return "acquire";
        case TruthMarker::Release: return "release";
    }
    return "goal";
}

void sort_by_step(std::vector<Event>& events) {
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.step < b.step; });
}

// One position per tick, indexed by step.
std::vector<Position> positions_by_tick(const EventStream& stream) {
    std::vector<Position> out;
    for (const auto& e : stream.events) {
        if (e.kind != EventKind::Position) continue;
        if (e.step >= static_cast<int>(out.size())) out.resize(static_cast<std::size_t>(e.step) + 1, e.position);
        out[static_cast<std::size_t>(e.step)] = e.position;
    }
    return out;
}

EventStream with_appended(const EventStream& stream, std::vector<Event> extra) {
    EventStream out = stream;
    out.events.insert(out.events.end(), extra.begin(), extra.end());
    sort_by_step(out.events);
    return out;
}

}  // namespace

Environment::Environment(EnvironmentSpec spec) : spec_(std::move(spec)) {
    const auto& e = spec_.extent;
    if (e.x < 1 || e.y < 1 || e.z < 1) throw std::invalid_argument("environment extent must be positive");
    const std::size_t n = static_cast<std::size_t>(e.x) * e.y * e.z;
    scene_of_.assign(n, -1);
    const int k = static_cast<int>(spec_.scene_names.size());
    room_of_scene_.assign(static_cast<std::size_t>(k), -1);
    for (std::size_t r = 0; r < spec_.rooms.size(); ++r) {
        const auto& room = spec_.rooms[r];
        if (room.scene < 0 || room.scene >= k) throw std::invalid_argument("room scene type out of range");
        if (room_of_scene_[room.scene] >= 0) throw std::invalid_argument("two rooms share a scene type");
        room_of_scene_[room.scene] = static_cast<int>(r);
        for (const auto& c : room.cells) {
            if (!free(c)) throw std::invalid_argument("room cell is a wall or out of bounds");
            if (scene_of_[index(c)] >= 0) throw std::invalid_argument("rooms overlap");
            scene_of_[index(c)] = room.scene;
        }
        if (!free(room.goal) || scene_of_[index(room.goal)] != room.scene)
            throw std::invalid_argument("room goal must be one of its cells");
    }
    for (const auto& p : spec_.object_spawns)
        if (!free(p)) throw std::invalid_argument("object spawn is not a free cell");
    if (spec_.object_spawns.size() != spec_.object_names.size())
        throw std::invalid_argument("every object needs one spawn cell");

    dist_.assign(spec_.rooms.size(), std::vector<int>(n, -1));
    for (std::size_t r = 0; r < spec_.rooms.size(); ++r) {
        auto& d = dist_[r];
        std::deque<Position> q{spec_.rooms[r].goal};
        d[index(spec_.rooms[r].goal)] = 0;
        while (!q.empty()) {
            const auto p = q.front();
            q.pop_front();
            for (const auto& nb : neighbors(p)) {
                if (d[index(nb)] >= 0) continue;
                d[index(nb)] = d[index(p)] + 1;
                q.push_back(nb);
            }
        }
    }
    for (std::size_t r = 1; r < spec_.rooms.size(); ++r)
        if (dist_[0][index(spec_.rooms[r].goal)] < 0)
            throw DisconnectedError("room " + std::to_string(spec_.rooms[r].scene) + " is not reachable from room " +
                                    std::to_string(spec_.rooms[0].scene));
    if (!spec_.rooms.empty())
        for (const auto& p : spec_.object_spawns)
            if (dist_[0][index(p)] < 0) throw DisconnectedError("object spawn is not reachable");
}

Domain Environment::domain() const {
    Domain d;
    d.bounds = {spec_.extent.x - 1, spec_.extent.y - 1, spec_.extent.z - 1};
    d.num_objects = static_cast<int>(spec_.object_names.size());
    d.num_scenes = static_cast<int>(spec_.scene_names.size());
    return d;
}

std::size_t Environment::index(const Position& p) const {
    return (static_cast<std::size_t>(p.z) * spec_.extent.y + p.y) * spec_.extent.x + p.x;
}

bool Environment::free(const Position& p) const {
    const auto& e = spec_.extent;
    if (p.x < 0 || p.y < 0 || p.z < 0 || p.x >= e.x || p.y >= e.y || p.z >= e.z) return false;
    return !spec_.walls.count(p);
}

std::vector<Position> Environment::neighbors(const Position& p) const {
    std::vector<Position> out;
    for (const auto& d : move_deltas(Neighborhood::Axis6)) {
        const auto q = p + d;
        if (!free(q)) continue;
        if (d.z != 0 && !(spec_.stairs.count(p) && spec_.stairs.count(q))) continue;
        out.push_back(q);
    }
    return out;
}

int Environment::scene_at(const Position& p) const { return free(p) ? scene_of_[index(p)] : -1; }

const RoomSpec& Environment::room(int scene) const {
    if (scene < 0 || scene >= static_cast<int>(room_of_scene_.size()) || room_of_scene_[scene] < 0)
        throw std::out_of_range("no room for scene " + std::to_string(scene));
    return spec_.rooms[static_cast<std::size_t>(room_of_scene_[scene])];
}

int Environment::distance(const Position& p, int scene) const {
    room(scene);
    if (!free(p)) return -1;
    return dist_[static_cast<std::size_t>(room_of_scene_[scene])][index(p)];
}

Position Environment::step_toward(const Position& p, int scene) const {
    const int d = distance(p, scene);
    if (d <= 0) return p;
    for (const auto& q : neighbors(p))
        if (distance(q, scene) == d - 1) return q;
    return p;
}

Environment build_environment(EnvironmentSpec spec) { return Environment(std::move(spec)); }

std::vector<Direction> Script::flattened() const {
    std::vector<Direction> out;
    for (const auto& day : days) out.insert(out.end(), day.begin(), day.end());
    return out;
}

void validate_script(const Script& script, const Environment& env) {
    const int k = static_cast<int>(env.spec().scene_names.size());
    const int o = static_cast<int>(env.spec().object_names.size());
    if (script.start_scene < 0 || script.start_scene >= k) throw std::invalid_argument("unknown start scene");
    std::vector<char> held(static_cast<std::size_t>(o), 0);
    for (const auto& d : script.flattened()) {
        if (d.scene < 0 || d.scene >= k) throw std::invalid_argument("direction names an unknown scene");
        if (d.dwell < 0) throw std::invalid_argument("negative dwell");
        for (int j : d.release) {
            if (j < 0 || j >= o) throw std::invalid_argument("direction names an unknown object");
            if (!held[j]) throw std::invalid_argument("release of an object not held");
            held[j] = 0;
        }
        for (int j : d.acquire) {
            if (j < 0 || j >= o) throw std::invalid_argument("direction names an unknown object");
            if (held[j]) throw std::invalid_argument("acquire of an object already held");
            held[j] = 1;
        }
    }
}

Event Event::detected_action(int step, ActionKind k, int object, double conf) {
    Event e;
    e.step = step;
    e.kind = EventKind::Action;
    e.action = k;
    e.object = object;
    e.confidence = conf;
    return e;
}

Event Event::goal(int step, int scene, double rho) {
    Event e;
    e.step = step;
    e.kind = EventKind::Goal;
    e.scene = scene;
    e.rho = rho;
    return e;
}

Event Event::truth_goal(int step, int scene, Position p) {
    Event e;
    e.step = step;
    e.kind = EventKind::Truth;
    e.marker = TruthMarker::Goal;
    e.scene = scene;
    e.position = p;
    return e;
}

Event Event::truth_action(int step, TruthMarker m, int object) {
    Event e;
    e.step = step;
    e.kind = EventKind::Truth;
    e.marker = m;
    e.object = object;
    return e;
}

Domain EventStream::domain() const {
    Domain d;
    d.bounds = header.bounds;
    d.num_objects = header.num_objects;
    d.num_scenes = header.num_scenes;
    d.neighborhood = header.neighborhood;
    return d;
}

void EventStream::write_jsonl(std::ostream& os) const {
    json h = {{"kind", "header"},
              {"environment", header.environment},
              {"bounds", to_json(header.bounds)},
              {"num_objects", header.num_objects},
              {"num_scenes", header.num_scenes},
              {"neighborhood", header.neighborhood == Neighborhood::Axis6 ? "axis6" : "full26"},
              {"seed", header.seed}};
    os << h.dump() << '\n';
    for (const auto& e : events) {
        json j = {{"step", e.step}};
        switch (e.kind) {
            case EventKind::Position:
                j["kind"] = "position";
                j["position"] = to_json(e.position);
                break;
            case EventKind::Action:
                j["kind"] = "action";
                j["action"] = e.action == ActionKind::Acquire ? "acquire" : "release";
                j["object"] = e.object;
                j["confidence"] = e.confidence;
                break;
            case EventKind::Goal:
                j["kind"] = "goal";
                j["scene"] = e.scene;
                j["rho"] = e.rho;
                break;
            case EventKind::Truth:
                j["kind"] = "truth";
                j["marker"] = marker_name(e.marker);
                if (e.marker == TruthMarker::Goal) {
                    j["scene"] = e.scene;
                    j["position"] = to_json(e.position);
                } else {
                    j["object"] = e.object;
                }
                break;
        }
        os << j.dump() << '\n';
    }
}

EventStream EventStream::read_jsonl(std::istream& is) {
    EventStream out;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "header") {
            out.header.environment = j.at("environment").get<std::string>();
            out.header.bounds = position_from(j.at("bounds"));
            out.header.num_objects = j.at("num_objects").get<int>();
            out.header.num_scenes = j.at("num_scenes").get<int>();
            out.header.neighborhood =
                j.value("neighborhood", std::string("axis6")) == "full26" ? Neighborhood::Full26 : Neighborhood::Axis6;
            out.header.seed = j.value("seed", std::uint64_t{0});
            have_header = true;
            continue;
        }
        Event e;
        e.step = j.at("step").get<int>();
        if (kind == "position") {
            e.kind = EventKind::Position;
            e.position = position_from(j.at("position"));
        } else if (kind == "action") {
            e.kind = EventKind::Action;
            const auto a = j.at("action").get<std::string>();
            if (a != "acquire" && a != "release") throw std::invalid_argument("unknown action kind: " + a);
            e.action = a == "acquire" ? ActionKind::Acquire : ActionKind::Release;
            e.object = j.at("object").get<int>();
            e.confidence = j.value("confidence", 1.0);
        } else if (kind == "goal") {
            e.kind = EventKind::Goal;
            e.scene = j.at("scene").get<int>();
            e.rho = j.value("rho", 1.0);
        } else if (kind == "truth") {
            e.kind = EventKind::Truth;
            const auto m = j.at("marker").get<std::string>();
            if (m == "goal") {
                e.marker = TruthMarker::Goal;
                e.scene = j.at("scene").get<int>();
                e.position = position_from(j.at("position"));
            } else if (m == "acquire" || m == "release") {
                e.marker = m == "acquire" ? TruthMarker::Acquire : TruthMarker::Release;
                e.object = j.at("object").get<int>();
            } else {
                throw std::invalid_argument("unknown truth marker: " + m);
            }
        } else {
            throw std::invalid_argument("unknown event kind: " + kind);
        }
        out.events.push_back(e);
    }
    if (!have_header) throw std::invalid_argument("event stream has no header line");
    return out;
}

std::string EventStream::to_jsonl() const {
    std::ostringstream os;
    write_jsonl(os);
    return os.str();
}

std::uint64_t EventStream::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_jsonl()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

EventStream simulate(const Environment& env, const Script& script, double agent_noise, std::uint64_t seed) {
    if (!(agent_noise >= 0.0 && agent_noise < 1.0)) throw std::invalid_argument("agent_noise must lie in [0,1)");
    validate_script(script, env);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    EventStream out;
    const auto dom = env.domain();
    out.header = {env.spec().name, dom.bounds, dom.num_objects, dom.num_scenes, Neighborhood::Axis6, seed};
    int step = 0;
    Position pos = env.room(script.start_scene).goal;
    out.events.push_back(Event::at(step, pos));
    for (const auto& d : script.flattened()) {
        const auto goal = env.room(d.scene).goal;
        while (pos != goal) {
            if (agent_noise > 0.0 && unif(rng) < agent_noise) {
                const auto nb = env.neighbors(pos);
                pos = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
            } else {
                pos = env.step_toward(pos, d.scene);
            }
            out.events.push_back(Event::at(++step, pos));
        }
        out.events.push_back(Event::truth_goal(step, d.scene, pos));
        for (int k = 0; k < d.dwell; ++k) out.events.push_back(Event::at(++step, pos));
        auto interact = [&](ActionKind kind, TruthMarker marker, int j) {
            out.events.push_back(Event::at(++step, pos));
            out.events.push_back(Event::detected_action(step, kind, j));
            out.events.push_back(Event::truth_action(step, marker, j));
        };
        for (int j : d.release) interact(ActionKind::Release, TruthMarker::Release, j);
        for (int j : d.acquire) interact(ActionKind::Acquire, TruthMarker::Acquire, j);
    }
    return out;
}

EventStream stop_detector(const EventStream& stream, const Environment& env, double velocity_threshold, int window,
                          double rho) {
    if (window < 1) throw std::invalid_argument("window must be at least one tick");
    const auto pos = positions_by_tick(stream);
    std::vector<Event> found;
    bool armed = true;
    int last_fire = -window;
    int moved = 0;  // displacement summed over the trailing window
    for (int t = 1; t < static_cast<int>(pos.size()); ++t) {
        moved += manhattan(pos[t], pos[t - 1]);
        if (t > window) moved -= manhattan(pos[t - window], pos[t - window - 1]);
        if (t < window) continue;
        const double mean = static_cast<double>(moved) / window;
        if (mean >= velocity_threshold) {
            if (t - last_fire >= window) armed = true;
            continue;
        }
        if (!armed || t - last_fire < window) continue;
        const int scene = env.scene_at(pos[t]);
        if (scene < 0) continue;
        found.push_back(Event::goal(t, scene, rho));
        armed = false;
        last_fire = t;
    }
    return with_appended(stream, std::move(found));
}

EventStream scene_detector(const EventStream& stream, const Environment& env, int window, double false_fire_rate,
                           std::uint64_t seed, double rho) {
    if (window < 1) throw std::invalid_argument("window must be at least one tick");
    const auto pos = positions_by_tick(stream);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> any_scene(0, std::max(0, stream.header.num_scenes - 1));
    std::vector<Event> found;
    int room = -2, inside = 0;
    bool fired = false;
    for (int t = 0; t < static_cast<int>(pos.size()); ++t) {
        const int sc = env.scene_at(pos[t]);
        if (sc == room) {
            ++inside;
        } else {
            room = sc;
            inside = 1;
            fired = false;
        }
        if (sc >= 0 && !fired && inside >= window) {
            found.push_back(Event::goal(t, sc, rho));
            fired = true;
        } else if (unif(rng) < false_fire_rate) {
            found.push_back(Event::goal(t, any_scene(rng), rho));
        }
    }
    return with_appended(stream, std::move(found));
}

EventStream truth_detections(const EventStream& stream, double rho) {
    std::vector<Event> found;
    for (const auto& e : stream.events)
        if (e.kind == EventKind::Truth && e.marker == TruthMarker::Goal) found.push_back(Event::goal(e.step, e.scene, rho));
    return with_appended(stream, std::move(found));
}

double sample_spurious_rho(std::mt19937_64& rng, double mean, double sd) {
    const double x = std::normal_distribution<double>(mean, sd)(rng);
    return std::clamp(x, 1e-3, 1.0);
}

EventStream inject_goal_noise(const EventStream& stream, double rate, std::uint64_t seed, double rho_mean,
                              double rho_sd) {
    if (!(rate >= 0.0 && rate <= 0.9 + 1e-12)) throw std::invalid_argument("goal noise rate must lie in [0, 0.9]");
    const auto n = std::count_if(stream.events.begin(), stream.events.end(),
                                 [](const Event& e) { return e.kind == EventKind::Goal; });
    const auto m = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
    if (m == 0 || stream.events.empty()) return stream;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> tick(stream.events.front().step, stream.events.back().step);
    std::uniform_int_distribution<int> scene(0, std::max(0, stream.header.num_scenes - 1));
    std::vector<Event> extra;
    for (std::size_t i = 0; i < m; ++i) {
        const int t = tick(rng);
        const int s = scene(rng);
        extra.push_back(Event::goal(t, s, sample_spurious_rho(rng, rho_mean, rho_sd)));
    }
    return with_appended(stream, std::move(extra));
}

EventStream inject_action_noise(const EventStream& stream, double accuracy, std::uint64_t seed) {
    if (!(accuracy > 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy must lie in (0,1]");
    EventStream out = stream;
    const int o = stream.header.num_objects;
    if (o <= 1) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto& e : out.events) {
        if (e.kind != EventKind::Action) continue;
        if (unif(rng) < accuracy) continue;
        int j = std::uniform_int_distribution<int>(0, o - 2)(rng);
        if (j >= e.object) ++j;
        e.object = j;
    }
    return out;
}

}  // namespace darko

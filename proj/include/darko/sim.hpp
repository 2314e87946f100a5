#pragma once

// Synthetic goal-seeking behavior: grid environments with scene-labeled
// rooms, scripted agents, event streams, goal detectors and noise injectors.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "darko/mdp.hpp"

namespace darko {

struct RoomSpec {
    int scene = 0;
    std::vector<Position> cells;
    Position goal;  // where the agent stops for this scene
};

struct EnvironmentSpec {
    std::string name;
    Position extent{1, 1, 1};  // cell counts along x, y, z
    std::set<Position> walls;
    std::set<Position> stairs;  // vertical moves only between stacked stair cells
    std::vector<RoomSpec> rooms;
    std::vector<std::string> scene_names;
    std::vector<std::string> object_names;
    std::vector<Position> object_spawns;  // indexed by object
    int home_scene = 0;
    std::uint64_t seed = 0;
};

class DisconnectedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Environment {
public:
    explicit Environment(EnvironmentSpec spec);

    const EnvironmentSpec& spec() const { return spec_; }
    Domain domain() const;

    bool free(const Position& p) const;
    std::vector<Position> neighbors(const Position& p) const;
    /// -1 outside every room.
    int scene_at(const Position& p) const;
    const RoomSpec& room(int scene) const;
    /// Shortest-path steps from p to the goal cell of scene.
    int distance(const Position& p, int scene) const;
    /// A neighbor one step closer to the scene's goal, first in move order.
    Position step_toward(const Position& p, int scene) const;

private:
    std::size_t index(const Position& p) const;

    EnvironmentSpec spec_;
    std::vector<int> scene_of_;
    std::vector<int> room_of_scene_;
    std::vector<std::vector<int>> dist_;  // per room, per cell
};

Environment build_environment(EnvironmentSpec spec);

struct Direction {
    int scene = 0;
    std::vector<int> release;
    std::vector<int> acquire;
    int dwell = 6;
};

struct Script {
    int start_scene = 0;
    std::vector<std::vector<Direction>> days;

    std::vector<Direction> flattened() const;
};

/// Throws std::invalid_argument on unknown scenes or objects and on
/// acquiring a held object or releasing one not held.
void validate_script(const Script& script, const Environment& env);

enum class EventKind { Position, Action, Goal, Truth };
enum class TruthMarker { Goal, Acquire, Release };

struct Event {
    int step = 0;
    EventKind kind = EventKind::Position;
    Position position;                   // Position; Truth(Goal)
    ActionKind action = ActionKind::Acquire;  // Action
    int object = -1;                     // Action; Truth(Acquire/Release)
    double confidence = 1.0;             // Action
    int scene = -1;                      // Goal; Truth(Goal)
    double rho = 1.0;                    // Goal
    TruthMarker marker = TruthMarker::Goal;

    static Event at(int step, Position p) { return {step, EventKind::Position, p}; }
    static Event detected_action(int step, ActionKind k, int object, double conf = 1.0);
    static Event goal(int step, int scene, double rho);
    static Event truth_goal(int step, int scene, Position p);
    static Event truth_action(int step, TruthMarker m, int object);

    bool operator==(const Event&) const = default;
};

struct StreamHeader {
    std::string environment;
    Position bounds;  // inclusive upper corner
    int num_objects = 0;
    int num_scenes = 0;
    Neighborhood neighborhood = Neighborhood::Axis6;
    std::uint64_t seed = 0;

    bool operator==(const StreamHeader&) const = default;
};

struct EventStream {
    StreamHeader header;
    std::vector<Event> events;

    Domain domain() const;
    void write_jsonl(std::ostream& os) const;
    static EventStream read_jsonl(std::istream& is);
    std::string to_jsonl() const;
    /// FNV-1a over the serialized stream.
    std::uint64_t hash() const;
    bool operator==(const EventStream&) const = default;
};

/// Walks each direction along shortest paths, stepping to a random free
/// neighbor with probability agent_noise instead. Emits one Position per
/// tick, a Truth goal marker on arrival, dwell ticks, then the direction's
/// releases and acquires one per tick as detected actions plus truth markers.
EventStream simulate(const Environment& env, const Script& script, double agent_noise, std::uint64_t seed);

/// Fires when the mean per-tick displacement over the last `window` ticks
/// drops below the threshold; re-arms once the agent moves again and the
/// refractory period has passed. Labels by the room at the stop.
EventStream stop_detector(const EventStream& stream, const Environment& env, double velocity_threshold = 0.2,
                          int window = 5, double rho = 1.0);

/// Fires once per room visit after `window` ticks inside it, plus spurious
/// fires with probability false_fire_rate per tick carrying random labels.
EventStream scene_detector(const EventStream& stream, const Environment& env, int window, double false_fire_rate,
                           std::uint64_t seed, double rho = 1.0);

/// Goal detections copied from the truth markers.
EventStream truth_detections(const EventStream& stream, double rho = 0.95);

/// Clipped N(mean, sd) on [1e-3, 1].
double sample_spurious_rho(std::mt19937_64& rng, double mean = 0.1, double sd = 0.05);

/// Adds floor(rate * n) spurious detections at uniformly drawn ticks, where
/// n counts the existing goal detections.
EventStream inject_goal_noise(const EventStream& stream, double rate, std::uint64_t seed, double rho_mean = 0.1,
                              double rho_sd = 0.05);

/// Keeps each detected action's object with probability accuracy, otherwise
/// swaps in one of the other objects uniformly.
EventStream inject_action_noise(const EventStream& stream, double accuracy, std::uint64_t seed);

}  // namespace darko

#pragma once

// Incrementally grown MDP: state interning, observed transition table,
// goal registry and the reward feature map.

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace darko {

using StateId = std::uint32_t;
using Vec = Eigen::VectorXd;

struct Position {
    int x = 0;
    int y = 0;
    int z = 0;

    auto operator<=>(const Position&) const = default;
    Position operator+(const Position& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Position operator-(const Position& o) const { return {x - o.x, y - o.y, z - o.z}; }
};

std::ostream& operator<<(std::ostream& os, const Position& p);

/// Discrete agent state: grid cell, held-object bits and the scene type of
/// the last goal reached (-1 before the first goal).
struct StateVec {
    Position position;
    std::uint64_t held = 0;
    int prev_goal = -1;

    bool holds(int object) const { return (held >> object) & 1u; }
    auto operator<=>(const StateVec&) const = default;
};

struct StateVecHash {
    std::size_t operator()(const StateVec& s) const noexcept;
};

enum class ActionKind : std::uint8_t { Move, Acquire, Release, AtGoal };

struct Action {
    ActionKind kind = ActionKind::Move;
    Position delta;   // Move only
    int object = -1;  // Acquire / Release only

    static Action move(Position d) { return {ActionKind::Move, d, -1}; }
    static Action acquire(int j) { return {ActionKind::Acquire, {}, j}; }
    static Action release(int j) { return {ActionKind::Release, {}, j}; }
    static Action at_goal() { return {ActionKind::AtGoal, {}, -1}; }

    bool is_interaction() const { return kind == ActionKind::Acquire || kind == ActionKind::Release; }
    bool operator==(const Action&) const = default;

    /// Dense code, unique per distinct action.
    std::uint32_t code() const;
    std::string to_string() const;
};

enum class Neighborhood { Axis6, Full26 };

std::vector<Position> move_deltas(Neighborhood n);

/// Fixed per-environment quantities: bounding box, object count |O| and
/// scene-type count K.
struct Domain {
    Position bounds{1, 1, 1};  // inclusive upper corner; lower corner is the origin
    int num_objects = 0;
    int num_scenes = 0;
    Neighborhood neighborhood = Neighborhood::Axis6;

    bool in_bounds(const Position& p) const;
    bool valid_move(const Position& delta) const;
    void validate(const StateVec& s) const;
    void validate(const Action& a) const;
    int num_interactions() const { return 2 * num_objects; }
};

class BoundsError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct GoalRecord {
    int scene_type = 0;
    double rho = 1.0;
};

struct Edge {
    Action action;
    StateId next;
};

struct Predecessor {
    StateId from;
    Action action;
};

class GrowingMdp {
public:
    explicit GrowingMdp(Domain domain);

    const Domain& domain() const { return domain_; }

    StateId intern(const StateVec& raw);
    std::optional<StateId> find(const StateVec& raw) const;
    const StateVec& state(StateId id) const { return states_.at(id); }
    std::size_t num_states() const { return states_.size(); }

    /// Last writer wins on conflicting successors; conflicts are counted.
    void record_transition(StateId s, const Action& a, StateId next);
    std::optional<StateId> successor(StateId s, const Action& a) const;
    std::span<const Edge> out_edges(StateId s) const { return out_.at(s); }
    std::span<const Predecessor> predecessors(StateId s) const { return in_.at(s); }
    std::size_t num_transitions() const { return num_transitions_; }
    std::size_t conflict_count() const { return conflicts_; }

    void add_goal(StateId s, int scene_type, double rho);
    bool is_goal(StateId s) const { return goals_.count(s) != 0; }
    const GoalRecord& goal(StateId s) const { return goals_.at(s); }
    const std::map<StateId, GoalRecord>& goals() const { return goals_; }

    /// Bumped on every structural change; lets callers cache plans.
    std::uint64_t version() const { return version_; }

    /// Bumped only by changes that can alter a soft value somewhere: goal
    /// updates, overwritten successors, and new edges into states that are
    /// goals or already have outgoing edges. Tables solved at an equal
    /// value_version stay exact for every state they cover.
    std::uint64_t value_version() const { return value_version_; }

    /// One JSON object per state: id, position, held bits, prev_goal.
    void dump_jsonl(std::ostream& os) const;

private:
    void check_id(StateId s) const;

    Domain domain_;
    std::vector<StateVec> states_;
    std::unordered_map<StateVec, StateId, StateVecHash> index_;
    std::vector<std::vector<Edge>> out_;
    std::vector<std::vector<Predecessor>> in_;
    std::map<StateId, GoalRecord> goals_;
    std::size_t num_transitions_ = 0;
    std::size_t conflicts_ = 0;
    std::uint64_t version_ = 0;
    std::uint64_t value_version_ = 0;
};

/// s with its previous-goal one-hot switched to scene_type.
StateVec apply_at_goal(const StateVec& s, int scene_type);

/// Successor of a raw state under an action (the simulator-side semantics of
/// each action kind).
StateVec apply_action(const StateVec& s, const Action& a);

enum class FeatureMode { Full, StateOnly, PositionOnly };

FeatureMode parse_feature_mode(const std::string& name);
std::string to_string(FeatureMode m);

/// f(s,a) = [x/X, y/Y, z/Z | prev_goal one-hot (K) | held bits (|O|) |
/// interaction indicator (2|O|)], truncated per FeatureMode. Interaction
/// indicators are ordered Acquire(0..|O|-1) then Release(0..|O|-1).
class FeatureMap {
public:
    FeatureMap(Domain domain, FeatureMode mode = FeatureMode::Full);

    std::size_t dim() const { return dim_; }
    FeatureMode mode() const { return mode_; }
    const Domain& domain() const { return domain_; }

    Vec operator()(const StateVec& s, const Action& a) const;
    void accumulate(const StateVec& s, const Action& a, double weight, Vec& out) const;
    double dot(const Vec& w, const StateVec& s, const Action& a) const;

private:
    double normalized(int value, int bound) const { return bound > 0 ? double(value) / bound : 0.0; }

    Domain domain_;
    FeatureMode mode_;
    std::size_t dim_;
};

}  // namespace darko

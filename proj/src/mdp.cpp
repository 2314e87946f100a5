#include "darko/mdp.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace darko {

std::ostream& operator<<(std::ostream& os, const Position& p) {
    return os << '(' << p.x << ',' << p.y << ',' << p.z << ')';
}

std::size_t StateVecHash::operator()(const StateVec& s) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    };
    mix(static_cast<std::uint32_t>(s.position.x));
    mix(static_cast<std::uint32_t>(s.position.y));
    mix(static_cast<std::uint32_t>(s.position.z));
    mix(s.held);
    mix(static_cast<std::uint32_t>(s.prev_goal));
    return static_cast<std::size_t>(h);
}

std::uint32_t Action::code() const {
    switch (kind) {
        case ActionKind::Move:
            return static_cast<std::uint32_t>((delta.x + 1) * 9 + (delta.y + 1) * 3 + (delta.z + 1));
        case ActionKind::Acquire:
            return 32u + static_cast<std::uint32_t>(object) * 2u;
        case ActionKind::Release:
            return 33u + static_cast<std::uint32_t>(object) * 2u;
        case ActionKind::AtGoal:
            return 31u;
    }
    return 0;
}

std::string Action::to_string() const {
    std::ostringstream os;
    switch (kind) {
        case ActionKind::Move: os << "move" << delta; break;
        case ActionKind::Acquire: os << "acquire(" << object << ')'; break;
        case ActionKind::Release: os << "release(" << object << ')'; break;
        case ActionKind::AtGoal: os << "at_goal"; break;
    }
    return os.str();
}

std::vector<Position> move_deltas(Neighborhood n) {
    std::vector<Position> out;
    if (n == Neighborhood::Axis6) {
        out = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        return out;
    }
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz)
                if (dx != 0 || dy != 0 || dz != 0) out.push_back({dx, dy, dz});
    return out;
}

bool Domain::in_bounds(const Position& p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x <= bounds.x && p.y <= bounds.y && p.z <= bounds.z;
}

bool Domain::valid_move(const Position& d) const {
    const int ax = std::abs(d.x), ay = std::abs(d.y), az = std::abs(d.z);
    if (ax > 1 || ay > 1 || az > 1) return false;
    const int n = ax + ay + az;
    if (n == 0) return false;
    return neighborhood == Neighborhood::Full26 || n == 1;
}

void Domain::validate(const StateVec& s) const {
    if (!in_bounds(s.position)) {
        std::ostringstream os;
        os << "position " << s.position << " outside bounding box " << bounds;
        throw BoundsError(os.str());
    }
    if (num_objects < 64 && (s.held >> num_objects) != 0)
        throw std::invalid_argument("held bits set beyond object count");
    if (s.prev_goal < -1 || s.prev_goal >= num_scenes)
        throw std::invalid_argument("prev_goal scene index out of range");
}

void Domain::validate(const Action& a) const {
    switch (a.kind) {
        case ActionKind::Move:
            if (!valid_move(a.delta)) throw std::invalid_argument("move delta not in neighborhood");
            break;
        case ActionKind::Acquire:
        case ActionKind::Release:
            if (a.object < 0 || a.object >= num_objects)
                throw std::invalid_argument("object index out of range");
            break;
        case ActionKind::AtGoal:
            break;
    }
}

GrowingMdp::GrowingMdp(Domain domain) : domain_(domain) {}

void GrowingMdp::check_id(StateId s) const {
    if (s >= states_.size()) throw std::out_of_range("unknown state id " + std::to_string(s));
}

StateId GrowingMdp::intern(const StateVec& raw) {
    if (auto it = index_.find(raw); it != index_.end()) return it->second;
    domain_.validate(raw);
    const auto id = static_cast<StateId>(states_.size());
    states_.push_back(raw);
    index_.emplace(raw, id);
    out_.emplace_back();
    in_.emplace_back();
    ++version_;
    return id;
}

std::optional<StateId> GrowingMdp::find(const StateVec& raw) const {
    if (auto it = index_.find(raw); it != index_.end()) return it->second;
    return std::nullopt;
}

void GrowingMdp::record_transition(StateId s, const Action& a, StateId next) {
    check_id(s);
    check_id(next);
    auto& edges = out_[s];
    auto it = std::find_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.action == a; });
    if (it != edges.end()) {
        if (it->next == next) return;
        ++conflicts_;
        auto& old_in = in_[it->next];
        old_in.erase(std::remove_if(old_in.begin(), old_in.end(),
                                    [&](const Predecessor& p) { return p.from == s && p.action == a; }),
                     old_in.end());
        it->next = next;
        ++value_version_;
    } else {
        edges.push_back({a, next});
        ++num_transitions_;
        // An edge into a state with no way onward cannot change any value.
        if (a.kind != ActionKind::AtGoal && (is_goal(next) || !out_[next].empty())) ++value_version_;
    }
    in_[next].push_back({s, a});
    ++version_;
}

std::optional<StateId> GrowingMdp::successor(StateId s, const Action& a) const {
    check_id(s);
    for (const auto& e : out_[s])
        if (e.action == a) return e.next;
    return std::nullopt;
}

void GrowingMdp::add_goal(StateId s, int scene_type, double rho) {
    check_id(s);
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("goal confidence rho must lie in (0,1]");
    if (scene_type < 0 || scene_type >= domain_.num_scenes)
        throw std::invalid_argument("goal scene type out of range");
    goals_[s] = GoalRecord{scene_type, rho};
    ++version_;
    ++value_version_;
}

void GrowingMdp::dump_jsonl(std::ostream& os) const {
    for (StateId id = 0; id < states_.size(); ++id) {
        const auto& s = states_[id];
        nlohmann::json held = nlohmann::json::array();
        for (int j = 0; j < domain_.num_objects; ++j) held.push_back(s.holds(j) ? 1 : 0);
        nlohmann::json row = {{"id", id},
                              {"position", {s.position.x, s.position.y, s.position.z}},
                              {"held", held},
                              {"prev_goal", s.prev_goal}};
        if (auto it = goals_.find(id); it != goals_.end())
            row["goal"] = {{"scene", it->second.scene_type}, {"rho", it->second.rho}};
        os << row.dump() << '\n';
    }
}

StateVec apply_at_goal(const StateVec& s, int scene_type) {
    StateVec out = s;
    out.prev_goal = scene_type;
    return out;
}

StateVec apply_action(const StateVec& s, const Action& a) {
    StateVec out = s;
    switch (a.kind) {
        case ActionKind::Move: out.position = s.position + a.delta; break;
        case ActionKind::Acquire: out.held |= (std::uint64_t{1} << a.object); break;
        case ActionKind::Release: out.held &= ~(std::uint64_t{1} << a.object); break;
        case ActionKind::AtGoal: break;
    }
    return out;
}

FeatureMode parse_feature_mode(const std::string& name) {
    if (name == "full") return FeatureMode::Full;
    if (name == "state_only") return FeatureMode::StateOnly;
    if (name == "position_only") return FeatureMode::PositionOnly;
    throw std::invalid_argument("unknown feature mode '" + name + "'");
}

std::string to_string(FeatureMode m) {
    switch (m) {
        case FeatureMode::Full: return "full";
        case FeatureMode::StateOnly: return "state_only";
        case FeatureMode::PositionOnly: return "position_only";
    }
    return "?";
}

FeatureMap::FeatureMap(Domain domain, FeatureMode mode) : domain_(domain), mode_(mode) {
    dim_ = 3;
    if (mode != FeatureMode::PositionOnly) dim_ += domain_.num_scenes + domain_.num_objects;
    if (mode == FeatureMode::Full) dim_ += domain_.num_interactions();
}

Vec FeatureMap::operator()(const StateVec& s, const Action& a) const {
    Vec f = Vec::Zero(static_cast<Eigen::Index>(dim_));
    accumulate(s, a, 1.0, f);
    return f;
}

void FeatureMap::accumulate(const StateVec& s, const Action& a, double w, Vec& out) const {
    out[0] += w * normalized(s.position.x, domain_.bounds.x);
    out[1] += w * normalized(s.position.y, domain_.bounds.y);
    out[2] += w * normalized(s.position.z, domain_.bounds.z);
    if (mode_ == FeatureMode::PositionOnly) return;
    const int K = domain_.num_scenes;
    const int O = domain_.num_objects;
    if (s.prev_goal >= 0) out[3 + s.prev_goal] += w;
    for (int j = 0; j < O; ++j)
        if (s.holds(j)) out[3 + K + j] += w;
    if (mode_ != FeatureMode::Full) return;
    if (a.kind == ActionKind::Acquire) out[3 + K + O + a.object] += w;
    if (a.kind == ActionKind::Release) out[3 + K + O + O + a.object] += w;
}

double FeatureMap::dot(const Vec& w, const StateVec& s, const Action& a) const {
    double r = w[0] * normalized(s.position.x, domain_.bounds.x) +
               w[1] * normalized(s.position.y, domain_.bounds.y) +
               w[2] * normalized(s.position.z, domain_.bounds.z);
    if (mode_ == FeatureMode::PositionOnly) return r;
    const int K = domain_.num_scenes;
    const int O = domain_.num_objects;
    if (s.prev_goal >= 0) r += w[3 + s.prev_goal];
    for (int j = 0; j < O; ++j)
        if (s.holds(j)) r += w[3 + K + j];
    if (mode_ != FeatureMode::Full) return r;
    if (a.kind == ActionKind::Acquire) r += w[3 + K + O + a.object];
    if (a.kind == ActionKind::Release) r += w[3 + K + O + O + a.object];
    return r;
}

}  // namespace darko

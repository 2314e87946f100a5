#include "darko/templates.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace darko {

namespace {

struct Template {
    std::vector<std::vector<std::string>> floors;
    std::vector<std::string> scenes;
    std::vector<std::pair<std::string, char>> objects;  // name, scene letter
    char home;
    // Activities as "<scene>[+obj|-obj]..." tokens; + acquires, - releases.
    std::vector<std::string> routine;
};

const std::map<std::string, Template>& registry() {
    static const std::map<std::string, Template> r = {
        {"home1",
         {{{
               "####################",
               "#aaaaaa#bbbbbb#cccc#",
               "#aaAaaa#bbbBbb#cccc#",
               "#aaaaaa#bbbbbb#ccCc#",
               "#aaaaaa.bbbbbb#cccc#",
               "#aaaaaa#bbbbbb#cccc#",
               "###.#######.####.###",
               "#..................#",
               "#.=................#",
               "#..................#",
               "####.#####.#########",
               "#dddd#eeeeeeeeeeeee#",
               "#dDdd#eeeeeeeeeeeee#",
               "#dddd#eeeeeeeEeeeee#",
               "#dddd#eeeeeeeeeeeee#",
               "#dddd#eeeeeeeeeeeee#",
               "#dddd#eeeeeeeeeeeee#",
               "#dddd#eeeeeeeeeeeee#",
               "#dddd#eeeeeeeeeeeee#",
               "####################",
           },
           {
               "####################",
               "#ffffff#gggggg#hhhh#",
               "#ffFfff#gggGgg#hhhh#",
               "#ffffff#gggggg#hhHh#",
               "#ffffff#gggggg#hhhh#",
               "#ffffff#gggggg#hhhh#",
               "###.#######.####.###",
               "#..................#",
               "#.=................#",
               "#..................#",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
               "####################",
           }},
          {"kitchen", "dining", "living", "bathroom", "entrance", "bedroom", "study", "laundry"},
          {{"mug", 'a'}, {"plate", 'a'}, {"snack", 'a'}, {"remote", 'c'}, {"towel", 'd'}, {"keys", 'e'},
           {"book", 'g'}, {"basket", 'h'}},
          'f',
          {"d+towel h-towel", "a+mug+plate b-mug-plate", "a+snack c-snack", "g+book c-book", "e+keys g-keys"}}},
        {"home2",
         {{{
               "################",
               "#aaaa#bbbb#cccc#",
               "#aAaa#bBbb#ccCc#",
               "#aaaa.bbbb.cccc#",
               "##.####.####.###",
               "#..............#",
               "#..............#",
               "##.###.###.###.#",
               "#ddd#eee#fff#gg#",
               "#dDd#eEe#fFf#Gg#",
               "#ddd#eee#fff#gg#",
               "################",
           }},
          {"kitchen", "dining", "living", "bedroom", "bathroom", "nook", "entrance"},
          {{"cup", 'a'}, {"bowl", 'a'}, {"laptop", 'f'}, {"towel", 'e'}, {"bag", 'g'}},
          'd',
          {"a+cup+bowl b-cup-bowl", "f+laptop c-laptop", "e+towel c-towel", "g+bag f-bag", "c a"}}},
        {"office1",
         {{{
               "####################",
               "#aaaa#bbbb#cccc#ddd#",
               "#aAaa#bBbb#cCcc#dDd#",
               "#aaaa#bbbb#cccc#ddd#",
               "##.####.####.####.##",
               "#..................#",
               "#..................#",
               "#..................#",
               "##.####.####.####.##",
               "#eeee#ffff#gggg#hhh#",
               "#eEee#fFff#gGgg#hHh#",
               "#eeee#ffff#gggg#hhh#",
               "#eeee#ffff#gggg#hhh#",
               "####################",
           }},
          {"reception", "desk1", "desk2", "meeting", "kitchenette", "printer", "storage", "lounge"},
          {{"badge", 'a'}, {"laptop", 'b'}, {"papers", 'f'}, {"coffee", 'e'}, {"notebook", 'c'}, {"toner", 'g'},
           {"box", 'g'}},
          'a',
          {"b+laptop d-laptop", "e+coffee b-coffee", "f+papers c-papers", "g+toner f-toner", "c+notebook h-notebook"}}},
        {"office2",
         {{{
               "##################",
               "#aaaaa#....#bbbbb#",
               "#aAaaa#....#bBbbb#",
               "#aaaaa......bbbbb#",
               "#aaaaa#....#bbbbb#",
               "#######....#######",
               "#ccccc#....#ddddd#",
               "#cCccc......dDddd#",
               "#ccccc#....#ddddd#",
               "#######....#######",
               "#eeeee#....#fffff#",
               "#eEeee......fFfff#",
               "#eeeee#....#fffff#",
               "#######....#######",
               "#gggggggGgggggggg#",
               "##################",
           }},
          {"office", "conference", "pantry", "copy", "archive", "workshop", "lobby"},
          {{"folder", 'a'}, {"mug", 'c'}, {"charger", 'b'}, {"binder", 'd'}, {"parcel", 'g'}, {"pen", 'e'}},
          'g',
          {"a+folder b-folder", "c+mug a-mug", "d+binder e-binder", "b+charger d-charger", "e+pen f-pen"}}},
        {"lab1",
         {{{
               "##############",
               "#aaaa#bbb#ccc#",
               "#aAaa#bBb#cCc#",
               "#aaaa#bbb#ccc#",
               "##.####.###.##",
               "#............#",
               "#............#",
               "###.####.###.#",
               "#ddd#eeee#fff#",
               "#dDd#eeEe#fFf#",
               "#ddd#eeee#fff#",
               "##############",
           }},
          {"bench", "microscope", "hood", "sink", "storage", "office"},
          {{"samples", 'e'}, {"slides", 'a'}, {"beaker", 'e'}, {"gloves", 'd'}, {"pipette", 'b'}},
          'f',
          {"e+samples a-samples", "a+slides b-slides", "e+beaker c-beaker", "d+gloves c-gloves",
           "b+pipette d-pipette"}}},
    };
    return r;
}

const Template& lookup(const std::string& name) {
    const auto it = registry().find(name);
    if (it == registry().end()) throw std::invalid_argument("unknown environment template: " + name);
    return it->second;
}

int object_index(const EnvironmentSpec& spec, const std::string& name) {
    const auto it = std::find(spec.object_names.begin(), spec.object_names.end(), name);
    if (it == spec.object_names.end()) throw std::invalid_argument("unknown object in routine: " + name);
    return static_cast<int>(it - spec.object_names.begin());
}

std::vector<Direction> parse_activity(const std::string& text, const EnvironmentSpec& spec) {
    std::vector<Direction> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        Direction d;
        d.scene = tok[0] - 'a';
        std::size_t i = 1;
        while (i < tok.size()) {
            const char op = tok[i++];
            const auto end = tok.find_first_of("+-", i);
            const auto obj = object_index(spec, tok.substr(i, end - i));
            (op == '+' ? d.acquire : d.release).push_back(obj);
            i = end == std::string::npos ? tok.size() : end;
        }
        out.push_back(std::move(d));
    }
    return out;
}

// Consecutive directions to the same scene collapse into one stop.
void append_direction(std::vector<Direction>& day, Direction d, int current_scene) {
    const int last = day.empty() ? current_scene : day.back().scene;
    if (last == d.scene && !day.empty()) {
        auto& b = day.back();
        b.release.insert(b.release.end(), d.release.begin(), d.release.end());
        b.acquire.insert(b.acquire.end(), d.acquire.begin(), d.acquire.end());
        return;
    }
    if (last == d.scene) return;  // already standing there at the start of the day
    day.push_back(std::move(d));
}

}  // namespace

std::vector<std::string> template_names() {
    std::vector<std::string> out;
    for (const auto& [name, t] : registry()) out.push_back(name);
    return out;
}

EnvironmentSpec parse_floors(const std::string& name, const std::vector<std::vector<std::string>>& floors,
                             std::vector<std::string> scene_names) {
    if (floors.empty() || floors[0].empty()) throw std::invalid_argument("empty floor plan");
    EnvironmentSpec spec;
    spec.name = name;
    const int ny = static_cast<int>(floors[0].size());
    const int nx = static_cast<int>(floors[0][0].size());
    spec.extent = {nx, ny, static_cast<int>(floors.size())};
    spec.rooms.resize(scene_names.size());
    std::vector<int> goals_seen(scene_names.size(), 0);
    for (std::size_t s = 0; s < scene_names.size(); ++s) spec.rooms[s].scene = static_cast<int>(s);
    for (int z = 0; z < spec.extent.z; ++z) {
        if (static_cast<int>(floors[z].size()) != ny) throw std::invalid_argument("floors differ in height");
        for (int y = 0; y < ny; ++y) {
            const auto& row = floors[z][y];
            if (static_cast<int>(row.size()) != nx) throw std::invalid_argument("ragged floor plan row");
            for (int x = 0; x < nx; ++x) {
                const char c = row[x];
                const Position p{x, y, z};
                if (c == '#') {
                    spec.walls.insert(p);
                } else if (c == '=') {
                    spec.stairs.insert(p);
                } else if (c != '.') {
                    const bool goal = c >= 'A' && c <= 'Z';
                    const int scene = goal ? c - 'A' : c - 'a';
                    if (scene < 0 || scene >= static_cast<int>(scene_names.size()))
                        throw std::invalid_argument(std::string("unknown room symbol ") + c);
                    spec.rooms[scene].cells.push_back(p);
                    if (goal) {
                        spec.rooms[scene].goal = p;
                        ++goals_seen[scene];
                    }
                }
            }
        }
    }
    for (std::size_t s = 0; s < scene_names.size(); ++s)
        if (goals_seen[s] != 1) throw std::invalid_argument("room " + scene_names[s] + " needs exactly one goal cell");
    spec.scene_names = std::move(scene_names);
    return spec;
}

EnvironmentSpec environment_template(const std::string& name) {
    const auto& t = lookup(name);
    auto spec = parse_floors(name, t.floors, t.scenes);
    for (const auto& [obj, scene] : t.objects) {
        spec.object_names.push_back(obj);
        spec.object_spawns.push_back(spec.rooms[scene - 'a'].goal);
    }
    spec.home_scene = t.home - 'a';
    return spec;
}

Script routine_script(const std::string& name, int days, std::uint64_t seed) {
    const auto& t = lookup(name);
    const auto spec = environment_template(name);
    std::vector<std::vector<Direction>> activities;
    for (const auto& a : t.routine) activities.push_back(parse_activity(a, spec));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dwell(6, 9);
    Script script;
    script.start_scene = spec.home_scene;
    auto order = activities;
    for (int day = 0; day < days; ++day) {
        order = activities;
        if (day > 0 && order.size() > 1) {
            const auto i = std::uniform_int_distribution<std::size_t>(0, order.size() - 2)(rng);
            std::swap(order[i], order[i + 1]);
        }
        std::vector<Direction> directions;
        for (auto& act : order)
            for (auto& d : act) append_direction(directions, d, spec.home_scene);
        append_direction(directions, Direction{spec.home_scene, {}, {}, 6}, spec.home_scene);
        for (auto& d : directions) d.dwell = dwell(rng);
        script.days.push_back(std::move(directions));
    }
    return script;
}

}  // namespace darko

#pragma once

// Built-in environments (home1, home2, office1, office2, lab1) and their
// daily routines.

#include <cstdint>
#include <string>
#include <vector>

#include "darko/sim.hpp"

namespace darko {

std::vector<std::string> template_names();

/// Throws std::invalid_argument for unknown names.
EnvironmentSpec environment_template(const std::string& name);

/// Builds an environment from ASCII floors: '#' wall, '.' hallway, '='
/// stairs, lowercase letter = room cell of scene (letter - 'a'), uppercase
/// = that room's goal cell.
EnvironmentSpec parse_floors(const std::string& name, const std::vector<std::vector<std::string>>& floors,
                             std::vector<std::string> scene_names);

/// Day 1 follows the template's routine; each later day swaps one random
/// pair of adjacent activities. Every day ends at the home scene.
Script routine_script(const std::string& name, int days, std::uint64_t seed);

}  // namespace darko

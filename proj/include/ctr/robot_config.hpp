#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ctr/rod.hpp"

namespace ctr {

/// Parses a robot description (YAML, Table-I style units declared in a
/// `units` block) and validates it. Errors name the offending field.
RobotSpec parse_robot(std::string_view text);
RobotSpec load_robot(const std::filesystem::path& path);

/// The three-tube robot of the reference hardware, in SI units.
RobotSpec reference_robot();

/// Fixed-format SI rendering of a robot; the basis of `robot_hash`.
std::string canonical_robot_text(const RobotSpec& robot);
/// SHA-256 (hex) of the canonical text.
std::string robot_hash(const RobotSpec& robot);

std::string sha256_hex(std::string_view data);

}  // namespace ctr

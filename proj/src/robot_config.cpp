#include "ctr/robot_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

namespace ctr {

namespace {

double unit_factor(const YAML::Node& units, const char* key, const std::string& fallback) {
  const std::string u = units && units[key] ? units[key].as<std::string>() : fallback;
  if (std::string_view(key) == "length") {
    if (u == "m") return 1.0;
    if (u == "mm") return 1e-3;
  } else if (std::string_view(key) == "curvature") {
    if (u == "1/m") return 1.0;
    if (u == "1/mm") return 1e3;
  } else if (std::string_view(key) == "modulus") {
    if (u == "Pa") return 1.0;
    if (u == "MPa") return 1e6;
    if (u == "GPa") return 1e9;
  }
  throw std::invalid_argument(std::string("units.") + key + ": unsupported unit '" + u + "'");
}

double read_field(const YAML::Node& tube, const std::string& prefix, const char* key) {
  if (!tube[key]) throw std::invalid_argument(prefix + key + ": missing");
  try {
    return tube[key].as<double>();
  } catch (const YAML::Exception&) {
    throw std::invalid_argument(prefix + key + ": not a number");
  }
}

}  // namespace

RobotSpec parse_robot(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("robot file: ") + e.what());
  }
  const YAML::Node units = root["units"];
  const double len = unit_factor(units, "length", "mm");
  const double curv = unit_factor(units, "curvature", "1/m");
  const double mod = unit_factor(units, "modulus", "GPa");

  const YAML::Node tubes = root["tubes"];
  if (!tubes || !tubes.IsSequence() || tubes.size() != kNumTubes)
    throw std::invalid_argument("tubes: expected a list of exactly 3 tubes");

  RobotSpec robot;
  for (int i = 0; i < kNumTubes; ++i) {
    const YAML::Node t = tubes[static_cast<std::size_t>(i)];
    const std::string prefix = "tubes[" + std::to_string(i) + "].";
    TubeSpec& ts = robot.tubes[i];
    ts.inner_diameter = len * read_field(t, prefix, "inner_diameter");
    ts.outer_diameter = len * read_field(t, prefix, "outer_diameter");
    ts.straight_length = len * read_field(t, prefix, "straight_length");
    ts.curved_length = len * read_field(t, prefix, "curved_length");
    ts.precurvature = curv * read_field(t, prefix, "curvature");
    ts.youngs_modulus = mod * read_field(t, prefix, "youngs_modulus");
    ts.shear_modulus = mod * read_field(t, prefix, "shear_modulus");
  }
  robot.validate();
  return robot;
}

RobotSpec load_robot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open robot file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_robot(ss.str());
}

RobotSpec reference_robot() {
  RobotSpec r;
  const double gpa = 1e9, mm = 1e-3;
  r.tubes[0] = {0.40 * mm, 0.50 * mm, 169.0 * mm, 41.0 * mm, 28.0, 50.0 * gpa, 19.23 * gpa};
  r.tubes[1] = {0.70 * mm, 0.90 * mm, 65.0 * mm, 100.0 * mm, 12.4, 50.0 * gpa, 19.23 * gpa};
  r.tubes[2] = {1.20 * mm, 1.50 * mm, 10.0 * mm, 100.0 * mm, 4.37, 50.0 * gpa, 19.23 * gpa};
  return r;
}

std::string canonical_robot_text(const RobotSpec& robot) {
  std::string out;
  char buf[512];
  for (int i = 0; i < kNumTubes; ++i) {
    const TubeSpec& t = robot.tubes[i];
    std::snprintf(buf, sizeof buf, "tube%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", i + 1,
                  t.inner_diameter, t.outer_diameter, t.straight_length, t.curved_length,
                  t.precurvature, t.youngs_modulus, t.shear_modulus);
    out += buf;
  }
  return out;
}

std::string robot_hash(const RobotSpec& robot) { return sha256_hex(canonical_robot_text(robot)); }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(hex[md[i] >> 4]);
    s.push_back(hex[md[i] & 0xf]);
  }
  return s;
}

}  // namespace ctr

#pragma once

// Reproducibility record written alongside every CLI output artifact.
// Re-running the recorded command with the recorded parameters reproduces
// the outputs bit-for-bit; only duration_seconds varies between runs.

#include <fstream>
#include <string>

#include <json.hpp>

#include "cyclequil/errors.hpp"
#include "cyclequil/version.hpp"

namespace cyclequil {

struct RunManifest {
  std::string command;
  std::string network;
  nlohmann::json parameters = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string tool_version = kVersion;
  double duration_seconds = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"command", command},
                          {"network", network},
                          {"parameters", parameters},
                          {"seed", seed},
                          {"tool_version", tool_version},
                          {"duration_seconds", duration_seconds}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.command = j.at("command").get<std::string>();
      m.network = j.at("network").get<std::string>();
      m.parameters = j.at("parameters");
      m.seed = j.at("seed").get<std::uint64_t>();
      m.tool_version = j.at("tool_version").get<std::string>();
      m.duration_seconds = j.at("duration_seconds").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what());
    }
    return m;
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest '" + path + "': " + e.what());
    }
    return from_json(j);
  }
};

}  // namespace cyclequil

#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "mvhet/errors.hpp"
#include "mvhet/optim.hpp"

namespace mvhet {

// Versioned JSON checkpoint: parameter name -> shape + row-major data.
// Key order is lexicographic (nlohmann's default), so identical parameter
// values always serialize to identical bytes.
inline void save_checkpoint(const ParamStore& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "mvhet-checkpoint";
  j["version"] = 1;
  nlohmann::json dict;
  for (const Param& p : params.items()) {
    nlohmann::json entry;
    entry["shape"] = {p.value.rows(), p.value.cols()};
    entry["data"] = p.value.data();
    dict[p.name] = std::move(entry);
  }
  j["params"] = std::move(dict);
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(1) << "\n";
}

// Loads into an already-registered store; every parameter must be present
// with a matching shape.
inline void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  if (!j.contains("format") || j["format"] != "mvhet-checkpoint" || !j.contains("params"))
    throw Error(ErrorKind::ParseError, path + ": not a checkpoint file");
  const nlohmann::json& dict = j["params"];
  for (Param& p : params.items()) {
    if (!dict.contains(p.name))
      throw Error(ErrorKind::CheckpointShapeMismatch, "missing parameter " + p.name);
    const nlohmann::json& entry = dict.at(p.name);
    const int rows = entry.at("shape").at(0).get<int>();
    const int cols = entry.at("shape").at(1).get<int>();
    if (rows != p.value.rows() || cols != p.value.cols())
      throw Error(ErrorKind::CheckpointShapeMismatch,
                  p.name + ": expected " + std::to_string(p.value.rows()) + "x" +
                      std::to_string(p.value.cols()) + ", checkpoint has " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != p.value.size())
      throw Error(ErrorKind::CheckpointShapeMismatch, p.name + ": data length mismatch");
    p.value.data() = data;
  }
  for (auto it = dict.begin(); it != dict.end(); ++it)
    if (!params.contains(it.key()))
      throw Error(ErrorKind::CheckpointShapeMismatch, "unexpected parameter " + it.key());
}

}  // namespace mvhet

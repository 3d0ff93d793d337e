#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rehab/errors.hpp"
#include "rehab/patient_model.hpp"

namespace rehab {

// JSON fragments that override parts of a PatientModelConfig. The cluster
// command writes the "anchors" half; "patterns" is hand-written.
//
//   {"anchors":  {"low": {"under": 2.4, "over": 6.0}, ...},
//    "patterns": {"good_day": {"start": 1.2, "end": 1.2, "noise_sigma": 0.3}, ...}}
//
// Missing keys keep their current value.

inline nlohmann::json anchors_fragment(const std::array<PeAnchors, 3>& anchors) {
  nlohmann::json j;
  for (Tolerance t : kAllTolerances) {
    const auto& a = anchors[static_cast<int>(t)];
    j["anchors"][std::string(name(t))] = {{"under", a.under}, {"over", a.over}};
  }
  return j;
}

// Strict form used for cluster output: all three groups must be present.
inline void apply_anchors_fragment(const nlohmann::json& j, PatientModelConfig& cfg) {
  try {
    for (Tolerance t : kAllTolerances) {
      const auto& a = j.at("anchors").at(std::string(name(t)));
      cfg.anchors_for(t) = {a.at("under").get<double>(), a.at("over").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("anchors fragment: ") + e.what());
  }
  cfg.validate();
}

inline nlohmann::json to_json(const PatientModelConfig& cfg) {
  nlohmann::json j = anchors_fragment(cfg.anchors);
  for (Pattern p : kAllPatterns) {
    const auto& m = cfg.params_for(p);
    auto& o = j["patterns"][std::string(name(p))];
    o = {{"shape", m.shape == PatternParams::Shape::Step ? "step" : "ramp"},
         {"start", m.start},
         {"end", m.end},
         {"noise_sigma", m.noise_sigma}};
    if (m.shape == PatternParams::Shape::Step) {
      o["drop_first"] = m.drop_first;
      o["drop_last"] = m.drop_last;
    }
  }
  return j;
}

inline void apply_model_fragment(const nlohmann::json& j, PatientModelConfig& cfg) {
  const auto field = [](const nlohmann::json& obj, const char* key, auto& into, const std::string& path) {
    if (!obj.contains(key)) return;
    try {
      obj.at(key).get_to(into);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path + "." + key + ": expected a number");
    }
  };
  if (!j.is_object()) throw ConfigError("model fragment: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "anchors" && key != "patterns") throw ConfigError("model fragment: unknown key '" + key + "'");
  }
  if (j.contains("anchors")) {
    for (const auto& [key, a] : j.at("anchors").items()) {
      const auto t = parse_tolerance(key);
      if (!t) throw ConfigError("anchors." + key + ": unknown tolerance (low, average, high)");
      field(a, "under", cfg.anchors_for(*t).under, "anchors." + key);
      field(a, "over", cfg.anchors_for(*t).over, "anchors." + key);
    }
  }
  if (j.contains("patterns")) {
    for (const auto& [key, o] : j.at("patterns").items()) {
      const auto p = parse_pattern(key);
      if (!p) throw ConfigError("patterns." + key + ": unknown pattern");
      auto& m = cfg.params_for(*p);
      const std::string path = "patterns." + key;
      if (o.contains("shape")) {
        const auto s = o.at("shape").is_string() ? o.at("shape").get<std::string>() : "";
        if (s != "ramp" && s != "step") throw ConfigError(path + ".shape: expected \"ramp\" or \"step\"");
        m.shape = s == "step" ? PatternParams::Shape::Step : PatternParams::Shape::Ramp;
      }
      field(o, "start", m.start, path);
      field(o, "end", m.end, path);
      field(o, "noise_sigma", m.noise_sigma, path);
      field(o, "drop_first", m.drop_first, path);
      field(o, "drop_last", m.drop_last, path);
    }
  }
  cfg.validate();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace rehab

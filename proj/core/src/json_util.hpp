#pragma once

// nlohmann::json conversions shared by the report writers. Kept out of the
// public headers so the installed library does not depend on json.hpp.

#include <optional>
#include <span>

#include <json.hpp>

#include "speckle/metrics.hpp"
#include "speckle/recognizer.hpp"

namespace speckle::detail {

using Json = nlohmann::ordered_json;

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json_value(const recognition::RecognitionReport& r) {
  Json j;
  j["threshold"] = r.threshold;
  j["recall"] = optional_number(r.recall);
  j["precision"] = optional_number(r.precision);
  j["accuracy"] = optional_number(r.accuracy);
  j["f1"] = optional_number(r.f1);
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  return j;
}

inline Json sweep_to_json(std::span<const recognition::RecognitionReport> rows) {
  Json arr = Json::array();
  for (const auto& r : rows) arr.push_back(to_json_value(r));
  return arr;
}

}  // namespace speckle::detail

#pragma once

// JSON shapes for the evaluation reports emitted by the CLI.

#include "json.hpp"
#include "uigroup/grouping.hpp"
#include "uigroup/trainer.hpp"

namespace uigroup {

inline nlohmann::json to_json(const ThresholdMetrics& m) {
  return nlohmann::json{{"tp", m.tp},           {"fp", m.fp},
                        {"fn", m.fn},           {"precision", m.precision},
                        {"recall", m.recall},   {"f1", m.f1}};
}

inline nlohmann::json to_json(const GroupingReport& rep) {
  nlohmann::json thresholds = nlohmann::json::object();
  for (std::size_t t = 0; t < rep.thresholds.size(); ++t)
    thresholds[std::to_string(t)] = to_json(rep.thresholds[t]);
  return nlohmann::json{{"thresholds", thresholds}};
}

inline nlohmann::json to_json(const ClassificationReport& rep) {
  static const char* kNames[kNumLabels] = {"start-merge", "merge", "non-merge"};
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumLabels; ++c)
    per_class[kNames[c]] = {{"precision", rep.per_class[c].precision},
                            {"recall", rep.per_class[c].recall},
                            {"f1", rep.per_class[c].f1},
                            {"support", rep.per_class[c].support}};
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : rep.confusion) confusion.push_back(row);
  return nlohmann::json{
      {"per_class", per_class},
      {"macro", {{"precision", rep.macro_precision}, {"recall", rep.macro_recall}, {"f1", rep.macro_f1}}},
      {"weighted",
       {{"precision", rep.weighted_precision}, {"recall", rep.weighted_recall}, {"f1", rep.weighted_f1}}},
      {"accuracy", rep.accuracy},
      {"confusion", confusion}};
}

}  // namespace uigroup

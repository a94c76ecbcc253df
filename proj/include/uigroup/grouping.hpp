#pragma once

// Label-sequence decoding into merged groups and edit-distance-matched
// precision/recall/F1 evaluation with a threshold sweep.

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "uigroup/prototype.hpp"

namespace uigroup {

// Decoding rules: start-merge opens a group, merge extends the open group,
// non-merge closes it; a new start-merge closes the previous group. A merge
// run with no open group is coerced into a group that starts at its first
// element.
std::vector<MergedGroup> decode_groups(const std::vector<Label>& labels,
                                       const std::vector<std::string>& uuids,
                                       MergedGroup::Source source = MergedGroup::Source::kPredicted);

// Inverse of decode_groups for well-formed group lists: group heads become
// start-merge, remaining members merge, everything else non-merge. Groups
// must be contiguous, non-overlapping runs of the uuid sequence.
std::vector<Label> encode_labels(const std::vector<MergedGroup>& groups,
                                 const std::vector<std::string>& uuids);

// Levenshtein distance with unit insert/delete/substitute costs.
std::int64_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct GroupMatch {
  struct Pair {
    int gt = -1;
    int pred = -1;
    std::int64_t cost = 0;
  };
  std::vector<Pair> pairs;          // one entry per matched (gt, pred)
  std::vector<int> unmatched_gt;    // indices into the gt list
  std::vector<int> unmatched_pred;  // indices into the pred list
  std::int64_t total_cost = 0;
};

// Minimum-cost one-to-one assignment on the |gt| x |pred| edit-distance
// matrix (rectangular Hungarian); the smaller side is fully matched.
GroupMatch match_groups(const std::vector<MergedGroup>& gt, const std::vector<MergedGroup>& pred);

// Exact assignment solver exposed for reuse: cost is rectangular, every row
// is assigned a distinct column (requires rows <= cols). Returns row -> col.
std::vector<int> min_cost_assignment(const std::vector<std::vector<std::int64_t>>& cost);

struct ThresholdMetrics {
  std::int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

struct GroupingReport {
  std::vector<ThresholdMetrics> thresholds;  // index == edit-distance threshold
};

// Micro-aggregation across prototypes: raw TP/FP/FN counts summed per
// threshold, metrics computed once at report() time. Matching happens once
// per (gt, pred) pair; the threshold only reclassifies matched pairs.
class GroupingAccumulator {
 public:
  explicit GroupingAccumulator(int max_threshold = 4);

  void add(const std::vector<MergedGroup>& gt, const std::vector<MergedGroup>& pred);
  void merge(const GroupingAccumulator& other);
  GroupingReport report() const;

 private:
  struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0;
  };
  std::vector<Counts> counts_;
};

GroupingReport grouping_metrics(const std::vector<MergedGroup>& gt,
                                const std::vector<MergedGroup>& pred, int max_threshold = 4);

// Keeps only groups containing at least one flagged uuid. Strata evaluation
// restricts both sides before matching.
std::vector<MergedGroup> filter_groups(const std::vector<MergedGroup>& groups,
                                       const std::unordered_set<std::string>& flagged);

GroupingReport stratified_metrics(const std::vector<MergedGroup>& gt,
                                  const std::vector<MergedGroup>& pred,
                                  const std::unordered_set<std::string>& flagged,
                                  int max_threshold = 4);

}  // namespace uigroup

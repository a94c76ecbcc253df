#include "uigroup/grouping.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

namespace uigroup {

std::vector<MergedGroup> decode_groups(const std::vector<Label>& labels,
                                       const std::vector<std::string>& uuids,
                                       MergedGroup::Source source) {
  if (labels.size() != uuids.size())
    throw ValidationError("decode_groups: labels and uuids must align");
  std::vector<MergedGroup> groups;
  bool open = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case Label::kStartMerge:
        groups.push_back(MergedGroup{{uuids[i]}, source});
        open = true;
        break;
      case Label::kMerge:
        if (!open) {  // orphan run: coerce a group starting here
          groups.push_back(MergedGroup{{uuids[i]}, source});
          open = true;
        } else {
          groups.back().uuids.push_back(uuids[i]);
        }
        break;
      case Label::kNonMerge:
        open = false;
        break;
    }
  }
  return groups;
}

std::vector<Label> encode_labels(const std::vector<MergedGroup>& groups,
                                 const std::vector<std::string>& uuids) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < uuids.size(); ++i) pos[uuids[i]] = i;

  std::vector<Label> labels(uuids.size(), Label::kNonMerge);
  std::vector<bool> taken(uuids.size(), false);
  for (const MergedGroup& g : groups) {
    if (g.uuids.empty()) throw ValidationError("encode_labels: empty group");
    std::size_t prev = 0;
    for (std::size_t k = 0; k < g.uuids.size(); ++k) {
      auto it = pos.find(g.uuids[k]);
      if (it == pos.end())
        throw ValidationError("encode_labels: unknown uuid '" + g.uuids[k] + "'");
      if (taken[it->second])
        throw ValidationError("encode_labels: overlapping groups at '" + g.uuids[k] + "'");
      if (k > 0 && it->second != prev + 1)
        throw ValidationError("encode_labels: group not contiguous at '" + g.uuids[k] + "'");
      taken[it->second] = true;
      labels[it->second] = k == 0 ? Label::kStartMerge : Label::kMerge;
      prev = it->second;
    }
  }
  return labels;
}

std::int64_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<std::int64_t>(m);
  if (m == 0) return static_cast<std::int64_t>(n);

  std::vector<std::int64_t> row(m + 1);
  for (std::size_t j = 0; j <= m; ++j) row[j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    std::int64_t diag = row[0];
    row[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int64_t up = row[j];
      const std::int64_t subst = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
      diag = up;
    }
  }
  return row[m];
}

// Potential-based Hungarian algorithm, O(rows^2 * cols); rows <= cols.
std::vector<int> min_cost_assignment(const std::vector<std::vector<std::int64_t>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  if (n > m) throw ValidationError("min_cost_assignment: requires rows <= cols");
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != m)
      throw ValidationError("min_cost_assignment: ragged cost matrix");

  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(static_cast<std::size_t>(n) + 1, 0),
      v(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> assigned_row(static_cast<std::size_t>(m) + 1, 0);  // col -> row (1-based)
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    assigned_row[0] = i;
    int j0 = 0;
    std::vector<std::int64_t> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = assigned_row[static_cast<std::size_t>(j0)];
      std::int64_t delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const std::int64_t cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                                 u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(assigned_row[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (assigned_row[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      assigned_row[static_cast<std::size_t>(j0)] = assigned_row[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (assigned_row[static_cast<std::size_t>(j)] != 0)
      row_to_col[static_cast<std::size_t>(assigned_row[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

GroupMatch match_groups(const std::vector<MergedGroup>& gt, const std::vector<MergedGroup>& pred) {
  GroupMatch match;
  const int ng = static_cast<int>(gt.size()), np = static_cast<int>(pred.size());
  if (ng == 0 || np == 0) {
    for (int i = 0; i < ng; ++i) match.unmatched_gt.push_back(i);
    for (int j = 0; j < np; ++j) match.unmatched_pred.push_back(j);
    return match;
  }

  const bool gt_rows = ng <= np;
  const int rows = gt_rows ? ng : np, cols = gt_rows ? np : ng;
  std::vector<std::vector<std::int64_t>> cost(static_cast<std::size_t>(rows),
                                              std::vector<std::int64_t>(static_cast<std::size_t>(cols)));
  for (int i = 0; i < ng; ++i)
    for (int j = 0; j < np; ++j) {
      const std::int64_t d = edit_distance(gt[static_cast<std::size_t>(i)].uuids,
                                           pred[static_cast<std::size_t>(j)].uuids);
      if (gt_rows)
        cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d;
      else
        cost[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = d;
    }

  const std::vector<int> row_to_col = min_cost_assignment(cost);
  std::vector<bool> gt_used(static_cast<std::size_t>(ng), false),
      pred_used(static_cast<std::size_t>(np), false);
  for (int r = 0; r < rows; ++r) {
    const int c = row_to_col[static_cast<std::size_t>(r)];
    const int gi = gt_rows ? r : c, pj = gt_rows ? c : r;
    const std::int64_t d = cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    match.pairs.push_back({gi, pj, d});
    match.total_cost += d;
    gt_used[static_cast<std::size_t>(gi)] = true;
    pred_used[static_cast<std::size_t>(pj)] = true;
  }
  for (int i = 0; i < ng; ++i)
    if (!gt_used[static_cast<std::size_t>(i)]) match.unmatched_gt.push_back(i);
  for (int j = 0; j < np; ++j)
    if (!pred_used[static_cast<std::size_t>(j)]) match.unmatched_pred.push_back(j);
  return match;
}

GroupingAccumulator::GroupingAccumulator(int max_threshold)
    : counts_(static_cast<std::size_t>(max_threshold) + 1) {
  if (max_threshold < 0) throw ConfigError("max_threshold must be >= 0");
}

void GroupingAccumulator::add(const std::vector<MergedGroup>& gt,
                              const std::vector<MergedGroup>& pred) {
  const GroupMatch match = match_groups(gt, pred);
  for (std::size_t t = 0; t < counts_.size(); ++t) {
    const auto threshold = static_cast<std::int64_t>(t);
    std::int64_t tp = 0;
    for (const auto& pair : match.pairs)
      if (pair.cost <= threshold) ++tp;
    counts_[t].tp += tp;
    // A matched pair over threshold counts against both sides, like a miss.
    counts_[t].fp += static_cast<std::int64_t>(pred.size()) - tp;
    counts_[t].fn += static_cast<std::int64_t>(gt.size()) - tp;
  }
}

void GroupingAccumulator::merge(const GroupingAccumulator& other) {
  if (other.counts_.size() != counts_.size())
    throw ValidationError("cannot merge accumulators with different threshold ranges");
  for (std::size_t t = 0; t < counts_.size(); ++t) {
    counts_[t].tp += other.counts_[t].tp;
    counts_[t].fp += other.counts_[t].fp;
    counts_[t].fn += other.counts_[t].fn;
  }
}

GroupingReport GroupingAccumulator::report() const {
  GroupingReport rep;
  for (const Counts& c : counts_) {
    ThresholdMetrics m;
    m.tp = c.tp;
    m.fp = c.fp;
    m.fn = c.fn;
    if (c.tp + c.fp == 0 && c.tp + c.fn == 0) {
      m.precision = m.recall = m.f1 = 1.0;  // vacuous: nothing to find, nothing predicted
    } else {
      m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
      m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
      m.f1 = m.precision + m.recall > 0
                 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                 : 0.0;
    }
    rep.thresholds.push_back(m);
  }
  return rep;
}

GroupingReport grouping_metrics(const std::vector<MergedGroup>& gt,
                                const std::vector<MergedGroup>& pred, int max_threshold) {
  GroupingAccumulator acc(max_threshold);
  acc.add(gt, pred);
  return acc.report();
}

std::vector<MergedGroup> filter_groups(const std::vector<MergedGroup>& groups,
                                       const std::unordered_set<std::string>& flagged) {
  std::vector<MergedGroup> out;
  for (const MergedGroup& g : groups)
    if (std::any_of(g.uuids.begin(), g.uuids.end(),
                    [&](const std::string& u) { return flagged.count(u) > 0; }))
      out.push_back(g);
  return out;
}

GroupingReport stratified_metrics(const std::vector<MergedGroup>& gt,
                                  const std::vector<MergedGroup>& pred,
                                  const std::unordered_set<std::string>& flagged,
                                  int max_threshold) {
  return grouping_metrics(filter_groups(gt, flagged), filter_groups(pred, flagged),
                          max_threshold);
}

}  // namespace uigroup

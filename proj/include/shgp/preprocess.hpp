#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "shgp/csv.hpp"
#include "shgp/errors.hpp"

namespace shgp {

struct PreprocessResult {
  CsvTable signals;      // same schema as the input (s1,s2,x,z)
  bool odd_tail = false; // smoothing left an unpaired final value
  int n_x_out = 0;       // signal length after processing
};

// Signal preprocessing: drop heights above max_height, then (optionally)
// replace consecutive non-overlapping pairs by their mean, placing each
// smoothed value at the pair midpoint. An odd trailing value is kept as-is
// and flagged. All locations must share a common height grid.
inline PreprocessResult preprocess_signals(const CsvTable& raw,
                                           double max_height, bool smooth) {
  const int cs1 = raw.col("s1"), cs2 = raw.col("s2");
  const int cx = raw.col("x"), cz = raw.col("z");

  // Group by location in first-appearance order.
  std::vector<std::pair<double, double>> locations;
  std::map<std::pair<double, double>, std::size_t> index;
  std::vector<std::vector<std::pair<double, double>>> groups;  // (x, z)
  for (const auto& row : raw.rows) {
    const auto key = std::make_pair(row[cs1], row[cs2]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      locations.push_back(key);
      groups.emplace_back();
    }
    groups[it->second].emplace_back(row[cx], row[cz]);
  }
  if (groups.empty()) throw DataError("signal table has no rows");

  for (auto& g : groups) std::sort(g.begin(), g.end());
  for (std::size_t gi = 1; gi < groups.size(); ++gi) {
    if (groups[gi].size() != groups[0].size())
      throw DataError("signals do not share a common height grid");
    for (std::size_t k = 0; k < groups[gi].size(); ++k)
      if (groups[gi][k].first != groups[0][k].first)
        throw DataError("signals do not share a common height grid");
  }

  PreprocessResult out;
  out.signals.columns = {"s1", "s2", "x", "z"};
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<std::pair<double, double>> kept;
    for (const auto& [x, z] : groups[gi])
      if (x <= max_height) kept.emplace_back(x, z);
    if (kept.empty())
      throw DataError("signal at location (" + format_double(locations[gi].first) +
                      ", " + format_double(locations[gi].second) +
                      ") is empty after truncation at " +
                      format_double(max_height));
    std::vector<std::pair<double, double>> processed;
    if (smooth) {
      std::size_t k = 0;
      for (; k + 1 < kept.size(); k += 2)
        processed.emplace_back(0.5 * (kept[k].first + kept[k + 1].first),
                               0.5 * (kept[k].second + kept[k + 1].second));
      if (k < kept.size()) {
        processed.push_back(kept[k]);
        out.odd_tail = true;
      }
    } else {
      processed = std::move(kept);
    }
    out.n_x_out = static_cast<int>(processed.size());
    for (const auto& [x, z] : processed)
      out.signals.rows.push_back(
          {locations[gi].first, locations[gi].second, x, z});
  }
  return out;
}

}  // namespace shgp

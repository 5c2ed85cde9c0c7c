#pragma once

#include "mti/types.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mti {

struct ScorePair {
  std::string utt_id;
  double truth = 0.0;
  double predicted = 0.0;
};

using PairsByTarget = std::map<Target, std::vector<ScorePair>>;

/// Per-utterance CSV: utt_id,target,truth,predicted.
void write_pairs_csv(const std::filesystem::path& path, const PairsByTarget& pairs);
PairsByTarget read_pairs_csv(const std::filesystem::path& path);

struct ScatterStyle {
  int width = 500;
  int height = 500;
  int margin = 40;
};

/// Maps a score in [0,1]^2 to SVG pixel coordinates (y grows downwards).
std::pair<double, double> to_pixel(double truth, double predicted, const ScatterStyle& style);

/// Truth on x, prediction on y, both axes fixed to [0, 1], with the unit
/// diagonal. Each pair is one <circle class="point">; values outside [0, 1]
/// are drawn at the clipped position with class "point clipped" and
/// reported in `warnings`.
std::string render_scatter(std::span<const ScorePair> pairs, Target target,
                           const ScatterStyle& style = {},
                           std::vector<std::string>* warnings = nullptr);

}  // namespace mti

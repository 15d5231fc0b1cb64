#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "photoprior/media.hpp"
#include "photoprior/score.hpp"

namespace photoprior {

inline constexpr double kDefaultHighlightSeconds = 10.0;

struct HighlightResult {
  Interval interval;
  double mean_score = 0.0;  // mean normalized score of frames inside the interval
  double sum_score = 0.0;
  int rank = 1;             // 1 = highest-scoring selection
  double peak_time = 0.0;   // frame the selection was anchored on

  nlohmann::json to_json() const;
  bool operator==(const HighlightResult&) const = default;
};

/// Window width in frames for a clip length: round(length * sampling_rate).
std::size_t window_frames(const ScoreSeries& series, double length_seconds);

/// Fixed-length window with the maximal sum of normalized scores; ties go to
/// the earliest start.
HighlightResult best_window(const ScoreSeries& series, double length_seconds);

/// Mean normalized score of frames with start <= t < end.
double interval_mean(const ScoreSeries& series, const Interval& interval);

/// Greedy peak picking: take the best remaining frame at least min_separation
/// from every chosen peak, center a clip on it (shifted inside the video),
/// and skip it if that clip would overlap an earlier one. Results come back
/// in chronological order; rank records selection order.
std::vector<HighlightResult> top_peaks(const ScoreSeries& series, int k, double min_separation_seconds,
                                       double clip_length_seconds);

/// Throws invalid_argument if any two intervals overlap.
void check_non_overlapping(std::span<const Interval> intervals);

/// Cuts each interval and concatenates them in chronological order.
void assemble_montage(const MediaTool& media, const std::filesystem::path& video, const MediaInfo& info,
                      std::span<const Interval> intervals, const std::filesystem::path& out_path);

}  // namespace photoprior

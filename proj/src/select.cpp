#include "photoprior/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "photoprior/error.hpp"
#include "photoprior/hash.hpp"

namespace fs = std::filesystem;

namespace photoprior {

nlohmann::json HighlightResult::to_json() const {
  return {{"interval", {{"start", interval.start}, {"end", interval.end}}},
          {"mean_score", mean_score},
          {"sum_score", sum_score},
          {"rank", rank},
          {"peak_time", peak_time}};
}

namespace {

// End of the window [first, first + w): the next frame's timestamp, or the
// end of the video for the last window.
double window_end(const ScoreSeries& s, std::size_t first, std::size_t w) {
  return first + w < s.size() ? s.timestamps[first + w] : s.end_time();
}

double plain_sum(const std::vector<double>& v, std::size_t first, std::size_t w) {
  double sum = 0.0;
  for (std::size_t i = first; i < first + w; ++i) sum += v[i];
  return sum;
}

struct FrameRange {
  std::size_t first = 0;
  std::size_t count = 0;
};

FrameRange frames_in(const ScoreSeries& s, const Interval& interval) {
  const auto lo = std::lower_bound(s.timestamps.begin(), s.timestamps.end(), interval.start);
  const auto hi = std::lower_bound(lo, s.timestamps.end(), interval.end);
  return {static_cast<std::size_t>(lo - s.timestamps.begin()), static_cast<std::size_t>(hi - lo)};
}

}  // namespace

std::size_t window_frames(const ScoreSeries& series, double length_seconds) {
  if (!(length_seconds > 0.0) || !std::isfinite(length_seconds))
    throw Error(Errc::invalid_argument, "highlight length must be positive");
  if (length_seconds > series.end_time() + 1e-9)
    throw Error(Errc::invalid_argument, "highlight length exceeds the video duration");
  const auto w = static_cast<std::size_t>(std::llround(length_seconds * series.sampling_rate));
  if (w == 0) throw Error(Errc::invalid_argument, "highlight length is shorter than one sampled frame");
  if (w > series.size())
    throw Error(Errc::invalid_argument, "window of " + std::to_string(w) + " frames is longer than the series (" +
                                            std::to_string(series.size()) + " frames)");
  return w;
}

HighlightResult best_window(const ScoreSeries& series, double length_seconds) {
  series.validate();
  const std::size_t w = window_frames(series, length_seconds);
  const auto& v = series.normalized;
  const std::size_t n = v.size();

  // A running sum finds the maximum quickly; starts within rounding distance
  // of it are re-summed directly so ties resolve on exact per-window sums.
  std::vector<double> running(n - w + 1);
  double cur = plain_sum(v, 0, w);
  running[0] = cur;
  for (std::size_t s = 1; s + w <= n; ++s) {
    cur += v[s + w - 1] - v[s - 1];
    running[s] = cur;
  }
  const double best_running = *std::max_element(running.begin(), running.end());
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n + 1) *
                       static_cast<double>(w + 1);

  std::size_t best_start = 0;
  double best_sum = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < running.size(); ++s) {
    if (running[s] < best_running - slack) continue;
    const double exact = plain_sum(v, s, w);
    if (exact > best_sum) {
      best_sum = exact;
      best_start = s;
    }
  }

  HighlightResult r;
  r.interval = {series.timestamps[best_start], window_end(series, best_start, w)};
  r.sum_score = best_sum;
  r.mean_score = best_sum / static_cast<double>(w);
  r.rank = 1;
  r.peak_time = series.timestamps[best_start + static_cast<std::size_t>(
      std::max_element(v.begin() + static_cast<std::ptrdiff_t>(best_start),
                       v.begin() + static_cast<std::ptrdiff_t>(best_start + w)) - (v.begin() + static_cast<std::ptrdiff_t>(best_start)))];
  return r;
}

double interval_mean(const ScoreSeries& series, const Interval& interval) {
  interval.validate(series.end_time());
  const auto range = frames_in(series, interval);
  if (range.count == 0) throw Error(Errc::empty_result, "interval contains no sampled frames");
  return plain_sum(series.normalized, range.first, range.count) / static_cast<double>(range.count);
}

std::vector<HighlightResult> top_peaks(const ScoreSeries& series, int k, double min_separation_seconds,
                                       double clip_length_seconds) {
  series.validate();
  const double duration = series.end_time();
  if (k < 1) throw Error(Errc::invalid_argument, "number of peaks must be at least 1");
  if (!(clip_length_seconds > 0.0) || clip_length_seconds > duration + 1e-9)
    throw Error(Errc::invalid_argument, "clip length must be in (0, duration]");
  if (!(min_separation_seconds >= clip_length_seconds))
    throw Error(Errc::invalid_argument, "minimum separation must be at least the clip length");

  const auto& v = series.normalized;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });

  std::vector<HighlightResult> chosen;
  const double half = clip_length_seconds / 2.0;
  for (std::size_t idx : order) {
    if (chosen.size() == static_cast<std::size_t>(k)) break;
    const double t = series.timestamps[idx];
    const bool too_close = std::any_of(chosen.begin(), chosen.end(), [&](const HighlightResult& c) {
      return std::abs(t - c.peak_time) < min_separation_seconds;
    });
    if (too_close) continue;

    Interval clip{t - half, t + half};
    if (clip.start < 0.0) clip = {0.0, clip_length_seconds};
    if (clip.end > duration) clip = {std::max(0.0, duration - clip_length_seconds), duration};
    // Boundary shifts can pull a clip onto its neighbour.
    const bool overlaps = std::any_of(chosen.begin(), chosen.end(),
                                      [&](const HighlightResult& c) { return c.interval.overlaps(clip); });
    if (overlaps) continue;

    HighlightResult r;
    r.interval = clip;
    r.peak_time = t;
    r.rank = static_cast<int>(chosen.size()) + 1;
    const auto range = frames_in(series, clip);
    r.sum_score = plain_sum(v, range.first, range.count);
    r.mean_score = range.count ? r.sum_score / static_cast<double>(range.count) : 0.0;
    chosen.push_back(r);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const HighlightResult& a, const HighlightResult& b) { return a.interval.start < b.interval.start; });
  return chosen;
}

void check_non_overlapping(std::span<const Interval> intervals) {
  for (std::size_t i = 0; i < intervals.size(); ++i)
    for (std::size_t j = i + 1; j < intervals.size(); ++j)
      if (intervals[i].overlaps(intervals[j]))
        throw Error(Errc::invalid_argument, "montage intervals " + std::to_string(i) + " and " + std::to_string(j) +
                                                " overlap");
}

void assemble_montage(const MediaTool& media, const fs::path& video, const MediaInfo& info,
                      std::span<const Interval> intervals, const fs::path& out_path) {
  if (intervals.empty()) throw Error(Errc::invalid_argument, "montage needs at least one interval");
  for (const auto& iv : intervals) iv.validate(info.duration);
  check_non_overlapping(intervals);
  std::vector<Interval> sorted(intervals.begin(), intervals.end());
  std::sort(sorted.begin(), sorted.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  if (sorted.size() == 1) {
    media.cut_clip(video, info, sorted.front(), out_path);
    return;
  }

  const auto scratch = fs::temp_directory_path() / ("photoprior-montage-" + random_id());
  fs::create_directories(scratch);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{scratch};

  std::vector<fs::path> parts;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    parts.push_back(scratch / ("part" + std::to_string(i) + ".mp4"));
    media.cut_clip(video, info, sorted[i], parts.back());
  }
  media.concat_clips(parts, out_path);
}

}  // namespace photoprior

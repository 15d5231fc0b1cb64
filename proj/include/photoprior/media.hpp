#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photoprior/image.hpp"

namespace photoprior {

struct MediaInfo {
  double duration = 0.0;    // seconds
  double native_fps = 0.0;  // frames per second
  int width = 0;
  int height = 0;
  std::string container;
  std::string codec;

  double frame_period() const { return 1.0 / native_fps; }
};

// Contiguous time range [start, end) in seconds within a source video.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  bool overlaps(const Interval& other) const { return start < other.end && other.start < end; }
  /// Throws invalid_argument unless 0 <= start < end <= duration.
  void validate(double duration) const;

  bool operator==(const Interval&) const = default;
};

struct SampledFrame {
  std::size_t index = 0;
  double timestamp = 0.0;
  RgbImage image;
};

struct SampleOptions {
  double rate = 1.0;  // frames per second
  int short_edge = 0;  // downscale so the shorter edge is at most this; 0 keeps native size
};

struct SampleFailure {
  std::string message;
  std::optional<double> last_good_timestamp;
};

struct SampleReport {
  MediaInfo info;
  std::size_t frame_count = 0;
  std::optional<SampleFailure> failure;
};

using FrameSink = std::function<void(SampledFrame&&)>;

// Front end to an FFmpeg-compatible command line tool. All decoding, cutting
// and concatenation happens in spawned processes; the instance only counts
// invocations and holds configuration, so it is safe to share across threads.
class MediaTool {
 public:
  explicit MediaTool(std::filesystem::path ffmpeg = "ffmpeg", std::string video_encoder = "libx264");
  MediaTool(const MediaTool&) = delete;
  MediaTool& operator=(const MediaTool&) = delete;

  const std::filesystem::path& binary() const { return ffmpeg_; }

  MediaInfo probe(const std::filesystem::path& video) const;

  /// Streams frames sampled at opts.rate to `sink`, timestamps index/rate.
  /// A decoder failure after at least one frame is reported in
  /// SampleReport::failure; failure before any frame throws.
  SampleReport sample_frames(const std::filesystem::path& video, const SampleOptions& opts,
                             const FrameSink& sink) const;
  std::vector<SampledFrame> sample_all(const std::filesystem::path& video, const SampleOptions& opts) const;

  /// JPEG of the native frame nearest `timestamp`, longest edge <= max_edge.
  std::vector<std::uint8_t> extract_thumbnail(const std::filesystem::path& video, double timestamp,
                                              int max_edge) const;
  std::vector<std::uint8_t> extract_thumbnail(const std::filesystem::path& video, const MediaInfo& info,
                                              double timestamp, int max_edge) const;

  /// Cuts [start, end) into out_path. The full range is stream-copied; other
  /// ranges are re-encoded for frame-accurate boundaries.
  void cut_clip(const std::filesystem::path& video, const Interval& interval,
                const std::filesystem::path& out_path) const;
  void cut_clip(const std::filesystem::path& video, const MediaInfo& info, const Interval& interval,
                const std::filesystem::path& out_path) const;

  /// Concatenates clips that share codec parameters without re-encoding.
  void concat_clips(std::span<const std::filesystem::path> clips, const std::filesystem::path& out_path) const;

  /// Writes RGB frames as a video at `fps`. Used to build fixtures.
  void write_video(std::span<const RgbImage> frames, double fps, const std::filesystem::path& out_path) const;

  /// Number of decoder/encoder processes spawned so far.
  std::uint64_t invocations() const { return invocations_.load(); }

 private:
  std::filesystem::path resolve_binary() const;

  std::filesystem::path ffmpeg_;
  std::string video_encoder_;
  mutable std::atomic<std::uint64_t> invocations_{0};
};

/// Index of the native frame nearest `timestamp`, clamped to the last frame.
std::int64_t nearest_native_frame(const MediaInfo& info, double timestamp);

// On-disk thumbnail cache keyed by (video hash, native frame bucket, max_edge).
class ThumbnailCache {
 public:
  explicit ThumbnailCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::vector<std::uint8_t> get(const MediaTool& media, const std::filesystem::path& video,
                                const std::string& video_hash, const MediaInfo& info, double timestamp,
                                int max_edge) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace photoprior

#include "photoprior/media.hpp"

#include <boost/process.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "photoprior/error.hpp"
#include "photoprior/files.hpp"
#include "photoprior/hash.hpp"

namespace bp = boost::process;
namespace fs = std::filesystem;

namespace photoprior {
namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string rate_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string tail(const std::string& text, size_t max_chars = 600) {
  return text.size() <= max_chars ? text : text.substr(text.size() - max_chars);
}

// Removes a scratch file when it goes out of scope.
struct ScratchFile {
  fs::path path;
  explicit ScratchFile(const std::string& suffix)
      : path(fs::temp_directory_path() / ("photoprior-" + random_id() + suffix)) {}
  ~ScratchFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
  std::string read() const {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
};

struct RunResult {
  int exit_code = 0;
  std::string log;
};

}  // namespace

void Interval::validate(double duration) const {
  constexpr double kSlack = 1e-6;
  if (!std::isfinite(start) || !std::isfinite(end) || start < 0.0 || end <= start || end > duration + kSlack)
    throw Error(Errc::invalid_argument, "interval [" + num(start) + ", " + num(end) +
                                            ") is not within [0, " + num(duration) + "]");
}

MediaTool::MediaTool(fs::path ffmpeg, std::string video_encoder)
    : ffmpeg_(std::move(ffmpeg)), video_encoder_(std::move(video_encoder)) {}

fs::path MediaTool::resolve_binary() const {
  if (ffmpeg_.has_parent_path()) {
    if (!fs::exists(ffmpeg_)) throw Error(Errc::not_found, "media tool not found: " + ffmpeg_.string());
    return ffmpeg_;
  }
  auto found = bp::search_path(ffmpeg_.string());
  if (found.empty()) throw Error(Errc::not_found, "media tool not on PATH: " + ffmpeg_.string());
  return found.string();
}

namespace {

// Runs the tool with stdout discarded and stderr captured.
RunResult run_logged(const fs::path& exe, const std::vector<std::string>& args) {
  bp::ipstream err;
  bp::child child(exe.string(), bp::args(args), bp::std_out > bp::null, bp::std_err > err, bp::std_in < bp::null);
  std::string log((std::istreambuf_iterator<char>(err)), std::istreambuf_iterator<char>());
  child.wait();
  return {child.exit_code(), std::move(log)};
}

double parse_fps(const std::string& token) {
  // "29.97", "30", "1k"
  double v = std::stod(token);
  if (!token.empty() && token.back() == 'k') v *= 1000.0;
  return v;
}

}  // namespace

MediaInfo MediaTool::probe(const fs::path& video) const {
  if (!fs::is_regular_file(video)) throw Error(Errc::not_found, "video not found: " + video.string());
  const auto exe = resolve_binary();
  ++invocations_;
  const auto result = run_logged(exe, {"-hide_banner", "-nostdin", "-i", video.string()});
  const std::string& log = result.log;

  static const std::regex kDuration(R"(Duration:\s*(\d+):(\d+):(\d+(?:\.\d+)?))");
  static const std::regex kVideo(R"(Stream #\d+:\d+[^\n]*?: Video: ([A-Za-z0-9_]+)[^\n]*?, (\d+)x(\d+)[^\n]*)");
  static const std::regex kFps(R"(([\d.]+k?) fps)");
  static const std::regex kTbr(R"(([\d.]+k?) tbr)");
  static const std::regex kInput(R"(Input #0, (.+?), from)");

  std::smatch m;
  MediaInfo info;
  if (!std::regex_search(log, m, kVideo))
    throw Error(Errc::decode, "cannot decode " + video.string() + ": " + tail(log, 300));
  info.codec = m[1];
  info.width = std::stoi(m[2]);
  info.height = std::stoi(m[3]);
  const std::string stream_line = m[0];
  if (std::regex_search(stream_line, m, kFps) || std::regex_search(stream_line, m, kTbr))
    info.native_fps = parse_fps(m[1]);
  if (std::regex_search(log, m, kDuration))
    info.duration = std::stod(m[1]) * 3600.0 + std::stod(m[2]) * 60.0 + std::stod(m[3]);
  if (std::regex_search(log, m, kInput)) info.container = m[1];

  if (info.duration <= 0.0 || info.native_fps <= 0.0 || info.width <= 0 || info.height <= 0)
    throw Error(Errc::decode, "cannot determine duration/frame rate of " + video.string());
  return info;
}

SampleReport MediaTool::sample_frames(const fs::path& video, const SampleOptions& opts, const FrameSink& sink) const {
  if (!(opts.rate > 0.0) || !std::isfinite(opts.rate))
    throw Error(Errc::invalid_argument, "sampling rate must be positive");
  SampleReport report;
  report.info = probe(video);
  const MediaInfo& info = report.info;
  if (opts.rate > info.native_fps + 1e-9)
    throw Error(Errc::invalid_argument, "sampling rate " + rate_str(opts.rate) + " exceeds native frame rate " +
                                            rate_str(info.native_fps));

  int width = info.width;
  int height = info.height;
  std::string filter = "fps=" + rate_str(opts.rate);
  if (opts.short_edge > 0 && std::min(width, height) > opts.short_edge) {
    const double s = static_cast<double>(opts.short_edge) / std::min(width, height);
    width = std::max(1, static_cast<int>(std::lround(width * s)));
    height = std::max(1, static_cast<int>(std::lround(height * s)));
    filter += ",scale=" + std::to_string(width) + ":" + std::to_string(height) + ":flags=area";
  }

  const auto exe = resolve_binary();
  ScratchFile log(".log");
  bp::ipstream out;
  ++invocations_;
  bp::child child(exe.string(),
                  bp::args({"-hide_banner", "-nostdin", "-v", "error", "-noautorotate", "-i", video.string(), "-an",
                            "-vf", filter, "-f", "rawvideo", "-pix_fmt", "rgb24", "pipe:1"}),
                  bp::std_out > out, bp::std_err > log.path.string(), bp::std_in < bp::null);

  const size_t frame_bytes = static_cast<size_t>(width) * height * 3;
  std::optional<double> last_good;
  bool truncated = false;
  while (true) {
    RgbImage image(width, height);
    out.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(frame_bytes));
    const auto got = static_cast<size_t>(out.gcount());
    if (got == 0) break;
    if (got < frame_bytes) {
      truncated = true;
      break;
    }
    SampledFrame frame;
    frame.index = report.frame_count;
    frame.timestamp = static_cast<double>(report.frame_count) / opts.rate;
    // The fps filter may pad one frame past the end; keep timestamps in range.
    if (frame.timestamp > info.duration) continue;
    frame.image = std::move(image);
    last_good = frame.timestamp;
    ++report.frame_count;
    sink(std::move(frame));
  }
  child.wait();
  const int code = child.exit_code();
  if (code != 0 || truncated) {
    std::string msg = code != 0 ? "decoder exited with status " + std::to_string(code) : "truncated frame data";
    const auto text = log.read();
    if (!text.empty()) msg += ": " + tail(text, 300);
    if (report.frame_count == 0) throw Error(Errc::decode, video.string() + ": " + msg);
    report.failure = SampleFailure{msg, last_good};
  }
  return report;
}

std::vector<SampledFrame> MediaTool::sample_all(const fs::path& video, const SampleOptions& opts) const {
  std::vector<SampledFrame> frames;
  auto report = sample_frames(video, opts, [&](SampledFrame&& f) { frames.push_back(std::move(f)); });
  if (report.failure) {
    std::string where = report.failure->last_good_timestamp
                            ? " (last good frame at " + num(*report.failure->last_good_timestamp) + " s)"
                            : "";
    throw Error(Errc::decode, video.string() + ": " + report.failure->message + where);
  }
  return frames;
}

std::int64_t nearest_native_frame(const MediaInfo& info, double timestamp) {
  const auto last = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(info.duration * info.native_fps - 1e-6)) - 1);
  return std::clamp<std::int64_t>(std::llround(timestamp * info.native_fps), 0, last);
}

std::vector<std::uint8_t> MediaTool::extract_thumbnail(const fs::path& video, double timestamp, int max_edge) const {
  return extract_thumbnail(video, probe(video), timestamp, max_edge);
}

std::vector<std::uint8_t> MediaTool::extract_thumbnail(const fs::path& video, const MediaInfo& info, double timestamp,
                                                       int max_edge) const {
  if (!std::isfinite(timestamp) || timestamp < 0.0 || timestamp > info.duration + 1e-9)
    throw Error(Errc::invalid_argument, "timestamp " + num(timestamp) + " outside [0, " + num(info.duration) + "]");
  if (max_edge <= 0) throw Error(Errc::invalid_argument, "max_edge must be positive");
  const auto exe = resolve_binary();
  const size_t frame_bytes = static_cast<size_t>(info.width) * info.height * 3;

  // Seeking a quarter frame early lands on the intended frame despite pts
  // rounding; if the container ends early, step back a frame at a time.
  for (auto idx = nearest_native_frame(info, timestamp); idx >= 0; --idx) {
    const double seek = std::max(0.0, (static_cast<double>(idx) - 0.25) / info.native_fps);
    bp::ipstream out;
    ++invocations_;
    bp::child child(exe.string(),
                    bp::args({"-hide_banner", "-nostdin", "-v", "error", "-noautorotate", "-ss", num(seek), "-i",
                              video.string(), "-an", "-frames:v", "1", "-f", "rawvideo", "-pix_fmt", "rgb24",
                              "pipe:1"}),
                    bp::std_out > out, bp::std_err > bp::null, bp::std_in < bp::null);
    RgbImage image(info.width, info.height);
    out.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(frame_bytes));
    const auto got = static_cast<size_t>(out.gcount());
    out.ignore(std::numeric_limits<std::streamsize>::max());
    child.wait();
    if (got == frame_bytes) return encode_jpeg(fit_within(image, max_edge));
    if (nearest_native_frame(info, timestamp) - idx >= 4) break;
  }
  throw Error(Errc::decode, "no frame decodable near " + num(timestamp) + " s in " + video.string());
}

void MediaTool::cut_clip(const fs::path& video, const Interval& interval, const fs::path& out_path) const {
  cut_clip(video, probe(video), interval, out_path);
}

void MediaTool::cut_clip(const fs::path& video, const MediaInfo& info, const Interval& interval,
                         const fs::path& out_path) const {
  interval.validate(info.duration);
  const auto parent = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw Error(Errc::io, "output directory does not exist: " + parent.string());
  const auto exe = resolve_binary();

  const double half_frame = 0.5 * info.frame_period();
  const bool full = interval.start <= half_frame && interval.end >= info.duration - half_frame;
  std::vector<std::string> args{"-hide_banner", "-nostdin", "-y", "-v", "error"};
  if (full) {
    args.insert(args.end(), {"-i", video.string(), "-map", "0", "-c", "copy"});
  } else {
    args.insert(args.end(), {"-ss", num(interval.start), "-i", video.string(), "-t", num(interval.length()),
                             "-map", "0:v:0", "-map", "0:a?", "-c:v", video_encoder_, "-pix_fmt", "yuv420p",
                             "-c:a", "aac"});
    if (video_encoder_ == "libx264") args.insert(args.end(), {"-preset", "veryfast"});
  }
  args.insert(args.end(), {"-movflags", "+faststart", out_path.string()});
  ++invocations_;
  const auto result = run_logged(exe, args);
  if (result.exit_code != 0) {
    std::error_code ec;
    fs::remove(out_path, ec);
    throw Error(Errc::encode, "cutting " + video.string() + " failed: " + tail(result.log, 300));
  }
}

void MediaTool::concat_clips(std::span<const fs::path> clips, const fs::path& out_path) const {
  if (clips.empty()) throw Error(Errc::invalid_argument, "nothing to concatenate");
  const auto exe = resolve_binary();
  ScratchFile list(".txt");
  {
    std::ofstream f(list.path);
    for (const auto& c : clips) {
      std::string p = fs::absolute(c).string();
      std::string escaped;
      for (char ch : p) {
        if (ch == '\'') escaped += "'\\''";
        else escaped += ch;
      }
      f << "file '" << escaped << "'\n";
    }
  }
  ++invocations_;
  const auto result = run_logged(exe, {"-hide_banner", "-nostdin", "-y", "-v", "error", "-f", "concat", "-safe", "0",
                                       "-i", list.path.string(), "-c", "copy", "-movflags", "+faststart",
                                       out_path.string()});
  if (result.exit_code != 0) {
    std::error_code ec;
    fs::remove(out_path, ec);
    throw Error(Errc::encode, "concatenation failed: " + tail(result.log, 300));
  }
}

void MediaTool::write_video(std::span<const RgbImage> frames, double fps, const fs::path& out_path) const {
  if (frames.empty()) throw Error(Errc::invalid_argument, "no frames to write");
  const int w = frames.front().width;
  const int h = frames.front().height;
  for (const auto& f : frames)
    if (!f.valid() || f.width != w || f.height != h)
      throw Error(Errc::invalid_argument, "frames must be non-empty and share one size");
  const auto exe = resolve_binary();
  ScratchFile log(".log");
  bp::opstream in;
  ++invocations_;
  std::vector<std::string> args{"-hide_banner", "-y", "-v", "error", "-f", "rawvideo", "-pix_fmt", "rgb24",
                                "-s", std::to_string(w) + "x" + std::to_string(h), "-r", rate_str(fps),
                                "-i", "pipe:0", "-c:v", video_encoder_, "-pix_fmt", "yuv420p"};
  if (video_encoder_ == "libx264") args.insert(args.end(), {"-preset", "veryfast", "-g", "1"});
  args.push_back(out_path.string());
  bp::child child(exe.string(), bp::args(args), bp::std_in < in, bp::std_out > bp::null,
                  bp::std_err > log.path.string());
  for (const auto& f : frames) in.write(reinterpret_cast<const char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  in.flush();
  in.pipe().close();
  child.wait();
  if (child.exit_code() != 0) throw Error(Errc::encode, "writing video failed: " + tail(log.read(), 300));
}

std::vector<std::uint8_t> ThumbnailCache::get(const MediaTool& media, const fs::path& video,
                                              const std::string& video_hash, const MediaInfo& info, double timestamp,
                                              int max_edge) const {
  if (!std::isfinite(timestamp) || timestamp < 0.0 || timestamp > info.duration + 1e-9)
    throw Error(Errc::invalid_argument, "timestamp " + num(timestamp) + " outside [0, " + num(info.duration) + "]");
  const auto bucket = nearest_native_frame(info, timestamp);
  const auto file = dir_ / (video_hash.substr(0, 16) + "_" + std::to_string(bucket) + "_" +
                            std::to_string(max_edge) + ".jpg");
  if (fs::is_regular_file(file)) return read_file(file);
  auto jpeg = media.extract_thumbnail(video, info, static_cast<double>(bucket) / info.native_fps, max_edge);
  write_file_atomic(file, jpeg);
  return jpeg;
}

}  // namespace photoprior

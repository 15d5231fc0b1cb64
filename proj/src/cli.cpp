#include "photoprior/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <sstream>

#include "photoprior/error.hpp"
#include "photoprior/pipeline.hpp"
#include "photoprior/select.hpp"
#include "photoprior/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace photoprior {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::not_found:
    case Errc::unsupported_version:
    case Errc::dangling_reference:
    case Errc::fingerprint_mismatch:
    case Errc::dimension_mismatch:
    case Errc::empty_result:
    case Errc::conflict: return kExitInput;
    default: return kExitPipeline;
  }
}

struct Globals {
  std::optional<std::string> config_file;
  std::optional<std::string> ffmpeg;
  std::optional<std::string> backend;
  std::optional<std::string> model;
  std::optional<std::string> cache_dir;
  std::string format = "text";
};

// Where the reference for scoring comes from.
struct Source {
  std::optional<std::string> keyword;
  std::vector<std::string> photos;
  std::optional<std::string> text_prompt;

  int count() const { return (keyword ? 1 : 0) + (photos.empty() ? 0 : 1) + (text_prompt ? 1 : 0); }
};

void add_source_options(CLI::App* cmd, Source& src) {
  cmd->add_option("--keyword", src.keyword, "Build the prior from photos found for this keyword");
  cmd->add_option("--photos", src.photos, "Build the prior from a photo folder or a list of photo files");
  cmd->add_option("--text-prompt", src.text_prompt, "Score against a text prompt instead of a photo prior");
}

std::string fmt(double v, const char* spec = "%.3f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

class Runner {
 public:
  Runner(Globals g, std::ostream& out, std::ostream& err) : g_(std::move(g)), out_(out), err_(err) {}

  const Config& config() {
    if (!config_) {
      auto c = Config::load(g_.config_file ? std::optional<fs::path>(*g_.config_file) : std::nullopt);
      if (g_.ffmpeg) c.ffmpeg = *g_.ffmpeg;
      if (g_.backend) c.backend_manifest = *g_.backend;
      if (g_.model) c.model_override = fs::path(*g_.model);
      if (g_.cache_dir) c.cache_dir = *g_.cache_dir;
      config_ = std::move(c);
    }
    return *config_;
  }

  Config& mutable_config() {
    config();
    return *config_;
  }

  const Pipeline& pipeline() {
    if (!pipeline_) pipeline_ = std::make_shared<Pipeline>(config());
    return *pipeline_;
  }

  std::shared_ptr<Pipeline> shared_pipeline() {
    pipeline();
    return pipeline_;
  }

  bool json_output() const { return g_.format == "json"; }
  std::ostream& out() { return out_; }

  void warn(const std::string& message) { err_ << "warning: " << message << "\n"; }

  FrameEmbeddingSeries embed(const std::string& video, double rate) {
    const EmbeddingCache cache(config().cache_dir / "embeddings");
    return pipeline().embed_video(video, rate, &cache).frames;
  }

  ScoreSeries score(const FrameEmbeddingSeries& frames, const Source& src) {
    if (src.count() != 1) throw UsageError("give exactly one of --keyword, --photos, --text-prompt");
    if (src.text_prompt) return pipeline().score_with_text(frames, *src.text_prompt);
    std::vector<std::string> warnings;
    PriorProfile prior;
    if (src.keyword) {
      prior = pipeline().prior_for_keyword(*src.keyword, &warnings);
    } else if (src.photos.size() == 1 && fs::is_directory(src.photos.front())) {
      prior = pipeline().prior_for_folder(src.photos.front(), &warnings);
    } else {
      std::vector<fs::path> paths(src.photos.begin(), src.photos.end());
      prior = pipeline().prior_for_paths(paths);
    }
    for (const auto& w : warnings) warn(w);
    return pipeline().score_with_prior(frames, prior);
  }

  // Score series from --scores FILE or from scoring the video.
  ScoreSeries series_from(const std::optional<std::string>& video, const std::optional<std::string>& scores_file,
                          const Source& src, double rate, std::optional<int> smooth) {
    if (scores_file) {
      if (src.count() != 0) throw UsageError("--scores cannot be combined with --keyword, --photos or --text-prompt");
      return read_score_file(*scores_file);
    }
    if (!video) throw UsageError("a video is required unless --scores is given");
    if (smooth) mutable_config().smoothing_window = *smooth;
    return score(embed(*video, rate), src);
  }

  MediaTool& media() {
    if (!media_) media_ = std::make_unique<MediaTool>(config().ffmpeg, config().video_encoder);
    return *media_;
  }

 private:
  Globals g_;
  std::ostream& out_;
  std::ostream& err_;
  std::optional<Config> config_;
  std::shared_ptr<Pipeline> pipeline_;
  std::unique_ptr<MediaTool> media_;
};

json results_json(const std::vector<HighlightResult>& results) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(r.to_json());
  return arr;
}

void print_results(Runner& run, const std::vector<HighlightResult>& results, const std::string& series_id,
                   const std::optional<std::string>& exported) {
  if (run.json_output()) {
    json body = {{"series_id", series_id}, {"results", results_json(results)}};
    if (exported) body["export"] = *exported;
    run.out() << body.dump() << "\n";
    return;
  }
  for (const auto& r : results)
    run.out() << fmt(r.interval.start) << "\t" << fmt(r.interval.end) << "\tmean=" << fmt(r.mean_score, "%.4f")
              << "\trank=" << r.rank << "\n";
  if (exported) run.out() << "wrote " << *exported << "\n";
}

std::atomic<Service*> g_service{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Highlight detection in video guided by example photos"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "photoprior 0.1.0");

  Globals g;
  app.add_option("--config", g.config_file, "JSON config file");
  app.add_option("--ffmpeg", g.ffmpeg, "ffmpeg binary");
  app.add_option("--backend", g.backend, "Embedding backend manifest");
  app.add_option("--model", g.model, "Override the backend's model file");
  app.add_option("--cache-dir", g.cache_dir, "Cache directory for embeddings and priors");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));

  double rate = 0.0;
  std::optional<int> smooth;
  std::optional<std::string> video;
  std::optional<std::string> scores_file;
  std::optional<std::string> out_path;
  std::optional<std::string> export_path;
  double length = kDefaultHighlightSeconds;
  Source src;

  auto* classify = app.add_subcommand("classify", "Rank activity labels for a video");
  std::string labels_file;
  std::size_t top = 5;
  classify->add_option("video", video, "Video file")->required();
  classify->add_option("--labels", labels_file, "Label file, one label per line");
  classify->add_option("--top", top, "Number of labels to print")->check(CLI::PositiveNumber);
  classify->add_option("--rate", rate, "Sampling rate in frames per second")->check(CLI::PositiveNumber);

  auto* score = app.add_subcommand("score", "Write a per-frame score file");
  score->add_option("video", video, "Video file")->required();
  add_source_options(score, src);
  score->add_option("--rate", rate, "Sampling rate in frames per second")->check(CLI::PositiveNumber);
  score->add_option("--smooth", smooth, "Moving-average window in frames (odd)");
  score->add_option("--out", out_path, "Score file to write");

  auto* highlight = app.add_subcommand("highlight", "Pick the best fixed-length clip");
  highlight->add_option("video", video, "Video file");
  add_source_options(highlight, src);
  highlight->add_option("--scores", scores_file, "Use an existing score file");
  highlight->add_option("--rate", rate, "Sampling rate in frames per second")->check(CLI::PositiveNumber);
  highlight->add_option("--smooth", smooth, "Moving-average window in frames (odd)");
  highlight->add_option("--length", length, "Clip length in seconds")->check(CLI::PositiveNumber);
  highlight->add_option("--export", export_path, "Write the clip here");

  auto* montage = app.add_subcommand("montage", "Pick several peaks and join them");
  int peaks = 3;
  std::optional<double> min_sep;
  montage->add_option("video", video, "Video file");
  add_source_options(montage, src);
  montage->add_option("--scores", scores_file, "Use an existing score file");
  montage->add_option("--rate", rate, "Sampling rate in frames per second")->check(CLI::PositiveNumber);
  montage->add_option("--smooth", smooth, "Moving-average window in frames (odd)");
  montage->add_option("--peaks", peaks, "Number of clips")->check(CLI::PositiveNumber);
  montage->add_option("--length", length, "Length of each clip in seconds")->check(CLI::PositiveNumber);
  montage->add_option("--min-sep,--min-separation", min_sep, "Minimum seconds between peaks (default: clip length)");
  montage->add_option("--export", export_path, "Write the montage here");

  auto* pair = app.add_subcommand("pair", "Export a photo-prior clip and a text-prompt clip side by side");
  std::string out_dir = ".";
  pair->add_option("video", video, "Video file")->required();
  pair->add_option("--keyword", src.keyword, "Keyword for the photo prior")->required();
  pair->add_option("--text-prompt", src.text_prompt, "Prompt for the baseline (default: the keyword)");
  pair->add_option("--rate", rate, "Sampling rate in frames per second")->check(CLI::PositiveNumber);
  pair->add_option("--length", length, "Clip length in seconds")->check(CLI::PositiveNumber);
  pair->add_option("--out-dir", out_dir, "Directory for the two clips");

  auto* serve = app.add_subcommand("serve", "Run the local HTTP service for the browser UI");
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::string> project_dir;
  serve->add_option("--host", host, "Address to bind");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--project-dir", project_dir, "Directory holding projects");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Runner run(g, out, err);
  try {
    const auto effective_rate = [&] { return rate > 0.0 ? rate : run.config().sampling_rate; };

    if (*classify) {
      if (!labels_file.empty()) run.mutable_config().labels = labels_file;
      const auto frames = run.embed(*video, effective_rate());
      const auto ranked = run.pipeline().classify(frames, top);
      if (run.json_output()) {
        json arr = json::array();
        for (const auto& s : ranked) arr.push_back({{"label", s.label}, {"score", s.score}});
        out << json{{"labels", arr}}.dump() << "\n";
      } else {
        for (const auto& s : ranked) out << fmt(s.score, "%.4f") << "\t" << s.label << "\n";
      }
    } else if (*score) {
      const auto series = run.series_from(video, std::nullopt, src, effective_rate(), smooth);
      const fs::path path = out_path ? fs::path(*out_path) : fs::path(*video).replace_extension(".scores.json");
      write_score_file(path, series);
      if (run.json_output()) out << json{{"series_id", series.id}, {"path", path.string()}}.dump() << "\n";
      else out << "wrote " << path.string() << " (" << series.size() << " frames)\n";
    } else if (*highlight) {
      const auto series = run.series_from(video, scores_file, src, effective_rate(), smooth);
      const auto best = best_window(series, length);
      if (export_path) {
        if (!video) throw UsageError("--export needs the video");
        auto& media = run.media();
        const auto info = media.probe(*video);
        best.interval.validate(info.duration);
        media.cut_clip(*video, info, best.interval, *export_path);
      }
      print_results(run, {best}, series.id, export_path);
    } else if (*montage) {
      const auto series = run.series_from(video, scores_file, src, effective_rate(), smooth);
      const auto picked = top_peaks(series, peaks, min_sep.value_or(length), length);
      if (export_path) {
        if (!video) throw UsageError("--export needs the video");
        std::vector<Interval> intervals;
        for (const auto& r : picked) intervals.push_back(r.interval);
        auto& media = run.media();
        assemble_montage(media, *video, media.probe(*video), intervals, *export_path);
      }
      print_results(run, picked, series.id, export_path);
    } else if (*pair) {
      const auto frames = run.embed(*video, effective_rate());
      Source photo_src;
      photo_src.keyword = src.keyword;
      Source text_src;
      text_src.text_prompt = src.text_prompt.value_or(*src.keyword);
      const auto photo_series = run.score(frames, photo_src);
      const auto text_series = run.score(frames, text_src);
      const auto photo_best = best_window(photo_series, length);
      const auto text_best = best_window(text_series, length);

      fs::create_directories(out_dir);
      const auto stem = fs::path(*video).stem().string();
      const auto photo_clip = fs::path(out_dir) / (stem + ".photo_prior.mp4");
      const auto text_clip = fs::path(out_dir) / (stem + ".text_prompt.mp4");
      auto& media = run.pipeline().media();
      const auto info = media.probe(*video);
      media.cut_clip(*video, info, photo_best.interval, photo_clip);
      media.cut_clip(*video, info, text_best.interval, text_clip);
      write_score_file(fs::path(out_dir) / (stem + ".photo_prior.scores.json"), photo_series);
      write_score_file(fs::path(out_dir) / (stem + ".text_prompt.scores.json"), text_series);

      if (run.json_output()) {
        out << json{{"photo_prior", {{"result", photo_best.to_json()}, {"path", photo_clip.string()}}},
                    {"text_prompt", {{"result", text_best.to_json()}, {"path", text_clip.string()}}}}
                   .dump()
            << "\n";
      } else {
        out << "photo prior\t" << fmt(photo_best.interval.start) << "\t" << fmt(photo_best.interval.end) << "\t"
            << photo_clip.string() << "\n";
        out << "text prompt\t" << fmt(text_best.interval.start) << "\t" << fmt(text_best.interval.end) << "\t"
            << text_clip.string() << "\n";
      }
    } else if (*serve) {
      auto& cfg = run.mutable_config();
      if (host) cfg.host = *host;
      if (port) cfg.port = *port;
      if (project_dir) cfg.project_root = *project_dir;
      Service service(run.shared_pipeline(), cfg.project_root, cfg.ui_dir);
      const int bound = service.bind(cfg.host, cfg.port);
      out << "listening on http://" << cfg.host << ":" << bound << std::endl;
      g_service.store(&service);
      auto prev_int = std::signal(SIGINT, on_signal);
      auto prev_term = std::signal(SIGTERM, on_signal);
      service.run();
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      g_service.store(nullptr);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPipeline;
  }
}

}  // namespace photoprior

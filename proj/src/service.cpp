#include "photoprior/service.hpp"

#include <httplib.h>

#include <chrono>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "photoprior/error.hpp"
#include "photoprior/files.hpp"
#include "photoprior/hash.hpp"
#include "photoprior/select.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace photoprior {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

class Job {
 public:
  Job(std::string project_id, std::string series_id, std::uint64_t invocations_at_start)
      : id_(random_id()),
        project_id_(std::move(project_id)),
        series_id_(std::move(series_id)),
        invocations_at_start_(invocations_at_start) {}

  const std::string& id() const { return id_; }
  const std::string& series_id() const { return series_id_; }

  // Phases only move forward; progress only grows within a phase.
  void advance(Phase phase, double progress) {
    std::lock_guard lock(mu_);
    if (phase_ == Phase::done || phase_ == Phase::failed) return;
    if (!started_) {
      started_ = true;
      phase_ = phase;
      phase_started_ = Clock::now();
      phases_.push_back(std::string(to_string(phase)));
    } else if (static_cast<int>(phase) > static_cast<int>(phase_)) {
      close_phase();
      phase_ = phase;
      phase_started_ = Clock::now();
      progress_ = 0.0;
      phases_.push_back(std::string(to_string(phase)));
    } else if (phase != phase_) {
      return;
    }
    progress_ = std::max(progress_, std::clamp(progress, 0.0, 1.0));
    if (phase == Phase::done) total_seconds_ = seconds_since(created_);
  }

  void fail(std::string message) {
    std::lock_guard lock(mu_);
    if (started_) close_phase();
    phase_ = Phase::failed;
    phases_.push_back("failed");
    error_ = std::move(message);
    total_seconds_ = seconds_since(created_);
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return phase_ == Phase::done || phase_ == Phase::failed;
  }

  json to_json(std::uint64_t invocations_now) const {
    std::lock_guard lock(mu_);
    json seconds = json::object();
    for (const auto& [k, v] : phase_seconds_) seconds[k] = v;
    return {{"job_id", id_},
            {"project_id", project_id_},
            {"series_id", series_id_},
            {"phase", to_string(phase_)},
            {"progress", progress_},
            {"error", error_ ? json(*error_) : json(nullptr)},
            {"phases", phases_},
            {"phase_seconds", seconds},
            {"total_seconds", total_seconds_ ? json(*total_seconds_) : json(seconds_since(created_))},
            {"decoder_invocations", invocations_now - invocations_at_start_}};
  }

 private:
  void close_phase() {
    phase_seconds_[std::string(to_string(phase_))] += seconds_since(phase_started_);
  }

  const std::string id_;
  const std::string project_id_;
  const std::string series_id_;
  const std::uint64_t invocations_at_start_;
  const Clock::time_point created_ = Clock::now();

  mutable std::mutex mu_;
  bool started_ = false;
  Phase phase_ = Phase::sampling;
  double progress_ = 0.0;
  std::optional<std::string> error_;
  std::vector<std::string> phases_;
  std::map<std::string, double> phase_seconds_;
  Clock::time_point phase_started_ = Clock::now();
  std::optional<double> total_seconds_;
};

struct ProjectState {
  explicit ProjectState(ProjectDir d) : dir(std::move(d)) {}

  std::mutex mu;  // guards everything below
  ProjectDir dir;
  ProjectManifest manifest;
  std::optional<MediaInfo> info;
  std::shared_ptr<const FrameEmbeddingSeries> frames;
  std::shared_ptr<Job> active_job;
  std::map<std::string, std::shared_ptr<Job>> pending_series;  // series id -> job producing it
};

// What a job should score the frames against.
struct ScoreRequest {
  std::optional<std::string> keyword;
  std::vector<fs::path> photo_paths;
  std::optional<std::string> text_prompt;

  bool empty() const { return !keyword && photo_paths.empty() && !text_prompt; }
};

int status_for(Errc code) {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::invalid_argument:
    case Errc::empty_result:
    case Errc::decode:
    case Errc::dimension_mismatch:
    case Errc::fingerprint_mismatch:
    case Errc::unsupported_version:
    case Errc::dangling_reference: return 422;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::invalid_argument, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(Errc::invalid_argument, std::string("malformed JSON body: ") + e.what());
  }
}

ScoreRequest parse_score_request(const json& body) {
  ScoreRequest r;
  if (body.contains("keyword") && !body["keyword"].is_null()) {
    r.keyword = body["keyword"].get<std::string>();
    if (r.keyword->empty()) throw Error(Errc::invalid_argument, "keyword is empty");
  }
  if (body.contains("photo_paths") && !body["photo_paths"].is_null())
    for (const auto& p : body["photo_paths"]) r.photo_paths.emplace_back(p.get<std::string>());
  if (body.contains("text_prompt") && !body["text_prompt"].is_null()) {
    r.text_prompt = body["text_prompt"].get<std::string>();
    if (r.text_prompt->empty()) throw Error(Errc::invalid_argument, "text_prompt is empty");
  }
  const int given = (r.keyword ? 1 : 0) + (r.photo_paths.empty() ? 0 : 1) + (r.text_prompt ? 1 : 0);
  if (given > 1) throw Error(Errc::invalid_argument, "give only one of keyword, photo_paths, text_prompt");
  for (const auto& p : r.photo_paths)
    if (!fs::is_regular_file(p)) throw Error(Errc::not_found, "photo not found: " + p.string());
  return r;
}

Interval parse_interval(const json& j) {
  try {
    return {j.at("start").get<double>(), j.at("end").get<double>()};
  } catch (const json::exception&) {
    throw Error(Errc::invalid_argument, "interval needs numeric start and end");
  }
}

std::string content_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const Pipeline> pipeline;
  fs::path root;
  fs::path ui_dir;
  httplib::Server server;

  std::mutex mu;  // guards projects, jobs, workers
  std::map<std::string, std::shared_ptr<ProjectState>> projects;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::vector<std::jthread> workers;

  std::uint64_t invocations() const { return pipeline->media().invocations(); }

  std::shared_ptr<ProjectState> project(const std::string& id) {
    std::lock_guard lock(mu);
    if (auto it = projects.find(id); it != projects.end()) return it->second;
    if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
      throw Error(Errc::not_found, "unknown project " + id);
    ProjectDir dir(root / id);
    if (!fs::is_regular_file(dir.manifest())) throw Error(Errc::not_found, "unknown project " + id);
    auto loaded = load_project(dir);
    for (const auto& w : loaded.warnings) std::cerr << "project " << id << ": " << w << "\n";
    auto state = std::make_shared<ProjectState>(dir);
    state->manifest = std::move(loaded.manifest);
    projects[id] = state;
    return state;
  }

  std::shared_ptr<Job> job(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw Error(Errc::not_found, "unknown job " + id);
    return it->second;
  }

  const MediaInfo& media_info(ProjectState& p) {
    // caller holds p.mu
    if (!p.info) p.info = pipeline->media().probe(p.manifest.video_path);
    return *p.info;
  }

  // Registers a job on the project (409 if one is running) and starts it.
  std::shared_ptr<Job> launch(const std::shared_ptr<ProjectState>& p, ScoreRequest request) {
    std::shared_ptr<Job> j;
    {
      std::lock_guard plock(p->mu);
      if (p->active_job && !p->active_job->finished())
        throw Error(Errc::conflict, "a job is already running for project " + p->manifest.project_id);
      j = std::make_shared<Job>(p->manifest.project_id, random_id(), invocations());
      p->active_job = j;
      p->pending_series[j->series_id()] = j;
    }
    std::lock_guard lock(mu);
    jobs[j->id()] = j;
    workers.emplace_back([this, p, j, request = std::move(request)] { run_job(p, j, request); });
    return j;
  }

  std::shared_ptr<const FrameEmbeddingSeries> frames_for(ProjectState& p, Job& j) {
    std::string video;
    std::string hash;
    double rate = 0.0;
    {
      std::lock_guard lock(p.mu);
      if (p.frames) return p.frames;
      video = p.manifest.video_path;
      hash = p.manifest.video_hash;
      rate = p.manifest.sampling_rate;
    }
    if (hash.empty()) {
      j.advance(Phase::sampling, 0.0);
      hash = sha256_file(video);
      std::lock_guard lock(p.mu);
      p.manifest.video_hash = hash;
      save_project(p.dir, p.manifest);
    }
    const EmbeddingCache cache(p.dir.embeddings());
    auto embedded = pipeline->embed_video(video, hash, rate, &cache,
                                          [&](Phase phase, double progress) { j.advance(phase, progress); });
    auto frames = std::make_shared<const FrameEmbeddingSeries>(std::move(embedded.frames));
    std::lock_guard lock(p.mu);
    p.frames = frames;
    if (p.manifest.backend_fingerprint.empty()) {
      p.manifest.backend_fingerprint = frames->meta().backend_fingerprint;
      save_project(p.dir, p.manifest);
    }
    return frames;
  }

  void run_job(const std::shared_ptr<ProjectState>& p, const std::shared_ptr<Job>& j, ScoreRequest request) {
    try {
      const auto frames = frames_for(*p, *j);

      j->advance(Phase::prior, 0.0);
      std::optional<PriorProfile> prior;
      std::optional<std::string> chosen_label;
      if (request.empty()) {
        const auto ranked = pipeline->classify(*frames, 1);
        chosen_label = ranked.front().label;
        request.keyword = chosen_label;
      }
      if (request.keyword) prior = pipeline->prior_for_keyword(*request.keyword);
      else if (!request.photo_paths.empty()) prior = pipeline->prior_for_paths(request.photo_paths);
      j->advance(Phase::prior, 1.0);

      j->advance(Phase::scoring, 0.0);
      ScoreSeries series = prior ? pipeline->score_with_prior(*frames, *prior)
                                 : pipeline->score_with_text(*frames, *request.text_prompt);
      series.id = j->series_id();
      {
        std::lock_guard lock(p->mu);
        if (prior) {
          save_prior(p->dir, *prior);
          auto& ids = p->manifest.prior_ids;
          if (std::find(ids.begin(), ids.end(), prior->id) == ids.end()) ids.push_back(prior->id);
        }
        save_score_series(p->dir, series);
        p->manifest.score_series_ids.push_back(series.id);
        if (chosen_label) p->manifest.activity_label = chosen_label;
        save_project(p->dir, p->manifest);
        p->pending_series.erase(series.id);
      }
      j->advance(Phase::scoring, 1.0);
      j->advance(Phase::done, 1.0);
    } catch (const std::exception& e) {
      j->fail(e.what());
    }
  }

  // -------------------------------------------------------------------------
  // Handlers

  void create_project(const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("video_path") || !body["video_path"].is_string())
      throw Error(Errc::invalid_argument, "video_path is required");
    const fs::path video = fs::absolute(body["video_path"].get<std::string>()).lexically_normal();
    if (!fs::is_regular_file(video)) throw Error(Errc::not_found, "video not found: " + video.string());
    double rate = pipeline->config().sampling_rate;
    if (body.contains("rate") && !body["rate"].is_null()) {
      if (!body["rate"].is_number()) throw Error(Errc::invalid_argument, "rate must be a number");
      rate = body["rate"].get<double>();
    }
    if (!(rate > 0.0)) throw Error(Errc::invalid_argument, "rate must be positive");
    auto request = parse_score_request(body);

    const auto info = pipeline->media().probe(video);
    if (rate > info.native_fps + 1e-9)
      throw Error(Errc::invalid_argument, "rate exceeds the video's native frame rate");

    auto state = std::make_shared<ProjectState>(ProjectDir(root / random_id()));
    state->info = info;
    state->manifest.project_id = state->dir.root().filename().string();
    state->manifest.video_path = video.string();
    state->manifest.sampling_rate = rate;
    state->manifest.backend_fingerprint = pipeline->backend().fingerprint();
    try {
      state->manifest.backend = pipeline->config().backend_spec().to_json();
    } catch (const Error&) {
      state->manifest.backend = nullptr;  // injected backend without a manifest
    }
    save_project(state->dir, state->manifest);
    {
      std::lock_guard lock(mu);
      projects[state->manifest.project_id] = state;
    }
    const auto j = launch(state, std::move(request));
    send_json(res, 201, {{"project_id", state->manifest.project_id}, {"job_id", j->id()}, {"series_id", j->series_id()}});
  }

  void get_project(const std::string& id, httplib::Response& res) {
    auto p = project(id);
    std::lock_guard lock(p->mu);
    json body = p->manifest.to_json();
    body["job"] = p->active_job ? p->active_job->to_json(invocations()) : json(nullptr);
    send_json(res, 200, body);
  }

  void get_scores(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto p = project(id);
    std::string sid = req.get_param_value("series");
    std::lock_guard lock(p->mu);
    if (sid.empty()) {
      if (p->manifest.score_series_ids.empty()) {
        if (p->active_job && !p->active_job->finished())
          return send_json(res, 409, {{"error", "scores pending"}, {"job", p->active_job->to_json(invocations())}});
        throw Error(Errc::not_found, "project has no score series");
      }
      sid = p->manifest.score_series_ids.back();
    }
    const auto& ids = p->manifest.score_series_ids;
    if (std::find(ids.begin(), ids.end(), sid) != ids.end()) {
      res.status = 200;
      res.set_content(read_text_file(p->dir.score_file(sid)), "application/json");
      return;
    }
    if (auto it = p->pending_series.find(sid); it != p->pending_series.end())
      return send_json(res, 409, {{"error", "score series not ready"}, {"job", it->second->to_json(invocations())}});
    throw Error(Errc::not_found, "unknown score series " + sid);
  }

  void get_thumb(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto p = project(id);
    double t = 0.0;
    try {
      t = std::stod(req.get_param_value("t"));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "t must be a number of seconds");
    }
    int max_edge = pipeline->config().thumb_max_edge;
    if (req.has_param("max_edge")) max_edge = std::stoi(req.get_param_value("max_edge"));
    MediaInfo info;
    std::string video;
    std::string hash;
    ProjectDir dir = p->dir;
    {
      std::lock_guard lock(p->mu);
      info = media_info(*p);
      video = p->manifest.video_path;
      hash = p->manifest.video_hash.empty() ? sha256_hex(video) : p->manifest.video_hash;
    }
    const ThumbnailCache cache(dir.thumbs());
    const auto jpeg = cache.get(pipeline->media(), video, hash, info, t, max_edge);
    res.status = 200;
    res.set_content(std::string(jpeg.begin(), jpeg.end()), "image/jpeg");
  }

  void rescore(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto p = project(id);
    auto request = parse_score_request(parse_body(req));
    if (request.empty()) throw Error(Errc::invalid_argument, "give one of keyword, photo_paths, text_prompt");
    const auto j = launch(p, std::move(request));
    send_json(res, 202, {{"series_id", j->series_id()}, {"job_id", j->id()}});
  }

  ScoreSeries series_for(ProjectState& p, const std::string& sid) {
    std::lock_guard lock(p.mu);
    const auto& ids = p.manifest.score_series_ids;
    if (std::find(ids.begin(), ids.end(), sid) == ids.end()) {
      if (p.pending_series.count(sid)) throw Error(Errc::conflict, "score series " + sid + " is not ready");
      throw Error(Errc::not_found, "unknown score series " + sid);
    }
    return load_score_series(p.dir, sid);
  }

  void select(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto p = project(id);
    const auto body = parse_body(req);
    const auto sid = body.value("series_id", std::string());
    if (sid.empty()) throw Error(Errc::invalid_argument, "series_id is required");
    const auto series = series_for(*p, sid);
    const auto mode = body.value("mode", std::string("auto"));
    const double length = body.value("length", kDefaultHighlightSeconds);

    json results = json::array();
    if (mode == "auto") {
      results.push_back(best_window(series, length).to_json());
    } else if (mode == "peaks") {
      if (!body.contains("k")) throw Error(Errc::invalid_argument, "k is required for peaks mode");
      const int k = body["k"].get<int>();
      const double min_sep = body.value("min_separation", length);
      for (const auto& r : top_peaks(series, k, min_sep, length)) results.push_back(r.to_json());
    } else if (mode == "mean") {
      if (!body.contains("interval")) throw Error(Errc::invalid_argument, "interval is required for mean mode");
      const auto iv = parse_interval(body["interval"]);
      return send_json(res, 200, {{"series_id", sid}, {"mean", interval_mean(series, iv)}});
    } else {
      throw Error(Errc::invalid_argument, "mode must be auto, peaks or mean");
    }
    send_json(res, 200, {{"series_id", sid}, {"mode", mode}, {"results", results}});
  }

  void export_clip(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto p = project(id);
    const auto body = parse_body(req);
    std::vector<Interval> intervals;
    if (body.contains("interval")) intervals.push_back(parse_interval(body["interval"]));
    if (body.contains("intervals"))
      for (const auto& iv : body["intervals"]) intervals.push_back(parse_interval(iv));
    if (intervals.empty()) throw Error(Errc::invalid_argument, "interval or intervals required");

    MediaInfo info;
    std::string video;
    {
      std::lock_guard lock(p->mu);
      info = media_info(*p);
      video = p->manifest.video_path;
    }
    for (const auto& iv : intervals) iv.validate(info.duration);
    check_non_overlapping(intervals);

    fs::create_directories(p->dir.exports());
    const auto out = p->dir.exports() / (random_id() + ".mp4");
    assemble_montage(pipeline->media(), video, info, intervals, out);
    {
      std::lock_guard lock(p->mu);
      p->manifest.exports.push_back({intervals, out.string()});
      save_project(p->dir, p->manifest);
    }
    send_json(res, 201, {{"path", out.string()}});
  }

  void get_prior(const std::string& id, const std::string& pid, httplib::Response& res) {
    auto p = project(id);
    std::lock_guard lock(p->mu);
    const auto& ids = p->manifest.prior_ids;
    if (std::find(ids.begin(), ids.end(), pid) == ids.end()) throw Error(Errc::not_found, "unknown prior " + pid);
    send_json(res, 200, load_prior(p->dir, pid).to_json());
  }

  void get_prior_photo(const std::string& id, const std::string& pid, std::size_t index, httplib::Response& res) {
    auto p = project(id);
    PriorProfile prior;
    {
      std::lock_guard lock(p->mu);
      const auto& ids = p->manifest.prior_ids;
      if (std::find(ids.begin(), ids.end(), pid) == ids.end()) throw Error(Errc::not_found, "unknown prior " + pid);
      prior = load_prior(p->dir, pid);
    }
    if (index >= prior.photo_refs.size()) throw Error(Errc::not_found, "no photo " + std::to_string(index));
    const fs::path ref = prior.photo_refs[index];
    if (ref.string().find("://") != std::string::npos) {
      res.status = 302;
      res.set_header("Location", ref.string());
      return;
    }
    const auto bytes = read_file(ref);
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(ref));
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 422, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    server.Post("/projects", guarded([this](const auto& req, auto& res) { create_project(req, res); }));
    server.Get(R"(/projects/([^/]+))",
               guarded([this](const auto& req, auto& res) { get_project(req.matches[1], res); }));
    server.Get(R"(/projects/([^/]+)/scores)",
               guarded([this](const auto& req, auto& res) { get_scores(req.matches[1], req, res); }));
    server.Get(R"(/projects/([^/]+)/thumb)",
               guarded([this](const auto& req, auto& res) { get_thumb(req.matches[1], req, res); }));
    server.Post(R"(/projects/([^/]+)/rescore)",
                guarded([this](const auto& req, auto& res) { rescore(req.matches[1], req, res); }));
    server.Post(R"(/projects/([^/]+)/select)",
                guarded([this](const auto& req, auto& res) { select(req.matches[1], req, res); }));
    server.Post(R"(/projects/([^/]+)/export)",
                guarded([this](const auto& req, auto& res) { export_clip(req.matches[1], req, res); }));
    server.Get(R"(/projects/([^/]+)/priors/([^/]+))",
               guarded([this](const auto& req, auto& res) { get_prior(req.matches[1], req.matches[2], res); }));
    server.Get(R"(/projects/([^/]+)/priors/([^/]+)/photos/(\d+))", guarded([this](const auto& req, auto& res) {
                 get_prior_photo(req.matches[1], req.matches[2], std::stoul(req.matches[3].str()), res);
               }));
    server.Get(R"(/jobs/([^/]+))", guarded([this](const auto& req, auto& res) {
                 send_json(res, 200, job(req.matches[1])->to_json(invocations()));
               }));
    if (!ui_dir.empty() && fs::is_directory(ui_dir)) {
      server.set_mount_point("/", ui_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("photoprior service is running; no UI bundle is installed.\n", "text/plain");
      });
    }
  }
};

Service::Service(std::shared_ptr<const Pipeline> pipeline, fs::path project_root, fs::path ui_dir)
    : impl_(std::make_unique<Impl>()) {
  if (!pipeline) throw Error(Errc::invalid_argument, "service needs a pipeline");
  impl_->pipeline = std::move(pipeline);
  impl_->root = std::move(project_root);
  impl_->ui_dir = std::move(ui_dir);
  fs::create_directories(impl_->root);
  impl_->routes();
}

Service::~Service() {
  stop();
  wait_idle();
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw Error(Errc::io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error(Errc::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_idle() {
  std::vector<std::jthread> workers;
  {
    std::lock_guard lock(impl_->mu);
    workers.swap(impl_->workers);
  }
  workers.clear();  // jthread joins on destruction
}

const Pipeline& Service::pipeline() const { return *impl_->pipeline; }

}  // namespace photoprior

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "photoprior/pipeline.hpp"

namespace photoprior {

// Local HTTP/JSON service behind the browser UI.
//
//   POST /projects                      {video_path, keyword?, photo_paths?, text_prompt?, rate?}
//   GET  /projects/{id}                 manifest plus current job
//   GET  /projects/{id}/scores?series=  score file
//   GET  /projects/{id}/thumb?t=        JPEG of the frame nearest t
//   POST /projects/{id}/rescore         {keyword | photo_paths | text_prompt}
//   POST /projects/{id}/select          {series_id, mode: auto|peaks|mean, length, k, min_separation, interval}
//   POST /projects/{id}/export          {interval} | {intervals: [...]}
//   GET  /projects/{id}/priors/{pid}    prior profile
//   GET  /projects/{id}/priors/{pid}/photos/{i}   exemplar photo bytes
//   GET  /jobs/{job_id}                 job status
//   GET  /                              static UI bundle
//
// Pipeline work runs as background jobs, one at a time per project.
class Service {
 public:
  Service(std::shared_ptr<const Pipeline> pipeline, std::filesystem::path project_root,
          std::filesystem::path ui_dir = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

  /// Blocks until every background job has finished.
  void wait_idle();

  const Pipeline& pipeline() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace photoprior

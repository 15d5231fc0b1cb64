#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "photoprior/embedding.hpp"
#include "photoprior/score.hpp"

namespace photoprior {

// Text embeddings for a database of activity names.
struct ActivityLabelSet {
  std::vector<std::string> labels;
  std::vector<EmbeddingVector> label_embeddings;
  std::string prompt_template = "{label}";
  std::string backend_fingerprint;
};

struct LabelScore {
  std::string label;
  double score = 0.0;

  bool operator==(const LabelScore&) const = default;
};

/// One label per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_label_file(const std::filesystem::path& path);

/// Substitutes every "{label}" in the template.
std::string apply_prompt_template(const std::string& prompt_template, const std::string& label);

ActivityLabelSet embed_labels(std::vector<std::string> labels, const EmbeddingBackend& backend,
                              std::string prompt_template = "{label}");

/// Ranks labels by cosine between the mean-pooled frame embedding and each
/// label embedding. Descending score, ties by label; at most top_k entries.
std::vector<LabelScore> classify_activity(const FrameEmbeddingSeries& frames, const ActivityLabelSet& labels,
                                         std::size_t top_k);

}  // namespace photoprior

#include "photoprior/classify.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "photoprior/error.hpp"

namespace photoprior {

std::vector<std::string> load_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::not_found, "label database not found: " + path.string());
  std::vector<std::string> labels;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    auto label = line.substr(b, e - b + 1);
    if (seen.insert(label).second) labels.push_back(std::move(label));
  }
  if (labels.empty()) throw Error(Errc::invalid_argument, "label database is empty: " + path.string());
  return labels;
}

std::string apply_prompt_template(const std::string& prompt_template, const std::string& label) {
  static const std::string kSlot = "{label}";
  std::string out;
  size_t pos = 0;
  while (true) {
    const auto hit = prompt_template.find(kSlot, pos);
    out += prompt_template.substr(pos, hit - pos);
    if (hit == std::string::npos) break;
    out += label;
    pos = hit + kSlot.size();
  }
  return out;
}

ActivityLabelSet embed_labels(std::vector<std::string> labels, const EmbeddingBackend& backend,
                              std::string prompt_template) {
  if (labels.empty()) throw Error(Errc::invalid_argument, "label set is empty");
  if (prompt_template.find("{label}") == std::string::npos)
    throw Error(Errc::invalid_argument, "prompt template needs a {label} slot");
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size())
    throw Error(Errc::invalid_argument, "labels must be distinct");
  ActivityLabelSet set;
  set.prompt_template = std::move(prompt_template);
  set.backend_fingerprint = backend.fingerprint();
  for (const auto& l : labels) set.label_embeddings.push_back(backend.encode_text(apply_prompt_template(set.prompt_template, l)));
  set.labels = std::move(labels);
  return set;
}

std::vector<LabelScore> classify_activity(const FrameEmbeddingSeries& frames, const ActivityLabelSet& labels,
                                         std::size_t top_k) {
  if (frames.empty()) throw Error(Errc::invalid_argument, "no frame embeddings to classify");
  if (top_k < 1) throw Error(Errc::invalid_argument, "top_k must be at least 1");
  if (labels.labels.empty() || labels.labels.size() != labels.label_embeddings.size())
    throw Error(Errc::invalid_argument, "label set needs one embedding per label");
  if (labels.backend_fingerprint != frames.meta().backend_fingerprint)
    throw Error(Errc::fingerprint_mismatch, "labels and frames were embedded with different backends");

  // Mean-pool the frames into a single video representation.
  std::vector<double> pooled(frames.dim(), 0.0);
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto row = frames.embedding(i);
    for (size_t d = 0; d < pooled.size(); ++d) pooled[d] += row[d];
  }
  for (double& x : pooled) x /= static_cast<double>(frames.size());

  std::vector<LabelScore> ranked;
  ranked.reserve(labels.labels.size());
  for (size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.label_embeddings[i].dim() != frames.dim())
      throw Error(Errc::dimension_mismatch, "label embedding dimension differs from frames");
    const double c = cosine(pooled, labels.label_embeddings[i].values());
    ranked.push_back({labels.labels[i], std::clamp(c, -1.0, 1.0)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const LabelScore& a, const LabelScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

}  // namespace photoprior

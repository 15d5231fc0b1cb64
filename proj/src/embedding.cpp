#include "photoprior/embedding.hpp"

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>

#include "photoprior/error.hpp"
#include "photoprior/hash.hpp"

namespace photoprior {

EmbeddingVector EmbeddingVector::normalized(std::vector<float> raw) {
  if (raw.empty()) throw Error(Errc::invalid_argument, "embedding has zero dimensions");
  double sq = 0.0;
  for (float x : raw) {
    if (!std::isfinite(x)) throw Error(Errc::inference, "embedding has non-finite components");
    sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw Error(Errc::inference, "embedding has zero norm");
  for (float& x : raw) x = static_cast<float>(x / norm);
  return EmbeddingVector(std::move(raw));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
  if (values.empty()) throw Error(Errc::invalid_argument, "embedding has zero dimensions");
  for (float x : values)
    if (!std::isfinite(x)) throw Error(Errc::invalid_argument, "embedding has non-finite components");
  const double norm = l2_norm(std::span<const float>(values));
  if (std::abs(norm - 1.0) > kUnitNormTolerance)
    throw Error(Errc::invalid_argument, "embedding is not unit length (norm " + std::to_string(norm) + ")");
  return EmbeddingVector(std::move(values));
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(Errc::dimension_mismatch, "dot product of unequal lengths");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double dot(std::span<const double> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(Errc::dimension_mismatch, "dot product of unequal lengths");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

const Preprocessing& preprocessing_pipeline(std::string_view id) {
  static const std::array<Preprocessing, 2> kRegistry{{
      {"clip_center_crop", {0.48145466f, 0.4578275f, 0.40821073f}, {0.26862954f, 0.26130258f, 0.27577711f}},
      {"unit_center_crop", {0.0f, 0.0f, 0.0f}, {1.0f, 1.0f, 1.0f}},
  }};
  for (const auto& p : kRegistry)
    if (p.id == id) return p;
  throw Error(Errc::invalid_argument, "unknown preprocessing pipeline '" + std::string(id) + "'");
}

// ---------------------------------------------------------------------------
// BackendSpec

namespace {

TextOverflow parse_overflow(const std::string& s) {
  if (s == "error") return TextOverflow::error;
  if (s == "truncate") return TextOverflow::truncate;
  throw Error(Errc::invalid_argument, "text overflow policy must be 'error' or 'truncate'");
}

}  // namespace

BackendSpec BackendSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  BackendSpec spec;
  try {
    std::filesystem::path model = j.at("model_path").get<std::string>();
    spec.model_path = (model.is_relative() && !base_dir.empty()) ? base_dir / model : model;
    spec.input_resolution = j.at("input_resolution").get<int>();
    spec.dim = j.at("dim").get<int>();
    spec.preprocessing = j.value("preprocessing", spec.preprocessing);
    spec.image_input = j.value("image_input", spec.image_input);
    spec.image_output = j.value("image_output", spec.image_output);
    if (j.contains("text") && !j["text"].is_null()) {
      const auto& t = j["text"];
      TextTowerSpec text;
      std::filesystem::path text_model = t.at("model_path").get<std::string>();
      text.model_path = (text_model.is_relative() && !base_dir.empty()) ? base_dir / text_model : text_model;
      text.input = t.value("input", text.input);
      text.output = t.value("output", text.output);
      text.tokenizer = t.value("tokenizer", text.tokenizer);
      text.vocab_size = t.value("vocab_size", text.vocab_size);
      text.context_length = t.value("context_length", text.context_length);
      text.overflow = parse_overflow(t.value("overflow", std::string("error")));
      spec.text = text;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("backend spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

BackendSpec BackendSpec::load(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(Errc::not_found, "backend manifest not found: " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, manifest.string() + ": " + e.what());
  }
  return from_json(j, manifest.parent_path());
}

nlohmann::json BackendSpec::to_json() const {
  nlohmann::json j{{"model_path", model_path.string()},
                   {"input_resolution", input_resolution},
                   {"dim", dim},
                   {"preprocessing", preprocessing},
                   {"image_input", image_input},
                   {"image_output", image_output}};
  if (text) {
    j["text"] = {{"model_path", text->model_path.string()},
                 {"input", text->input},
                 {"output", text->output},
                 {"tokenizer", text->tokenizer},
                 {"vocab_size", text->vocab_size},
                 {"context_length", text->context_length},
                 {"overflow", text->overflow == TextOverflow::error ? "error" : "truncate"}};
  } else {
    j["text"] = nullptr;
  }
  return j;
}

void BackendSpec::validate() const {
  if (dim <= 0) throw Error(Errc::invalid_argument, "backend dim must be positive");
  if (input_resolution <= 0) throw Error(Errc::invalid_argument, "backend input_resolution must be positive");
  preprocessing_pipeline(preprocessing);
  if (text) {
    if (text->model_path.empty()) throw Error(Errc::invalid_argument, "text tower needs a model_path");
    if (text->tokenizer != "hashed_words")
      throw Error(Errc::invalid_argument, "unknown tokenizer '" + text->tokenizer + "'");
    if (text->vocab_size <= 0 || text->context_length <= 0)
      throw Error(Errc::invalid_argument, "text vocab_size and context_length must be positive");
  }
}

// ---------------------------------------------------------------------------
// Tokenizer

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<float> hashed_word_features(std::string_view text, const TextTowerSpec& spec,
                                        const std::function<void(std::string_view)>& notice) {
  auto words = tokenize_words(text);
  if (words.empty()) throw Error(Errc::invalid_argument, "text has no tokens");
  const auto limit = static_cast<size_t>(spec.context_length);
  if (words.size() > limit) {
    const std::string msg = "text has " + std::to_string(words.size()) + " tokens, context length is " +
                            std::to_string(limit);
    if (spec.overflow == TextOverflow::error) throw Error(Errc::invalid_argument, msg);
    if (notice) notice(msg + "; truncated");
    words.resize(limit);
  }
  std::vector<float> features(static_cast<size_t>(spec.vocab_size), 0.0f);
  for (const auto& w : words) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : w) {
      h ^= c;
      h *= 16777619u;
    }
    features[h % features.size()] += 1.0f;
  }
  return features;
}

// ---------------------------------------------------------------------------
// Backends

std::vector<EmbeddingVector> EmbeddingBackend::encode_image_batch(std::span<const RgbImage> images) const {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    try {
      out.push_back(encode_image(images[i]));
    } catch (const Error& e) {
      throw Error(e.code(), "image " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

namespace {

constexpr size_t kMaxBatch = 16;

class OnnxBackend final : public EmbeddingBackend {
 public:
  OnnxBackend(BackendSpec spec, NoticeSink notices)
      : spec_(std::move(spec)), pre_(preprocessing_pipeline(spec_.preprocessing)), notices_(std::move(notices)) {
    image_net_ = load_net(spec_.model_path);
    if (spec_.text) text_net_ = load_net(spec_.text->model_path);

    std::string text_desc = "none";
    if (spec_.text)
      text_desc = spec_.text->tokenizer + "/" + std::to_string(spec_.text->vocab_size) + "/" +
                  std::to_string(spec_.text->context_length);
    if (spec_.text) text_desc = sha256_file(spec_.text->model_path) + "/" + text_desc;
    fingerprint_ = sha256_hex(sha256_file(spec_.model_path) + "|" + spec_.preprocessing + "|" +
                              std::to_string(spec_.input_resolution) + "|" + std::to_string(spec_.dim) + "|" +
                              text_desc)
                       .substr(0, 16);

    // Probe once with blank inputs so a model/spec disagreement fails at load.
    check_width(run(image_net_, image_mu_, blank_pixels(1), spec_.image_input, spec_.image_output), "image");
    if (spec_.text)
      check_width(run(text_net_, text_mu_, blank_text(1), spec_.text->input, spec_.text->output), "text");
  }

  int dim() const override { return spec_.dim; }
  Modalities modalities() const override { return {true, spec_.text.has_value()}; }
  std::string fingerprint() const override { return fingerprint_; }

  EmbeddingVector encode_image(const RgbImage& image) const override {
    auto batch = encode_image_batch(std::span(&image, 1));
    return std::move(batch.front());
  }

  std::vector<EmbeddingVector> encode_image_batch(std::span<const RgbImage> images) const override {
    for (size_t i = 0; i < images.size(); ++i)
      if (!images[i].valid())
        throw Error(Errc::invalid_argument, "image " + std::to_string(i) + ": zero-size or malformed bitmap");
    std::vector<EmbeddingVector> out;
    out.reserve(images.size());
    for (size_t begin = 0; begin < images.size(); begin += kMaxBatch) {
      const size_t n = std::min(kMaxBatch, images.size() - begin);
      std::vector<cv::Mat> prepared;
      prepared.reserve(n);
      for (size_t i = 0; i < n; ++i) prepared.push_back(preprocess(images[begin + i]));
      cv::Mat pixels = cv::dnn::blobFromImages(prepared, 1.0, cv::Size(), cv::Scalar(), false, false, CV_32F);
      auto result = run(image_net_, image_mu_, pixels, spec_.image_input, spec_.image_output);
      for (size_t i = 0; i < n; ++i) {
        try {
          out.push_back(row_to_embedding(result, static_cast<int>(i)));
        } catch (const Error& e) {
          throw Error(e.code(), "image " + std::to_string(begin + i) + ": " + e.what());
        }
      }
    }
    return out;
  }

  EmbeddingVector encode_text(std::string_view text) const override {
    if (!spec_.text) throw Error(Errc::invalid_argument, "backend has no text encoder");
    auto trimmed = text;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) trimmed.remove_prefix(1);
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.remove_suffix(1);
    if (trimmed.empty()) throw Error(Errc::invalid_argument, "text is empty");
    auto features = hashed_word_features(trimmed, *spec_.text, notices_);
    cv::Mat blob(1, static_cast<int>(features.size()), CV_32F, features.data());
    auto result = run(text_net_, text_mu_, blob, spec_.text->input, spec_.text->output);
    return row_to_embedding(result, 0, "text");
  }

 private:
  cv::Mat blank_pixels(int n) const {
    const int sz[] = {n, 3, spec_.input_resolution, spec_.input_resolution};
    return cv::Mat(4, sz, CV_32F, cv::Scalar(0));
  }

  cv::Mat blank_text(int n) const {
    if (!spec_.text) return {};
    return cv::Mat(n, spec_.text->vocab_size, CV_32F, cv::Scalar(0));
  }

  // Resize shorter side to the model resolution, center-crop, then apply the
  // per-channel mean/std of the registered pipeline.
  cv::Mat preprocess(const RgbImage& image) const {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    const int res = spec_.input_resolution;
    const double scale = static_cast<double>(res) / std::min(image.width, image.height);
    const int w = std::max(res, static_cast<int>(std::lround(image.width * scale)));
    const int h = std::max(res, static_cast<int>(std::lround(image.height * scale)));
    cv::Mat resized;
    if (w == image.width && h == image.height)
      resized = rgb;
    else
      cv::resize(rgb, resized, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
    cv::Mat crop = resized(cv::Rect((w - res) / 2, (h - res) / 2, res, res));
    cv::Mat f;
    crop.convertTo(f, CV_32FC3, 1.0 / 255.0);
    cv::subtract(f, cv::Scalar(pre_.mean[0], pre_.mean[1], pre_.mean[2]), f);
    cv::divide(f, cv::Scalar(pre_.stddev[0], pre_.stddev[1], pre_.stddev[2]), f);
    return f;
  }

  static cv::dnn::Net load_net(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw Error(Errc::not_found, "model file not found: " + path.string());
    cv::dnn::Net net;
    try {
      net = cv::dnn::readNetFromONNX(path.string());
    } catch (const cv::Exception& e) {
      throw Error(Errc::decode, "cannot load model " + path.string() + ": " + e.what());
    }
    net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    return net;
  }

  // cv::dnn::Net is not reentrant, hence one mutex per net.
  static cv::Mat run(cv::dnn::Net& net, std::mutex& mu, const cv::Mat& input, const std::string& input_name,
                     const std::string& output_name) {
    std::lock_guard lock(mu);
    try {
      net.setInput(input, input_name);
      cv::Mat raw = net.forward(output_name);
      return raw.reshape(1, raw.size[0]).clone();
    } catch (const cv::Exception& e) {
      throw Error(Errc::inference, std::string("inference failed: ") + e.what());
    }
  }

  void check_width(const cv::Mat& out, const char* tower) const {
    if (out.cols != spec_.dim)
      throw Error(Errc::dimension_mismatch, std::string(tower) + " encoder emits " + std::to_string(out.cols) +
                                                " dimensions, spec declares " + std::to_string(spec_.dim));
  }

  EmbeddingVector row_to_embedding(const cv::Mat& m, int row, const char* tower = "image") const {
    check_width(m, tower);
    const float* p = m.ptr<float>(row);
    return EmbeddingVector::normalized(std::vector<float>(p, p + m.cols));
  }

  BackendSpec spec_;
  const Preprocessing& pre_;
  NoticeSink notices_;
  std::string fingerprint_;
  mutable cv::dnn::Net image_net_;
  mutable cv::dnn::Net text_net_;
  mutable std::mutex image_mu_;
  mutable std::mutex text_mu_;
};

}  // namespace

std::unique_ptr<EmbeddingBackend> load_backend(const BackendSpec& spec, NoticeSink notices) {
  spec.validate();
  if (!notices) notices = [](std::string_view msg) { std::cerr << "warning: " << msg << "\n"; };
  return std::make_unique<OnnxBackend>(spec, std::move(notices));
}

}  // namespace photoprior

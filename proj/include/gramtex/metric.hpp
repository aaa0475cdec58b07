#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gramtex/extractor.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex {

inline constexpr std::size_t kPatchSize = 64;

struct MetricConfig {
  TapSet taps;

  // Stage outputs (last conv before each pool) strictly after the first pool
  // and at or before the penultimate pool. VGG-19: conv2_2, conv3_4, conv4_4.
  static MetricConfig defaults_for(const NetworkSpec& spec);
  void validate(const NetworkSpec& spec) const;
};

// Scales the channel vector at each spatial position to unit L2 norm; zero
// vectors stay zero. Accepts [C,H,W] or [B,C,H,W].
Tensor normalize_features(const Tensor& features);

// (1 / M) * F_hat F_hat^T per batch item, F_hat = normalize_features(F). [B,C,C].
Tensor normalized_gram(const Tensor& features);

// sum_l (1 / C_l^2) * sum_ij (G_ij - A_ij)^2 over normalized Gram matrices.
double gram_distance_from_grams(const std::vector<Tensor>& grams_x, const std::vector<Tensor>& grams_y);
double gram_distance_from_features(const std::vector<Tensor>& features_x, const std::vector<Tensor>& features_y);

// Normalized Gram matrices of one image at the configured taps.
std::vector<Tensor> metric_grams(const FeatureExtractor& extractor, const Tensor& image, const MetricConfig& config);

double gram_distance(const FeatureExtractor& extractor, const Tensor& x, const Tensor& x0, const MetricConfig& config);

// Center-crops to v x v with v = floor(min(H, W) / 64) * 64 and splits into
// row-major 64 x 64 patches.
std::vector<Tensor> tile_patches(const Tensor& image);

// Mean patch distance over the aligned tiles of two equally sized images.
double image_distance(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b, const MetricConfig& config);

// One 2AFC judgment: judge = fraction of humans preferring p1.
struct Triplet {
  std::filesystem::path ref;
  std::filesystem::path p0;
  std::filesystem::path p1;
  double judge = 0.5;
  std::string subtype;
};

// JSON-lines manifest: {"ref":..., "p0":..., "p1":..., "judge": h, "subtype": ...}.
// Relative paths are resolved against the manifest's directory.
std::vector<Triplet> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<Triplet>& triplets);

enum class Choice { p0, p1, tie };

struct TripletResult {
  double d0 = 0.0;
  double d1 = 0.0;
  Choice choice = Choice::tie;
  double credit = 0.0;
  std::string subtype;
};

struct SubtypeScore {
  std::size_t count = 0;
  double score = 0.0;
};

struct EvalReport {
  std::vector<TripletResult> results;
  double score = 0.0;
  std::map<std::string, SubtypeScore> by_subtype;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

// Credit for the metric's pick: judge if p1 is closer, 1 - judge if p0 is, 0.5 on a tie.
TripletResult score_triplet(double d0, double d1, double judge);

// Aggregates per-triplet credits in the given order.
EvalReport summarize(std::vector<TripletResult> results);

// Scores a manifest with the Gram distance. Each distinct patch file is decoded
// and featurized once.
EvalReport eval_2afc(const std::vector<Triplet>& triplets, const FeatureExtractor& extractor,
                     const MetricConfig& config);
EvalReport eval_2afc(const std::filesystem::path& manifest, const FeatureExtractor& extractor,
                     const MetricConfig& config);

}  // namespace gramtex

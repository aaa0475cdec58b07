#include "gramtex/metric.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "gramtex/imaging.hpp"
#include "gramtex/ops.hpp"

namespace gramtex {

MetricConfig MetricConfig::defaults_for(const NetworkSpec& spec) {
  std::vector<std::size_t> pools;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::maxpool) pools.push_back(i);
  MetricConfig config;
  if (pools.size() < 3) {
    throw ConfigError("metric: network needs at least three pooling layers to apply the default tap rule");
  }
  for (std::size_t p = 1; p + 1 < pools.size(); ++p) {
    for (std::size_t i = pools[p]; i-- > pools[p - 1];) {
      if (spec.layers[i].kind == LayerKind::conv) {
        config.taps.push_back(spec.layers[i].name);
        break;
      }
    }
  }
  return config;
}

void MetricConfig::validate(const NetworkSpec& spec) const {
  if (taps.empty()) throw ConfigError("metric: at least one tap is required");
  for (const auto& t : taps) {
    if (!spec.contains(t)) throw ConfigError("metric: tap \"" + t + "\" is not a layer of the network");
  }
}

Tensor normalize_features(const Tensor& features) {
  std::size_t B = 1, C = 0, M = 0;
  if (features.ndim() == 3) {
    C = features.dim(0);
    M = features.dim(1) * features.dim(2);
  } else if (features.ndim() == 4) {
    B = features.dim(0);
    C = features.dim(1);
    M = features.dim(2) * features.dim(3);
  } else {
    throw DimensionError("normalize_features: expected [C,H,W] or [B,C,H,W], got " + shape_string(features.shape()));
  }
  return dispatch(features.dtype(), [&]<class T>() {
    auto in = features.data<T>();
    std::vector<T> out(in.size(), T(0));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < M; ++m) {
        T sq = 0;
        for (std::size_t c = 0; c < C; ++c) {
          const T v = in[(b * C + c) * M + m];
          sq += v * v;
        }
        if (sq == T(0)) continue;
        const T norm = std::sqrt(sq);
        for (std::size_t c = 0; c < C; ++c) out[(b * C + c) * M + m] = in[(b * C + c) * M + m] / norm;
      }
    return Tensor::from_vector<T>(features.shape(), std::move(out));
  });
}

Tensor normalized_gram(const Tensor& features) {
  NoGradGuard no_grad;
  const Tensor g = gram_matrix(normalize_features(features));
  const std::size_t M = features.ndim() == 4 ? features.dim(2) * features.dim(3) : features.dim(1) * features.dim(2);
  return scale(g, 1.0 / static_cast<double>(M));
}

double gram_distance_from_grams(const std::vector<Tensor>& grams_x, const std::vector<Tensor>& grams_y) {
  if (grams_x.size() != grams_y.size()) {
    throw DimensionError("gram distance: " + std::to_string(grams_x.size()) + " vs " +
                         std::to_string(grams_y.size()) + " layers");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < grams_x.size(); ++l) {
    if (grams_x[l].shape() != grams_y[l].shape()) {
      throw DimensionError("gram distance: layer " + std::to_string(l) + " Gram " + shape_string(grams_x[l].shape()) +
                           " vs " + shape_string(grams_y[l].shape()));
    }
    const auto gx = grams_x[l].to_vector();
    const auto gy = grams_y[l].to_vector();
    const double c = static_cast<double>(grams_x[l].shape().back());
    double acc = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double d = gx[i] - gy[i];
      acc += d * d;
    }
    total += acc / (c * c);
  }
  return total;
}

double gram_distance_from_features(const std::vector<Tensor>& features_x, const std::vector<Tensor>& features_y) {
  if (features_x.size() != features_y.size()) throw DimensionError("gram distance: layer counts differ");
  std::vector<Tensor> gx, gy;
  for (std::size_t l = 0; l < features_x.size(); ++l) {
    if (features_x[l].shape() != features_y[l].shape()) {
      throw DimensionError("gram distance: layer " + std::to_string(l) + " features " +
                           shape_string(features_x[l].shape()) + " vs " + shape_string(features_y[l].shape()));
    }
    gx.push_back(normalized_gram(features_x[l]));
    gy.push_back(normalized_gram(features_y[l]));
  }
  return gram_distance_from_grams(gx, gy);
}

std::vector<Tensor> metric_grams(const FeatureExtractor& extractor, const Tensor& image, const MetricConfig& config) {
  config.validate(extractor.spec());
  NoGradGuard no_grad;
  const auto taps = extractor.forward_with_taps(image, config.taps);
  std::vector<Tensor> grams;
  grams.reserve(taps.size());
  for (const auto& t : taps) grams.push_back(normalized_gram(t));
  return grams;
}

double gram_distance(const FeatureExtractor& extractor, const Tensor& x, const Tensor& x0, const MetricConfig& config) {
  if (x.shape() != x0.shape()) {
    throw DimensionError("gram distance: patch shapes " + shape_string(x.shape()) + " and " +
                         shape_string(x0.shape()) + " differ");
  }
  return gram_distance_from_grams(metric_grams(extractor, x, config), metric_grams(extractor, x0, config));
}

std::vector<Tensor> tile_patches(const Tensor& image) {
  if (image.ndim() != 4) throw DimensionError("tile_patches: expected [B,C,H,W], got " + shape_string(image.shape()));
  const std::size_t H = image.dim(2), W = image.dim(3);
  if (H < kPatchSize || W < kPatchSize) {
    throw SizeError("tile_patches: image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than " +
                    std::to_string(kPatchSize) + "x" + std::to_string(kPatchSize));
  }
  const std::size_t v = std::min(H, W) / kPatchSize * kPatchSize;
  const Tensor square = center_crop(image, v);
  std::vector<Tensor> patches;
  for (std::size_t y = 0; y < v; y += kPatchSize)
    for (std::size_t x = 0; x < v; x += kPatchSize) patches.push_back(crop(square, y, x, kPatchSize, kPatchSize));
  return patches;
}

double image_distance(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b, const MetricConfig& config) {
  if (a.shape() != b.shape()) {
    throw DimensionError("image distance: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " differ");
  }
  const auto pa = tile_patches(a);
  const auto pb = tile_patches(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) acc += gram_distance(extractor, pa[i], pb[i], config);
  return acc / static_cast<double>(pa.size());
}

std::vector<Triplet> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      Triplet t;
      t.ref = resolve(j.at("ref").get<std::string>());
      t.p0 = resolve(j.at("p0").get<std::string>());
      t.p1 = resolve(j.at("p1").get<std::string>());
      t.judge = j.at("judge").get<double>();
      if (j.contains("subtype")) t.subtype = j.at("subtype").get<std::string>();
      if (!(t.judge >= 0.0 && t.judge <= 1.0)) throw DataError(where + ": judge must lie in [0, 1]");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed triplet (" + e.what() + ")");
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Triplet>& triplets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open manifest " + path.string() + " for writing");
  for (const auto& t : triplets) {
    nlohmann::json j{{"ref", t.ref.string()}, {"p0", t.p0.string()}, {"p1", t.p1.string()}, {"judge", t.judge}};
    if (!t.subtype.empty()) j["subtype"] = t.subtype;
    out << j.dump() << '\n';
  }
}

TripletResult score_triplet(double d0, double d1, double judge) {
  TripletResult r;
  r.d0 = d0;
  r.d1 = d1;
  if (d1 < d0) {
    r.choice = Choice::p1;
    r.credit = judge;
  } else if (d0 < d1) {
    r.choice = Choice::p0;
    r.credit = 1.0 - judge;
  } else {
    r.choice = Choice::tie;
    r.credit = 0.5;
  }
  return r;
}

EvalReport summarize(std::vector<TripletResult> results) {
  EvalReport report;
  report.results = std::move(results);
  std::map<std::string, double> sums;
  double total = 0.0;
  for (const auto& r : report.results) {
    total += r.credit;
    if (!r.subtype.empty()) {
      sums[r.subtype] += r.credit;
      ++report.by_subtype[r.subtype].count;
    }
  }
  report.score = report.results.empty() ? 0.0 : total / static_cast<double>(report.results.size());
  for (auto& [name, s] : report.by_subtype) s.score = sums[name] / static_cast<double>(s.count);
  return report;
}

EvalReport eval_2afc(const std::vector<Triplet>& triplets, const FeatureExtractor& extractor,
                     const MetricConfig& config) {
  config.validate(extractor.spec());
  std::unordered_map<std::string, std::vector<Tensor>> cache;
  auto grams_of = [&](const std::filesystem::path& p, std::size_t index) -> const std::vector<Tensor>& {
    const auto key = p.lexically_normal().string();
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    ImageBuffer img;
    try {
      img = read_image(p);
    } catch (const Error& e) {
      throw DataError("triplet " + std::to_string(index) + ": cannot read " + p.string() + " (" + e.what() + ")");
    }
    if (img.width != kPatchSize || img.height != kPatchSize) {
      throw DataError("triplet " + std::to_string(index) + ": " + p.string() + " is " + std::to_string(img.width) +
                      "x" + std::to_string(img.height) + ", expected 64x64");
    }
    return cache.emplace(key, metric_grams(extractor, img.to_tensor(extractor.dtype()), config)).first->second;
  };

  std::vector<TripletResult> results;
  results.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    const auto& gr = grams_of(t.ref, i);
    const double d0 = gram_distance_from_grams(gr, grams_of(t.p0, i));
    const double d1 = gram_distance_from_grams(gr, grams_of(t.p1, i));
    auto r = score_triplet(d0, d1, t.judge);
    r.subtype = t.subtype;
    results.push_back(std::move(r));
  }
  return summarize(std::move(results));
}

EvalReport eval_2afc(const std::filesystem::path& manifest, const FeatureExtractor& extractor,
                     const MetricConfig& config) {
  return eval_2afc(read_manifest(manifest), extractor, config);
}

namespace {

const char* choice_name(Choice c) {
  switch (c) {
    case Choice::p0: return "p0";
    case Choice::p1: return "p1";
    case Choice::tie: return "tie";
  }
  return "tie";
}

}  // namespace

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "index,subtype,d0,d1,choice,credit\n" << std::setprecision(17);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i << ',' << r.subtype << ',' << r.d0 << ',' << r.d1 << ',' << choice_name(r.choice) << ',' << r.credit
        << '\n';
  }
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["score"] = score;
  j["count"] = results.size();
  nlohmann::json subs = nlohmann::json::object();
  for (const auto& [name, s] : by_subtype) subs[name] = {{"count", s.count}, {"score", s.score}};
  j["by_subtype"] = subs;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    rows.push_back({{"d0", r.d0}, {"d1", r.d1}, {"choice", choice_name(r.choice)}, {"credit", r.credit},
                    {"subtype", r.subtype}});
  }
  j["results"] = rows;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace gramtex

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "devias/model.hpp"
#include "devias/parallel.hpp"

namespace devias {

// Fraction of samples whose true label ranks inside the top k by score;
// ranking ties resolve by class index.
template <typename S>
double topk_accuracy(const std::vector<Tensor<S>>& scores,
                     const std::vector<int>& labels, int k) {
  if (scores.size() != labels.size())
    throw UsageError("topk: score/label count mismatch");
  if (scores.empty()) return 0.0;
  if (k > scores[0].numel()) throw UsageError("topk: k exceeds class count");
  int64_t hits = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const Tensor<S>& s = scores[i];
    const int truth = labels[i];
    int rank = 0;
    for (int64_t c = 0; c < s.numel(); ++c) {
      if (c == truth) continue;
      if (s[c] > s[truth] || (s[c] == s[truth] && c < truth)) ++rank;
    }
    hits += rank < k;
  }
  return static_cast<double>(hits) / scores.size();
}

// 4 / sum(1/v). Any zero input makes the mean zero.
inline double harmonic_mean(const std::vector<double>& values) {
  if (values.size() != 4) throw UsageError("harmonic_mean expects 4 values");
  double denom = 0;
  for (double v : values) {
    if (v <= 0.0) return 0.0;
    denom += 1.0 / v;
  }
  return 4.0 / denom;
}

// Cosine-distance k-nearest-neighbor majority vote. Vote ties go to the
// class of the nearest neighbor among the tied classes.
template <typename S>
double knn_protocol(const std::vector<Tensor<S>>& train_feats,
                    const std::vector<int>& train_labels,
                    const std::vector<Tensor<S>>& test_feats,
                    const std::vector<int>& test_labels, int k = 10,
                    int threads = 1) {
  if (train_feats.size() != train_labels.size() ||
      test_feats.size() != test_labels.size())
    throw UsageError("knn: feature/label count mismatch");
  if (k > static_cast<int>(train_feats.size()))
    throw UsageError("knn: k exceeds the train set size");

  const int64_t d = train_feats[0].numel();
  const int64_t n = static_cast<int64_t>(train_feats.size());
  std::vector<S> train_norm(n * d);
  for (int64_t i = 0; i < n; ++i) {
    Tensor<S> f = l2_normalize_axis(train_feats[i], 0, static_cast<S>(kL2NormEps));
    std::copy(f.data(), f.data() + d, train_norm.begin() + i * d);
  }

  std::vector<uint8_t> hit(test_feats.size(), 0);
  parallel_for(static_cast<int64_t>(test_feats.size()), threads, [&](int64_t t) {
    Tensor<S> q = l2_normalize_axis(test_feats[t], 0, static_cast<S>(kL2NormEps));
    std::vector<std::pair<double, int64_t>> sims(n);
    for (int64_t i = 0; i < n; ++i) {
      const S* row = train_norm.data() + i * d;
      double dot = 0;
      for (int64_t j = 0; j < d; ++j) dot += row[j] * q[j];
      sims[i] = {dot, i};
    }
    std::partial_sort(sims.begin(), sims.begin() + k, sims.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first ||
                               (a.first == b.first && a.second < b.second);
                      });
    std::map<int, int> votes;
    for (int i = 0; i < k; ++i) ++votes[train_labels[sims[i].second]];
    int best_votes = 0;
    for (const auto& [label, v] : votes) best_votes = std::max(best_votes, v);
    int winner = -1;
    for (int i = 0; i < k && winner < 0; ++i) {
      const int label = train_labels[sims[i].second];
      if (votes[label] == best_votes) winner = label;  // nearest tied class
    }
    hit[t] = winner == test_labels[t];
  });
  int64_t hits = 0;
  for (uint8_t h : hit) hits += h;
  return static_cast<double>(hits) / test_feats.size();
}

struct SlotFrequency {
  // index: slot; value: fraction of clips where that slot took the role
  std::vector<double> action_share;
  std::vector<double> scene_share;
};

inline SlotFrequency slot_assignment_frequency(
    const std::vector<SlotAssignment>& assigns, int num_slots) {
  SlotFrequency f;
  f.action_share.assign(num_slots, 0.0);
  f.scene_share.assign(num_slots, 0.0);
  if (assigns.empty()) return f;
  for (const SlotAssignment& a : assigns) {
    f.action_share[a.k_action] += 1.0;
    f.scene_share[a.k_scene] += 1.0;
  }
  for (int s = 0; s < num_slots; ++s) {
    f.action_share[s] /= assigns.size();
    f.scene_share[s] /= assigns.size();
  }
  return f;
}

// Top-2 principal components by power iteration on the feature covariance.
// Degenerate directions (vanishing variance) produce zero coordinates.
template <typename S>
std::vector<std::pair<double, double>> pca_coords(
    const std::vector<Tensor<S>>& features) {
  const int64_t n = static_cast<int64_t>(features.size());
  if (n < 3) throw UsageError("pca needs at least 3 samples");
  const int64_t d = features[0].numel();
  std::vector<double> centered(n * d);
  std::vector<double> mean(d, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mean[j] += features[i][j];
  for (int64_t j = 0; j < d; ++j) mean[j] /= n;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      centered[i * d + j] = features[i][j] - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < d; ++a) {
      const double va = centered[i * d + a];
      for (int64_t bcol = 0; bcol < d; ++bcol)
        cov[a * d + bcol] += va * centered[i * d + bcol];
    }

  auto power_iterate = [&](std::vector<double>& v) {
    Rng rng(0x9ca);
    for (double& x : v) x = rng.normal();
    double eig = 0;
    for (int it = 0; it < 200; ++it) {
      std::vector<double> w(d, 0.0);
      for (int64_t a = 0; a < d; ++a)
        for (int64_t bcol = 0; bcol < d; ++bcol)
          w[a] += cov[a * d + bcol] * v[bcol];
      double norm = 0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-12) return 0.0;
      for (int64_t a = 0; a < d; ++a) v[a] = w[a] / norm;
      eig = norm;
    }
    return eig;
  };

  std::vector<std::pair<double, double>> coords(n, {0.0, 0.0});
  std::vector<double> v1(d), v2(d);
  const double e1 = power_iterate(v1);
  if (e1 <= 1e-10) return coords;
  for (int64_t i = 0; i < n; ++i) {
    double x = 0;
    for (int64_t j = 0; j < d; ++j) x += centered[i * d + j] * v1[j];
    coords[i].first = x;
  }
  // deflate and repeat for the second component
  for (int64_t a = 0; a < d; ++a)
    for (int64_t bcol = 0; bcol < d; ++bcol)
      cov[a * d + bcol] -= e1 * v1[a] * v1[bcol];
  const double e2 = power_iterate(v2);
  if (e2 > 1e-10 && e2 > 1e-9 * e1)
    for (int64_t i = 0; i < n; ++i) {
      double y = 0;
      for (int64_t j = 0; j < d; ++j) y += centered[i * d + j] * v2[j];
      coords[i].second = y;
    }
  return coords;
}

template <typename S>
void pca_scatter_export(const std::vector<Tensor<S>>& features,
                        const std::vector<std::string>& tasks,
                        const std::vector<int>& labels,
                        const std::string& path) {
  if (features.size() != tasks.size() || features.size() != labels.size())
    throw UsageError("pca export: column length mismatch");
  auto coords = pca_coords(features);
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "x,y,task,label\n";
  os.precision(9);
  for (size_t i = 0; i < coords.size(); ++i)
    os << coords[i].first << "," << coords[i].second << "," << tasks[i] << ","
       << labels[i] << "\n";
}

// 8-bit binary PGM, values scaled from [0,1]
template <typename S>
void write_pgm(const std::string& path, const Tensor<S>& img) {
  if (img.rank() != 2) throw UsageError("pgm export expects a rank-2 tensor");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (int64_t i = 0; i < img.numel(); ++i) {
    const double v = std::min(1.0, std::max(0.0, static_cast<double>(img[i])));
    os.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

}  // namespace devias

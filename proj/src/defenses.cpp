#include "dflsim/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

constexpr int kKMeansRestarts = 20;
constexpr int kKMeansMaxIterations = 200;
constexpr double kKMeansTolerance = 1e-9;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 0) return 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return v[n / 2];
}

struct LloydResult {
  Eigen::Vector2d c[2];
  std::vector<int> assignment;
  double sse = std::numeric_limits<double>::infinity();
};

LloydResult lloyd_from(const Eigen::MatrixXd& points, Eigen::Vector2d c0, Eigen::Vector2d c1) {
  const Eigen::Index n = points.rows();
  LloydResult r;
  r.c[0] = c0;
  r.c[1] = c1;
  r.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < kKMeansMaxIterations; ++iter) {
    // Assignment; ties toward centroid a.
    for (Eigen::Index i = 0; i < n; ++i) {
      const double da = (points.row(i).transpose() - r.c[0]).squaredNorm();
      const double db = (points.row(i).transpose() - r.c[1]).squaredNorm();
      r.assignment[static_cast<std::size_t>(i)] = db < da ? 1 : 0;
    }
    // Update; an empty cluster keeps its centroid.
    double move = 0.0;
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d sum = Eigen::Vector2d::Zero();
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (r.assignment[static_cast<std::size_t>(i)] == k) {
          sum += points.row(i).transpose();
          ++count;
        }
      }
      if (count > 0) {
        const Eigen::Vector2d next = sum / static_cast<double>(count);
        move = std::max(move, (next - r.c[k]).norm());
        r.c[k] = next;
      }
    }
    if (move < kKMeansTolerance) break;
  }
  r.sse = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    r.sse += (points.row(i).transpose() - r.c[r.assignment[static_cast<std::size_t>(i)]])
                 .squaredNorm();
  return r;
}

Eigen::MatrixXd defense_features(const NodeDataset& d, const ClusterDefenseSpec& spec) {
  const Eigen::Index n = static_cast<Eigen::Index>(d.train.size());
  if (spec.feature_mode == FeatureMode::kAll22) {
    Eigen::MatrixXd x(n, kFeatureCount);
    for (Eigen::Index i = 0; i < n; ++i)
      x.row(i) = d.train[static_cast<std::size_t>(i)].features.transpose();
    return x;
  }
  const auto& groups = spec.feature_groups;
  if (groups.empty()) throw std::invalid_argument("reduced feature mode needs feature groups");
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(groups.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = d.train[static_cast<std::size_t>(i)].features;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].empty()) throw std::invalid_argument("empty feature group");
      double sum = 0.0;
      for (const int idx : groups[g]) {
        if (idx < 0 || idx >= kFeatureCount)
          throw std::invalid_argument("feature group index out of range");
        sum += f[idx];
      }
      x(i, static_cast<Eigen::Index>(g)) = sum / static_cast<double>(groups[g].size());
    }
  }
  return x;
}

}  // namespace

std::vector<std::vector<int>> default_feature_groups() {
  return {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {9, 10, 11}, {12, 13}, {14, 15}};
}

Pca2d pca_2d(const Eigen::MatrixXd& vectors) {
  const Eigen::Index n = vectors.rows();
  const Eigen::Index f = vectors.cols();
  if (n < 3) throw std::invalid_argument("pca_2d: need at least 3 vectors");
  if (f < 2) throw std::invalid_argument("pca_2d: need at least 2 features");

  Pca2d result;
  result.mean = vectors.colwise().mean();
  const Eigen::MatrixXd centered = vectors.rowwise() - result.mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_2d: eigensolver failed");
  // Eigenvalues come in ascending order.
  const double top = solver.eigenvalues()[f - 1];
  const double scale = std::max(1.0, std::abs(cov.trace()));
  if (top <= scale * 1e-14) throw std::runtime_error("pca_2d: degenerate covariance");

  result.basis.resize(f, 2);
  result.eigenvalues << solver.eigenvalues()[f - 1], solver.eigenvalues()[f - 2];
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd dir = solver.eigenvectors().col(f - 1 - k);
    Eigen::Index max_idx = 0;
    dir.cwiseAbs().maxCoeff(&max_idx);
    if (dir[max_idx] < 0.0) dir = -dir;
    result.basis.col(k) = dir;
  }
  result.projected = centered * result.basis;
  return result;
}

KMeans2 kmeans_2(const Eigen::MatrixXd& points, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw std::invalid_argument("kmeans_2: need at least 2 points");
  if (points.cols() != 2) throw std::invalid_argument("kmeans_2: points must be 2-D");

  bool all_identical = true;
  for (Eigen::Index i = 1; i < n && all_identical; ++i)
    all_identical = points.row(i) == points.row(0);
  if (all_identical) throw std::runtime_error("kmeans_2: all points identical");

  // Small inputs are solved exactly by enumerating every 2-partition, so
  // tiny instances always land on the global SSE optimum.
  if (n <= 16) {
    double best_sse = std::numeric_limits<double>::infinity();
    unsigned best_mask = 1;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
      Eigen::Vector2d sum[2] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
      int count[2] = {0, 0};
      for (Eigen::Index i = 0; i < n; ++i) {
        const int k = (mask >> i) & 1u;
        sum[k] += points.row(i).transpose();
        ++count[k];
      }
      double sse = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int k = (mask >> i) & 1u;
        sse += (points.row(i).transpose() - sum[k] / count[k]).squaredNorm();
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_mask = mask;
      }
    }
    KMeans2 km;
    Eigen::Vector2d sum[2] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
    int count[2] = {0, 0};
    km.assignment.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = (best_mask >> i) & 1u;
      km.assignment[static_cast<std::size_t>(i)] = k;
      sum[k] += points.row(i).transpose();
      ++count[k];
    }
    km.centroid_a = sum[0] / count[0];
    km.centroid_b = sum[1] / count[1];
    return km;
  }

  LloydResult best;
  for (int restart = 0; restart < kKMeansRestarts; ++restart) {
    Rng rng(derive_seed(seed, "kmeans-restart", static_cast<std::uint64_t>(restart)));
    const Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    const Eigen::Vector2d c0 = points.row(first).transpose();
    // k-means++ second seed: probability proportional to squared distance.
    Eigen::VectorXd weights(n);
    for (Eigen::Index i = 0; i < n; ++i)
      weights[i] = (points.row(i).transpose() - c0).squaredNorm();
    const double total = weights.sum();
    Eigen::Index second = first;
    double pick = rng.uniform() * total;
    for (Eigen::Index i = 0; i < n; ++i) {
      pick -= weights[i];
      if (pick <= 0.0) {
        second = i;
        break;
      }
    }
    if (weights[second] == 0.0) {
      // Landed on a duplicate of c0; take the furthest point instead.
      weights.maxCoeff(&second);
    }
    const LloydResult r = lloyd_from(points, c0, points.row(second).transpose());
    if (r.sse < best.sse) best = r;
  }

  KMeans2 km;
  km.centroid_a = best.c[0];
  km.centroid_b = best.c[1];
  km.assignment = std::move(best.assignment);
  return km;
}

LabeledCentroids label_centroids(const KMeans2& clusters, const std::vector<Label>& current,
                                 const std::vector<Label>* prior) {
  const std::vector<Label>& labels = prior != nullptr ? *prior : current;
  if (labels.size() != clusters.assignment.size())
    throw std::invalid_argument("label_centroids: label count mismatch");

  std::size_t size[2] = {0, 0};
  std::size_t malicious[2] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = clusters.assignment[i];
    ++size[k];
    if (labels[i] == Label::kMalicious) ++malicious[k];
  }
  const double frac_a = size[0] > 0 ? static_cast<double>(malicious[0]) / static_cast<double>(size[0]) : 0.0;
  const double frac_b = size[1] > 0 ? static_cast<double>(malicious[1]) / static_cast<double>(size[1]) : 0.0;

  int m_cluster;
  if (frac_a != frac_b) {
    m_cluster = frac_a > frac_b ? 0 : 1;
  } else {
    // Tie: poisoning shrinks the observed M class, so the smaller cluster
    // is taken as malicious.
    m_cluster = size[0] <= size[1] ? 0 : 1;
  }
  LabeledCentroids out;
  out.m_center = m_cluster == 0 ? clusters.centroid_a : clusters.centroid_b;
  out.b_center = m_cluster == 0 ? clusters.centroid_b : clusters.centroid_a;
  return out;
}

std::vector<int> detect_poisoned(const Eigen::MatrixXd& points, const std::vector<Label>& labels,
                                 const Eigen::Vector2d& m_center, const Eigen::Vector2d& b_center,
                                 double beta) {
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw std::invalid_argument("detect_poisoned: label count mismatch");
  const double centroid_distance = (m_center - b_center).norm();
  if (centroid_distance == 0.0) throw std::runtime_error("detect_poisoned: coincident centroids");

  const double radius = beta * centroid_distance / 2.0;
  std::vector<int> flagged;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (labels[static_cast<std::size_t>(i)] != Label::kBenign) continue;
    if ((points.row(i).transpose() - m_center).norm() <= radius)
      flagged.push_back(static_cast<int>(i));
  }
  return flagged;
}

std::vector<ClusterModel> fit_cluster_models(const std::vector<NodeDataset>& datasets,
                                             const ClusterDefenseSpec& spec,
                                             const PoisonRecord* prior_record) {
  std::vector<ClusterModel> models;
  for (const auto& d : datasets) {
    if (d.train.size() < 3) continue;

    ClusterModel cm;
    cm.node_id = d.node_id;
    cm.labels.reserve(d.train.size());
    cm.sample_ids.reserve(d.train.size());
    for (const auto& s : d.train) {
      cm.labels.push_back(s.label);
      cm.sample_ids.push_back(s.sample_id);
    }

    const Eigen::MatrixXd x = defense_features(d, spec);
    const Pca2d pca = pca_2d(x);
    cm.points = pca.projected;
    const KMeans2 km =
        kmeans_2(cm.points, derive_seed(spec.seed, "kmeans", static_cast<std::uint64_t>(d.node_id)));

    std::optional<std::vector<Label>> prior;
    if (spec.prior_knowledge && prior_record != nullptr) {
      prior.emplace();
      prior->reserve(d.train.size());
      for (const auto& s : d.train)
        prior->push_back(prior_record->original_label(d.node_id, s.sample_id, s.label));
    }
    const LabeledCentroids centers =
        label_centroids(km, cm.labels, prior ? &*prior : nullptr);
    cm.m_center = centers.m_center;
    cm.b_center = centers.b_center;
    models.push_back(std::move(cm));
  }
  return models;
}

std::vector<NodeFlags> flags_at_beta(const std::vector<ClusterModel>& models, double beta) {
  std::vector<NodeFlags> flags;
  flags.reserve(models.size());
  for (const auto& cm : models) {
    NodeFlags nf;
    nf.node_id = cm.node_id;
    for (const int idx : detect_poisoned(cm.points, cm.labels, cm.m_center, cm.b_center, beta))
      nf.flagged.push_back(cm.sample_ids[static_cast<std::size_t>(idx)]);
    std::sort(nf.flagged.begin(), nf.flagged.end());
    flags.push_back(std::move(nf));
  }
  return flags;
}

std::vector<NodeFlags> cluster_detect(const std::vector<NodeDataset>& datasets,
                                      const ClusterDefenseSpec& spec,
                                      const PoisonRecord* prior_record) {
  return flags_at_beta(fit_cluster_models(datasets, spec, prior_record), spec.beta);
}

std::vector<NodeDataset> sanitize(const std::vector<NodeDataset>& datasets,
                                  const std::vector<NodeFlags>& flags, SanitizeAction action) {
  std::vector<NodeDataset> out = datasets;
  for (const auto& nf : flags) {
    if (nf.flagged.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const NodeDataset& d) { return d.node_id == nf.node_id; });
    if (it == out.end())
      throw std::invalid_argument("sanitize: unknown node " + std::to_string(nf.node_id));
    const std::set<std::int64_t> ids(nf.flagged.begin(), nf.flagged.end());
    if (action == SanitizeAction::kRemove) {
      std::erase_if(it->train, [&](const Sample& s) { return ids.count(s.sample_id) > 0; });
    } else {
      for (auto& s : it->train)
        if (ids.count(s.sample_id) > 0) s.label = Label::kMalicious;
    }
  }
  return out;
}

Eigen::VectorXd mad_scores(const Eigen::VectorXd& values, double consistency_constant) {
  if (values.size() == 0) throw std::invalid_argument("mad_scores: empty input");
  std::vector<double> v(values.data(), values.data() + values.size());
  const double med = median_of(v);
  for (auto& x : v) x = std::abs(x - med);
  const double mad = median_of(v);

  Eigen::VectorXd scores(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double dev = std::abs(values[i] - med);
    if (mad > 0.0) {
      scores[i] = consistency_constant * dev / mad;
    } else {
      scores[i] = dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
  }
  return scores;
}

std::vector<NodeFlags> mad_detect(const std::vector<NodeDataset>& datasets,
                                  const MadDefenseSpec& spec) {
  if (spec.threshold <= 0.0) throw std::invalid_argument("mad threshold must be positive");
  if (spec.consistency_constant <= 0.0)
    throw std::invalid_argument("mad consistency constant must be positive");

  std::vector<NodeFlags> flags;
  for (const auto& d : datasets) {
    if (d.train.size() < 2) continue;
    NodeFlags nf;
    nf.node_id = d.node_id;
    std::set<std::int64_t> flagged;
    for (const int feature : spec.monitored_features) {
      if (feature < 0 || feature >= kFeatureCount)
        throw std::invalid_argument("mad_detect: monitored feature out of range");
      Eigen::VectorXd values(static_cast<Eigen::Index>(d.train.size()));
      for (Eigen::Index i = 0; i < values.size(); ++i)
        values[i] = d.train[static_cast<std::size_t>(i)].features[feature];
      const Eigen::VectorXd scores = mad_scores(values, spec.consistency_constant);
      for (Eigen::Index i = 0; i < scores.size(); ++i)
        if (scores[i] > spec.threshold)
          flagged.insert(d.train[static_cast<std::size_t>(i)].sample_id);
    }
    nf.flagged.assign(flagged.begin(), flagged.end());
    flags.push_back(std::move(nf));
  }
  return flags;
}

std::vector<CurvePoint> tp_fn_curve(
    const std::vector<std::pair<double, std::vector<NodeFlags>>>& flags_per_beta,
    const PoisonRecord& record, const std::vector<NodeDataset>& datasets) {
  if (record.empty()) throw std::runtime_error("tp_fn_curve: no ground truth");
  std::vector<CurvePoint> curve;
  curve.reserve(flags_per_beta.size());
  for (const auto& [beta, flags] : flags_per_beta) {
    DetectionReport report = build_detection_report(flags, record, datasets);
    curve.push_back({beta, report.tp_rate, report.fn_rate});
  }
  return curve;
}

DetectionReport build_detection_report(std::vector<NodeFlags> flags, const PoisonRecord& record,
                                       const std::vector<NodeDataset>& datasets) {
  DetectionReport report;
  report.flags = std::move(flags);

  std::size_t attacked = 0, clean_benign = 0, flagged_attacked = 0, flagged_clean_benign = 0;
  for (const auto& d : datasets) {
    const NodeFlags* nf = nullptr;
    for (const auto& f : report.flags)
      if (f.node_id == d.node_id) nf = &f;
    for (const auto& s : d.train) {
      report.total_samples += 1;
      const bool is_attacked = record.is_attacked(d.node_id, s.sample_id);
      const bool is_clean_benign = !is_attacked && s.label == Label::kBenign;
      const bool is_flagged =
          nf != nullptr &&
          std::binary_search(nf->flagged.begin(), nf->flagged.end(), s.sample_id);
      if (is_attacked) {
        ++attacked;
        if (is_flagged) ++flagged_attacked;
      }
      if (is_clean_benign) {
        ++clean_benign;
        if (is_flagged) ++flagged_clean_benign;
      }
      if (is_flagged) ++report.flagged_count;
    }
  }
  report.attacked_count = attacked;
  report.tp_rate = attacked > 0 ? static_cast<double>(flagged_attacked) / static_cast<double>(attacked) : 0.0;
  report.fn_rate =
      clean_benign > 0 ? static_cast<double>(flagged_clean_benign) / static_cast<double>(clean_benign) : 0.0;
  return report;
}

}  // namespace dflsim

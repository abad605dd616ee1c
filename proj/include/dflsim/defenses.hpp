#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dflsim/attacks.hpp"
#include "dflsim/sample.hpp"

namespace dflsim {

enum class FeatureMode { kAll22, kReduced6 };
enum class SanitizeAction { kRemove, kFlip };

// Six contiguous blocks over the first 16 features.
std::vector<std::vector<int>> default_feature_groups();

struct ClusterDefenseSpec {
  FeatureMode feature_mode = FeatureMode::kAll22;
  bool prior_knowledge = true;
  double beta = 1.0;  // boundary factor in [0.5, 1.5]
  SanitizeAction action = SanitizeAction::kRemove;
  std::uint64_t seed = 0;
  // Used by kReduced6: each group is averaged into one derived feature.
  std::vector<std::vector<int>> feature_groups = default_feature_groups();
};

struct MadDefenseSpec {
  double threshold = 2.0;
  double consistency_constant = 1.4826;
  std::vector<int> monitored_features{kPos1Index, kPos2Index};
};

struct Pca2d {
  Eigen::MatrixXd projected;          // n x 2
  Eigen::Matrix<double, Eigen::Dynamic, 2> basis;  // F x 2, columns are directions
  Eigen::VectorXd mean;               // F
  Eigen::Vector2d eigenvalues;        // descending
};

// Mean-centered projection onto the top-2 principal directions of the
// sample covariance. The largest-magnitude entry of each direction is
// made positive so results are sign-deterministic.
Pca2d pca_2d(const Eigen::MatrixXd& vectors);

struct KMeans2 {
  Eigen::Vector2d centroid_a;
  Eigen::Vector2d centroid_b;
  std::vector<int> assignment;  // 0 = a, 1 = b; distance ties go to a
};

// Seeded k-means++ with Lloyd iterations; the best of a fixed number of
// restarts by within-cluster SSE is returned. Instances of at most 16
// points are solved exactly by assignment enumeration.
KMeans2 kmeans_2(const Eigen::MatrixXd& points, std::uint64_t seed);

struct LabeledCentroids {
  Eigen::Vector2d m_center;
  Eigen::Vector2d b_center;
};

// Majority label per cluster (pre-attack labels when prior is given);
// ties assign M to the smaller cluster.
LabeledCentroids label_centroids(const KMeans2& clusters, const std::vector<Label>& current,
                                 const std::vector<Label>* prior);

// Flags B-labeled points within radius beta * ||M_center - B_center|| / 2
// of M_center. Returns point indices.
std::vector<int> detect_poisoned(const Eigen::MatrixXd& points, const std::vector<Label>& labels,
                                 const Eigen::Vector2d& m_center, const Eigen::Vector2d& b_center,
                                 double beta);

struct NodeFlags {
  int node_id = 0;
  std::vector<std::int64_t> flagged;  // sample ids, ascending
};

// Per-node PCA + k-means fitted once so that a beta sweep reuses the same
// clustering.
struct ClusterModel {
  int node_id = 0;
  Eigen::MatrixXd points;  // n x 2
  std::vector<Label> labels;
  std::vector<std::int64_t> sample_ids;
  Eigen::Vector2d m_center;
  Eigen::Vector2d b_center;
};

std::vector<ClusterModel> fit_cluster_models(const std::vector<NodeDataset>& datasets,
                                             const ClusterDefenseSpec& spec,
                                             const PoisonRecord* prior_record);

std::vector<NodeFlags> flags_at_beta(const std::vector<ClusterModel>& models, double beta);

std::vector<NodeFlags> cluster_detect(const std::vector<NodeDataset>& datasets,
                                      const ClusterDefenseSpec& spec,
                                      const PoisonRecord* prior_record);

// Remove deletes flagged train samples; Flip relabels them M. Test sets
// are never touched.
std::vector<NodeDataset> sanitize(const std::vector<NodeDataset>& datasets,
                                  const std::vector<NodeFlags>& flags, SanitizeAction action);

// Normalized anomaly indices c * |x - median| / MAD. When MAD is zero the
// index is 0 at the median and +infinity elsewhere.
Eigen::VectorXd mad_scores(const Eigen::VectorXd& values, double consistency_constant);

// Flags a train sample when its index exceeds the threshold on any
// monitored feature.
std::vector<NodeFlags> mad_detect(const std::vector<NodeDataset>& datasets,
                                  const MadDefenseSpec& spec);

struct CurvePoint {
  double beta = 0.0;
  double tp = 0.0;  // flagged & attacked / attacked
  double fn = 0.0;  // flagged & clean-benign / clean-benign
};

std::vector<CurvePoint> tp_fn_curve(
    const std::vector<std::pair<double, std::vector<NodeFlags>>>& flags_per_beta,
    const PoisonRecord& record, const std::vector<NodeDataset>& datasets);

// Pooled detection quality of one flag set against the ground truth.
struct DetectionReport {
  std::vector<NodeFlags> flags;
  double tp_rate = 0.0;
  double fn_rate = 0.0;
  std::size_t flagged_count = 0;
  std::size_t attacked_count = 0;
  std::size_t total_samples = 0;
};

DetectionReport build_detection_report(std::vector<NodeFlags> flags, const PoisonRecord& record,
                                       const std::vector<NodeDataset>& datasets);

}  // namespace dflsim

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dflsim/sample.hpp"

namespace dflsim {

// Desk-scale stand-in for the full vehicular dataset: a fixed fraction of
// nodes carries data, class means differ by `class_separation` along a
// random direction of the non-position features, positions are uniform
// over the square simulation area.
struct SyntheticConfig {
  int node_count = 20;
  int with_data_count = 18;
  int samples_per_node = 400;
  double malicious_fraction = 0.3;
  double area_size = 4000.0;   // meters, square side
  double class_separation = 3.5;
  double test_fraction = 0.25;
  // 0: positions are uniform over the whole area. Positive: each node's
  // samples cluster around a node anchor with this standard deviation,
  // mirroring the local reception footprint of a vehicle.
  double position_cluster_std = 0.0;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Per-node affine feature transform recorded by standardize(). Constant
// features are passed through untouched (mean 0, scale 1).
struct Standardizer {
  int node_id = 0;
  Eigen::VectorXd mean;   // size kFeatureCount
  Eigen::VectorXd scale;  // size kFeatureCount, strictly positive

  double to_standardized(int feature, double raw) const {
    return (raw - mean[feature]) / scale[feature];
  }
  double to_raw(int feature, double z) const { return z * scale[feature] + mean[feature]; }
};

struct StandardizeResult {
  std::vector<NodeDataset> datasets;
  std::vector<Standardizer> params;  // aligned with datasets
};

// Column mapping for an external CSV file. Label values are matched as
// exact strings.
struct CsvSchema {
  std::string node_column;
  std::string label_column;
  std::string sample_id_column;  // empty: row index is used
  std::string malicious_value = "M";
  std::string benign_value = "B";
  std::vector<std::string> feature_columns;  // exactly kFeatureCount entries
};

CsvSchema canonical_schema();
CsvSchema load_schema(const std::filesystem::path& path);

std::vector<NodeDataset> generate_synthetic(const SyntheticConfig& cfg);

// Rows land in each node's train list; apply_split distributes them.
std::vector<NodeDataset> load_veremi_csv(const std::filesystem::path& path,
                                         const CsvSchema& schema);

void save_canonical_csv(const std::vector<NodeDataset>& datasets,
                        const std::filesystem::path& path);

// Seeded stratified split; every label with at least two samples appears
// on both sides.
SplitResult split_train_test(const std::vector<Sample>& samples, double test_fraction,
                             std::uint64_t seed);

std::vector<NodeDataset> apply_split(const std::vector<NodeDataset>& datasets,
                                     double test_fraction, std::uint64_t seed);

// Per-node z-scoring from train-set statistics, applied to train and test.
// Errors if any dataset is already standardized.
StandardizeResult standardize(const std::vector<NodeDataset>& datasets);

void save_standardizers_json(const std::vector<Standardizer>& params,
                             const std::filesystem::path& path);

const Standardizer& standardizer_for(const std::vector<Standardizer>& params, int node_id);

}  // namespace dflsim

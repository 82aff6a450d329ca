#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "procsim/dataset.hpp"
#include "procsim/taxonomy.hpp"

namespace procsim {

/// Hierarchical Gaussian clusters: superclass centers around the origin,
/// class centers around their superclass, samples around their class.
struct SynthSpec {
  int superclass_count = 5;
  int classes_per_superclass = 4;
  int samples_per_class = 50;
  int feature_dim = 32;
  double superclass_spread = 10.0;
  double class_spread = 3.0;
  double noise_std = 1.0;
  // Classes per superclass assigned to the training split; the rest are
  // held out so train and test classes are disjoint.
  int train_classes_per_superclass = 2;
  // Fresh samples of the training classes, never used for training.
  int heldout_samples_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  FeatureDataset all;
  FeatureDataset train;
  FeatureDataset test;     // held-out classes
  FeatureDataset heldout;  // unseen samples of the training classes
  Taxonomy taxonomy{"root"};
  // Row c is the center of class c; doubles as the class-embedding table.
  Eigen::MatrixXd semantic_table;
  std::vector<std::string> class_names;
  std::set<std::int64_t> train_classes;
};

/// Training classes receive ids 0..T-1 and held-out classes T..C-1.
SynthData generate(const SynthSpec& spec);

}  // namespace procsim

#include "procsim/synth.hpp"

#include <cstdio>
#include <random>

#include "procsim/errors.hpp"

namespace procsim {

void SynthSpec::validate() const {
  if (superclass_count < 1 || classes_per_superclass < 1 || samples_per_class < 1 || feature_dim < 1) {
    throw ConfigError("synth: counts and dimension must be positive");
  }
  if (!(noise_std > 0.0) || !(class_spread > noise_std) || !(superclass_spread > class_spread)) {
    throw ConfigError("synth: spreads must satisfy superclass_spread > class_spread > noise_std > 0");
  }
  if (train_classes_per_superclass < 0 || train_classes_per_superclass > classes_per_superclass) {
    throw ConfigError("synth: train_classes_per_superclass out of range");
  }
  if (heldout_samples_per_class < 0) throw ConfigError("synth: heldout_samples_per_class must be nonnegative");
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](double scale) {
    Eigen::VectorXd v(spec.feature_dim);
    for (int d = 0; d < spec.feature_dim; ++d) v(d) = scale * normal(rng);
    return v;
  };

  const int total_classes = spec.superclass_count * spec.classes_per_superclass;
  const int train_total = spec.superclass_count * spec.train_classes_per_superclass;

  // Class id for (superclass s, slot j): training slots first.
  auto class_id = [&](int s, int j) {
    if (j < spec.train_classes_per_superclass) return s * spec.train_classes_per_superclass + j;
    const int held = spec.classes_per_superclass - spec.train_classes_per_superclass;
    return train_total + s * held + (j - spec.train_classes_per_superclass);
  };

  SynthData out;
  out.semantic_table.resize(total_classes, spec.feature_dim);
  out.class_names.resize(static_cast<std::size_t>(total_classes));
  for (int s = 0; s < spec.superclass_count; ++s) {
    const Eigen::VectorXd super_center = draw(spec.superclass_spread);
    const std::size_t super_node = out.taxonomy.add_child(0, "super" + std::to_string(s));
    for (int j = 0; j < spec.classes_per_superclass; ++j) {
      const int c = class_id(s, j);
      out.semantic_table.row(c) = (super_center + draw(spec.class_spread)).transpose();
      out.class_names[static_cast<std::size_t>(c)] = "super" + std::to_string(s) + "_class" + std::to_string(j);
      out.taxonomy.add_child(super_node, out.class_names[static_cast<std::size_t>(c)], c);
      if (j < spec.train_classes_per_superclass) out.train_classes.insert(c);
    }
  }

  FeatureDataset& all = out.all;
  const auto n = static_cast<Eigen::Index>(total_classes) * spec.samples_per_class;
  all.features.resize(n, spec.feature_dim);
  Eigen::Index row = 0;
  std::vector<std::size_t> train_rows, test_rows;
  for (int c = 0; c < total_classes; ++c) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "c%03d_%05d", c, i);
      all.ids.emplace_back(id);
      all.features.row(row) = out.semantic_table.row(c) + draw(spec.noise_std).transpose();
      all.clean_labels.push_back(c);
      all.observed_labels.push_back(c);
      (out.train_classes.count(c) ? train_rows : test_rows).push_back(static_cast<std::size_t>(row));
      ++row;
    }
  }
  out.train = all.subset(train_rows);
  out.test = all.subset(test_rows);

  // Drawn last so the splits above do not depend on this count.
  FeatureDataset& held = out.heldout;
  held.features.resize(static_cast<Eigen::Index>(train_total) * spec.heldout_samples_per_class, spec.feature_dim);
  row = 0;
  for (int c = 0; c < train_total; ++c) {
    for (int i = 0; i < spec.heldout_samples_per_class; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "h%03d_%05d", c, i);
      held.ids.emplace_back(id);
      held.features.row(row++) = out.semantic_table.row(c) + draw(spec.noise_std).transpose();
      held.clean_labels.push_back(c);
      held.observed_labels.push_back(c);
    }
  }
  return out;
}

}  // namespace procsim

#include <doctest.h>

#include <Eigen/Dense>

#include "procsim/errors.hpp"
#include "procsim/synth.hpp"
#include "support.hpp"

using namespace procsim;

TEST_SUITE("synth") {

TEST_CASE("small generator counts") {
  SynthSpec spec;
  spec.superclass_count = 2;
  spec.classes_per_superclass = 2;
  spec.samples_per_class = 10;
  spec.feature_dim = 8;
  spec.train_classes_per_superclass = 1;
  spec.heldout_samples_per_class = 3;
  const auto d = generate(spec);
  CHECK(d.all.size() == 40);
  CHECK(d.all.feature_dim() == 8);
  CHECK(d.train.size() == 20);
  CHECK(d.test.size() == 20);
  CHECK(d.heldout.size() == 6);
  CHECK(d.taxonomy.classes().size() == 4);
  std::size_t branching = 0;
  for (std::size_t i = 0; i < d.taxonomy.node_count(); ++i) {
    branching += d.taxonomy.node(i).children.size() >= 2;
  }
  CHECK(branching == 3);  // the root and both superclasses
  CHECK(d.semantic_table.rows() == 4);
  CHECK(d.train_classes == std::set<std::int64_t>{0, 1});
  for (auto y : d.test.clean_labels) CHECK(y >= 2);
  for (auto y : d.heldout.clean_labels) CHECK(y < 2);
  CHECK(semantic_candidates(d.taxonomy, 0).size() == 1);
}

TEST_CASE("vanishing noise collapses each class") {
  SynthSpec spec;
  spec.noise_std = 1e-9;
  spec.samples_per_class = 5;
  const auto d = generate(spec);
  for (std::size_t i = 0; i < d.all.size(); ++i) {
    for (std::size_t j = i + 1; j < d.all.size(); ++j) {
      if (d.all.clean_labels[i] != d.all.clean_labels[j]) continue;
      const Eigen::RowVectorXd a = d.all.features.row(i).normalized();
      const Eigen::RowVectorXd b = d.all.features.row(j).normalized();
      CHECK(a.dot(b) > 1.0 - 1e-12);
    }
  }
}

TEST_CASE("default generator output is linearly separable") {
  const auto d = generate(SynthSpec{});
  const Eigen::Index n = static_cast<Eigen::Index>(d.all.size());
  const Eigen::Index c = static_cast<Eigen::Index>(d.all.class_count());
  // Least-squares one-vs-rest on even rows, scored on odd rows.
  std::vector<Eigen::Index> fit, score;
  for (Eigen::Index i = 0; i < n; ++i) (i % 2 == 0 ? fit : score).push_back(i);
  auto design = [&](const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d.all.feature_dim() + 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) << d.all.features.row(rows[r]), 1.0;
    }
    return x;
  };
  const Eigen::MatrixXd x = design(fit);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(x.rows(), c);
  for (std::size_t r = 0; r < fit.size(); ++r) t(static_cast<Eigen::Index>(r), d.all.clean_labels[fit[r]]) = 1.0;
  const Eigen::MatrixXd w = x.colPivHouseholderQr().solve(t);
  const Eigen::MatrixXd pred = design(score) * w;
  int correct = 0;
  for (std::size_t r = 0; r < score.size(); ++r) {
    Eigen::Index arg;
    pred.row(static_cast<Eigen::Index>(r)).maxCoeff(&arg);
    correct += arg == d.all.clean_labels[score[r]];
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(score.size()) > 0.95);
}

TEST_CASE("distances follow the hierarchy") {
  const auto d = generate(SynthSpec{});
  auto super_of = [&](std::int64_t y) { return *d.taxonomy.node(d.taxonomy.leaf_of(y)).parent; };
  double within = 0, same_super = 0, cross = 0;
  long nw = 0, ns = 0, nc = 0;
  for (std::size_t i = 0; i < d.all.size(); i += 3) {
    for (std::size_t j = i + 1; j < d.all.size(); j += 3) {
      const double dist = (d.all.features.row(i) - d.all.features.row(j)).norm();
      const auto yi = d.all.clean_labels[i], yj = d.all.clean_labels[j];
      if (yi == yj) within += dist, ++nw;
      else if (super_of(yi) == super_of(yj)) same_super += dist, ++ns;
      else cross += dist, ++nc;
    }
  }
  CHECK(within / nw < same_super / ns);
  CHECK(same_super / ns < cross / nc);
}

TEST_CASE("same seed gives the same data") {
  SynthSpec spec;
  spec.seed = 42;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.all.features == b.all.features);
  CHECK(a.all.ids == b.all.ids);
  spec.seed = 43;
  CHECK(generate(spec).all.features != a.all.features);
}

TEST_CASE("generator settings are validated") {
  SynthSpec spec;
  spec.class_spread = 20.0;
  CHECK_THROWS_AS(generate(spec), ConfigError);
  spec = SynthSpec{};
  spec.train_classes_per_superclass = 5;
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

}  // TEST_SUITE

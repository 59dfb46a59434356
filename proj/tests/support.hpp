#ifndef CAPEVAL_TESTS_SUPPORT_HPP
#define CAPEVAL_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace testing_support {

inline Eigen::VectorXf random_unit(std::mt19937_64& gen, Eigen::Index dim) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(dim);
  for (auto& x : v) x = normal(gen);
  return (v / v.norm()).cast<float>();
}

/// Components drawn from |N(0,1)|: all pairwise cosines are positive, so
/// CLIPScore never hits its zero clamp.
inline Eigen::VectorXf random_positive_unit(std::mt19937_64& gen, Eigen::Index dim) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(dim);
  for (auto& x : v) x = std::abs(normal(gen));
  return (v / v.norm()).cast<float>();
}

/// Unit vector at angle acos(cos_target) from `anchor` (unit), inside the
/// plane spanned by anchor and a random direction.
inline Eigen::VectorXf with_cosine(std::mt19937_64& gen, const Eigen::VectorXf& anchor,
                                   double cos_target) {
  const Eigen::VectorXd a = anchor.cast<double>();
  Eigen::VectorXd r = random_unit(gen, anchor.size()).cast<double>();
  r -= a * a.dot(r);
  r.normalize();
  const double s = std::sqrt(std::max(0.0, 1.0 - cos_target * cos_target));
  return (cos_target * a + s * r).cast<float>();
}


struct SyntheticRatedData {
  Eigen::MatrixXd images;
  Eigen::MatrixXd texts;
  Eigen::VectorXd ratings;
};

/// Captions are noisy copies of their image seen through a fixed random
/// rotation, so the identity adapter starts badly aligned. Ratings are a
/// noisy increasing function of the cosine before rotation.
inline SyntheticRatedData synthetic_rated(std::uint64_t seed, Eigen::Index n, Eigen::Index dim) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (auto& x : g.reshaped()) x = normal(gen);
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  SyntheticRatedData out{Eigen::MatrixXd(n, dim), Eigen::MatrixXd(n, dim), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd v = random_unit(gen, dim).cast<double>();
    const double level = u(gen);
    Eigen::VectorXd noise(dim);
    for (auto& x : noise) x = normal(gen);
    Eigen::VectorXd c = v + 1.5 * level * noise / std::sqrt(static_cast<double>(dim));
    c.normalize();
    out.images.row(i) = v.transpose();
    out.texts.row(i) = (rotation * c).transpose();
    out.ratings[i] = 1.0 + 4.0 * v.dot(c) + 0.2 * normal(gen);
  }
  return out;
}

}  // namespace testing_support

#endif  // CAPEVAL_TESTS_SUPPORT_HPP

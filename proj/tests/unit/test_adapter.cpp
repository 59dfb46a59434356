#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "capeval/adapter.hpp"
#include "capeval/error.hpp"
#include "support.hpp"

using namespace capeval;
using testing_support::random_positive_unit;
using testing_support::random_unit;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c, double scale) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(r, c);
  for (auto& x : m.reshaped()) x = scale * normal(gen);
  return m;
}

AdapterState perturbed_state(std::mt19937_64& gen, Eigen::Index d) {
  AdapterState s = AdapterState::identity(static_cast<std::size_t>(d), 0.5);
  s.w_text += random_matrix(gen, d, d, 0.3);
  s.w_image += random_matrix(gen, d, d, 0.3);
  s.log_tau += std::uniform_real_distribution<double>(-0.5, 0.5)(gen);
  return s;
}

Eigen::MatrixXd unit_rows(std::mt19937_64& gen, Eigen::Index n, Eigen::Index d, bool positive) {
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.row(i) = (positive ? random_positive_unit(gen, d) : random_unit(gen, d)).cast<double>().transpose();
  }
  return m;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Central differences over every trainable parameter.
AdapterGradient numeric_gradient(const AdapterState& s, const std::function<double(const AdapterState&)>& f,
                                 double h = 1e-4) {
  AdapterGradient g = AdapterGradient::zero(s.dimension());
  auto probe = [&](double& param, double& out, AdapterState& t) {
    const double keep = param;
    param = keep + h;
    const double up = f(t);
    param = keep - h;
    const double down = f(t);
    param = keep;
    out = (up - down) / (2 * h);
  };
  AdapterState t = s;
  for (Eigen::Index i = 0; i < g.w_text.size(); ++i) probe(t.w_text.data()[i], g.w_text.data()[i], t);
  for (Eigen::Index i = 0; i < g.w_image.size(); ++i) probe(t.w_image.data()[i], g.w_image.data()[i], t);
  probe(t.log_tau, g.log_tau, t);
  return g;
}

void check_gradient(const AdapterGradient& analytic, const AdapterGradient& numeric) {
  CHECK(relative_error(analytic.w_text, numeric.w_text) <= 1e-4);
  CHECK(relative_error(analytic.w_image, numeric.w_image) <= 1e-4);
  CHECK(std::abs(analytic.log_tau - numeric.log_tau) <=
        1e-4 * std::max({std::abs(analytic.log_tau), std::abs(numeric.log_tau), 1e-12}) + 1e-10);
}

}  // namespace

TEST_SUITE("adapter") {
  TEST_CASE("infonce values") {
    const auto two = symmetric_infonce(Eigen::MatrixXd::Identity(2, 2), 1.0);
    CHECK(two.loss == doctest::Approx(0.31326168751822283).epsilon(1e-14));
    for (int n : {2, 5, 16}) {
      const auto uniform = symmetric_infonce(Eigen::MatrixXd::Constant(n, n, 0.3), 0.7);
      CHECK(uniform.loss == doctest::Approx(std::log(n)).epsilon(1e-14));
      CHECK(uniform.d_similarity.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-15);
    }
    CHECK_THROWS_AS(symmetric_infonce(Eigen::MatrixXd::Identity(1, 1), 1.0), UsageError);
  }

  TEST_CASE("infonce similarity gradient") {
    std::mt19937_64 gen(3);
    for (int round = 0; round < 5; ++round) {
      const Eigen::MatrixXd s = random_matrix(gen, 6, 6, 0.5);
      const double tau = 0.3 + 0.2 * round;
      const auto r = symmetric_infonce(s, tau);
      Eigen::MatrixXd fd(6, 6);
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        Eigen::MatrixXd up = s, down = s;
        up.data()[i] += 1e-5;
        down.data()[i] -= 1e-5;
        fd.data()[i] = (symmetric_infonce(up, tau).loss - symmetric_infonce(down, tau).loss) / 2e-5;
      }
      CHECK(relative_error(r.d_similarity, fd) <= 1e-6);
      const double dlt = (symmetric_infonce(s, tau * std::exp(1e-5)).loss -
                          symmetric_infonce(s, tau * std::exp(-1e-5)).loss) / 2e-5;
      CHECK(r.d_log_tau == doctest::Approx(dlt).epsilon(1e-6));
    }
  }

  TEST_CASE("contrastive gradient matches finite differences") {
    std::mt19937_64 gen(10);
    const Eigen::Index d = 6;
    for (int round = 0; round < 10; ++round) {
      const AdapterState s = perturbed_state(gen, d);
      const ContrastiveBatch batch{unit_rows(gen, 5, d, false), unit_rows(gen, 5, d, false)};
      const auto r = contrastive_loss(s, batch);
      check_gradient(r.grad, numeric_gradient(s, [&](const AdapterState& t) { return contrastive_loss(t, batch).loss; }));
    }
  }

  TEST_CASE("pearson gradient matches finite differences") {
    std::mt19937_64 gen(11);
    const Eigen::Index d = 6;
    for (bool raw : {false, true}) {
      for (int round = 0; round < 10; ++round) {
        AdapterState s = AdapterState::identity(d, 0.5);
        // small perturbations keep positive-orthant cosines away from the clamp
        s.w_text += random_matrix(gen, d, d, 0.05);
        s.w_image += random_matrix(gen, d, d, 0.05);
        const PearsonBatch batch{unit_rows(gen, 7, d, !raw), unit_rows(gen, 7, d, !raw),
                                 random_matrix(gen, 7, 1, 1.0)};
        const auto r = pearson_loss(s, batch, {}, raw);
        CHECK(r.grad.log_tau == 0.0);
        check_gradient(r.grad,
                       numeric_gradient(s, [&](const AdapterState& t) { return pearson_loss(t, batch, {}, raw).loss; }));
      }
    }
  }

  TEST_CASE("pearson loss endpoints") {
    std::mt19937_64 gen(5);
    const auto s = AdapterState::identity(3);
    const Eigen::MatrixXd images = Eigen::RowVector3d(1, 0, 0).replicate(4, 1);
    Eigen::MatrixXd texts(4, 3);
    const double c[4] = {0.8, 0.6, 0.4, 0.2};
    for (int i = 0; i < 4; ++i) texts.row(i) << c[i], std::sqrt(1 - c[i] * c[i]), 0;
    const Eigen::Vector4d up(4, 3, 2, 1);
    CHECK(pearson_loss(s, {images, texts, up}).loss == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(pearson_loss(s, {images, texts, -up}).loss == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(pearson_loss(s, {images, texts, Eigen::Vector4d::Constant(2)}), DegenerateBatch);
    CHECK_THROWS_AS(pearson_loss(s, {images, images, up}), DegenerateBatch);
    // clamped scores: all cosines negative makes x constant
    CHECK_THROWS_AS(pearson_loss(s, {images, -texts, up}), DegenerateBatch);
    CHECK_NOTHROW(pearson_loss(s, {images, -texts, up}, {}, true));
  }

  TEST_CASE("adapted cosine") {
    std::mt19937_64 gen(2);
    const Eigen::Index d = 8;
    const auto id = AdapterState::identity(d);
    const Eigen::VectorXf v = random_unit(gen, d), c = random_unit(gen, d);
    CHECK(adapted_cosine(id, v, c) == doctest::Approx(cosine(v, c)).epsilon(1e-12));

    AdapterState rot = id;
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(gen, d, d, 1)).householderQ();
    rot.w_text = q;
    rot.w_image = q;
    CHECK(adapted_cosine(rot, v, c) == doctest::Approx(cosine(v, c)).epsilon(1e-12));

    AdapterState m = id;
    m.w_text = random_matrix(gen, d, d, 1);
    m.w_image = random_matrix(gen, d, d, 1);
    const Eigen::VectorXd a = m.w_image * v.cast<double>(), b = m.w_text * c.cast<double>();
    CHECK(adapted_cosine(m, v, c) == doctest::Approx(a.dot(b) / a.norm() / b.norm()).epsilon(1e-12));
  }

  TEST_CASE("contrastive loss vanishes on separated batch") {
    auto s = AdapterState::identity(4, 0.01);
    const ContrastiveBatch batch{Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(4, 4)};
    CHECK(contrastive_loss(s, batch).loss < 1e-3);
  }

  TEST_CASE("loss mode parsing") {
    CHECK(parse_loss_mode("combined") == LossMode::combined);
    CHECK(parse_loss_mode("pearson") == LossMode::pearson_only);
    CHECK(parse_loss_mode("contrastive_only") == LossMode::contrastive_only);
    CHECK_THROWS_AS(parse_loss_mode("hinge"), UsageError);
  }

  TEST_CASE("training") {
    const auto data = testing_support::synthetic_rated(21, 120, 8);
    const ContrastiveBatch pairs{data.images, data.texts};
    const PearsonBatch rated{data.images, data.texts, data.ratings};
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    cfg.seed = 4;
    const auto init = AdapterState::identity(8, 0.1);
    const auto a = train(init, pairs, rated, cfg);
    const auto b = train(init, pairs, rated, cfg);
    CHECK(a.state.w_text == b.state.w_text);
    CHECK(a.state.w_image == b.state.w_image);
    CHECK(a.state.log_tau == b.state.log_tau);
    REQUIRE(a.epochs.size() == 6);
    // minibatch noise allows small rises between late epochs
    CHECK(a.epochs.back().mean_contrastive < 0.5 * a.epochs.front().mean_contrastive);
    CHECK(a.epochs.back().mean_pearson < a.epochs.front().mean_pearson);
    CHECK(a.state.step == static_cast<std::int64_t>(6 * 8));
    CHECK(a.curve.size() == 48);

    // permuting the instances leaves the result unchanged
    std::vector<Eigen::Index> perm(120);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    const Eigen::PermutationMatrix<Eigen::Dynamic> p(Eigen::Map<Eigen::VectorXi>(
        std::vector<int>(perm.begin(), perm.end()).data(), 120));
    const auto c = train(init, {p * data.images, p * data.texts}, {p * data.images, p * data.texts, p * data.ratings}, cfg);
    CHECK(c.state.w_text == a.state.w_text);
    CHECK(c.state.log_tau == a.state.log_tau);

    cfg.seed = 5;
    CHECK(train(init, pairs, rated, cfg).state.w_text != a.state.w_text);
  }

  TEST_CASE("training modes and limits") {
    const auto data = testing_support::synthetic_rated(22, 40, 4);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;  // 16 + 16 + tail of 8
    cfg.loss_mode = LossMode::contrastive_only;
    auto r = train(AdapterState::identity(4), {data.images, data.texts}, {}, cfg);
    CHECK(r.state.step == 3);
    CHECK(!r.curve[0].pearson);

    cfg.batch_size = 19;  // 19 + 19 + tail of 2: kept for contrastive, dropped for pearson
    cfg.loss_mode = LossMode::pearson_only;
    r = train(AdapterState::identity(4), {}, {data.images, data.texts, data.ratings}, cfg);
    CHECK(r.state.step == 2);

    // temperature is clamped
    cfg.loss_mode = LossMode::contrastive_only;
    cfg.learning_rate = 1e6;
    cfg.tau_min = 0.05;
    cfg.tau_max = 0.2;
    try {
      r = train(AdapterState::identity(4, 0.1), {data.images, data.texts}, {}, cfg);
      CHECK(r.state.tau() >= 0.05 - 1e-15);
      CHECK(r.state.tau() <= 0.2 + 1e-15);
    } catch (const NumericError&) {
      // divergence is also an acceptable outcome at this learning rate
    }

    // a rated set with constant ratings makes every pearson batch degenerate
    cfg = TrainConfig{};
    cfg.loss_mode = LossMode::pearson_only;
    CHECK_THROWS_AS(train(AdapterState::identity(4), {}, {data.images, data.texts, Eigen::VectorXd::Ones(40)}, cfg),
                    NumericError);
  }

  TEST_CASE("export") {
    std::mt19937_64 gen(6);
    EmbeddingStore images(5), texts(5);
    for (int i = 0; i < 10; ++i) {
      images.add("i" + std::to_string(i), random_unit(gen, 5), Modality::image);
      texts.add("t" + std::to_string(i), random_unit(gen, 5), Modality::text);
    }
    const auto id = AdapterState::identity(5);
    CHECK(export_adapted_store(id, images) == images);
    CHECK(export_adapted_store(id, texts) == texts);

    AdapterState m = perturbed_state(gen, 5);
    const auto ai = export_adapted_store(m, images), at = export_adapted_store(m, texts);
    for (const auto& r : ai) CHECK(r.vector.cast<double>().norm() == doctest::Approx(1.0).epsilon(1e-6));
    for (int i = 0; i < 10; ++i) {
      const auto k = std::to_string(i);
      CHECK(cosine(ai.at("i" + k).vector, at.at("t" + k).vector) ==
            doctest::Approx(adapted_cosine(m, images.at("i" + k).vector, texts.at("t" + k).vector)).epsilon(1e-6));
    }
    CHECK_THROWS_AS(export_adapted_store(AdapterState::identity(4), images), UsageError);
  }

  TEST_CASE("checkpoint round trip") {
    std::mt19937_64 gen(7);
    AdapterState s = perturbed_state(gen, 6);
    s.step = 42;
    const auto path = std::filesystem::temp_directory_path() / "capeval_adapter_test.ckpt";
    save_checkpoint(s, path);
    const auto back = load_checkpoint(path);
    CHECK(back.w_text == s.w_text);
    CHECK(back.w_image == s.w_image);
    CHECK(back.tau() == doctest::Approx(s.tau()).epsilon(1e-15));
    CHECK(back.step == 42);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptionError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  TEST_CASE("loss curve csv") {
    const std::vector<LossPoint> curve{{0, 1.25, std::nullopt}, {1, std::nullopt, 0.5}, {2, 0.1, 0.2}};
    std::ostringstream out;
    write_loss_curve_csv(curve, out);
    CHECK(out.str() ==
          "step,loss_contrastive,loss_pearson\n0,1.250000000,\n1,,0.500000000\n2,0.100000000,0.200000000\n");
  }
}

#include "doctest.h"

#include "osda/gan.hpp"
#include "osda/negatives.hpp"
#include "support.hpp"

#include <fstream>
#include <set>

using namespace osda;

namespace {

DomainDataset probe_target(const std::vector<double>& unknown_probs) {
  Matrix x(static_cast<long>(unknown_probs.size()), 2);
  for (std::size_t i = 0; i < unknown_probs.size(); ++i) x.row(static_cast<long>(i)) = testing::probe_input(unknown_probs[i]);
  std::vector<std::string> labels(unknown_probs.size(), "u0");
  return DomainDataset("probe", DomainRole::Target, DataMode::Vector, x, labels);
}

std::set<long> indices(const NegativeSet& s) {
  std::set<long> out;
  for (const auto& it : s.items()) out.insert(it.sample_index);
  return out;
}

}  // namespace

TEST_CASE("extraction keeps strictly-above-threshold samples") {
  auto model = testing::probe_model();
  auto target = probe_target({0.95, 0.91, 0.89, 0.50});
  auto set = extract_negatives(*model, target.unlabeled(), 0.9, 17);
  CHECK(indices(set) == std::set<long>{0, 1});
  CHECK(set.source_iteration() == 17);
  CHECK(set.samples().row(1) == target.samples().row(1));
  for (const auto& it : set.items()) CHECK(it.unknown_confidence > 0.9);
}

TEST_CASE("a value exactly at the threshold is excluded") {
  auto model = testing::probe_model();
  auto target = probe_target({0.93, 0.97});
  const double exact = 1.0 - model->infer(target.samples())[0].known_prob;
  auto set = extract_negatives(*model, target.unlabeled(), exact);
  CHECK(indices(set) == std::set<long>{1});
}

TEST_CASE("empty target gives an empty set") {
  auto model = testing::probe_model();
  DomainDataset empty("e", DomainRole::Target, DataMode::Vector, Matrix(0, 2), {});
  auto set = extract_negatives(*model, empty.unlabeled());
  CHECK(set.empty());
  CHECK_THROWS_AS(extract_negatives(*model, empty.unlabeled(), 1.0), ContractError);
}

TEST_CASE("raising the threshold only removes members") {
  BackboneSpec spec;
  auto bench = make_synthetic_benchmark({});
  OpenSetModel model(bench.label_space, spec, 5);
  std::set<long> prev;
  bool first = true;
  for (double t : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95}) {
    const auto cur = indices(extract_negatives(model, bench.target.unlabeled(), t));
    if (!first) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    prev = cur;
    first = false;
  }
}

TEST_CASE("manifest csv") {
  testing::TempDir dir("neg");
  auto model = testing::probe_model();
  auto target = probe_target({0.95, 0.5, 0.99});
  auto set = extract_negatives(*model, target.unlabeled(), 0.9, 1000);
  set.write_manifest(dir / "m.csv");
  std::ifstream in(dir / "m.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "sample_id,unknown_confidence,source_iteration");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.rfind(',') + 1) == "1000");
  }
  CHECK(rows == 2);
}

TEST_CASE("identity affine without blur leaves the image alone") {
  Rng rng(1);
  const nn::ImageShape shape{3, 9, 7};
  const RowVector img = rng.normal_matrix(1, shape.size());
  const RowVector out = affine_blur(img, shape, {}, 5);
  CHECK((out - img).cwiseAbs().maxCoeff() < 1e-5);
  AffineBlurParams tiny;
  tiny.blur_sigma = 1e-3;
  CHECK((affine_blur(img, shape, tiny, 5) - img).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("blur and warp keep a constant image constant") {
  const nn::ImageShape shape{1, 10, 10};
  const RowVector img = RowVector::Constant(shape.size(), 0.37);
  AffineBlurParams p;
  p.rotation_deg = 12;
  p.translate_x = 1.0;
  p.scale = 1.05;
  p.blur_sigma = 1.5;
  CHECK((affine_blur(img, shape, p, 5).array() - 0.37).abs().maxCoeff() < 1e-9);
}

TEST_CASE("augmentation is seeded, shape-preserving and pure") {
  const nn::ImageShape shape{3, 8, 8};
  Rng data(2);
  const RowVector img = data.normal_matrix(1, shape.size());
  const RowVector copy = img;
  AugmentConfig cfg;
  Rng a(5), b(5);
  const RowVector x = augment_negative(img, DataMode::Image, shape, RowVector(), cfg, a);
  const RowVector y = augment_negative(img, DataMode::Image, shape, RowVector(), cfg, b);
  CHECK(x == y);
  CHECK(x.size() == img.size());
  CHECK(img == copy);
  CHECK_THROWS_AS(augment_negative(RowVector::Zero(5), DataMode::Image, shape, RowVector(), cfg, a), ContractError);
  CHECK_THROWS_AS(augment_negative(img, DataMode::Image, std::nullopt, RowVector(), cfg, a), ContractError);

  RowVector stddev(2);
  stddev << 2.0, 0.0;
  RowVector v(2);
  v << 1.0, 1.0;
  const RowVector noisy = augment_negative(v, DataMode::Vector, std::nullopt, stddev, cfg, a);
  CHECK(noisy(1) == 1.0);
  CHECK(noisy(0) != 1.0);
}

TEST_CASE("sampled augmentation parameters respect the configured ranges") {
  AugmentConfig cfg;
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const auto p = sample_affine_blur(cfg, {3, 20, 10}, rng);
    CHECK(std::abs(p.rotation_deg) <= 15.0);
    CHECK(std::abs(p.translate_x) <= 1.0);
    CHECK(std::abs(p.translate_y) <= 2.0);
    CHECK(p.scale >= 0.9);
    CHECK(p.scale <= 1.1);
    CHECK(p.blur_sigma >= 0.1);
    CHECK(p.blur_sigma <= 2.0);
  }
  cfg.blur_kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("negative batches per strategy") {
  auto model = testing::probe_model();
  auto one = extract_negatives(*model, probe_target({0.99, 0.2}).unlabeled());
  REQUIRE(one.size() == 1);
  Rng rng(7);
  const Matrix batch = negative_batch(Strategy::Original, one, nullptr, 4, rng);
  CHECK(batch.rows() == 4);
  for (long i = 0; i < 4; ++i) CHECK(batch.row(i) == one.samples().row(0));

  NegativeSet empty = extract_negatives(*model, probe_target({0.2}).unlabeled());
  CHECK_THROWS_AS(negative_batch(Strategy::Augmentation, empty, nullptr, 4, rng), ConfigError);
  CHECK_THROWS_AS(negative_batch(Strategy::Generation, one, nullptr, 4, rng), ConfigError);
  CHECK_THROWS_AS(negative_batch(Strategy::Baseline, one, nullptr, 4, rng), ConfigError);

  gan::GeneratorSpec gs;
  gs.latent_dim = 4;
  gs.hidden = 8;
  gs.value_min = RowVector::Constant(2, -1.0);
  gs.value_max = RowVector::Constant(2, 1.0);
  Rng init(8);
  gan::Generator gen(gs, init);
  Rng r1(9), r2(9);
  const Matrix f1 = negative_batch(Strategy::Generation, one, &gen, 6, r1);
  const Matrix f2 = negative_batch(Strategy::GenerationPP, one, &gen, 6, r2);
  CHECK(f1.rows() == 6);
  CHECK(f1 == f2);
}

TEST_CASE("strategy names round trip") {
  for (auto s : {Strategy::Baseline, Strategy::Original, Strategy::Augmentation, Strategy::Generation,
                 Strategy::GenerationPP})
    CHECK(strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(strategy_from_string("magic"), ConfigError);
}

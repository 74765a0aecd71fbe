#include "doctest.h"

#include "osda/config.hpp"
#include "support.hpp"

#include <fstream>

using namespace osda;

TEST_CASE("train config survives a json round trip") {
  TrainConfig c;
  c.total_iterations = 321;
  c.breakpoint_iteration = 100;
  c.strategy = Strategy::GenerationPP;
  c.interleave_interval = 50;
  c.lambda_neg = 0.05;
  c.seed = 99;
  c.gan.disc_variant = gan::DiscriminatorVariant::SharedBackbone;
  c.gan.w_agree = 0.5;
  c.augment.noise_fraction = 0.3;
  c.backbone.hidden = {8, 4};
  c.lr_schedule = LrSchedule::Constant;
  const Json j = to_json(c);
  CHECK(train_config_from_json(j) == c);
  CHECK(train_config_from_json(Json::parse(j.dump())) == c);
}

TEST_CASE("partial configs keep defaults; presets set the schedule") {
  const TrainConfig c = train_config_from_json(Json{{"lambda_neg", 0.1}});
  CHECK(c.lambda_neg == 0.1);
  CHECK(c.batch_size == 36);
  const TrainConfig p = train_config_from_json(Json{{"preset", "office-full"}, {"seed", 4}});
  CHECK(p.total_iterations == 10000);
  CHECK(p.breakpoint_iteration == 1000);
  CHECK(p.seed == 4);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(train_config_from_json(Json{{"lamda", 0.1}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"seed", "abc"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"strategy", "bogus"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json{{"gan", {{"epochs", 3}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(Json::array()), ConfigError);
}

TEST_CASE("synthetic spec, label space and manifest") {
  SyntheticBenchmarkSpec s;
  s.n_unknown = 11;
  s.shift_translation = {1.0, 2.0};
  CHECK(synthetic_spec_from_json(to_json(s)) == s);

  const LabelSpace ls({"b", "a"}, {"z"});
  CHECK(label_space_from_json(to_json(ls)) == ls);

  ExperimentManifest m;
  m.repeats = 2;
  m.task = "toy";
  m.dataset.synthetic = s;
  m.config.seed = 5;
  const ExperimentManifest back = manifest_from_json(to_json(m));
  CHECK(back.repeats == 2);
  CHECK(back.task == "toy");
  CHECK(back.config == m.config);
  CHECK(back.dataset.synthetic == s);

  const ExperimentManifest defaults = manifest_from_json(Json::object());
  CHECK(defaults.repeats == 3);
  CHECK(defaults.dataset.synthetic.has_value());
  m.repeats = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("dataset specs") {
  CHECK_THROWS_AS(dataset_spec_from_json(Json{{"source_root", "a"}}), ConfigError);
  const DatasetSpec d = dataset_spec_from_json(Json{{"source_root", "/nope/a"}, {"target_root", "/nope/b"},
                                                    {"split_preset", "office31"}});
  CHECK(d.split_preset == "office31");
  CHECK_THROWS_AS(load_data(d), ConfigError);
  DatasetSpec syn;
  syn.synthetic = SyntheticBenchmarkSpec{};
  const auto data = load_data(syn);
  CHECK(data.source.size() == 600);
}

TEST_CASE("json files") {
  testing::TempDir dir("json");
  write_json_file(dir / "a.json", Json{{"config", {{"seed", 3}}}, {"repeats", 1}});
  CHECK(read_manifest(dir / "a.json").config.seed == 3);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(read_json_file(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(read_json_file(dir / "missing.json"), ConfigError);
}

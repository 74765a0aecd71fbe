#pragma once

// JSON forms of the configuration types. Readers accept partial objects
// (missing keys keep their defaults) and reject unknown keys.

#include "osda/data.hpp"
#include "osda/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace osda {

using Json = nlohmann::json;

Json to_json(const BackboneSpec& spec);
BackboneSpec backbone_spec_from_json(const Json& j, BackboneSpec base = {});

Json to_json(const gan::GanConfig& cfg);
gan::GanConfig gan_config_from_json(const Json& j, gan::GanConfig base = {});

Json to_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const Json& j, AugmentConfig base = {});

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

Json to_json(const SyntheticBenchmarkSpec& spec);
SyntheticBenchmarkSpec synthetic_spec_from_json(const Json& j, SyntheticBenchmarkSpec base = {});

Json to_json(const LabelSpace& ls);
LabelSpace label_space_from_json(const Json& j);

// Where the data of an experiment comes from: the synthetic benchmark, or a
// pair of image-folder roots split alphabetically.
struct DatasetSpec {
  std::optional<SyntheticBenchmarkSpec> synthetic;
  std::filesystem::path source_root;
  std::filesystem::path target_root;
  std::string split_preset;  // office31 / officehome / visda, or empty
  int n_known = 0;
  int n_unknown = 0;
  nn::ImageShape image{3, 32, 32};
};

Json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const Json& j);

struct LoadedData {
  DomainDataset source;
  DomainDataset target;
  LabelSpace label_space;
};

// Builds or loads the datasets. For image folders the split counts come from
// the preset when one is named.
LoadedData load_data(const DatasetSpec& spec);

struct ExperimentManifest {
  TrainConfig config;
  DatasetSpec dataset;
  int repeats = 3;
  std::filesystem::path output_dir = "runs";
  std::string task = "synthetic";

  void validate() const;
};

Json to_json(const ExperimentManifest& m);
ExperimentManifest manifest_from_json(const Json& j);
ExperimentManifest read_manifest(const std::filesystem::path& path);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace osda

#pragma once

#include "osda/common.hpp"
#include "osda/model.hpp"
#include "osda/nn.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace osda {

enum class DomainRole { Source, Target };
enum class DataMode { Vector, Image };

std::string to_string(DomainRole role);
std::string to_string(DataMode mode);

// Samples of a target domain without their labels: the only view of the
// target that training code receives.
class UnlabeledView {
 public:
  UnlabeledView(const Matrix& samples, const std::vector<std::string>& ids, DataMode mode,
                std::optional<nn::ImageShape> shape)
      : samples_(&samples), ids_(&ids), mode_(mode), shape_(shape) {}

  const Matrix& samples() const { return *samples_; }
  const std::vector<std::string>& ids() const { return *ids_; }
  long size() const { return samples_->rows(); }
  DataMode mode() const { return mode_; }
  const std::optional<nn::ImageShape>& image_shape() const { return shape_; }

 private:
  const Matrix* samples_;
  const std::vector<std::string>* ids_;
  DataMode mode_;
  std::optional<nn::ImageShape> shape_;
};

class DomainDataset {
 public:
  DomainDataset(std::string name, DomainRole role, DataMode mode, Matrix samples,
                std::vector<std::string> class_names, std::vector<std::string> ids = {},
                std::optional<nn::ImageShape> image_shape = std::nullopt);

  const std::string& name() const { return name_; }
  DomainRole role() const { return role_; }
  DataMode mode() const { return mode_; }
  long size() const { return samples_.rows(); }
  long sample_width() const { return samples_.cols(); }
  const Matrix& samples() const { return samples_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::optional<nn::ImageShape>& image_shape() const { return image_shape_; }

  UnlabeledView unlabeled() const { return {samples_, ids_, mode_, image_shape_}; }

  // Class indices into label_space.known(); source role only. Throws if a
  // sample's class is not a known class.
  std::vector<int> source_labels(const LabelSpace& label_space) const;

  // Ground-truth class names, for evaluation only.
  const std::vector<std::string>& evaluation_labels() const { return class_names_; }

  // Subset keeping samples whose class satisfies `keep`, order preserved.
  template <typename Pred>
  DomainDataset filter(Pred keep) const {
    std::vector<long> rows;
    for (long i = 0; i < size(); ++i)
      if (keep(class_names_[i])) rows.push_back(i);
    return select(rows);
  }
  DomainDataset select(const std::vector<long>& rows) const;

  long skipped_files() const { return skipped_files_; }
  void set_skipped_files(long n) { skipped_files_ = n; }

 private:
  std::string name_;
  DomainRole role_;
  DataMode mode_;
  Matrix samples_;
  std::vector<std::string> class_names_;
  std::vector<std::string> ids_;
  std::optional<nn::ImageShape> image_shape_;
  long skipped_files_ = 0;
};

// Sort classes alphabetically; the first n_known are known, the next
// n_unknown unknown, the rest dropped. Duplicates are ignored.
LabelSpace osda_split(const std::vector<std::string>& all_classes, int n_known, int n_unknown);

// Named dataset configurations (class counts).
struct SplitPreset {
  std::string name;
  int n_known;
  int n_unknown;
};
std::optional<SplitPreset> split_preset(const std::string& name);

struct ImageFolderOptions {
  nn::ImageShape shape{3, 32, 32};
  // Per-channel normalization applied after scaling pixels to [0, 1].
  std::vector<double> mean{0.485, 0.456, 0.406};
  std::vector<double> stddev{0.229, 0.224, 0.225};
};

// root/<class>/<image>. Source keeps known classes, target keeps known and
// unknown classes. Files are visited in lexicographic path order; unreadable
// images are skipped and counted.
DomainDataset load_image_folder(const std::filesystem::path& root, const LabelSpace& label_space,
                                DomainRole role, const ImageFolderOptions& options = {});

// Class names found under an image-folder root.
std::vector<std::string> list_class_directories(const std::filesystem::path& root);

struct SyntheticBenchmarkSpec {
  int n_known = 3;
  int n_unknown = 3;
  int samples_per_class = 200;
  int feature_dim = 2;
  double radius = 4.0;          // known-class means sit on this circle (first two dimensions)
  double unknown_radius = 0.3;  // unknown-class means sit on this inner circle
  double class_std = 0.6;
  double shift_rotation_deg = 15.0;
  std::vector<double> shift_translation{0.3, -0.3};
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const SyntheticBenchmarkSpec&) const = default;
};

struct SyntheticBenchmark {
  DomainDataset source;
  DomainDataset target;
  LabelSpace label_space;
};

// Classes are named "c00", "c01", ...; known class i is a Gaussian centred at
// angle 2πi/n_known on the outer circle, unknown class j at angle
// 2π(j + ½)/n_unknown on the inner circle. The target applies the rotation
// and translation to every class mean.
SyntheticBenchmark make_synthetic_benchmark(const SyntheticBenchmarkSpec& spec);

// Columns f0..f{d-1}, class, domain.
void export_synthetic_csv(const SyntheticBenchmark& bench, const std::filesystem::path& path);

// Cycles through shuffled permutations of [0, n); state is serializable.
class BatchSampler {
 public:
  BatchSampler(long n, Rng rng);

  std::vector<long> next(long batch_size);

  long size() const { return n_; }
  Rng& rng() { return rng_; }
  const std::vector<long>& permutation() const { return perm_; }
  long cursor() const { return cursor_; }
  void restore(std::vector<long> perm, long cursor, const std::string& rng_state);

 private:
  void reshuffle();

  long n_;
  Rng rng_;
  std::vector<long> perm_;
  long cursor_;
};

Matrix gather_rows(const Matrix& m, const std::vector<long>& rows);

}  // namespace osda

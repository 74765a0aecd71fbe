#include "osda/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>

namespace fs = std::filesystem;

namespace osda {

std::string to_string(DomainRole role) { return role == DomainRole::Source ? "source" : "target"; }
std::string to_string(DataMode mode) { return mode == DataMode::Vector ? "vector" : "image"; }

// ---------------------------------------------------------------------------
// DomainDataset

DomainDataset::DomainDataset(std::string name, DomainRole role, DataMode mode, Matrix samples,
                             std::vector<std::string> class_names, std::vector<std::string> ids,
                             std::optional<nn::ImageShape> image_shape)
    : name_(std::move(name)),
      role_(role),
      mode_(mode),
      samples_(std::move(samples)),
      class_names_(std::move(class_names)),
      ids_(std::move(ids)),
      image_shape_(image_shape) {
  if (static_cast<long>(class_names_.size()) != samples_.rows())
    throw ContractError("dataset '" + name_ + "': one class name per sample required");
  if (ids_.empty()) {
    ids_.reserve(samples_.rows());
    char buf[32];
    for (long i = 0; i < samples_.rows(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%06ld", role_ == DomainRole::Source ? "s" : "t", i);
      ids_.emplace_back(buf);
    }
  }
  if (static_cast<long>(ids_.size()) != samples_.rows())
    throw ContractError("dataset '" + name_ + "': one id per sample required");
  if (mode_ == DataMode::Image) {
    if (!image_shape_ || (samples_.rows() > 0 && image_shape_->size() != samples_.cols()))
      throw ContractError("dataset '" + name_ + "': image shape does not match sample width");
  }
  if (!samples_.allFinite()) throw ContractError("dataset '" + name_ + "': non-finite sample values");
}

std::vector<int> DomainDataset::source_labels(const LabelSpace& label_space) const {
  if (role_ != DomainRole::Source)
    throw ContractError("dataset '" + name_ + "': labels of a target domain are not available for training");
  std::vector<int> out;
  out.reserve(class_names_.size());
  for (const auto& c : class_names_) {
    auto idx = label_space.known_index(c);
    if (!idx) throw ContractError("dataset '" + name_ + "': source sample of non-known class '" + c + "'");
    out.push_back(*idx);
  }
  return out;
}

DomainDataset DomainDataset::select(const std::vector<long>& rows) const {
  Matrix s = gather_rows(samples_, rows);
  std::vector<std::string> names, ids;
  for (long r : rows) {
    names.push_back(class_names_.at(r));
    ids.push_back(ids_.at(r));
  }
  DomainDataset out(name_, role_, mode_, std::move(s), std::move(names), std::move(ids), image_shape_);
  out.skipped_files_ = skipped_files_;
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<long>& rows) {
  Matrix out(static_cast<long>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = m.row(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Splits

LabelSpace osda_split(const std::vector<std::string>& all_classes, int n_known, int n_unknown) {
  if (n_known < 1) throw ContractError("osda_split: n_known must be at least 1");
  if (n_unknown < 0) throw ContractError("osda_split: n_unknown must be non-negative");
  std::set<std::string> unique(all_classes.begin(), all_classes.end());
  std::vector<std::string> sorted(unique.begin(), unique.end());
  if (static_cast<std::size_t>(n_known + n_unknown) > sorted.size()) {
    throw ContractError("osda_split: " + std::to_string(n_known) + " known + " + std::to_string(n_unknown) +
                        " unknown classes requested but only " + std::to_string(sorted.size()) + " available");
  }
  std::vector<std::string> known(sorted.begin(), sorted.begin() + n_known);
  std::vector<std::string> unknown(sorted.begin() + n_known, sorted.begin() + n_known + n_unknown);
  return LabelSpace(std::move(known), std::move(unknown));
}

std::optional<SplitPreset> split_preset(const std::string& name) {
  static const std::vector<SplitPreset> presets{
      {"office31", 10, 11},
      {"officehome", 25, 40},
      {"visda", 6, 6},
  };
  for (const auto& p : presets)
    if (p.name == name) return p;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Image folders

std::vector<std::string> list_class_directories(const fs::path& root) {
  if (!fs::is_directory(root)) throw ContractError("image folder '" + root.string() + "' does not exist");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ContractError("image folder '" + root.string() + "' has no class directories");
  return out;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// Resize the shorter side to the target, then center-crop.
std::optional<RowVector> load_image(const fs::path& file, const ImageFolderOptions& opt) {
  const int flags = opt.shape.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
  cv::Mat img = cv::imread(file.string(), flags);
  if (img.empty()) return std::nullopt;
  if (opt.shape.channels == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  const double scale = std::max(static_cast<double>(opt.shape.height) / img.rows,
                                static_cast<double>(opt.shape.width) / img.cols);
  cv::Mat resized;
  cv::resize(img, resized,
             cv::Size(std::max<int>(opt.shape.width, static_cast<int>(std::lround(img.cols * scale))),
                      std::max<int>(opt.shape.height, static_cast<int>(std::lround(img.rows * scale)))),
             0, 0, cv::INTER_LINEAR);
  const int x0 = (resized.cols - static_cast<int>(opt.shape.width)) / 2;
  const int y0 = (resized.rows - static_cast<int>(opt.shape.height)) / 2;
  cv::Mat crop = resized(cv::Rect(x0, y0, static_cast<int>(opt.shape.width), static_cast<int>(opt.shape.height)));
  cv::Mat f;
  crop.convertTo(f, CV_64F, 1.0 / 255.0);

  const long c = opt.shape.channels, h = opt.shape.height, w = opt.shape.width;
  RowVector out(c * h * w);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (long ch = 0; ch < c; ++ch) {
        const double v = c == 1 ? f.at<double>(static_cast<int>(y), static_cast<int>(x))
                                : f.at<cv::Vec3d>(static_cast<int>(y), static_cast<int>(x))[ch];
        out(ch * h * w + y * w + x) = (v - opt.mean.at(ch)) / opt.stddev.at(ch);
      }
    }
  }
  return out;
}

}  // namespace

DomainDataset load_image_folder(const fs::path& root, const LabelSpace& label_space, DomainRole role,
                                const ImageFolderOptions& options) {
  if (options.shape.channels != 1 && options.shape.channels != 3)
    throw ContractError("load_image_folder: only 1 or 3 channels are supported");
  if (static_cast<long>(options.mean.size()) < options.shape.channels ||
      static_cast<long>(options.stddev.size()) < options.shape.channels)
    throw ContractError("load_image_folder: normalization needs one mean/std per channel");
  const auto present = list_class_directories(root);
  const std::set<std::string> present_set(present.begin(), present.end());

  std::vector<std::string> wanted = label_space.known();
  for (const auto& k : wanted)
    if (role == DomainRole::Source && !present_set.count(k))
      throw ContractError("load_image_folder: known class directory '" + k + "' missing under " + root.string());
  if (role == DomainRole::Target) wanted.insert(wanted.end(), label_space.unknown().begin(), label_space.unknown().end());

  std::vector<fs::path> files;
  std::vector<std::string> classes;
  for (const auto& cls : wanted) {
    if (!present_set.count(cls)) continue;
    std::vector<fs::path> in_class;
    for (const auto& e : fs::directory_iterator(root / cls))
      if (e.is_regular_file() && is_image_file(e.path())) in_class.push_back(e.path());
    for (auto& p : in_class) {
      files.push_back(std::move(p));
      classes.push_back(cls);
    }
  }
  // Lexicographic path order over the whole dataset.
  std::vector<std::size_t> order(files.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return files[a] < files[b]; });

  std::vector<RowVector> rows;
  std::vector<std::string> names, ids;
  long skipped = 0;
  for (std::size_t i : order) {
    auto img = load_image(files[i], options);
    if (!img) {
      std::cerr << "warning: skipping unreadable image " << files[i].string() << "\n";
      ++skipped;
      continue;
    }
    rows.push_back(std::move(*img));
    names.push_back(classes[i]);
    ids.push_back(fs::relative(files[i], root).generic_string());
  }
  Matrix samples(static_cast<long>(rows.size()), options.shape.size());
  for (std::size_t i = 0; i < rows.size(); ++i) samples.row(static_cast<long>(i)) = rows[i];
  DomainDataset ds(root.filename().string(), role, DataMode::Image, std::move(samples), std::move(names),
                   std::move(ids), options.shape);
  ds.set_skipped_files(skipped);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

void SyntheticBenchmarkSpec::validate() const {
  if (n_known < 2) throw ConfigError("synthetic benchmark: n_known must be at least 2");
  if (n_unknown < 0) throw ConfigError("synthetic benchmark: n_unknown must be non-negative");
  if (samples_per_class < 1) throw ConfigError("synthetic benchmark: samples_per_class must be positive");
  if (feature_dim < 2) throw ConfigError("synthetic benchmark: feature_dim must be at least 2");
  if (!(radius > 0) || !(class_std > 0)) throw ConfigError("synthetic benchmark: radius and class_std must be positive");
  if (!(unknown_radius >= 0) || unknown_radius >= radius)
    throw ConfigError("synthetic benchmark: unknown_radius must lie in [0, radius)");
  if (shift_translation.size() != 2) throw ConfigError("synthetic benchmark: translation must have two components");
  if (n_known + n_unknown > 100) throw ConfigError("synthetic benchmark: at most 100 classes");
}

namespace {

std::string class_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%02d", i);
  return buf;
}

}  // namespace

SyntheticBenchmark make_synthetic_benchmark(const SyntheticBenchmarkSpec& spec) {
  spec.validate();
  const int n_total = spec.n_known + spec.n_unknown;
  const long d = spec.feature_dim;
  std::vector<std::string> names;
  for (int i = 0; i < n_total; ++i) names.push_back(class_name(i));
  LabelSpace ls = osda_split(names, spec.n_known, spec.n_unknown);

  const double theta = spec.shift_rotation_deg * std::numbers::pi / 180.0;
  Matrix source_means = Matrix::Zero(n_total, d);
  Matrix target_means = Matrix::Zero(n_total, d);
  for (int i = 0; i < n_total; ++i) {
    // Known classes on the outer circle; unknown classes on an inner circle,
    // offset by half a step so they sit between the known directions.
    const bool known = i < spec.n_known;
    const double a = known ? 2.0 * std::numbers::pi * i / spec.n_known
                           : 2.0 * std::numbers::pi * (i - spec.n_known + 0.5) / spec.n_unknown;
    const double r = known ? spec.radius : spec.unknown_radius;
    const double x = r * std::cos(a), y = r * std::sin(a);
    source_means(i, 0) = x;
    source_means(i, 1) = y;
    target_means(i, 0) = std::cos(theta) * x - std::sin(theta) * y + spec.shift_translation[0];
    target_means(i, 1) = std::sin(theta) * x + std::cos(theta) * y + spec.shift_translation[1];
  }

  auto draw = [&](const Matrix& means, int n_classes, Rng& rng, const char* prefix) {
    const long n = static_cast<long>(n_classes) * spec.samples_per_class;
    Matrix s(n, d);
    std::vector<std::string> labels, ids;
    long row = 0;
    for (int c = 0; c < n_classes; ++c) {
      for (int j = 0; j < spec.samples_per_class; ++j, ++row) {
        for (long k = 0; k < d; ++k) s(row, k) = means(c, k) + rng.normal(0.0, spec.class_std);
        labels.push_back(names[c]);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%06ld", prefix, row);
        ids.emplace_back(buf);
      }
    }
    return std::tuple{std::move(s), std::move(labels), std::move(ids)};
  };

  Rng src_rng = Rng::derive(spec.seed, 1);
  Rng tgt_rng = Rng::derive(spec.seed, 2);
  auto [ss, sl, si] = draw(source_means, spec.n_known, src_rng, "s");
  auto [ts, tl, ti] = draw(target_means, n_total, tgt_rng, "t");
  return {DomainDataset("synthetic-source", DomainRole::Source, DataMode::Vector, std::move(ss), std::move(sl), std::move(si)),
          DomainDataset("synthetic-target", DomainRole::Target, DataMode::Vector, std::move(ts), std::move(tl), std::move(ti)),
          std::move(ls)};
}

void export_synthetic_csv(const SyntheticBenchmark& bench, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const long d = bench.source.sample_width();
  for (long k = 0; k < d; ++k) out << 'f' << k << ',';
  out << "class,domain\n";
  char buf[32];
  for (const DomainDataset* ds : {&bench.source, &bench.target}) {
    const auto& labels = ds->evaluation_labels();
    for (long i = 0; i < ds->size(); ++i) {
      for (long k = 0; k < d; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", ds->samples()(i, k));
        out << buf << ',';
      }
      out << labels[i] << ',' << to_string(ds->role()) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// BatchSampler

BatchSampler::BatchSampler(long n, Rng rng) : n_(n), rng_(std::move(rng)), cursor_(0) {
  if (n < 1) throw ContractError("batch sampler: empty dataset");
  reshuffle();
}

void BatchSampler::reshuffle() {
  perm_.resize(n_);
  for (long i = 0; i < n_; ++i) perm_[i] = i;
  std::shuffle(perm_.begin(), perm_.end(), rng_.engine());
  cursor_ = 0;
}

std::vector<long> BatchSampler::next(long batch_size) {
  std::vector<long> out;
  out.reserve(batch_size);
  while (static_cast<long>(out.size()) < batch_size) {
    if (cursor_ == n_) reshuffle();
    out.push_back(perm_[cursor_++]);
  }
  return out;
}

void BatchSampler::restore(std::vector<long> perm, long cursor, const std::string& rng_state) {
  if (static_cast<long>(perm.size()) != n_ || cursor < 0 || cursor > n_)
    throw IoError("batch sampler: checkpointed state does not match dataset size");
  perm_ = std::move(perm);
  cursor_ = cursor;
  rng_.set_state(rng_state);
}

}  // namespace osda

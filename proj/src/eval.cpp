#include "osda/eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace osda {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

}  // namespace

double h_score(double a, double b) {
  if (!(a >= 0.0 && a <= 100.0 && b >= 0.0 && b <= 100.0))
    throw ContractError("h_score: accuracies must lie in [0, 100]");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

EvalReport evaluate_decisions(std::vector<Decision> decisions, const LabelSpace& ls) {
  std::map<std::string, long> total, correct;
  long unknown_total = 0, unknown_rejected = 0;
  for (const auto& d : decisions) {
    if (ls.is_known(d.true_class)) {
      ++total[d.true_class];
      if (d.predicted && *d.predicted == d.true_class) ++correct[d.true_class];
    } else if (ls.is_unknown(d.true_class)) {
      ++total[d.true_class];
      ++unknown_total;
      if (!d.predicted) {
        ++correct[d.true_class];
        ++unknown_rejected;
      }
    } else {
      throw ContractError("evaluate: class '" + d.true_class + "' is outside the label space");
    }
    if (d.predicted && !ls.is_known(*d.predicted))
      throw ContractError("evaluate: prediction '" + *d.predicted + "' is not a known class");
  }

  EvalReport r;
  r.n_samples = static_cast<long>(decisions.size());
  for (const auto& [cls, n] : total) r.per_class_acc[cls] = 100.0 * static_cast<double>(correct[cls]) / n;

  double sum = 0.0;
  long classes = 0;
  for (const auto& cls : ls.known()) {
    auto it = r.per_class_acc.find(cls);
    if (it == r.per_class_acc.end()) continue;
    sum += it->second;
    ++classes;
  }
  if (classes == 0) throw ContractError("evaluate: no known-class samples");
  r.acc_known = sum / static_cast<double>(classes);
  if (unknown_total > 0) {
    r.acc_unknown = 100.0 * static_cast<double>(unknown_rejected) / static_cast<double>(unknown_total);
    r.h_score = h_score(r.acc_known, *r.acc_unknown);
  }
  r.decisions = std::move(decisions);
  return r;
}

std::vector<Decision> decide_dataset(OpenSetModel& model, const DomainDataset& target) {
  std::vector<Decision> out;
  out.reserve(static_cast<std::size_t>(target.size()));
  if (target.size() == 0) return out;
  const auto preds = model.infer(target.samples());
  const auto& known = model.label_space().known();
  const auto& labels = target.evaluation_labels();
  for (long i = 0; i < target.size(); ++i) {
    Decision d{labels[static_cast<std::size_t>(i)], std::nullopt};
    if (preds[i].is_known) d.predicted = known[static_cast<std::size_t>(preds[i].pseudo_label)];
    out.push_back(std::move(d));
  }
  return out;
}

EvalReport evaluate(OpenSetModel& model, const DomainDataset& target, const LabelSpace& label_space) {
  if (!(model.label_space() == label_space)) throw ContractError("evaluate: model was trained on a different label space");
  return evaluate_decisions(decide_dataset(model, target), label_space);
}

std::vector<OpennessRow> openness_sweep(const TrainFn& train_fn, const SyntheticBenchmarkSpec& spec,
                                        const std::vector<int>& unknown_counts, int repeats) {
  if (repeats < 1) throw ConfigError("openness_sweep: repeats must be at least 1");
  std::vector<OpennessRow> rows;
  if (unknown_counts.empty()) return rows;
  const SyntheticBenchmark pool = make_synthetic_benchmark(spec);
  for (int count : unknown_counts) {
    OpennessRow row;
    row.unknown_count = count;
    if (count < 1 || count > spec.n_unknown) {
      row.skipped = "unknown count " + std::to_string(count) + " outside [1, " + std::to_string(spec.n_unknown) + "]";
      rows.push_back(std::move(row));
      continue;
    }
    const std::vector<std::string> unknown(pool.label_space.unknown().begin(),
                                           pool.label_space.unknown().begin() + count);
    const LabelSpace ls(pool.label_space.known(), unknown);
    const DomainDataset target = pool.target.filter([&](const std::string& c) { return ls.contains(c); });
    for (int r = 0; r < repeats; ++r) {
      auto model = train_fn(pool.source, target, ls, r);
      row.reports.push_back(evaluate(*model, target, ls));
    }
    for (const auto& rep : row.reports) {
      row.mean_h_score += rep.h_score.value_or(0.0);
      row.mean_acc_known += rep.acc_known;
      row.mean_acc_unknown += rep.acc_unknown.value_or(0.0);
    }
    row.mean_h_score /= repeats;
    row.mean_acc_known /= repeats;
    row.mean_acc_unknown /= repeats;
    rows.push_back(std::move(row));
  }
  return rows;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) throw ContractError("quantile of an empty list");
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BoxStats box_stats(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  s.lower_fence = s.q1 - 1.5 * iqr;
  s.upper_fence = s.q3 + 1.5 * iqr;
  const auto out = std::count_if(values.begin(), values.end(),
                                 [&](double v) { return v < s.lower_fence || v > s.upper_fence; });
  s.outlier_fraction = static_cast<double>(out) / static_cast<double>(values.size());
  return s;
}

ThresholdDistribution threshold_distribution(OpenSetModel& model, const DomainDataset& target,
                                             const LabelSpace& label_space) {
  ThresholdDistribution d;
  std::vector<long> rows;
  const auto& labels = target.evaluation_labels();
  for (long i = 0; i < target.size(); ++i)
    if (label_space.is_unknown(labels[static_cast<std::size_t>(i)])) rows.push_back(i);
  if (rows.empty()) return d;
  const auto preds = model.infer(gather_rows(target.samples(), rows));
  long above = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = 1.0 - preds[i].known_prob;
    d.ids.push_back(target.ids()[static_cast<std::size_t>(rows[i])]);
    d.values.push_back(v);
    if (v > d.reference) ++above;
  }
  d.stats = box_stats(d.values);
  d.fraction_above_reference = static_cast<double>(above) / static_cast<double>(rows.size());
  return d;
}

void write_threshold_csv(const std::filesystem::path& path, const ThresholdDistribution& d, const std::string& task) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "task,sample_id,unknown_prob\n";
  for (std::size_t i = 0; i < d.values.size(); ++i) out << task << ',' << d.ids[i] << ',' << num(d.values[i]) << '\n';
  out << "\n# summary\n";
  out << "task,n,min,q1,median,q3,max,lower_fence,upper_fence,outlier_fraction,reference,fraction_above_reference\n";
  out << task << ',' << d.values.size();
  if (d.stats) {
    const BoxStats& s = *d.stats;
    for (double v : {s.min, s.q1, s.median, s.q3, s.max, s.lower_fence, s.upper_fence, s.outlier_fraction})
      out << ',' << num(v);
  } else {
    out << ",,,,,,,,";
  }
  out << ',' << num(d.reference) << ',' << num(d.fraction_above_reference) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void export_features(OpenSetModel& model, const DomainDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const long d = model.feature_dim();
  for (long k = 0; k < d; ++k) out << 'f' << k << ',';
  out << "label,is_known,predicted\n";
  if (dataset.size() > 0) {
    const Matrix f = model.forward_features(dataset.samples());
    const auto preds = model.infer(dataset.samples());
    const auto& known = model.label_space().known();
    const auto& labels = dataset.evaluation_labels();
    for (long i = 0; i < f.rows(); ++i) {
      for (long k = 0; k < d; ++k) out << num(f(i, k)) << ',';
      const auto& label = labels[static_cast<std::size_t>(i)];
      out << label << ',' << (model.label_space().is_known(label) ? 1 : 0) << ','
          << (preds[i].is_known ? known[static_cast<std::size_t>(preds[i].pseudo_label)] : std::string("unknown"))
          << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "task,strategy,hsc,acc_known,acc_unknown,seed\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.strategy << ',' << opt_num(r.report.h_score) << ',' << num(r.report.acc_known) << ','
        << opt_num(r.report.acc_unknown) << ',' << r.seed << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["acc_known"] = r.acc_known;
  j["acc_unknown"] = r.acc_unknown ? nlohmann::json(*r.acc_unknown) : nlohmann::json(nullptr);
  j["h_score"] = r.h_score ? nlohmann::json(*r.h_score) : nlohmann::json(nullptr);
  j["per_class_acc"] = r.per_class_acc;
  j["n_samples"] = r.n_samples;
  nlohmann::json dec = nlohmann::json::array();
  for (const auto& d : r.decisions) dec.push_back({d.true_class, d.predicted ? *d.predicted : "unknown"});
  j["decisions"] = std::move(dec);
  return j;
}

Matrix pca_2d(const Matrix& x) {
  if (x.rows() == 0) return Matrix(0, 2);
  const RowVector mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, x.rows() - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const long d = x.cols();
  Matrix basis = Matrix::Zero(d, 2);
  // Eigenvalues come in increasing order.
  for (long c = 0; c < std::min<long>(2, d); ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    // Fix the sign so repeated runs agree.
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
  }
  return centered * basis;
}

}  // namespace osda

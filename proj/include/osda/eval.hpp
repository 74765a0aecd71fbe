#pragma once

#include "osda/data.hpp"
#include "osda/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace osda {

// Harmonic mean of two percentages; h_score(0, 0) = 0.
double h_score(double acc_known, double acc_unknown);

struct Decision {
  std::string true_class;
  std::optional<std::string> predicted;  // empty when rejected as unknown
};

// All metrics in percent. acc_known averages the per-class accuracies of the
// known classes present; acc_unknown is the rejection rate on unknown-class
// samples and, like h_score, is absent when there are none.
struct EvalReport {
  double acc_known = 0.0;
  std::optional<double> acc_unknown;
  std::optional<double> h_score;
  std::map<std::string, double> per_class_acc;
  long n_samples = 0;
  std::vector<Decision> decisions;
};

EvalReport evaluate_decisions(std::vector<Decision> decisions, const LabelSpace& label_space);

std::vector<Decision> decide_dataset(OpenSetModel& model, const DomainDataset& target);
EvalReport evaluate(OpenSetModel& model, const DomainDataset& target, const LabelSpace& label_space);

// Trains a model for one openness setting; `repeat` counts from 0.
using TrainFn = std::function<std::shared_ptr<OpenSetModel>(const DomainDataset& source, const DomainDataset& target,
                                                            const LabelSpace& label_space, int repeat)>;

struct OpennessRow {
  int unknown_count = 0;
  std::optional<std::string> skipped;  // reason, when the count was invalid
  std::vector<EvalReport> reports;     // one per repeat
  double mean_h_score = 0.0;
  double mean_acc_known = 0.0;
  double mean_acc_unknown = 0.0;
};

// The benchmark is generated once with spec.n_unknown unknown classes; the
// row for count c keeps the known classes and the first c unknown classes of
// the target. Counts outside [1, spec.n_unknown] are skipped and recorded.
std::vector<OpennessRow> openness_sweep(const TrainFn& train_fn, const SyntheticBenchmarkSpec& spec,
                                        const std::vector<int>& unknown_counts, int repeats = 1);

// Linear-interpolation quantile (R type 7) of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double lower_fence = 0.0, upper_fence = 0.0;  // q1 − 1.5·IQR, q3 + 1.5·IQR
  double outlier_fraction = 0.0;
};

BoxStats box_stats(std::vector<double> values);

struct ThresholdDistribution {
  std::vector<std::string> ids;
  std::vector<double> values;  // 1 − p_o(ŷ | x) of truly-unknown samples
  std::optional<BoxStats> stats;
  double reference = 0.9;
  double fraction_above_reference = 0.0;
};

ThresholdDistribution threshold_distribution(OpenSetModel& model, const DomainDataset& target,
                                             const LabelSpace& label_space);

// Raw values then a summary block.
void write_threshold_csv(const std::filesystem::path& path, const ThresholdDistribution& dist,
                         const std::string& task);

// f0..f{d-1}, label, is_known, predicted; one row per sample in dataset order.
void export_features(OpenSetModel& model, const DomainDataset& dataset, const std::filesystem::path& path);

struct ReportRow {
  std::string task;
  std::string strategy;
  std::uint64_t seed = 0;
  EvalReport report;
};

// task, strategy, hsc, acc_known, acc_unknown, seed
void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
nlohmann::json report_to_json(const EvalReport& report);

// Rows projected on their first two principal components.
Matrix pca_2d(const Matrix& x);

}  // namespace osda

// osda command-line tool.
//
//   osda train          --config exp.json [--seed N --repeats N --strategy S --lambda F --threshold F --out DIR]
//   osda eval           --checkpoint model.ckpt [--config exp.json] [--export-features]
//   osda sweep-lambda   --config exp.json --lambdas 0.01 0.05 0.1 0.2 [--strategy original ...]
//   osda sweep-openness --config exp.json --counts 1 2 3
//   osda export-plots   --checkpoint model.ckpt [--config exp.json] [--loss-csv F] [--openness-csv F]
//
// Exit codes: 0 success, 2 configuration/contract error, 3 training failure.

#include "osda/checkpoint.hpp"
#include "osda/config.hpp"
#include "osda/eval.hpp"
#include "osda/trainer.hpp"
#include "plots.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace osda;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::vector<std::string> strategy;
  std::optional<double> lambda;
  std::optional<double> threshold;
  std::string out;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool many_strategies = false) {
  cmd->add_option("--config", c.config, "experiment manifest (JSON)");
  cmd->add_option("--seed", c.seed, "base seed; repeat i uses seed + i");
  cmd->add_option("--repeats", c.repeats, "number of repeats");
  auto* s = cmd->add_option("--strategy", c.strategy, "baseline|original|augmentation|generation|generationpp");
  if (!many_strategies) s->expected(1);
  cmd->add_option("--lambda", c.lambda, "weight of the negative constraint");
  cmd->add_option("--threshold", c.threshold, "extraction threshold on 1 - p_o");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.sets, "override any config field, e.g. --set total_iterations=500 --set gan.gan_epochs=20");
  cmd->add_flag("-q,--quiet", c.quiet, "less output");
}

// --set a.b=value; the value is read as JSON when it parses, else as a string.
void apply_set(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &j;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

ExperimentManifest load_manifest(const Common& c) {
  ExperimentManifest m = c.config.empty() ? manifest_from_json(Json::object()) : read_manifest(c.config);
  if (!c.sets.empty()) {
    Json cfg = to_json(m.config);
    for (const auto& s : c.sets) apply_set(cfg, s);
    m.config = train_config_from_json(cfg);
  }
  if (c.seed) m.config.seed = *c.seed;
  if (c.repeats) m.repeats = *c.repeats;
  if (!c.strategy.empty()) m.config.strategy = strategy_from_string(c.strategy.front());
  if (c.lambda) m.config.lambda_neg = *c.lambda;
  if (c.threshold) m.config.extraction_threshold = *c.threshold;
  if (!c.out.empty()) m.output_dir = c.out;
  m.validate();
  return m;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Stat {
  std::vector<double> v;
  double mean() const {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? NAN : s / static_cast<double>(v.size());
  }
  // Sample standard deviation; empty for a single value.
  std::string std_text() const {
    if (v.size() < 2) return "";
    const double m = mean();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return num(std::sqrt(s / static_cast<double>(v.size() - 1)));
  }
  std::string mean_text() const { return v.empty() ? "" : num(mean()); }
};

struct Summary {
  Stat hsc, known, unknown;
  void add(const EvalReport& r) {
    known.v.push_back(r.acc_known);
    if (r.h_score) hsc.v.push_back(*r.h_score);
    if (r.acc_unknown) unknown.v.push_back(*r.acc_unknown);
  }
};

void write_summary(const fs::path& path, const Summary& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,mean,std,n\n";
  for (const auto& [name, st] : {std::pair{"hsc", &s.hsc}, {"acc_known", &s.known}, {"acc_unknown", &s.unknown}})
    out << name << ',' << st->mean_text() << ',' << st->std_text() << ',' << st->v.size() << '\n';
}

// One manifest, all repeats. Artifacts go to dir/repeat_<i>/ and a summary to dir.
Summary run_repeats(const ExperimentManifest& m, const LoadedData& data, const fs::path& dir, bool quiet) {
  fs::create_directories(dir);
  write_json_file(dir / "manifest.json", to_json(m));
  std::vector<ReportRow> rows;
  Summary summary;
  for (int i = 0; i < m.repeats; ++i) {
    TrainConfig cfg = m.config;
    cfg.seed = m.config.seed + static_cast<std::uint64_t>(i);
    const fs::path rdir = dir / ("repeat_" + std::to_string(i));
    fs::create_directories(rdir);
    Trainer t(cfg, data.source, data.target, data.label_space);
    t.set_abort_checkpoint(rdir / "aborted.ckpt");
    try {
      t.run();
    } catch (const TrainingError&) {
      t.write_loss_csv(rdir / "loss.csv");
      throw;
    }
    t.save(rdir / "model.ckpt");
    t.write_loss_csv(rdir / "loss.csv");
    const EvalReport r = evaluate(t.model(), data.target, data.label_space);
    const ReportRow row{m.task, to_string(cfg.strategy), cfg.seed, r};
    write_report_csv(rdir / "report.csv", {row});
    write_json_file(rdir / "report.json", report_to_json(r));
    rows.push_back(row);
    summary.add(r);
    if (!quiet)
      std::cout << m.task << " " << to_string(cfg.strategy) << " seed " << cfg.seed << ": hsc "
                << (r.h_score ? num(*r.h_score) : "-") << " acc_known " << num(r.acc_known) << " acc_unknown "
                << (r.acc_unknown ? num(*r.acc_unknown) : "-") << "\n";
  }
  write_report_csv(dir / "report.csv", rows);
  write_summary(dir / "summary.csv", summary);
  return summary;
}

int cmd_train(const Common& c) {
  const ExperimentManifest m = load_manifest(c);
  const LoadedData data = load_data(m.dataset);
  const Summary s = run_repeats(m, data, m.output_dir, c.quiet);
  std::cout << "mean hsc " << s.hsc.mean_text() << " (std " << s.hsc.std_text() << ") -> " << m.output_dir.string()
            << "\n";
  return 0;
}

std::string lambda_tag(double l) {
  std::ostringstream s;
  s << l;
  return s.str();
}

int cmd_sweep_lambda(const Common& c, const std::vector<double>& lambdas) {
  ExperimentManifest m = load_manifest(c);
  std::vector<Strategy> strategies;
  for (const auto& s : c.strategy) strategies.push_back(strategy_from_string(s));
  if (strategies.empty()) strategies.push_back(Strategy::Original);
  // Validate the whole grid before training anything.
  for (double l : lambdas) {
    TrainConfig probe = m.config;
    probe.lambda_neg = l;
    probe.validate();
  }
  fs::create_directories(m.output_dir);
  std::ofstream out(m.output_dir / "sweep_lambda.csv");
  if (!out) throw IoError("cannot write " + (m.output_dir / "sweep_lambda.csv").string());
  out << "strategy,lambda,hsc,acc_known,acc_unknown\n";
  if (lambdas.empty()) return 0;
  const LoadedData data = load_data(m.dataset);
  for (auto s : strategies)
    for (double l : lambdas) {
      ExperimentManifest run = m;
      run.config.strategy = s;
      run.config.lambda_neg = l;
      const Summary sum = run_repeats(run, data, m.output_dir / (to_string(s) + "_lambda_" + lambda_tag(l)), c.quiet);
      out << to_string(s) << ',' << l << ',' << sum.hsc.mean_text() << ',' << sum.known.mean_text() << ','
          << sum.unknown.mean_text() << '\n';
      out.flush();
    }
  std::cout << "wrote " << (m.output_dir / "sweep_lambda.csv").string() << "\n";
  return 0;
}

int cmd_sweep_openness(const Common& c, const std::vector<int>& counts) {
  const ExperimentManifest m = load_manifest(c);
  if (!m.dataset.synthetic) throw ConfigError("sweep-openness needs the synthetic benchmark");
  SyntheticBenchmarkSpec spec = *m.dataset.synthetic;
  for (int k : counts) spec.n_unknown = std::max(spec.n_unknown, k);
  TrainFn fn = [&](const DomainDataset& source, const DomainDataset& target, const LabelSpace& ls, int repeat) {
    TrainConfig cfg = m.config;
    cfg.seed = m.config.seed + static_cast<std::uint64_t>(repeat);
    return train(cfg, source, target, ls).model;
  };
  const auto rows = openness_sweep(fn, spec, counts, m.repeats);
  fs::create_directories(m.output_dir);
  const fs::path path = m.output_dir / "sweep_openness.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "unknown_count,hsc,acc_known,acc_unknown,note\n";
  for (const auto& r : rows) {
    out << r.unknown_count << ',';
    if (r.skipped) out << ",,," << *r.skipped << '\n';
    else out << num(r.mean_h_score) << ',' << num(r.mean_acc_known) << ',' << num(r.mean_acc_unknown) << ",\n";
  }
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

LoadedData data_for_checkpoint(const Common& c) {
  const ExperimentManifest m = load_manifest(c);
  return load_data(m.dataset);
}

fs::path out_dir(const Common& c, const fs::path& fallback) {
  const fs::path d = c.out.empty() ? fallback : fs::path(c.out);
  fs::create_directories(d);
  return d;
}

int cmd_eval(const Common& c, const std::string& checkpoint, bool features) {
  auto model = load_model(checkpoint);
  const LoadedData data = data_for_checkpoint(c);
  const EvalReport r = evaluate(*model, data.target, data.label_space);
  const fs::path dir = out_dir(c, fs::path(checkpoint).parent_path() / "eval");
  write_report_csv(dir / "report.csv", {{"eval", "checkpoint", 0, r}});
  write_json_file(dir / "report.json", report_to_json(r));
  write_threshold_csv(dir / "threshold.csv", threshold_distribution(*model, data.target, data.label_space), "eval");
  if (features) export_features(*model, data.target, dir / "features.csv");
  std::cout << "hsc " << (r.h_score ? num(*r.h_score) : "-") << " acc_known " << num(r.acc_known) << " acc_unknown "
            << (r.acc_unknown ? num(*r.acc_unknown) : "-") << " -> " << dir.string() << "\n";
  return 0;
}

// Reads a CSV with a header row into columns of strings.
std::map<std::string, std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::vector<std::string> header;
  std::map<std::string, std::vector<std::string>> cols;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) header = split(line);
  while (std::getline(in, line)) {
    const auto f = split(line);
    for (std::size_t i = 0; i < header.size(); ++i) cols[header[i]].push_back(i < f.size() ? f[i] : "");
  }
  return cols;
}

double to_num(const std::string& s) { return s.empty() ? NAN : std::stod(s); }

int cmd_export_plots(const Common& c, const std::string& checkpoint, const std::string& loss_csv,
                     const std::string& openness_csv) {
  const fs::path dir = out_dir(c, checkpoint.empty() ? fs::path("plots") : fs::path(checkpoint).parent_path() / "plots");
  if (!checkpoint.empty()) {
    auto model = load_model(checkpoint);
    const LoadedData data = data_for_checkpoint(c);

    const auto dist = threshold_distribution(*model, data.target, data.label_space);
    write_threshold_csv(dir / "threshold.csv", dist, "export");
    if (dist.stats)
      plots::render_boxplot(dir / "threshold_boxplot.png", dist.values, *dist.stats, dist.reference,
                            "1 - p_o(y|x) on unknown target samples");

    export_features(*model, data.target, dir / "features.csv");
    const Matrix proj = pca_2d(model->forward_features(data.target.samples()));
    std::vector<std::string> groups{"known (target)", "unknown (target)"};
    std::vector<int> group;
    std::ofstream pca(dir / "features_pca.csv");
    pca << "pc1,pc2,label,is_known\n";
    for (long i = 0; i < proj.rows(); ++i) {
      const auto& label = data.target.evaluation_labels()[static_cast<std::size_t>(i)];
      const bool known = data.label_space.is_known(label);
      group.push_back(known ? 0 : 1);
      pca << proj(i, 0) << ',' << proj(i, 1) << ',' << label << ',' << (known ? 1 : 0) << '\n';
    }
    plots::render_scatter(dir / "features_pca.png", proj, group, groups, "target features, first two PCs");
  }
  if (!loss_csv.empty()) {
    const auto cols = read_csv(loss_csv);
    std::map<std::string, plots::Series> by_name;
    const auto& names = cols.at("loss_name");
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto& s = by_name[names[i]];
      s.name = names[i];
      s.x.push_back(to_num(cols.at("iteration")[i]));
      s.y.push_back(to_num(cols.at("value")[i]));
    }
    std::vector<plots::Series> series;
    for (auto& [name, s] : by_name) series.push_back(std::move(s));
    plots::render_lines(dir / "loss.png", series, "training losses", "iteration");
  }
  if (!openness_csv.empty()) {
    const auto cols = read_csv(openness_csv);
    std::vector<plots::Series> series{{"Hsc", {}, {}}, {"Acc known", {}, {}}, {"Acc unknown", {}, {}}};
    const auto& counts = cols.at("unknown_count");
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double x = to_num(counts[i]);
      int k = 0;
      for (const char* col : {"hsc", "acc_known", "acc_unknown"}) {
        series[static_cast<std::size_t>(k)].x.push_back(x);
        series[static_cast<std::size_t>(k)].y.push_back(to_num(cols.at(col)[i]));
        ++k;
      }
    }
    plots::render_lines(dir / "openness.png", series, "openness sweep", "unknown classes in target");
  }
  std::cout << "wrote plots to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set domain adaptation with negative supervision"};
  app.require_subcommand(1);

  Common train_opts, sweep_opts, open_opts, eval_opts, plot_opts;
  auto* train_cmd = app.add_subcommand("train", "train and evaluate every repeat of a manifest");
  add_common(train_cmd, train_opts);

  std::vector<double> lambdas;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "one training run per strategy and lambda");
  add_common(sweep_cmd, sweep_opts, true);
  auto* lambdas_opt = sweep_cmd->add_option("--lambdas", lambdas, "lambda grid (default 0.01 0.05 0.1 0.2)")->expected(0, -1);

  std::vector<int> counts;
  auto* open_cmd = app.add_subcommand("sweep-openness", "vary the number of unknown target classes");
  add_common(open_cmd, open_opts);
  auto* counts_opt = open_cmd->add_option("--counts", counts, "unknown class counts (default 1 2 3)")->expected(0, -1);

  std::string checkpoint;
  bool features = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the manifest's target data");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval_cmd->add_flag("--export-features", features, "also write the backbone features as CSV");

  std::string plot_ckpt, loss_csv, openness_csv;
  auto* plot_cmd = app.add_subcommand("export-plots", "write plot data files and PNG renderings");
  add_common(plot_cmd, plot_opts);
  plot_cmd->add_option("--checkpoint", plot_ckpt, "model checkpoint (threshold boxplot, feature scatter)");
  plot_cmd->add_option("--loss-csv", loss_csv, "loss CSV from a training run");
  plot_cmd->add_option("--openness-csv", openness_csv, "CSV from sweep-openness");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  // A bare --lambdas / --counts means an empty list.
  auto bare = [](const CLI::Option* o) {
    for (const auto& r : o->results())
      if (!r.empty()) return false;
    return true;
  };
  if (lambdas_opt->count() == 0) lambdas = {0.01, 0.05, 0.1, 0.2};
  else if (bare(lambdas_opt)) lambdas.clear();
  if (counts_opt->count() == 0) counts = {1, 2, 3};
  else if (bare(counts_opt)) counts.clear();

  try {
    if (*train_cmd) return cmd_train(train_opts);
    if (*sweep_cmd) return cmd_sweep_lambda(sweep_opts, lambdas);
    if (*open_cmd) return cmd_sweep_openness(open_opts, counts);
    if (*eval_cmd) return cmd_eval(eval_opts, checkpoint, features);
    if (*plot_cmd) return cmd_export_plots(plot_opts, plot_ckpt, loss_csv, openness_csv);
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

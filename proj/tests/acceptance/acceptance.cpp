// Acceptance checks. Each criterion prints one PASS/FAIL line; with an
// argument only that criterion runs (ctest registers one entry per name).

#include "osda/eval.hpp"
#include "osda/gan.hpp"
#include "osda/losses.hpp"
#include "osda/negatives.hpp"
#include "osda/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace osda;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (pass) detail.str("");
    if (!detail.str().empty()) detail << "; ";
    detail << why;
    pass = false;
  }
};

// ---- H-score on the reference per-task rows -------------------------------

struct ReferenceRow {
  const char* where;
  double acc_known, acc_unknown, h;
};

// Discriminator comparison (DCGAN-style / shared backbone) and training
// strategy comparison (single / interleaved), Office-31 tasks.
const ReferenceRow kReference[] = {
    {"disc A->D dcgan", 91.8, 90.3, 91.0},    {"disc A->W dcgan", 88.4, 87.4, 87.9},
    {"disc D->A dcgan", 79.3, 94.6, 86.3},    {"disc D->W dcgan", 96.8, 97.8, 97.3},
    {"disc W->A dcgan", 85.1, 91.8, 88.3},    {"disc W->D dcgan", 100.0, 97.1, 98.6},
    {"disc A->D shared", 89.0, 90.3, 89.6},   {"disc A->W shared", 84.9, 93.3, 88.9},
    {"disc D->A shared", 71.2, 96.2, 81.9},   {"disc D->W shared", 97.1, 97.8, 97.4},
    {"disc W->A shared", 83.9, 94.3, 88.8},   {"disc W->D shared", 99.6, 100.0, 99.8},
    {"train A->D single", 89.0, 90.3, 89.6},  {"train A->W single", 84.9, 93.3, 88.9},
    {"train D->A single", 71.2, 96.2, 81.9},  {"train D->W single", 97.1, 97.8, 97.4},
    {"train W->A single", 83.9, 94.3, 88.8},  {"train W->D single", 99.6, 100.0, 99.8},
    {"train A->D interl", 91.2, 89.7, 90.5},  {"train A->W interl", 88.2, 89.2, 88.7},
    {"train D->A interl", 75.5, 95.7, 84.4},  {"train D->W interl", 97.2, 97.8, 97.5},
    {"train W->A interl", 85.9, 94.1, 89.8},  {"train W->D interl", 99.6, 98.3, 98.9},
};

void hscore_reference(Outcome& out) {
  int ok = 0;
  for (const auto& r : kReference) {
    const double h = std::round(h_score(r.acc_known, r.acc_unknown) * 10.0) / 10.0;
    if (std::abs(h - r.h) <= 0.05 + 1e-9) {
      ++ok;
    } else {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s (%.1f, %.1f) -> %.2f, printed %.1f", r.where, r.acc_known, r.acc_unknown,
                    h_score(r.acc_known, r.acc_unknown), r.h);
      out.fail(buf);
    }
  }
  if (out.pass) out.detail << ok << "/" << std::size(kReference) << " rows";
  else out.detail << " [" << ok << "/" << std::size(kReference) << " rows match]";
}

// ---- loss spot values ---------------------------------------------------

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<long>(v.size()));
  long i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

void loss_spot_values(Outcome& out) {
  // Independent evaluations of the closed forms.
  const double nc = -(std::log(0.1) + std::log(0.9) + std::log(0.5)) / 3.0;
  const double ent = std::log(4.0) / 4.0;  // entropy of the uniform row divided by |L_s|
  const double agr = -(std::log(0.9) + std::log(0.8)) / 2.0;
  struct Case {
    const char* name;
    double got, oracle, published;
  } cases[] = {
      {"negative_constraint", losses::negative_constraint_loss(OpenSetOutput::from_probs(row({0.9, 0.1, 0.5}))).value(),
       nc, 1.0337},
      {"generator_entropy",
       losses::generator_entropy_loss(ClosedSetOutput::from_probs(row({0.25, 0.25, 0.25, 0.25}))).value(), ent, 0.3466},
      {"generator_agreement", losses::generator_agreement_loss(OpenSetOutput::from_probs(row({0.9, 0.8}))).value(), agr,
       0.1643},
  };
  for (const auto& c : cases) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s=%.6f", c.name, c.got);
    if (std::abs(c.got - c.published) > 1e-3 || std::abs(c.got - c.oracle) > 1e-3) out.fail(buf);
    else out.detail << buf << " ";
  }
}

// ---- gradient suite -------------------------------------------------------

void gradient_suite(Outcome& out) {
  Rng rng(1001);
  double worst[6] = {};
  const char* names[6] = {"closed_ce", "hncs", "oem", "negative_constraint", "generator_entropy", "generator_agreement"};
  for (int t = 0; t < 50; ++t) {
    const long n = 1 + static_cast<long>(rng.index(8)), k = 2 + static_cast<long>(rng.index(6));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    const Matrix cl = rng.normal_matrix(n, k, 2.0);
    const Matrix ol = rng.normal_matrix(n, 2 * k, 2.0);
    const auto co = ClosedSetOutput::from_logits(cl);
    const auto oo = OpenSetOutput::from_logits(ol);

    using F = std::function<double(const Matrix&)>;
    const F fs[6] = {
        [&](const Matrix& l) { return losses::closed_set_cross_entropy(ClosedSetOutput::from_logits(l), y).value(); },
        [&](const Matrix& l) {
          return losses::hard_negative_classifier_sampling_loss(OpenSetOutput::from_logits(l), y).value();
        },
        [&](const Matrix& l) { return losses::open_set_entropy_minimization(OpenSetOutput::from_logits(l)).value(); },
        [&](const Matrix& l) { return losses::negative_constraint_loss(OpenSetOutput::from_logits(l)).value(); },
        [&](const Matrix& l) { return losses::generator_entropy_loss(ClosedSetOutput::from_logits(l)).value(); },
        [&](const Matrix& l) { return losses::generator_agreement_loss(OpenSetOutput::from_logits(l)).value(); },
    };
    const Matrix analytic[6] = {
        losses::closed_set_cross_entropy(co, y).grad,          losses::hard_negative_classifier_sampling_loss(oo, y).grad,
        losses::open_set_entropy_minimization(oo).grad,        losses::negative_constraint_loss(oo).grad,
        losses::generator_entropy_loss(co).grad,               losses::generator_agreement_loss(oo).grad,
    };
    for (int i = 0; i < 6; ++i) {
      const Matrix& at = (i == 0 || i == 4) ? cl : ol;
      const double e = testing::relative_error(analytic[i], testing::numeric_gradient(fs[i], at, 1e-4));
      worst[i] = std::max(worst[i], e);
    }
  }
  for (int i = 0; i < 6; ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s max rel err %.2e", names[i], worst[i]);
    if (!(worst[i] < 1e-4)) out.fail(buf);
    else out.detail << buf << "; ";
  }
}

// ---- extraction oracle ----------------------------------------------------

std::set<long> brute_force_extract(OpenSetModel& model, const Matrix& x, double threshold) {
  // Recomputed from the heads directly: argmax of the closed head (first
  // index wins ties), then the unknown side of that class's one-vs-all pair.
  const Matrix feat = model.forward_features(x);
  const Matrix closed = model.closed_head().infer(feat);
  const Matrix open = model.open_head().infer(feat);
  std::set<long> out;
  for (long i = 0; i < x.rows(); ++i) {
    long best = 0;
    for (long k = 1; k < closed.cols(); ++k)
      if (closed(i, k) > closed(i, best)) best = k;
    const double a = open(i, 2 * best), b = open(i, 2 * best + 1);
    const double m = std::max(a, b);
    const double known = std::exp(a - m) / (std::exp(a - m) + std::exp(b - m));
    if (1.0 - known > threshold) out.insert(i);
  }
  return out;
}

std::set<long> indices(const NegativeSet& s) {
  std::set<long> out;
  for (const auto& it : s.items()) out.insert(it.sample_index);
  return out;
}

void extraction_oracle(Outcome& out) {
  SyntheticBenchmarkSpec spec;
  spec.n_known = 3;
  spec.n_unknown = 2;
  spec.samples_per_class = 200;
  auto bench = make_synthetic_benchmark(spec);
  TrainConfig cfg;
  cfg.strategy = Strategy::Baseline;
  cfg.total_iterations = 400;
  cfg.breakpoint_iteration = 200;
  cfg.seed = 5;
  auto model = train(cfg, bench.source, bench.target, bench.label_space).model;
  const Matrix& x = bench.target.samples();
  if (x.rows() != 1000) out.fail("target has " + std::to_string(x.rows()) + " samples");

  for (double thr : {0.5, 0.8, 0.9, 0.95}) {
    const auto got = indices(extract_negatives(*model, bench.target.unlabeled(), thr));
    const auto want = brute_force_extract(*model, x, thr);
    if (got != want) out.fail("mismatch at threshold " + std::to_string(thr));
    else out.detail << "thr " << thr << ": " << got.size() << " ";
  }

  // A sample whose unknown probability is exactly 0.90 must be left out.
  auto probe = testing::probe_model();
  RowVector z = testing::probe_input(0.9);
  bool found = false;
  for (int step = 0; step < 4000 && !found; ++step) {
    const double unk = 1.0 - probe->infer_one(z).known_prob;
    if (unk == 0.9) found = true;
    else z(0) = std::nextafter(z(0), unk < 0.9 ? 1e9 : -1e9);
  }
  if (!found) {
    out.fail("could not place a sample exactly at 0.90");
    return;
  }
  Matrix px(3, 2);
  px.row(0) = z;
  px.row(1) = testing::probe_input(0.97);
  px.row(2) = testing::probe_input(0.5);
  DomainDataset boundary("boundary", DomainRole::Target, DataMode::Vector, px, {"u0", "u0", "u0"});
  const auto got = indices(extract_negatives(*probe, boundary.unlabeled(), 0.90));
  const auto want = brute_force_extract(*probe, px, 0.90);
  if (got != std::set<long>{1} || want != got) out.fail("boundary sample at 0.90 was not excluded");
  else out.detail << "boundary ok";
}

// ---- schedule -------------------------------------------------------------

std::vector<Matrix> weights(OpenSetModel& m) {
  std::vector<Matrix> w;
  for (auto& [name, p] : m.named_parameters()) w.push_back(p->value);
  return w;
}

void schedule(Outcome& out) {
  SyntheticBenchmarkSpec spec;
  spec.samples_per_class = 40;
  auto bench = make_synthetic_benchmark(spec);

  TrainConfig c;
  c.strategy = Strategy::GenerationPP;
  c.total_iterations = 4000;
  c.breakpoint_iteration = 1000;
  c.interleave_interval = 1000;
  c.batch_size = 4;
  c.extraction_threshold = 0.0;
  c.backbone.feature_dim = 4;
  c.gan.gan_epochs = 1;
  c.gan.latent_dim = 4;
  c.gan.mlp_hidden = 8;
  c.gan.head_width = 8;
  c.gan.batch_size = 8;
  if (event_schedule(c) != std::vector<long>{1000, 2000, 3000}) out.fail("closed-form schedule differs");

  Trainer t(c, bench.source, bench.target, bench.label_space);
  t.run();
  std::set<long> extraction, gan;
  for (const auto& e : t.state().events) (e.kind == EventKind::Extraction ? extraction : gan).insert(e.iteration);
  if (extraction != std::set<long>{1000, 2000, 3000}) out.fail("extraction events differ");
  if (gan != std::set<long>{1000, 2000, 3000}) out.fail("GAN events differ");
  if (out.pass) out.detail << "events at 1000, 2000, 3000; ";

  TrainConfig z;
  z.strategy = Strategy::Original;
  z.total_iterations = 300;
  z.breakpoint_iteration = 150;
  z.lambda_neg = 0.0;
  z.extraction_threshold = 0.5;
  z.seed = 11;
  Trainer with(z, bench.source, bench.target, bench.label_space);
  with.run();
  z.strategy = Strategy::Baseline;
  Trainer base(z, bench.source, bench.target, bench.label_space);
  base.run();
  if (!with.state().negatives || with.state().negatives->empty()) out.fail("lambda=0 run extracted nothing");
  if (weights(with.model()) != weights(base.model())) out.fail("lambda=0 weights differ from base-only run");
  else out.detail << "lambda=0 bit-identical";
}

// ---- end-to-end direction -------------------------------------------------

struct Scores {
  double h = 0, known = 0, unknown = 0;
};

Scores run_synthetic(Strategy s, std::uint64_t seed) {
  SyntheticBenchmarkSpec spec;
  spec.seed = seed;
  auto bench = make_synthetic_benchmark(spec);
  TrainConfig cfg;
  cfg.strategy = s;
  cfg.lambda_neg = 0.2;
  cfg.seed = seed;
  auto model = train(cfg, bench.source, bench.target, bench.label_space).model;
  const auto r = evaluate(*model, bench.target, bench.label_space);
  return {*r.h_score, r.acc_known, *r.acc_unknown};
}

void end_to_end(Outcome& out) {
  Scores base, orig;
  const std::uint64_t seeds[] = {1, 2, 3, 4, 5};
  for (auto seed : seeds) {
    const auto b = run_synthetic(Strategy::Baseline, seed);
    const auto o = run_synthetic(Strategy::Original, seed);
    base.h += b.h / 5;
    base.unknown += b.unknown / 5;
    base.known += b.known / 5;
    orig.h += o.h / 5;
    orig.unknown += o.unknown / 5;
    orig.known += o.known / 5;
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "baseline Hsc %.2f unk %.2f known %.2f | original Hsc %.2f unk %.2f known %.2f", base.h,
                base.unknown, base.known, orig.h, orig.unknown, orig.known);
  out.detail << buf;
  if (!(orig.unknown >= base.unknown)) out.fail(std::string(buf) + " (Acc_unk dropped)");
  if (!(orig.h >= base.h - 2.0)) out.fail(std::string(buf) + " (Hsc dropped more than 2)");
}

// ---- openness -------------------------------------------------------------

void openness(Outcome& out) {
  SyntheticBenchmarkSpec spec;
  spec.n_unknown = 3;
  TrainFn fn = [](const DomainDataset& source, const DomainDataset& target, const LabelSpace& ls, int repeat) {
    TrainConfig cfg;
    cfg.strategy = Strategy::Original;
    cfg.seed = 100 + static_cast<std::uint64_t>(repeat);
    return train(cfg, source, target, ls).model;
  };
  const auto rows = openness_sweep(fn, spec, {1, 2, 3}, 3);
  double lo = 1e9, hi = -1e9;
  for (const auto& r : rows) {
    if (r.skipped) {
      out.fail("count " + std::to_string(r.unknown_count) + " skipped");
      continue;
    }
    lo = std::min(lo, r.mean_h_score);
    hi = std::max(hi, r.mean_h_score);
    out.detail << "|C_t\\C_s|=" << r.unknown_count << " Hsc " << r.mean_h_score << "; ";
  }
  out.detail << "spread " << hi - lo;
  if (!(hi - lo <= 10.0)) out.fail("spread " + std::to_string(hi - lo) + " > 10");
}

// ---- GAN smoke ------------------------------------------------------------

void gan_smoke(Outcome& out) {
  auto bench = make_synthetic_benchmark({});
  TrainConfig cfg;
  cfg.strategy = Strategy::Baseline;
  cfg.seed = 1;
  auto model = train(cfg, bench.source, bench.target, bench.label_space).model;
  const auto negatives = extract_negatives(*model, bench.target.unlabeled(), 0.9, cfg.breakpoint_iteration);
  if (negatives.empty()) {
    out.fail("no negatives extracted");
    return;
  }

  gan::GanConfig g;
  g.gan_epochs = 20;
  Rng rng(77);
  for (auto variant : {gan::DiscriminatorVariant::Standalone, gan::DiscriminatorVariant::SharedBackbone}) {
    g.disc_variant = variant;
    auto m = gan::make_gan(negatives, *model, g, rng);
    for (double scale : {1.0, 100.0}) {
      for (double s : gan::discriminator_score(*m.discriminator, rng.normal_matrix(200, 2, scale)))
        if (!(s > 0.0 && s < 1.0)) out.fail(gan::to_string(variant) + " score outside (0,1)");
    }
  }

  g.disc_variant = gan::DiscriminatorVariant::SharedBackbone;
  auto shared = gan::make_gan(negatives, *model, g, rng);
  auto dp = shared.discriminator->shared_backbone()->parameters();
  auto mp = model->backbone_parameters();
  bool same = shared.discriminator->shared_backbone().get() == model->backbone().get() && dp.size() == mp.size();
  for (std::size_t i = 0; same && i < dp.size(); ++i) same = dp[i] == mp[i];
  if (!same) out.fail("shared backbone is not the model's feature extractor");

  g.disc_variant = gan::DiscriminatorVariant::Standalone;
  auto r = gan::train_gan(negatives, *model, g, rng);
  const auto& hist = r.generator_epoch_loss;
  const double best = *std::min_element(hist.begin(), hist.end());
  char buf[128];
  std::snprintf(buf, sizeof buf, "generator loss epoch1 %.4f best %.4f over %zu epochs; ", hist.front(), best,
                hist.size());
  out.detail << buf;
  if (hist.size() < 20 || !(best < hist.front())) out.fail(buf);

  const Matrix feat = model->forward_features(r.last_terms.fakes);
  const double ent = losses::generator_entropy_loss(model->closed_probs(feat)).value();
  const double agree = losses::generator_agreement_loss(model->open_probs(feat)).value();
  const double d = std::max(std::abs(ent - r.last_terms.entropy), std::abs(agree - r.last_terms.agreement));
  out.detail << "term diff " << d;
  if (!(d <= 1e-10)) out.fail("constraint terms differ by " + std::to_string(d));
}

// ---- metric oracle --------------------------------------------------------

void metric_oracle(Outcome& out) {
  Rng rng(2024);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const int total_classes = 2 + static_cast<int>(rng.index(9));  // 2..10
    const int nk = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(total_classes)));
    const int nu = total_classes - nk;
    std::vector<std::string> known, unknown;
    for (int i = 0; i < nk; ++i) known.push_back("k" + std::to_string(i));
    for (int i = 0; i < nu; ++i) unknown.push_back("u" + std::to_string(i));
    const LabelSpace ls(known, unknown);
    const long n = 1 + static_cast<long>(rng.index(1000));
    std::vector<Decision> ds;
    ds.push_back({known[0], known[0]});
    for (long i = 1; i < n; ++i) {
      const std::size_t c = rng.index(known.size() + unknown.size());
      Decision d;
      d.true_class = c < known.size() ? known[c] : unknown[c - known.size()];
      if (rng.uniform() < 0.6) d.predicted = known[rng.index(known.size())];
      ds.push_back(d);
    }
    const auto r = evaluate_decisions(ds, ls);
    const auto o = testing::oracle_metrics(ds, known, unknown);
    bool ok = r.acc_known == o.acc_known && r.acc_unknown.has_value() == o.has_unknown;
    if (ok && o.has_unknown) ok = *r.acc_unknown == o.acc_unknown && *r.h_score == o.h;
    if (!ok) out.fail("table " + std::to_string(t) + " differs");
    else ++checked;
  }
  if (out.pass) out.detail << checked << " tables agree exactly";
}

struct Criterion {
  const char* name;
  void (*run)(Outcome&);
};

const Criterion kCriteria[] = {
    {"hscore-reference-rows", hscore_reference},
    {"loss-spot-values", loss_spot_values},
    {"gradient-suite", gradient_suite},
    {"extraction-oracle", extraction_oracle},
    {"schedule", schedule},
    {"end-to-end-direction", end_to_end},
    {"openness-stability", openness},
    {"gan-smoke", gan_smoke},
    {"metric-oracle", metric_oracle},
};

bool run(const Criterion& c) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.run(out);
  } catch (const std::exception& e) {
    out.fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (out.pass ? "PASS " : "FAIL ") << c.name << ": " << out.detail.str() << " (" << secs << " s)"
            << std::endl;
  return out.pass;
}

}  // namespace

int main(int argc, char** argv) {
  bool all = true;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) {
      const std::string want = argv[i];
      const auto it = std::find_if(std::begin(kCriteria), std::end(kCriteria),
                                   [&](const Criterion& c) { return want == c.name; });
      if (it == std::end(kCriteria)) {
        std::cerr << "unknown criterion: " << want << "\n";
        return 2;
      }
      all = run(*it) && all;
    }
  } else {
    for (const auto& c : kCriteria) all = run(c) && all;
  }
  return all ? 0 : 1;
}

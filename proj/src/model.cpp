#include "osda/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace osda {

// ---------------------------------------------------------------------------
// LabelSpace

LabelSpace::LabelSpace(std::vector<std::string> known, std::vector<std::string> unknown,
                       bool keep_order)
    : known_(std::move(known)), unknown_(std::move(unknown)) {
  if (known_.empty()) throw ContractError("label space: known set must be non-empty");
  if (!keep_order) {
    std::sort(known_.begin(), known_.end());
    std::sort(unknown_.begin(), unknown_.end());
  }
  std::set<std::string> seen;
  for (const auto& n : known_)
    if (!seen.insert(n).second) throw ContractError("label space: duplicate class '" + n + "'");
  for (const auto& n : unknown_)
    if (!seen.insert(n).second) throw ContractError("label space: class '" + n + "' is not disjoint");
}

std::vector<std::string> LabelSpace::all() const {
  std::vector<std::string> out = known_;
  out.insert(out.end(), unknown_.begin(), unknown_.end());
  return out;
}

std::optional<int> LabelSpace::known_index(const std::string& name) const {
  auto it = std::find(known_.begin(), known_.end(), name);
  if (it == known_.end()) return std::nullopt;
  return static_cast<int>(it - known_.begin());
}

bool LabelSpace::is_unknown(const std::string& name) const {
  return std::find(unknown_.begin(), unknown_.end(), name) != unknown_.end();
}

// ---------------------------------------------------------------------------
// Head outputs

namespace {

void require_finite(const Matrix& logits) {
  for (long i = 0; i < logits.rows(); ++i) {
    if (!logits.row(i).allFinite()) throw NumericError("non-finite logits", i);
  }
}

double pair_known_prob(double known_logit, double unknown_logit) {
  const double d = known_logit - unknown_logit;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace

Matrix softmax_rows(const Matrix& logits) {
  require_finite(logits);
  Matrix probs(logits.rows(), logits.cols());
  for (long i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - m).exp().matrix();
    probs.row(i) = e / e.sum();
  }
  return probs;
}

int argmax_row(const Matrix& m, long row) {
  int best = 0;
  for (long k = 1; k < m.cols(); ++k)
    if (m(row, k) > m(row, best)) best = static_cast<int>(k);
  return best;
}

ClosedSetOutput ClosedSetOutput::from_logits(Matrix logits) {
  Matrix probs = softmax_rows(logits);
  return {std::move(logits), std::move(probs)};
}

ClosedSetOutput ClosedSetOutput::from_probs(Matrix probs) { return {Matrix(), std::move(probs)}; }

OpenSetOutput OpenSetOutput::from_logits(Matrix logits) {
  if (logits.cols() % 2 != 0) throw ContractError("open-set logits must come in (known, unknown) pairs");
  require_finite(logits);
  Matrix p(logits.rows(), logits.cols() / 2);
  for (long i = 0; i < logits.rows(); ++i)
    for (long k = 0; k < p.cols(); ++k) p(i, k) = pair_known_prob(logits(i, 2 * k), logits(i, 2 * k + 1));
  return {std::move(logits), std::move(p)};
}

OpenSetOutput OpenSetOutput::from_probs(Matrix known_probs) { return {Matrix(), std::move(known_probs)}; }

ClosedSetOutput closed_probs(const Matrix& features, nn::Sequential& head) {
  return ClosedSetOutput::from_logits(head.infer(features));
}

OpenSetOutput open_probs(const Matrix& features, nn::Sequential& head) {
  return OpenSetOutput::from_logits(head.infer(features));
}

std::vector<Prediction> decide(const ClosedSetOutput& closed, const OpenSetOutput& open) {
  if (closed.batch() != open.batch() || closed.classes() != open.classes())
    throw ContractError("decide: closed/open outputs disagree in shape");
  std::vector<Prediction> out;
  out.reserve(closed.batch());
  for (long i = 0; i < closed.batch(); ++i) {
    Prediction p;
    p.pseudo_label = argmax_row(closed.probs, i);
    p.known_prob = open.known_probs(i, p.pseudo_label);
    p.is_known = p.known_prob >= kKnownThreshold;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backbones

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Mlp: return "mlp";
    case BackboneKind::Conv: return "conv";
    case BackboneKind::ResNet50: return "resnet50";
  }
  return "?";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "mlp") return BackboneKind::Mlp;
  if (s == "conv") return BackboneKind::Conv;
  if (s == "resnet50") return BackboneKind::ResNet50;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

nn::Sequential build_backbone(const BackboneSpec& spec, Rng& rng) {
  using nn::ActivationKind;
  nn::Sequential net;
  if (spec.feature_dim < 1) throw ConfigError("backbone: feature_dim must be positive");
  switch (spec.kind) {
    case BackboneKind::Mlp: {
      if (spec.input_dim < 1) throw ConfigError("mlp backbone: input_dim must be positive");
      long width = spec.input_dim;
      for (long h : spec.hidden) {
        net.add<nn::Linear>(width, h, rng);
        if (spec.batch_norm) net.add<nn::BatchNorm>(h, 1);
        net.add<nn::Activation>(ActivationKind::ReLU, h);
        width = h;
      }
      net.add<nn::Linear>(width, spec.feature_dim, rng);
      net.add<nn::Activation>(ActivationKind::ReLU, spec.feature_dim);
      break;
    }
    case BackboneKind::Conv: {
      nn::ImageShape shape = spec.image;
      if (shape.size() < 1) throw ConfigError("conv backbone: empty image shape");
      for (long c : spec.conv_channels) {
        auto& conv = net.add<nn::Conv2d>(shape, c, 3, 2, 1, rng);
        shape = conv.output_shape();
        if (spec.batch_norm) net.add<nn::BatchNorm>(shape.channels, shape.height * shape.width);
        net.add<nn::Activation>(ActivationKind::ReLU, shape.size());
      }
      net.add<nn::GlobalAvgPool>(shape);
      net.add<nn::Linear>(shape.channels, spec.feature_dim, rng);
      net.add<nn::Activation>(ActivationKind::ReLU, spec.feature_dim);
      break;
    }
    case BackboneKind::ResNet50:
      throw ConfigError(
          "resnet50 backbone needs externally supplied pretrained weights, which are not bundled; "
          "use the mlp or conv backbone");
  }
  return net;
}

// ---------------------------------------------------------------------------
// OpenSetModel

OpenSetModel::OpenSetModel(LabelSpace labels, BackboneSpec spec, std::uint64_t init_seed)
    : labels_(std::move(labels)), spec_(std::move(spec)) {
  Rng rng = Rng::derive(init_seed, 0x6d6f64656cULL);
  backbone_ = std::make_shared<nn::Sequential>(build_backbone(spec_, rng));
  const long d = backbone_->output_width();
  const long k = static_cast<long>(labels_.num_known());
  closed_head_.add<nn::Linear>(d, k, rng);
  open_head_.add<nn::Linear>(d, 2 * k, rng);
}

Matrix OpenSetModel::forward_features(const Matrix& batch) {
  if (batch.cols() != backbone_->input_width()) {
    throw ContractError("forward_features: sample width " + std::to_string(batch.cols()) +
                        " does not match backbone input width " + std::to_string(backbone_->input_width()));
  }
  Matrix f = backbone_->infer(batch);
  for (long i = 0; i < f.rows(); ++i)
    if (!f.row(i).allFinite()) throw NumericError("non-finite features", i);
  return f;
}

std::vector<Prediction> OpenSetModel::infer(const Matrix& batch) {
  const Matrix f = forward_features(batch);
  return decide(closed_probs(f), open_probs(f));
}

Prediction OpenSetModel::infer_one(const RowVector& sample) {
  Matrix batch = sample;
  return infer(batch).front();
}

OpenSetModel::Pass OpenSetModel::forward(const Matrix& batch, nn::Mode mode) {
  if (batch.cols() != backbone_->input_width())
    throw ContractError("forward: sample width does not match backbone input width");
  Pass pass;
  pass.features = backbone_->forward(batch, mode, &pass.backbone);
  pass.closed = ClosedSetOutput::from_logits(closed_head_.forward(pass.features, mode, &pass.closed_head));
  pass.open = OpenSetOutput::from_logits(open_head_.forward(pass.features, mode, &pass.open_head));
  return pass;
}

Matrix OpenSetModel::backward(const Pass& pass, const Matrix* grad_closed_logits,
                              const Matrix* grad_open_logits) {
  Matrix grad_features = Matrix::Zero(pass.features.rows(), pass.features.cols());
  if (grad_closed_logits) grad_features += closed_head_.backward(*grad_closed_logits, pass.closed_head);
  if (grad_open_logits) grad_features += open_head_.backward(*grad_open_logits, pass.open_head);
  return backbone_->backward(grad_features, pass.backbone);
}

void OpenSetModel::zero_grad() {
  backbone_->zero_grad();
  closed_head_.zero_grad();
  open_head_.zero_grad();
}

std::vector<nn::Parameter*> OpenSetModel::head_parameters() {
  std::vector<nn::Parameter*> out = closed_head_.parameters();
  for (auto* p : open_head_.parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, nn::Parameter*>> OpenSetModel::named_parameters() {
  std::vector<std::pair<std::string, nn::Parameter*>> out;
  for (auto& [n, p] : backbone_->named_parameters()) out.emplace_back("backbone." + n, p);
  for (auto& [n, p] : closed_head_.named_parameters()) out.emplace_back("closed." + n, p);
  for (auto& [n, p] : open_head_.named_parameters()) out.emplace_back("open." + n, p);
  return out;
}

std::vector<nn::Buffer> OpenSetModel::buffers() {
  std::vector<nn::Buffer> out;
  for (auto b : backbone_->buffers()) {
    b.name = "backbone." + b.name;
    out.push_back(b);
  }
  return out;
}

}  // namespace osda

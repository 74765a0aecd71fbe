#include "osda/nn.hpp"

#include <cmath>

namespace osda::nn {

namespace {

Matrix uniform_init(long rows, long cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

void check_width(const Matrix& x, long expected, const char* layer) {
  if (x.cols() != expected) {
    throw ContractError(std::string(layer) + ": expected input width " + std::to_string(expected) +
                        ", got " + std::to_string(x.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(long in, long out, Rng& rng) {
  if (in < 1 || out < 1) throw ContractError("linear: widths must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = {"weight", uniform_init(out, in, bound, rng), Matrix::Zero(out, in)};
  bias_ = {"bias", uniform_init(1, out, bound, rng), Matrix::Zero(1, out)};
}

Matrix Linear::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "linear");
  if (cache) *cache = {x};
  Matrix y = x * weight_.value.transpose();
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out, const LayerCache& cache) {
  const Matrix& x = cache.at(0);
  weight_.grad.noalias() += grad_out.transpose() * x;
  bias_.grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight_.value;
}

// ---------------------------------------------------------------------------
// Activation

std::string Activation::kind() const {
  switch (kind_) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "leakyrelu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
  }
  return "activation";
}

Matrix Activation::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, width_, "activation");
  Matrix y;
  switch (kind_) {
    case ActivationKind::ReLU: y = x.cwiseMax(0.0); break;
    case ActivationKind::LeakyReLU:
      y = x.unaryExpr([leak = leak_](double v) { return v > 0.0 ? v : leak * v; });
      break;
    case ActivationKind::Tanh: y = x.array().tanh().matrix(); break;
    case ActivationKind::Sigmoid:
      y = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
  }
  if (cache) {
    // ReLU-style layers need the input sign, smooth ones their output.
    if (kind_ == ActivationKind::ReLU || kind_ == ActivationKind::LeakyReLU) {
      *cache = {x};
    } else {
      *cache = {y};
    }
  }
  return y;
}

Matrix Activation::backward(const Matrix& grad_out, const LayerCache& cache) {
  const Matrix& c = cache.at(0);
  switch (kind_) {
    case ActivationKind::ReLU:
      return grad_out.binaryExpr(c, [](double g, double v) { return v > 0.0 ? g : 0.0; });
    case ActivationKind::LeakyReLU:
      return grad_out.binaryExpr(c, [leak = leak_](double g, double v) { return v > 0.0 ? g : leak * g; });
    case ActivationKind::Tanh:
      return grad_out.binaryExpr(c, [](double g, double y) { return g * (1.0 - y * y); });
    case ActivationKind::Sigmoid:
      return grad_out.binaryExpr(c, [](double g, double y) { return g * y * (1.0 - y); });
  }
  return grad_out;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(long channels, long spatial, double momentum, double eps)
    : channels_(channels), spatial_(spatial), momentum_(momentum), eps_(eps) {
  gamma_ = {"gamma", Matrix::Ones(1, channels), Matrix::Zero(1, channels)};
  beta_ = {"beta", Matrix::Zero(1, channels), Matrix::Zero(1, channels)};
  running_mean_ = Matrix::Zero(1, channels);
  running_var_ = Matrix::Ones(1, channels);
}

Matrix BatchNorm::forward(const Matrix& x, Mode mode, LayerCache* cache) {
  check_width(x, input_width(), "batchnorm");
  const bool batch_stats = mode == Mode::Train && !frozen_;
  const long n = x.rows();
  const double m = static_cast<double>(n * spatial_);
  if (batch_stats && m < 2) throw ContractError("batchnorm: training needs more than one value per channel");

  Matrix y(x.rows(), x.cols());
  Matrix xhat(x.rows(), x.cols());
  Matrix inv_std(1, channels_);
  for (long c = 0; c < channels_; ++c) {
    auto block = x.middleCols(c * spatial_, spatial_);
    double mean, var;
    if (batch_stats) {
      mean = block.sum() / m;
      var = (block.array() - mean).square().sum() / m;
      running_mean_(0, c) = (1 - momentum_) * running_mean_(0, c) + momentum_ * mean;
      running_var_(0, c) = (1 - momentum_) * running_var_(0, c) + momentum_ * var * m / (m - 1);
    } else {
      mean = running_mean_(0, c);
      var = running_var_(0, c);
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std(0, c) = is;
    xhat.middleCols(c * spatial_, spatial_) = (block.array() - mean) * is;
    y.middleCols(c * spatial_, spatial_) =
        xhat.middleCols(c * spatial_, spatial_).array() * gamma_.value(0, c) + beta_.value(0, c);
  }
  if (cache) *cache = {xhat, inv_std, Matrix::Constant(1, 1, batch_stats ? 1.0 : 0.0)};
  return y;
}

Matrix BatchNorm::backward(const Matrix& grad_out, const LayerCache& cache) {
  const Matrix& xhat = cache.at(0);
  const Matrix& inv_std = cache.at(1);
  const bool batch_stats = cache.at(2)(0, 0) != 0.0;
  const double m = static_cast<double>(grad_out.rows() * spatial_);
  Matrix dx(grad_out.rows(), grad_out.cols());
  for (long c = 0; c < channels_; ++c) {
    auto g = grad_out.middleCols(c * spatial_, spatial_).array();
    auto xh = xhat.middleCols(c * spatial_, spatial_).array();
    gamma_.grad(0, c) += (g * xh).sum();
    beta_.grad(0, c) += g.sum();
    const double gamma = gamma_.value(0, c);
    const double is = inv_std(0, c);
    if (batch_stats) {
      const double sum_g = g.sum();
      const double sum_gx = (g * xh).sum();
      dx.middleCols(c * spatial_, spatial_) =
          ((gamma * is / m) * (m * g - sum_g - xh * sum_gx)).matrix();
    } else {
      dx.middleCols(c * spatial_, spatial_) = (g * (gamma * is)).matrix();
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Convolutions

Matrix im2col(const double* image, ImageShape shape, long kernel, long stride, long pad,
              long out_h, long out_w) {
  Matrix cols = Matrix::Zero(shape.channels * kernel * kernel, out_h * out_w);
  for (long c = 0; c < shape.channels; ++c) {
    const double* plane = image + c * shape.height * shape.width;
    for (long ky = 0; ky < kernel; ++ky) {
      for (long kx = 0; kx < kernel; ++kx) {
        const long row = (c * kernel + ky) * kernel + kx;
        for (long oy = 0; oy < out_h; ++oy) {
          const long iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= shape.height) continue;
          for (long ox = 0; ox < out_w; ++ox) {
            const long ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= shape.width) continue;
            cols(row, oy * out_w + ox) = plane[iy * shape.width + ix];
          }
        }
      }
    }
  }
  return cols;
}

void col2im(const Matrix& cols, double* image, ImageShape shape, long kernel, long stride, long pad,
            long out_h, long out_w) {
  for (long c = 0; c < shape.channels; ++c) {
    double* plane = image + c * shape.height * shape.width;
    for (long ky = 0; ky < kernel; ++ky) {
      for (long kx = 0; kx < kernel; ++kx) {
        const long row = (c * kernel + ky) * kernel + kx;
        for (long oy = 0; oy < out_h; ++oy) {
          const long iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= shape.height) continue;
          for (long ox = 0; ox < out_w; ++ox) {
            const long ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= shape.width) continue;
            plane[iy * shape.width + ix] += cols(row, oy * out_w + ox);
          }
        }
      }
    }
  }
}

Conv2d::Conv2d(ImageShape in, long out_channels, long kernel, long stride, long pad, Rng& rng)
    : in_(in), kernel_(kernel), stride_(stride), pad_(pad) {
  const long oh = (in.height + 2 * pad - kernel) / stride + 1;
  const long ow = (in.width + 2 * pad - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw ContractError("conv2d: kernel larger than padded input");
  out_ = {out_channels, oh, ow};
  const long fan_in = in.channels * kernel * kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight_ = {"weight", uniform_init(out_channels, fan_in, bound, rng), Matrix::Zero(out_channels, fan_in)};
  bias_ = {"bias", uniform_init(1, out_channels, bound, rng), Matrix::Zero(1, out_channels)};
}

Matrix Conv2d::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "conv2d");
  Matrix y(x.rows(), out_.size());
  for (long n = 0; n < x.rows(); ++n) {
    Matrix cols = im2col(x.row(n).data(), in_, kernel_, stride_, pad_, out_.height, out_.width);
    Matrix out = weight_.value * cols;
    out.colwise() += bias_.value.row(0).transpose();
    y.row(n) = Eigen::Map<const RowVector>(out.data(), out.size());
  }
  if (cache) *cache = {x};
  return y;
}

Matrix Conv2d::backward(const Matrix& grad_out, const LayerCache& cache) {
  const Matrix& x = cache.at(0);
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  const long pixels = out_.height * out_.width;
  for (long n = 0; n < x.rows(); ++n) {
    Matrix cols = im2col(x.row(n).data(), in_, kernel_, stride_, pad_, out_.height, out_.width);
    Eigen::Map<const Matrix> g(grad_out.row(n).data(), out_.channels, pixels);
    weight_.grad.noalias() += g * cols.transpose();
    bias_.grad.row(0) += g.rowwise().sum().transpose();
    Matrix dcols = weight_.value.transpose() * g;
    col2im(dcols, dx.row(n).data(), in_, kernel_, stride_, pad_, out_.height, out_.width);
  }
  return dx;
}

ConvTranspose2d::ConvTranspose2d(ImageShape in, long out_channels, long kernel, long stride,
                                 long pad, Rng& rng)
    : in_(in), kernel_(kernel), stride_(stride), pad_(pad) {
  const long oh = (in.height - 1) * stride - 2 * pad + kernel;
  const long ow = (in.width - 1) * stride - 2 * pad + kernel;
  if (oh < 1 || ow < 1) throw ContractError("convtranspose2d: empty output");
  out_ = {out_channels, oh, ow};
  const long fan = out_channels * kernel * kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in.channels * kernel * kernel));
  weight_ = {"weight", uniform_init(in.channels, fan, bound, rng), Matrix::Zero(in.channels, fan)};
  bias_ = {"bias", uniform_init(1, out_channels, bound, rng), Matrix::Zero(1, out_channels)};
}

Matrix ConvTranspose2d::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "convtranspose2d");
  Matrix y = Matrix::Zero(x.rows(), out_.size());
  const long in_pixels = in_.height * in_.width;
  const long out_pixels = out_.height * out_.width;
  for (long n = 0; n < x.rows(); ++n) {
    Eigen::Map<const Matrix> xs(x.row(n).data(), in_.channels, in_pixels);
    Matrix cols = weight_.value.transpose() * xs;
    col2im(cols, y.row(n).data(), out_, kernel_, stride_, pad_, in_.height, in_.width);
    Eigen::Map<Matrix> ys(y.row(n).data(), out_.channels, out_pixels);
    ys.colwise() += bias_.value.row(0).transpose();
  }
  if (cache) *cache = {x};
  return y;
}

Matrix ConvTranspose2d::backward(const Matrix& grad_out, const LayerCache& cache) {
  const Matrix& x = cache.at(0);
  Matrix dx(x.rows(), x.cols());
  const long in_pixels = in_.height * in_.width;
  const long out_pixels = out_.height * out_.width;
  for (long n = 0; n < x.rows(); ++n) {
    Eigen::Map<const Matrix> g(grad_out.row(n).data(), out_.channels, out_pixels);
    bias_.grad.row(0) += g.rowwise().sum().transpose();
    Matrix gcols = im2col(grad_out.row(n).data(), out_, kernel_, stride_, pad_, in_.height, in_.width);
    Eigen::Map<const Matrix> xs(x.row(n).data(), in_.channels, in_pixels);
    weight_.grad.noalias() += xs * gcols.transpose();
    Matrix dxs = weight_.value * gcols;
    dx.row(n) = Eigen::Map<const RowVector>(dxs.data(), dxs.size());
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling, resampling, fixed affine

Matrix GlobalAvgPool::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "globalavgpool");
  const long s = in_.height * in_.width;
  Matrix y(x.rows(), in_.channels);
  for (long c = 0; c < in_.channels; ++c) y.col(c) = x.middleCols(c * s, s).rowwise().mean();
  if (cache) cache->clear();
  return y;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out, const LayerCache&) {
  const long s = in_.height * in_.width;
  Matrix dx(grad_out.rows(), in_.size());
  for (long c = 0; c < in_.channels; ++c) {
    dx.middleCols(c * s, s) = (grad_out.col(c) / static_cast<double>(s)).replicate(1, s);
  }
  return dx;
}

namespace {

std::vector<std::pair<long, double>> interp_axis(long out_size, long in_size, long dst) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  double src = (dst + 0.5) * scale - 0.5;
  if (src < 0) src = 0;
  long i0 = static_cast<long>(std::floor(src));
  if (i0 > in_size - 1) i0 = in_size - 1;
  const long i1 = std::min(i0 + 1, in_size - 1);
  const double w = src - i0;
  if (i1 == i0 || w == 0.0) return {{i0, 1.0}};
  return {{i0, 1.0 - w}, {i1, w}};
}

}  // namespace

Resample::Resample(ImageShape in, long out_height, long out_width)
    : in_(in), out_{in.channels, out_height, out_width} {
  std::vector<Eigen::Triplet<double>> triplets;
  for (long oy = 0; oy < out_height; ++oy) {
    const auto ys = interp_axis(out_height, in.height, oy);
    for (long ox = 0; ox < out_width; ++ox) {
      const auto xs = interp_axis(out_width, in.width, ox);
      for (auto [iy, wy] : ys)
        for (auto [ix, wx] : xs) triplets.emplace_back(oy * out_width + ox, iy * in.width + ix, wy * wx);
    }
  }
  interp_.resize(out_height * out_width, in.height * in.width);
  interp_.setFromTriplets(triplets.begin(), triplets.end());
}

Matrix Resample::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "resample");
  const long si = in_.height * in_.width;
  const long so = out_.height * out_.width;
  Matrix y(x.rows(), out_.size());
  for (long c = 0; c < in_.channels; ++c) {
    y.middleCols(c * so, so) = (interp_ * x.middleCols(c * si, si).transpose()).transpose();
  }
  if (cache) cache->clear();
  return y;
}

Matrix Resample::backward(const Matrix& grad_out, const LayerCache&) {
  const long si = in_.height * in_.width;
  const long so = out_.height * out_.width;
  Matrix dx(grad_out.rows(), in_.size());
  for (long c = 0; c < in_.channels; ++c) {
    dx.middleCols(c * si, si) =
        (interp_.transpose() * grad_out.middleCols(c * so, so).transpose()).transpose();
  }
  return dx;
}

FixedAffine::FixedAffine(RowVector scale, RowVector shift) : scale_(scale), shift_(shift) {
  if (scale.size() != shift.size()) throw ContractError("fixedaffine: scale/shift size mismatch");
}

Matrix FixedAffine::forward(const Matrix& x, Mode, LayerCache* cache) {
  check_width(x, input_width(), "fixedaffine");
  if (cache) cache->clear();
  Matrix y = x.array().rowwise() * scale_.row(0).array();
  y.rowwise() += shift_.row(0);
  return y;
}

Matrix FixedAffine::backward(const Matrix& grad_out, const LayerCache&) {
  return grad_out.array().rowwise() * scale_.row(0).array();
}

// ---------------------------------------------------------------------------
// Sequential

void Sequential::push(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->output_width() != layer->input_width()) {
    throw ContractError("sequential: layer " + layer->kind() + " expects width " +
                        std::to_string(layer->input_width()) + " but previous layer yields " +
                        std::to_string(layers_.back()->output_width()));
  }
  layers_.push_back(std::move(layer));
}

long Sequential::input_width() const {
  if (layers_.empty()) throw ContractError("sequential: empty network");
  return layers_.front()->input_width();
}

long Sequential::output_width() const {
  if (layers_.empty()) throw ContractError("sequential: empty network");
  return layers_.back()->output_width();
}

Matrix Sequential::forward(const Matrix& x, Mode mode, Trace* trace) {
  if (trace) trace->assign(layers_.size(), {});
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, mode, trace ? &(*trace)[i] : nullptr);
  }
  return h;
}

Matrix Sequential::infer(const Matrix& x) { return forward(x, Mode::Eval, nullptr); }

Matrix Sequential::backward(const Matrix& grad_out, const Trace& trace) {
  if (trace.size() != layers_.size()) throw ContractError("sequential: trace does not match network");
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, trace[i]);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (Parameter* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Parameter*>> Sequential::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Parameter* p : layers_[i]->parameters())
      out.emplace_back(std::to_string(i) + "." + layers_[i]->kind() + "." + p->name, p);
  return out;
}

std::vector<Buffer> Sequential::buffers() {
  std::vector<Buffer> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Buffer b : layers_[i]->buffers()) {
      b.name = std::to_string(i) + "." + layers_[i]->kind() + "." + b.name;
      out.push_back(b);
    }
  }
  return out;
}

void Sequential::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void Sequential::set_batchnorm_frozen(bool frozen) {
  for (auto& l : layers_)
    if (auto* bn = dynamic_cast<BatchNorm*>(l.get())) bn->set_frozen(frozen);
}

}  // namespace osda::nn

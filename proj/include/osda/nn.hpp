#pragma once

// Minimal neural-network layer stack with explicit backward passes.
//
// Every layer maps a batch (one sample per row) to a batch. Forward passes
// write what the backward pass needs into a caller-owned cache, so one network
// can be evaluated on several batches before any of them is backpropagated.
// Backward passes accumulate into Parameter::grad and return the gradient with
// respect to the layer input.

#include "osda/common.hpp"

#include <Eigen/SparseCore>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace osda::nn {

enum class Mode { Train, Eval };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Non-trainable persistent state (batch-norm statistics, fixed affine maps).
struct Buffer {
  std::string name;
  Matrix* value;
};

using LayerCache = std::vector<Matrix>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual long input_width() const = 0;
  virtual long output_width() const = 0;

  // `cache` may be null when no backward pass will follow.
  virtual Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) = 0;
  virtual Matrix backward(const Matrix& grad_out, const LayerCache& cache) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::vector<Buffer> buffers() { return {}; }
};

class Linear final : public Layer {
 public:
  Linear(long in, long out, Rng& rng);

  std::string kind() const override { return "linear"; }
  long input_width() const override { return weight_.value.cols(); }
  long output_width() const override { return weight_.value.rows(); }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // out x in
  Parameter bias_;    // 1 x out
};

enum class ActivationKind { ReLU, LeakyReLU, Tanh, Sigmoid };

class Activation final : public Layer {
 public:
  Activation(ActivationKind kind, long width, double leak = 0.2)
      : kind_(kind), width_(width), leak_(leak) {}

  std::string kind() const override;
  long input_width() const override { return width_; }
  long output_width() const override { return width_; }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;

 private:
  ActivationKind kind_;
  long width_;
  double leak_;
};

// Batch normalization over `channels` groups of `spatial` contiguous columns.
// spatial = 1 gives the vector variant.
class BatchNorm final : public Layer {
 public:
  BatchNorm(long channels, long spatial, double momentum = 0.1, double eps = 1e-5);

  std::string kind() const override { return "batchnorm"; }
  long input_width() const override { return channels_ * spatial_; }
  long output_width() const override { return channels_ * spatial_; }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

  // When frozen, train-mode passes normalize with the running statistics and
  // leave them untouched.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

 private:
  long channels_;
  long spatial_;
  double momentum_;
  double eps_;
  bool frozen_ = false;
  Parameter gamma_;
  Parameter beta_;
  Matrix running_mean_;
  Matrix running_var_;
};

struct ImageShape {
  long channels = 0;
  long height = 0;
  long width = 0;

  long size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

class Conv2d final : public Layer {
 public:
  Conv2d(ImageShape in, long out_channels, long kernel, long stride, long pad, Rng& rng);

  std::string kind() const override { return "conv2d"; }
  long input_width() const override { return in_.size(); }
  long output_width() const override { return out_.size(); }
  ImageShape output_shape() const { return out_; }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  ImageShape in_, out_;
  long kernel_, stride_, pad_;
  Parameter weight_;  // out_c x (in_c * k * k)
  Parameter bias_;    // 1 x out_c
};

class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(ImageShape in, long out_channels, long kernel, long stride, long pad,
                  Rng& rng);

  std::string kind() const override { return "convtranspose2d"; }
  long input_width() const override { return in_.size(); }
  long output_width() const override { return out_.size(); }
  ImageShape output_shape() const { return out_; }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

 private:
  ImageShape in_, out_;
  long kernel_, stride_, pad_;
  Parameter weight_;  // in_c x (out_c * k * k)
  Parameter bias_;    // 1 x out_c
};

// Mean over the spatial extent of each channel.
class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(ImageShape in) : in_(in) {}

  std::string kind() const override { return "globalavgpool"; }
  long input_width() const override { return in_.size(); }
  long output_width() const override { return in_.channels; }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;

 private:
  ImageShape in_;
};

// Bilinear resize (half-pixel centers, edge clamped). Linear in its input, so
// the backward pass is the transposed interpolation.
class Resample final : public Layer {
 public:
  Resample(ImageShape in, long out_height, long out_width);

  std::string kind() const override { return "resample"; }
  long input_width() const override { return in_.size(); }
  long output_width() const override { return out_.size(); }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;

 private:
  ImageShape in_, out_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> interp_;  // (out_h*out_w) x (in_h*in_w)
};

// Fixed per-column affine map y = x * scale + shift.
class FixedAffine final : public Layer {
 public:
  FixedAffine(RowVector scale, RowVector shift);

  std::string kind() const override { return "fixedaffine"; }
  long input_width() const override { return scale_.cols(); }
  long output_width() const override { return scale_.cols(); }
  Matrix forward(const Matrix& x, Mode mode, LayerCache* cache) override;
  Matrix backward(const Matrix& grad_out, const LayerCache& cache) override;
  std::vector<Buffer> buffers() override { return {{"scale", &scale_}, {"shift", &shift_}}; }

 private:
  Matrix scale_;
  Matrix shift_;
};

// Per-layer caches from one forward pass through a Sequential.
using Trace = std::vector<LayerCache>;

class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential&) = delete;
  Sequential& operator=(const Sequential&) = delete;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    push(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer> layer);

  long input_width() const;
  long output_width() const;
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

  Matrix forward(const Matrix& x, Mode mode, Trace* trace);
  // Pure evaluation pass; does not touch any state.
  Matrix infer(const Matrix& x);
  Matrix backward(const Matrix& grad_out, const Trace& trace);

  std::vector<Parameter*> parameters();
  // Names are "<index>.<kind>.<param>".
  std::vector<std::pair<std::string, Parameter*>> named_parameters();
  std::vector<Buffer> buffers();
  void zero_grad();
  void set_batchnorm_frozen(bool frozen);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// im2col over a (C, H, W) image: rows are (c, ky, kx), columns output pixels.
Matrix im2col(const double* image, ImageShape shape, long kernel, long stride, long pad,
              long out_h, long out_w);
// Adjoint of im2col: scatters columns back into `image` (accumulating).
void col2im(const Matrix& cols, double* image, ImageShape shape, long kernel, long stride,
            long pad, long out_h, long out_w);

}  // namespace osda::nn

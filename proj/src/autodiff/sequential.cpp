#include "gmint/autodiff/sequential.h"

#include <cstdio>

#include "gmint/autodiff/init.h"
#include "gmint/autodiff/ops.h"
#include "gmint/common/errors.h"

namespace gmint::ad {

Sequential::Sequential(std::size_t input_width) : input_width_(input_width), width_(input_width) {
  if (input_width == 0) throw DimensionError("Sequential: input width must be positive");
}

std::string Sequential::next_dense_prefix() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer%02zu.dense", dense_count_);
  return buf;
}

Sequential& Sequential::identity() {
  layers_.push_back({LayerKind::identity, {}, {}});
  return *this;
}

Sequential& Sequential::dense(std::size_t out_width, std::uint64_t seed) {
  std::string prefix = next_dense_prefix();
  Tensor w = glorot_uniform({width_, out_width}, seed, prefix + ".weight");
  return dense(std::move(w), Tensor({out_width}));
}

Sequential& Sequential::dense(Tensor weight, Tensor bias) {
  if (weight.rank() != 2 || weight.dim(0) != width_ || bias.shape() != Shape{weight.dim(1)})
    throw DimensionError("Sequential: dense layer " + to_string(weight.shape()) + " + bias " +
                         to_string(bias.shape()) + " does not follow width " + std::to_string(width_));
  std::string prefix = next_dense_prefix();
  width_ = weight.dim(1);
  params_.add(prefix + ".weight", std::move(weight));
  params_.add(prefix + ".bias", std::move(bias));
  layers_.push_back({LayerKind::dense, prefix + ".weight", prefix + ".bias"});
  ++dense_count_;
  return *this;
}

Sequential& Sequential::relu() {
  layers_.push_back({LayerKind::relu, {}, {}});
  return *this;
}

Sequential& Sequential::sigmoid() {
  layers_.push_back({LayerKind::sigmoid, {}, {}});
  return *this;
}

Sequential& Sequential::softmax() {
  layers_.push_back({LayerKind::softmax, {}, {}});
  return *this;
}

Var Sequential::forward(Tape& tape, Var input) const {
  if (input.value().inner() != input_width_)
    throw DimensionError("Sequential: expected input width " + std::to_string(input_width_) +
                         ", got shape " + to_string(input.shape()));
  tape.bind(params_);
  Var x = input;
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::identity:
        break;
      case LayerKind::dense:
        x = add(matmul(x, tape.param(layer.weight)), tape.param(layer.bias));
        break;
      case LayerKind::relu:
        x = ad::relu(x);
        break;
      case LayerKind::sigmoid:
        x = ad::sigmoid(x);
        break;
      case LayerKind::softmax:
        x = ad::softmax(x);
        break;
    }
  }
  return x;
}

Tensor Sequential::forward(const Tensor& input) const {
  Tape tape;
  return forward(tape, tape.constant(input)).value();
}

}  // namespace gmint::ad

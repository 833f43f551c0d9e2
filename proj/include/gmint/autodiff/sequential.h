#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmint/autodiff/parameters.h"
#include "gmint/autodiff/tape.h"

namespace gmint::ad {

enum class LayerKind { identity, dense, relu, sigmoid, softmax };

struct Layer {
  LayerKind kind;
  std::string weight;  // dense only
  std::string bias;    // dense only
};

// Feed-forward graph over inputs whose last axis has the declared width.
// Dense layers own parameters "layerNN.dense.weight" [in, out] and
// "layerNN.dense.bias" [out], NN counting dense layers from 00.
class Sequential {
 public:
  explicit Sequential(std::size_t input_width);

  Sequential& identity();
  Sequential& dense(std::size_t out_width, std::uint64_t seed);
  Sequential& dense(Tensor weight, Tensor bias);
  Sequential& relu();
  Sequential& sigmoid();
  Sequential& softmax();

  Var forward(Tape& tape, Var input) const;
  // Inference-only convenience over a private tape.
  Tensor forward(const Tensor& input) const;

  std::size_t input_width() const { return input_width_; }
  std::size_t output_width() const { return width_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

 private:
  std::string next_dense_prefix() const;

  std::size_t input_width_;
  std::size_t width_;
  std::size_t dense_count_ = 0;
  std::vector<Layer> layers_;
  ParameterSet params_;
};

}  // namespace gmint::ad

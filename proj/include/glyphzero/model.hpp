#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphzero/glyphs.hpp"
#include "glyphzero/tensor.hpp"

namespace gz {

struct ModelConfig {
  int input_size = 32;
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64};  // each stage opens with a stride-2 cell
  int embedding_h = 4;
  int embedding_w = 4;
  int embedding_c = 64;
  int n_known = 0;             // training-character categories (categorical head width)
  int n_radical_channels = 0;  // radicals + 1 (blank)
  double prelu_init_slope = 0.25;
  int extra_cells = 1;  // training-branch-only residual cells; 0 collapses the
                        // two branches into a plain weight-shared pair
  uint64_t seed = 0;

  // Throws invalid_argument naming computed vs declared dims on mismatch.
  void validate() const;
};

template <typename T>
struct ConvLayer {
  Parameter<T> w;  // [Cout, Cin, kh, kw], no bias
  int stride = 1;
  int pad = 0;
  Tensor<T> forward(const Tensor<T>& x) const;
};

template <typename T>
struct BatchNormLayer {
  Parameter<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  std::string name;
  Tensor<T> forward(const Tensor<T>& x, bool training);
};

template <typename T>
struct PReLULayer {
  Parameter<T> slope;  // one per channel
  Tensor<T> forward(const Tensor<T>& x) const;
};

// Pre-activation cell: norm -> PReLU -> conv -> norm -> PReLU -> conv, plus
// a shortcut (1x1 projection of the pre-activated input when the cell
// changes resolution or width). With both conv weights zero the cell is an
// exact identity.
template <typename T>
struct ResidualCell {
  BatchNormLayer<T> bn1, bn2;
  PReLULayer<T> act1, act2;
  ConvLayer<T> conv1, conv2;
  bool has_projection = false;
  ConvLayer<T> proj;
  Tensor<T> forward(const Tensor<T>& x, bool training);
};

template <typename T>
struct ForwardOutputs {
  Tensor<T> embedding;        // [B, C, H, W]
  Tensor<T> category_logits;  // [B, n_known]
  Tensor<T> radical_map;      // [B, N, H, W] raw logits; empty on the training branch
};

// Two branches over one backbone. The target branch is the plain backbone;
// the training branch additionally runs the extra cells before the final
// norm/activation. The categorical head (flatten + affine) is shared; the
// radical head (1x1 conv) exists on the target branch only.
template <typename T>
class Model {
 public:
  ModelConfig cfg;
  ConvLayer<T> stem;
  std::vector<ResidualCell<T>> stages;
  std::vector<ResidualCell<T>> extra;
  BatchNormLayer<T> final_bn;
  PReLULayer<T> final_act;
  Parameter<T> k_w, k_b;
  ConvLayer<T> r_head;

  void set_train(bool on) { train_mode_ = on; }
  bool train_mode() const { return train_mode_; }

  ForwardOutputs<T> forward_target(const Tensor<T>& x);
  ForwardOutputs<T> forward_training(const Tensor<T>& x);

  // Deterministic order, stable across builds; names key checkpoint entries.
  std::vector<Parameter<T>*> parameters();

  struct BufferRef {
    std::string name;
    std::vector<T>* data;
  };
  std::vector<BufferRef> buffers();

 private:
  bool train_mode_ = true;

  Tensor<T> backbone(const Tensor<T>& x, bool with_extra);
  Tensor<T> category_head(const Tensor<T>& a);
};

// Weights drawn per parameter from substreams of `seed` named after the
// parameter, so toggling parts of the architecture never shifts the rest.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed);

struct ParameterCount {
  int64_t count = 0;
  int64_t bytes = 0;  // 32-bit storage
};

template <typename T>
ParameterCount count_parameters(Model<T>& model);

// Stacks images into a [B, 1, side, side] input tensor.
template <typename T>
Tensor<T> make_batch(const std::vector<const GlyphImage*>& images);

extern template struct ConvLayer<float>;
extern template struct ConvLayer<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace gz

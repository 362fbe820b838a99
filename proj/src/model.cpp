#include "glyphzero/model.hpp"

#include <cmath>
#include <stdexcept>

#include "glyphzero/ops.hpp"
#include "glyphzero/rng.hpp"

namespace gz {

void ModelConfig::validate() const {
  if (input_size < 8) {
    throw std::invalid_argument("ModelConfig: input_size must be >= 8, got " +
                                std::to_string(input_size));
  }
  if (stem_channels < 1) throw std::invalid_argument("ModelConfig: stem_channels must be >= 1");
  if (stage_channels.empty()) throw std::invalid_argument("ModelConfig: empty stage plan");
  for (int c : stage_channels) {
    if (c < 1) throw std::invalid_argument("ModelConfig: stage channel must be >= 1");
  }
  int s = input_size;  // stem is stride 1
  for (size_t i = 0; i < stage_channels.size(); ++i) s = (s - 1) / 2 + 1;
  if (s != embedding_h || s != embedding_w) {
    throw std::invalid_argument("ModelConfig: stage plan yields " + std::to_string(s) + "x" +
                                std::to_string(s) + " but embedding declares " +
                                std::to_string(embedding_h) + "x" + std::to_string(embedding_w));
  }
  if (stage_channels.back() != embedding_c) {
    throw std::invalid_argument("ModelConfig: last stage width " +
                                std::to_string(stage_channels.back()) +
                                " != embedding channels " + std::to_string(embedding_c));
  }
  if (n_known < 1) {
    throw std::invalid_argument("ModelConfig: n_known must be >= 1, got " +
                                std::to_string(n_known));
  }
  if (n_radical_channels < 2) {
    throw std::invalid_argument("ModelConfig: n_radical_channels must be >= 2, got " +
                                std::to_string(n_radical_channels));
  }
  if (extra_cells < 0) throw std::invalid_argument("ModelConfig: extra_cells must be >= 0");
  if (prelu_init_slope < 0) throw std::invalid_argument("ModelConfig: negative prelu_init_slope");
}

template <typename T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, w.tensor, stride, pad);
}

template <typename T>
Tensor<T> BatchNormLayer<T>::forward(const Tensor<T>& x, bool training) {
  return batch_norm(x, gamma.tensor, beta.tensor, running_mean, running_var, training);
}

template <typename T>
Tensor<T> PReLULayer<T>::forward(const Tensor<T>& x) const {
  return prelu(x, slope.tensor);
}

template <typename T>
Tensor<T> ResidualCell<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> h = act1.forward(bn1.forward(x, training));
  Tensor<T> shortcut = has_projection ? proj.forward(h) : x;
  Tensor<T> y = conv1.forward(h);
  y = act2.forward(bn2.forward(y, training));
  y = conv2.forward(y);
  return add(y, shortcut);
}

namespace {

template <typename T>
Parameter<T> make_param(std::vector<int> shape, std::string name, bool no_decay = false) {
  Parameter<T> p;
  p.tensor = Tensor<T>(std::move(shape));
  p.name = std::move(name);
  p.no_decay = no_decay;
  return p;
}

template <typename T>
void kaiming_init(Parameter<T>& p, int fan_in, uint64_t seed, double slope) {
  RandomStream rng(substream_seed(seed, p.name));
  const double stdv = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  for (auto& v : p.tensor.data()) v = static_cast<T>(rng.normal() * stdv);
}

template <typename T>
ConvLayer<T> make_conv(const std::string& name, int cin, int cout, int k, int stride, int pad,
                       uint64_t seed, double slope) {
  ConvLayer<T> c;
  c.w = make_param<T>({cout, cin, k, k}, name + ".w");
  c.stride = stride;
  c.pad = pad;
  kaiming_init(c.w, cin * k * k, seed, slope);
  return c;
}

template <typename T>
BatchNormLayer<T> make_bn(const std::string& name, int ch) {
  BatchNormLayer<T> bn;
  bn.name = name;
  bn.gamma = make_param<T>({ch}, name + ".gamma", /*no_decay=*/true);
  bn.beta = make_param<T>({ch}, name + ".beta", /*no_decay=*/true);
  for (auto& v : bn.gamma.tensor.data()) v = T(1);
  bn.running_mean.assign(static_cast<size_t>(ch), T(0));
  bn.running_var.assign(static_cast<size_t>(ch), T(1));
  return bn;
}

template <typename T>
PReLULayer<T> make_prelu(const std::string& name, int ch, double slope) {
  PReLULayer<T> a;
  a.slope = make_param<T>({ch}, name + ".slope", /*no_decay=*/true);
  for (auto& v : a.slope.tensor.data()) v = static_cast<T>(slope);
  return a;
}

template <typename T>
ResidualCell<T> make_cell(const std::string& name, int cin, int cout, int stride, uint64_t seed,
                          double slope) {
  ResidualCell<T> cell;
  cell.bn1 = make_bn<T>(name + ".bn1", cin);
  cell.act1 = make_prelu<T>(name + ".act1", cin, slope);
  cell.conv1 = make_conv<T>(name + ".conv1", cin, cout, 3, stride, 1, seed, slope);
  cell.bn2 = make_bn<T>(name + ".bn2", cout);
  cell.act2 = make_prelu<T>(name + ".act2", cout, slope);
  cell.conv2 = make_conv<T>(name + ".conv2", cout, cout, 3, 1, 1, seed, slope);
  cell.has_projection = stride != 1 || cin != cout;
  if (cell.has_projection) {
    cell.proj = make_conv<T>(name + ".proj", cin, cout, 1, stride, 0, seed, slope);
  }
  return cell;
}

template <typename T>
void collect_cell(ResidualCell<T>& cell, std::vector<Parameter<T>*>& out) {
  out.push_back(&cell.bn1.gamma);
  out.push_back(&cell.bn1.beta);
  out.push_back(&cell.act1.slope);
  out.push_back(&cell.conv1.w);
  out.push_back(&cell.bn2.gamma);
  out.push_back(&cell.bn2.beta);
  out.push_back(&cell.act2.slope);
  out.push_back(&cell.conv2.w);
  if (cell.has_projection) out.push_back(&cell.proj.w);
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const double a = cfg.prelu_init_slope;
  Model<T> m;
  m.cfg = cfg;
  m.cfg.seed = seed;
  m.stem = make_conv<T>("stem", 1, cfg.stem_channels, 3, 1, 1, seed, a);
  int cin = cfg.stem_channels;
  for (size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    const int cout = cfg.stage_channels[i];
    m.stages.push_back(make_cell<T>("stage" + std::to_string(i), cin, cout, 2, seed, a));
    cin = cout;
  }
  for (int i = 0; i < cfg.extra_cells; ++i) {
    m.extra.push_back(make_cell<T>("extra" + std::to_string(i), cin, cin, 1, seed, a));
  }
  m.final_bn = make_bn<T>("final.bn", cin);
  m.final_act = make_prelu<T>("final.act", cin, a);

  const int feat = cfg.embedding_h * cfg.embedding_w * cfg.embedding_c;
  m.k_w = make_param<T>({cfg.n_known, feat}, "khead.w");
  kaiming_init(m.k_w, feat, seed, a);
  m.k_b = make_param<T>({cfg.n_known}, "khead.b");
  m.r_head = make_conv<T>("rhead", cfg.embedding_c, cfg.n_radical_channels, 1, 1, 0, seed, a);

  for (Parameter<T>* p : m.parameters()) p->tensor.set_requires_grad(true);
  return m;
}

template <typename T>
Tensor<T> Model<T>::backbone(const Tensor<T>& x, bool with_extra) {
  if (x.shape().size() != 4 || x.shape()[1] != 1 || x.shape()[2] != cfg.input_size ||
      x.shape()[3] != cfg.input_size) {
    throw std::invalid_argument("model: expected input [B,1," + std::to_string(cfg.input_size) +
                                "," + std::to_string(cfg.input_size) + "], got " +
                                shape_str(x.shape()));
  }
  Tensor<T> h = stem.forward(x);
  for (auto& cell : stages) h = cell.forward(h, train_mode_);
  if (with_extra) {
    for (auto& cell : extra) h = cell.forward(h, train_mode_);
  }
  h = final_bn.forward(h, train_mode_);
  return final_act.forward(h);
}

template <typename T>
Tensor<T> Model<T>::category_head(const Tensor<T>& a) {
  return linear(flatten(a), k_w.tensor, k_b.tensor);
}

template <typename T>
ForwardOutputs<T> Model<T>::forward_target(const Tensor<T>& x) {
  ForwardOutputs<T> out;
  out.embedding = backbone(x, /*with_extra=*/false);
  out.category_logits = category_head(out.embedding);
  out.radical_map = r_head.forward(out.embedding);
  return out;
}

template <typename T>
ForwardOutputs<T> Model<T>::forward_training(const Tensor<T>& x) {
  ForwardOutputs<T> out;
  out.embedding = backbone(x, /*with_extra=*/true);
  out.category_logits = category_head(out.embedding);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out;
  out.push_back(&stem.w);
  for (auto& cell : stages) collect_cell(cell, out);
  for (auto& cell : extra) collect_cell(cell, out);
  out.push_back(&final_bn.gamma);
  out.push_back(&final_bn.beta);
  out.push_back(&final_act.slope);
  out.push_back(&k_w);
  out.push_back(&k_b);
  out.push_back(&r_head.w);
  return out;
}

template <typename T>
auto Model<T>::buffers() -> std::vector<BufferRef> {
  std::vector<BufferRef> out;
  auto add_bn = [&](BatchNormLayer<T>& bn) {
    out.push_back({bn.name + ".running_mean", &bn.running_mean});
    out.push_back({bn.name + ".running_var", &bn.running_var});
  };
  for (auto& cell : stages) {
    add_bn(cell.bn1);
    add_bn(cell.bn2);
  }
  for (auto& cell : extra) {
    add_bn(cell.bn1);
    add_bn(cell.bn2);
  }
  add_bn(final_bn);
  return out;
}

template <typename T>
ParameterCount count_parameters(Model<T>& model) {
  ParameterCount pc;
  for (Parameter<T>* p : model.parameters()) pc.count += p->tensor.numel();
  pc.bytes = pc.count * 4;
  return pc;
}

template <typename T>
Tensor<T> make_batch(const std::vector<const GlyphImage*>& images) {
  if (images.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int side = images[0]->side;
  std::vector<T> data;
  data.reserve(images.size() * static_cast<size_t>(side) * side);
  for (const GlyphImage* img : images) {
    if (img->side != side) {
      throw std::invalid_argument("make_batch: mixed image sides " + std::to_string(side) +
                                  " and " + std::to_string(img->side));
    }
    for (float v : img->pixels) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>({static_cast<int>(images.size()), 1, side, side}, std::move(data));
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template struct PReLULayer<float>;
template struct PReLULayer<double>;
template struct ResidualCell<float>;
template struct ResidualCell<double>;
template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&, uint64_t);
template Model<double> build_model<double>(const ModelConfig&, uint64_t);
template ParameterCount count_parameters<float>(Model<float>&);
template ParameterCount count_parameters<double>(Model<double>&);
template Tensor<float> make_batch<float>(const std::vector<const GlyphImage*>&);
template Tensor<double> make_batch<double>(const std::vector<const GlyphImage*>&);

}  // namespace gz

#include "aifc/nn.hpp"

#include <cmath>

#include "aifc/error.hpp"
#include "aifc/ops.hpp"

namespace aifc::nn {

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
               int stride, int padding, Init weight_init)
    : weight_(&store.create(name + ".weight", {out_channels, in_channels, kernel, kernel}, weight_init)),
      bias_(&store.create(name + ".bias", {out_channels}, Init::kZero)),
      out_channels_(out_channels),
      stride_(stride),
      padding_(padding) {}

Var Conv2d::operator()(Tape& tape, Var x) const {
  return ops::conv2d(x, tape.param(*weight_), tape.param(*bias_), stride_, padding_);
}

ConvTranspose2d::ConvTranspose2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
                                 int kernel, int stride, int padding)
    : stride_(stride), padding_(padding) {
  // Fan-in of a stride-s transposed conv is about Cin * k^2 / s^2.
  const double gain = static_cast<double>(stride);
  weight_ = &store.create(name + ".weight", {in_channels, out_channels, kernel, kernel}, Init::kUniform,
                          gain * std::sqrt(3.0 / (static_cast<double>(in_channels) * kernel * kernel)));
  bias_ = &store.create(name + ".bias", {out_channels}, Init::kZero);
}

Var ConvTranspose2d::operator()(Tape& tape, Var x) const {
  return ops::conv_transpose2d(x, tape.param(*weight_), tape.param(*bias_), stride_, padding_);
}

AdaptiveActivation::AdaptiveActivation(ParameterStore& store, const std::string& name, int channels)
    : gain_(&store.create(name + ".gain", {channels}, Init::kConst, 1.0)),
      shift_(&store.create(name + ".shift", {channels}, Init::kZero)),
      channels_(channels) {}

Var AdaptiveActivation::operator()(Tape& tape, Var x) const {
  if (x.value().rank() != 4 || x.dim(1) != channels_)
    throw ShapeError("adaptive activation: expected " + std::to_string(channels_) + " channels, got " +
                     shape_str(x.shape()));
  Var a = ops::reshape(tape.param(*gain_), {1, channels_, 1, 1});
  Var b = ops::reshape(tape.param(*shift_), {1, channels_, 1, 1});
  Var gate = ops::sigmoid(ops::add_bcast(ops::mul_bcast(x, a), b));
  return ops::mul(x, gate);
}

ResidualBlock::ResidualBlock(ParameterStore& store, const std::string& name, int channels)
    : conv1_(store, name + ".conv1", channels, channels, 3, 1, 1),
      act_(store, name + ".act", channels),
      conv2_(store, name + ".conv2", channels, channels, 3, 1, 1, Init::kZero) {}

Var ResidualBlock::operator()(Tape& tape, Var x) const { return ops::add(x, conv2_(tape, act_(tape, conv1_(tape, x)))); }

AttentionBlock::AttentionBlock(ParameterStore& store, const std::string& name, int channels, int downsample)
    : wq_(&store.create(name + ".wq", {channels, channels}, Init::kFanIn)),
      wk_(&store.create(name + ".wk", {channels, channels}, Init::kFanIn)),
      wv_(&store.create(name + ".wv", {channels, channels}, Init::kFanIn)),
      wo_(&store.create(name + ".wo", {channels, channels}, Init::kZero)),
      channels_(channels),
      downsample_(downsample) {
  if (downsample < 1) throw InvalidArgument("attention downsample must be >= 1");
}

Var AttentionBlock::attend_tokens(Tape& tape, Var q_tokens, Var kv_tokens, AttentionTrace* trace) const {
  if (q_tokens.value().rank() != 2 || kv_tokens.value().rank() != 2 || q_tokens.dim(0) != channels_ ||
      kv_tokens.dim(0) != channels_)
    throw ShapeError("attention tokens must be [" + std::to_string(channels_) + ", n]");
  Var q = ops::matmul(tape.param(*wq_), q_tokens);
  Var k = ops::matmul(tape.param(*wk_), kv_tokens);
  Var v = ops::matmul(tape.param(*wv_), kv_tokens);
  Var scores = ops::scale(ops::matmul(ops::permute(q, {1, 0}), k), 1.0 / std::sqrt(static_cast<double>(channels_)));
  Var weights = ops::softmax(scores, 1);
  if (trace) trace->weights = weights.value();
  Var mixed = ops::matmul(v, ops::permute(weights, {1, 0}));
  return ops::matmul(tape.param(*wo_), mixed);
}

Var AttentionBlock::attend(Tape& tape, Var query, Var key_value, AttentionTrace* trace) const {
  const Shape& qs = query.shape();
  const Shape& ks = key_value.shape();
  if (qs.size() != 4 || ks.size() != 4 || qs[0] != 1 || ks[0] != 1)
    throw ShapeError("attention expects batch-1 BCHW inputs");
  if (qs[1] != channels_ || ks[1] != channels_)
    throw ShapeError("attention: query/key channels must equal " + std::to_string(channels_));
  if (ks[2] % downsample_ || ks[3] % downsample_)
    throw ShapeError("attention: key/value extent " + shape_str(ks) + " not divisible by " +
                     std::to_string(downsample_));
  Var q_tokens = ops::reshape(query, {channels_, qs[2] * qs[3]});
  Var pooled = downsample_ > 1 ? ops::avg_pool2d(key_value, downsample_) : key_value;
  Var kv_tokens = ops::reshape(pooled, {channels_, pooled.dim(2) * pooled.dim(3)});
  return ops::reshape(attend_tokens(tape, q_tokens, kv_tokens, trace), qs);
}

Var AttentionBlock::operator()(Tape& tape, Var query, Var key_value, AttentionTrace* trace) const {
  return ops::add(query, attend(tape, query, key_value, trace));
}

}  // namespace aifc::nn

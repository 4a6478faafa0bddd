#pragma once

// Codec building blocks. Layers hold non-owning pointers into a
// ParameterStore and are cheap to copy.

#include <string>

#include "aifc/autograd.hpp"
#include "aifc/param.hpp"

namespace aifc::nn {

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int padding, Init weight_init = Init::kFanIn);

  Var operator()(Tape& tape, Var x) const;

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }
  int out_channels() const { return out_channels_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int out_channels_ = 0;
  int stride_ = 1;
  int padding_ = 0;
};

// Weight layout [Cin, Cout, k, k].
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int padding);

  Var operator()(Tape& tape, Var x) const;

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int stride_ = 1;
  int padding_ = 0;
};

// y = x * sigmoid(gain_c * x + shift_c), learnable gain/shift per channel.
// gain = 1, shift = 0 is the swish gate.
class AdaptiveActivation {
 public:
  AdaptiveActivation() = default;
  AdaptiveActivation(ParameterStore& store, const std::string& name, int channels);

  Var operator()(Tape& tape, Var x) const;

  Parameter& gain() const { return *gain_; }
  Parameter& shift() const { return *shift_; }

 private:
  Parameter* gain_ = nullptr;
  Parameter* shift_ = nullptr;
  int channels_ = 0;
};

// x + conv2(act(conv1(x))), 3x3 convs; conv2 starts at zero so the block is
// the identity at initialization.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterStore& store, const std::string& name, int channels);

  Var operator()(Tape& tape, Var x) const;

 private:
  Conv2d conv1_;
  AdaptiveActivation act_;
  Conv2d conv2_;
};

struct AttentionTrace {
  Tensor weights;  // [queries, tokens], rows sum to one
};

// Single-head attention. Queries keep full resolution; keys/values are
// average-pooled by `downsample` before projection.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterStore& store, const std::string& name, int channels, int downsample);

  // Wo * sum_t softmax_t(<Wq q(p), Wk k(t)> / sqrt(C)) Wv v(t), shaped like `query`.
  Var attend(Tape& tape, Var query, Var key_value, AttentionTrace* trace = nullptr) const;
  // query + attend(query, key_value)
  Var operator()(Tape& tape, Var query, Var key_value, AttentionTrace* trace = nullptr) const;

  // Core on token matrices: q [C, N], kv [C, T] -> [C, N].
  Var attend_tokens(Tape& tape, Var q_tokens, Var kv_tokens, AttentionTrace* trace = nullptr) const;

  Parameter& wq() const { return *wq_; }
  Parameter& wk() const { return *wk_; }
  Parameter& wv() const { return *wv_; }
  Parameter& wo() const { return *wo_; }
  int downsample() const { return downsample_; }

 private:
  Parameter* wq_ = nullptr;
  Parameter* wk_ = nullptr;
  Parameter* wv_ = nullptr;
  Parameter* wo_ = nullptr;
  int channels_ = 0;
  int downsample_ = 1;
};

}  // namespace aifc::nn

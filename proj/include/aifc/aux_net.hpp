#pragma once

// Auxiliary coarse network: a small hyperprior codec whose decoder emits
// predicted features at 1/1, 1/2, 1/4 and 1/16 scale for the main network.

#include "aifc/config.hpp"
#include "aifc/entropy.hpp"
#include "aifc/estimator.hpp"
#include "aifc/nn.hpp"

namespace aifc {

struct MultiScaleFeatures {
  Var f1;   // [1, C1, H, W]
  Var f2;   // [1, C2, H/2, W/2]
  Var f4;   // [1, C4, H/4, W/4]
  Var f16;  // [1, C16, H/16, W/16]
};

// Hyper-encoder / hyper-decoder pair shared in shape by both networks.
class HyperCoder {
 public:
  HyperCoder() = default;
  HyperCoder(ParameterStore& store, const std::string& name, int latent_channels, int hyper_channels);

  Var encode(Tape& tape, Var y) const;       // 1/16 -> 1/64
  Var decode(Tape& tape, Var z_hat) const;   // 1/64 -> 1/16

 private:
  nn::Conv2d e1_, e2_, e3_;
  nn::AdaptiveActivation ea1_, ea2_;
  nn::ConvTranspose2d d1_, d2_;
  nn::AdaptiveActivation da1_, da2_;
  nn::Conv2d d3_;
};

class AuxNet {
 public:
  AuxNet() = default;
  AuxNet(ParameterStore& store, const CodecConfig& config);

  // x [1, 3, H, W] with H, W multiples of 64 -> y_aux [1, M_aux, H/16, W/16].
  Var encode(Tape& tape, Var x) const;
  const HyperCoder& hyper() const { return hyper_; }
  const entropy::FactorizedModel& z_model() const { return z_model_; }
  // Conditioning is z_apm; 2 * num_slices segments.
  const SegmentEstimator& estimator() const { return pe_; }
  MultiScaleFeatures decode(Tape& tape, Var y_hat) const;

  const nn::AttentionBlock& encoder_afp() const { return enc_afp_; }
  const nn::AttentionBlock& decoder_afp() const { return dec_afp_; }

 private:
  nn::Conv2d e1_, e2_, e3_, e4_;
  nn::AdaptiveActivation ea1_, ea2_, ea3_;
  nn::AttentionBlock enc_afp_;
  HyperCoder hyper_;
  entropy::FactorizedModel z_model_;
  SegmentEstimator pe_;
  nn::Conv2d d16_;
  nn::AdaptiveActivation da16_;
  nn::ConvTranspose2d d8_, d4_, d2_, d1_;
  nn::AdaptiveActivation da8_, da4_, da2_, da1_;
  nn::AttentionBlock dec_afp_;
  int pad_multiple_ = 64;
};

void require_padded(const Shape& x_shape, int multiple);

}  // namespace aifc

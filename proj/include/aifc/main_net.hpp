#pragma once

// Main network: codes what the auxiliary prediction does not explain.

#include "aifc/aux_net.hpp"

namespace aifc {

struct ContextJunctionTrace {
  Var combined;     // conv(concat(main, aux)), aux channel count
  Var refined_aux;  // aux + cross-attention(q = combined, kv = aux)
  Var local;        // conv(concat(main, refined_aux)), main channel count
  nn::AttentionTrace refine_attention;
  nn::AttentionTrace global_attention;
};

// Refiner followed by a Subtractor (encoder) or Combiner (decoder). The two
// modes have the same structure; they differ only in what training makes of them.
class ContextJunction {
 public:
  enum class Mode { kSubtract, kCombine };

  ContextJunction() = default;
  ContextJunction(ParameterStore& store, const std::string& name, int main_channels, int aux_channels,
                  int downsample, Mode mode);

  Var operator()(Tape& tape, Var main_feat, Var aux_feat, ContextJunctionTrace* trace = nullptr) const;

  Mode mode() const { return mode_; }
  const nn::Conv2d& mix() const { return mix_; }
  const nn::Conv2d& local() const { return local_; }
  const nn::AttentionBlock& refine_attention() const { return refine_; }
  const nn::AttentionBlock& global_attention() const { return global_; }

  // Sets the local conv to out[c] = main[c] - refined[c] for c < aux channels
  // and out[c] = main[c] otherwise, zeroing the attention outputs.
  void init_exact_subtraction();

 private:
  nn::Conv2d mix_;
  nn::AttentionBlock refine_;
  nn::Conv2d local_;
  nn::AttentionBlock global_;
  int main_channels_ = 0;
  int aux_channels_ = 0;
  Mode mode_ = Mode::kSubtract;
};

struct MainEncodeTrace {
  Var pre_junction;  // 1/4-scale feature entering the context junction
  Var junction_out;
  ContextJunctionTrace junction;
};

class MainNet {
 public:
  MainNet() = default;
  MainNet(ParameterStore& store, const CodecConfig& config);

  Var encode(Tape& tape, Var x, const MultiScaleFeatures& f, MainEncodeTrace* trace = nullptr) const;
  const HyperCoder& hyper() const { return hyper_; }
  const entropy::FactorizedModel& z_model() const { return z_model_; }
  // Conditioning is concat(z_pm, F16); main_segments segments.
  const SegmentEstimator& estimator() const { return ape_; }
  Var ape_condition(Var z_pm, const MultiScaleFeatures& f) const;
  // Unclamped reconstruction [1, 3, H, W].
  Var decode(Tape& tape, Var y_hat, const MultiScaleFeatures& f) const;

  ContextJunction& encoder_junction() { return cj_enc_; }
  ContextJunction& decoder_junction() { return cj_dec_; }

 private:
  nn::Conv2d e1_, e2_, e3_, e4_, e5_;
  nn::AdaptiveActivation ea1_, ea2_, ea4_;
  ContextJunction cj_enc_;
  HyperCoder hyper_;
  entropy::FactorizedModel z_model_;
  SegmentEstimator ape_;
  nn::ConvTranspose2d d8_, d4_, d2_, d1_;
  nn::AdaptiveActivation da8_, da4_, da2_;
  ContextJunction cj_dec_;
  nn::ResidualBlock res1_;
  nn::Conv2d out_;
  int pad_multiple_ = 64;
};

}  // namespace aifc

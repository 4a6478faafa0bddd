#pragma once

// Segment-wise parameter estimation shared by the auxiliary and main
// networks. Segment i sees the conditioning tensor and the reconstructed
// channels of segments 0..i-1 only; it never receives later channels.

#include <string>
#include <vector>

#include "aifc/entropy.hpp"
#include "aifc/nn.hpp"

namespace aifc {

struct GaussianParams {
  Var mu;
  Var sigma;  // softplus(raw) floored at sigma_min
};

class SegmentEstimator {
 public:
  SegmentEstimator() = default;
  SegmentEstimator(ParameterStore& store, const std::string& name, int cond_channels, int latent_channels,
                   int segments, int hidden, double sigma_min);

  const std::vector<entropy::ChannelRange>& segments() const { return segments_; }
  int num_segments() const { return static_cast<int>(segments_.size()); }

  // prefix holds exactly the reconstructed channels [0, segments()[i].begin)
  // and is ignored (may be invalid) for i == 0. A prefix of any other width
  // means segments were requested out of order and raises OrderError.
  GaussianParams operator()(Tape& tape, int i, Var cond, Var prefix) const;

 private:
  struct Head {
    nn::Conv2d conv1;
    nn::AdaptiveActivation act1;
    nn::Conv2d conv2;
    nn::AdaptiveActivation act2;
    nn::Conv2d mu;
    nn::Conv2d sigma;
  };
  std::vector<Head> heads_;
  std::vector<entropy::ChannelRange> segments_;
  int cond_channels_ = 0;
  double sigma_min_ = entropy::kDefaultSigmaMin;
};

}  // namespace aifc

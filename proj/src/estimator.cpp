#include "aifc/estimator.hpp"

#include "aifc/error.hpp"
#include "aifc/ops.hpp"

namespace aifc {

SegmentEstimator::SegmentEstimator(ParameterStore& store, const std::string& name, int cond_channels,
                                   int latent_channels, int segments, int hidden, double sigma_min)
    : segments_(entropy::split_segments(latent_channels, segments)),
      cond_channels_(cond_channels),
      sigma_min_(sigma_min) {
  for (int i = 0; i < segments; ++i) {
    const std::string p = name + ".seg" + std::to_string(i);
    const int in = cond_channels + segments_[i].begin;
    const int out = segments_[i].size();
    heads_.push_back(Head{
        nn::Conv2d(store, p + ".conv1", in, hidden, 3, 1, 1),
        nn::AdaptiveActivation(store, p + ".act1", hidden),
        nn::Conv2d(store, p + ".conv2", hidden, hidden, 3, 1, 1),
        nn::AdaptiveActivation(store, p + ".act2", hidden),
        nn::Conv2d(store, p + ".mu", hidden, out, 1, 1, 0),
        nn::Conv2d(store, p + ".sigma", hidden, out, 1, 1, 0),
    });
  }
}

GaussianParams SegmentEstimator::operator()(Tape& tape, int i, Var cond, Var prefix) const {
  if (i < 0 || i >= num_segments()) throw OrderError("segment index " + std::to_string(i) + " out of range");
  if (cond.dim(1) != cond_channels_)
    throw ShapeError("estimator conditioning has " + std::to_string(cond.dim(1)) + " channels, expected " +
                     std::to_string(cond_channels_));
  const int need = segments_[i].begin;
  const int have = prefix.valid() ? prefix.dim(1) : 0;
  if (have != need)
    throw OrderError("segment " + std::to_string(i) + " needs the " + std::to_string(need) +
                     " previously decoded channels, got " + std::to_string(have));
  Var in = cond;
  if (need > 0) {
    if (prefix.dim(2) != cond.dim(2) || prefix.dim(3) != cond.dim(3))
      throw ShapeError("estimator prefix " + shape_str(prefix.shape()) + " misaligned with conditioning " +
                       shape_str(cond.shape()));
    in = ops::concat({cond, prefix}, 1);
  }
  const Head& h = heads_[i];
  Var t = h.act1(tape, h.conv1(tape, in));
  t = h.act2(tape, h.conv2(tape, t));
  return {h.mu(tape, t), ops::clamp_min(ops::softplus(h.sigma(tape, t)), sigma_min_)};
}

}  // namespace aifc

#include "aifc/main_net.hpp"

#include "aifc/error.hpp"
#include "aifc/ops.hpp"

namespace aifc {
namespace {

void require_same_extent(Var a, Var b, const char* what) {
  if (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError(std::string(what) + ": scale mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

ContextJunction::ContextJunction(ParameterStore& store, const std::string& name, int main_channels,
                                 int aux_channels, int downsample, Mode mode)
    : mix_(store, name + ".mix", main_channels + aux_channels, aux_channels, 3, 1, 1),
      refine_(store, name + ".refine", aux_channels, downsample),
      local_(store, name + ".local", main_channels + aux_channels, main_channels, 3, 1, 1),
      global_(store, name + ".global", main_channels, downsample),
      main_channels_(main_channels),
      aux_channels_(aux_channels),
      mode_(mode) {}

Var ContextJunction::operator()(Tape& tape, Var main_feat, Var aux_feat, ContextJunctionTrace* trace) const {
  require_same_extent(main_feat, aux_feat, "context junction");
  if (main_feat.dim(1) != main_channels_ || aux_feat.dim(1) != aux_channels_)
    throw ShapeError("context junction channels " + shape_str(main_feat.shape()) + " / " +
                     shape_str(aux_feat.shape()));
  Var combined = mix_(tape, ops::concat({main_feat, aux_feat}, 1));
  Var refined = ops::add(aux_feat, refine_.attend(tape, combined, aux_feat, trace ? &trace->refine_attention : nullptr));
  Var local = local_(tape, ops::concat({main_feat, refined}, 1));
  Var out = ops::add(local, global_.attend(tape, local, local, trace ? &trace->global_attention : nullptr));
  if (trace) {
    trace->combined = combined;
    trace->refined_aux = refined;
    trace->local = local;
  }
  return out;
}

void ContextJunction::init_exact_subtraction() {
  Tensor& w = local_.weight().value;  // [main, main + aux, 3, 3]
  w.fill(0.0);
  local_.bias().value.fill(0.0);
  const int cin = main_channels_ + aux_channels_;
  auto center = [&](int o, int i) -> double& { return w[((static_cast<std::size_t>(o) * cin + i) * 3 + 1) * 3 + 1]; };
  for (int c = 0; c < main_channels_; ++c) {
    center(c, c) = 1.0;
    if (c < aux_channels_) center(c, main_channels_ + c) = -1.0;
  }
  refine_.wo().value.fill(0.0);
  global_.wo().value.fill(0.0);
}

MainNet::MainNet(ParameterStore& store, const CodecConfig& c) : pad_multiple_(c.pad_multiple) {
  const auto& ch = c.main_channels;
  const int d = c.attention_downsample;
  e1_ = nn::Conv2d(store, "main.enc1", 3, c.main_full, 3, 1, 1);
  ea1_ = nn::AdaptiveActivation(store, "main.enc_act1", c.main_full + c.feat_c1);
  e2_ = nn::Conv2d(store, "main.enc2", c.main_full + c.feat_c1, ch[0], 4, 2, 1);
  ea2_ = nn::AdaptiveActivation(store, "main.enc_act2", ch[0] + c.feat_c2);
  e3_ = nn::Conv2d(store, "main.enc3", ch[0] + c.feat_c2, ch[1], 4, 2, 1);
  cj_enc_ = ContextJunction(store, "main.cj_enc", ch[1], c.feat_c4, d, ContextJunction::Mode::kSubtract);
  e4_ = nn::Conv2d(store, "main.enc4", ch[1], ch[2], 4, 2, 1);
  ea4_ = nn::AdaptiveActivation(store, "main.enc_act4", ch[2]);
  e5_ = nn::Conv2d(store, "main.enc5", ch[2], c.main_latent, 4, 2, 1);

  hyper_ = HyperCoder(store, "main.hyper", c.main_latent, c.hyper_channels);
  z_model_ = entropy::FactorizedModel(store, "main.z_prior", c.hyper_channels);
  ape_ = SegmentEstimator(store, "main.ape", c.hyper_channels + c.feat_c16, c.main_latent, c.main_segments,
                          c.pe_hidden, c.sigma_min);

  d8_ = nn::ConvTranspose2d(store, "main.dec8", c.main_latent, ch[2], 4, 2, 1);
  da8_ = nn::AdaptiveActivation(store, "main.dec_act8", ch[2]);
  d4_ = nn::ConvTranspose2d(store, "main.dec4", ch[2], ch[1], 4, 2, 1);
  da4_ = nn::AdaptiveActivation(store, "main.dec_act4", ch[1]);
  cj_dec_ = ContextJunction(store, "main.cj_dec", ch[1], c.feat_c4, d, ContextJunction::Mode::kCombine);
  d2_ = nn::ConvTranspose2d(store, "main.dec2", ch[1], ch[0], 4, 2, 1);
  da2_ = nn::AdaptiveActivation(store, "main.dec_act2", ch[0] + c.feat_c2);
  d1_ = nn::ConvTranspose2d(store, "main.dec1", ch[0] + c.feat_c2, c.main_full, 4, 2, 1);
  res1_ = nn::ResidualBlock(store, "main.dec_res1", c.main_full + c.feat_c1);
  out_ = nn::Conv2d(store, "main.out", c.main_full + c.feat_c1, 3, 3, 1, 1);
  out_.bias().value.fill(0.5);
}

Var MainNet::encode(Tape& tape, Var x, const MultiScaleFeatures& f, MainEncodeTrace* trace) const {
  require_padded(x.shape(), pad_multiple_);
  Var t = e1_(tape, x);
  require_same_extent(t, f.f1, "main encoder 1/1");
  t = ea1_(tape, ops::concat({t, f.f1}, 1));
  t = e2_(tape, t);
  require_same_extent(t, f.f2, "main encoder 1/2");
  t = ea2_(tape, ops::concat({t, f.f2}, 1));
  Var h4 = e3_(tape, t);
  Var r = cj_enc_(tape, h4, f.f4, trace ? &trace->junction : nullptr);
  if (trace) {
    trace->pre_junction = h4;
    trace->junction_out = r;
  }
  t = ea4_(tape, e4_(tape, r));
  return e5_(tape, t);
}

Var MainNet::ape_condition(Var z_pm, const MultiScaleFeatures& f) const {
  require_same_extent(z_pm, f.f16, "APE conditioning");
  return ops::concat({z_pm, f.f16}, 1);
}

Var MainNet::decode(Tape& tape, Var y_hat, const MultiScaleFeatures& f) const {
  Var t = da8_(tape, d8_(tape, y_hat));
  t = da4_(tape, d4_(tape, t));
  t = cj_dec_(tape, t, f.f4);
  t = d2_(tape, t);
  require_same_extent(t, f.f2, "main decoder 1/2");
  t = da2_(tape, ops::concat({t, f.f2}, 1));
  t = d1_(tape, t);
  require_same_extent(t, f.f1, "main decoder 1/1");
  t = res1_(tape, ops::concat({t, f.f1}, 1));
  return out_(tape, t);
}

}  // namespace aifc

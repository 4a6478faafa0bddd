#include "aifc/aux_net.hpp"

#include "aifc/error.hpp"

namespace aifc {

void require_padded(const Shape& s, int multiple) {
  if (s.size() != 4 || s[0] != 1 || s[1] != 3)
    throw ShapeError("expected an image tensor [1, 3, H, W], got " + shape_str(s));
  if (s[2] <= 0 || s[3] <= 0 || s[2] % multiple || s[3] % multiple)
    throw ShapeError("image extent " + shape_str(s) + " is not padded to a multiple of " + std::to_string(multiple));
}

HyperCoder::HyperCoder(ParameterStore& store, const std::string& name, int m, int ch)
    : e1_(store, name + ".enc1", m, ch, 3, 1, 1),
      e2_(store, name + ".enc2", ch, ch, 4, 2, 1),
      e3_(store, name + ".enc3", ch, ch, 4, 2, 1),
      ea1_(store, name + ".enc_act1", ch),
      ea2_(store, name + ".enc_act2", ch),
      d1_(store, name + ".dec1", ch, ch, 4, 2, 1),
      d2_(store, name + ".dec2", ch, ch, 4, 2, 1),
      da1_(store, name + ".dec_act1", ch),
      da2_(store, name + ".dec_act2", ch),
      d3_(store, name + ".dec3", ch, ch, 3, 1, 1) {}

Var HyperCoder::encode(Tape& tape, Var y) const {
  Var t = ea1_(tape, e1_(tape, y));
  t = ea2_(tape, e2_(tape, t));
  return e3_(tape, t);
}

Var HyperCoder::decode(Tape& tape, Var z_hat) const {
  Var t = da1_(tape, d1_(tape, z_hat));
  t = da2_(tape, d2_(tape, t));
  return d3_(tape, t);
}

AuxNet::AuxNet(ParameterStore& store, const CodecConfig& c) : pad_multiple_(c.pad_multiple) {
  const auto& ch = c.aux_channels;
  e1_ = nn::Conv2d(store, "aux.enc1", 3, ch[0], 4, 2, 1);
  ea1_ = nn::AdaptiveActivation(store, "aux.enc_act1", ch[0]);
  e2_ = nn::Conv2d(store, "aux.enc2", ch[0], ch[1], 4, 2, 1);
  ea2_ = nn::AdaptiveActivation(store, "aux.enc_act2", ch[1]);
  enc_afp_ = nn::AttentionBlock(store, "aux.enc_afp", ch[1], c.attention_downsample);
  e3_ = nn::Conv2d(store, "aux.enc3", ch[1], ch[2], 4, 2, 1);
  ea3_ = nn::AdaptiveActivation(store, "aux.enc_act3", ch[2]);
  e4_ = nn::Conv2d(store, "aux.enc4", ch[2], c.aux_latent, 4, 2, 1);

  hyper_ = HyperCoder(store, "aux.hyper", c.aux_latent, c.hyper_channels);
  z_model_ = entropy::FactorizedModel(store, "aux.z_prior", c.hyper_channels);
  pe_ = SegmentEstimator(store, "aux.pe", c.hyper_channels, c.aux_latent, c.aux_segments(), c.pe_hidden,
                         c.sigma_min);

  d16_ = nn::Conv2d(store, "aux.dec16", c.aux_latent, c.feat_c16, 3, 1, 1);
  da16_ = nn::AdaptiveActivation(store, "aux.dec_act16", c.feat_c16);
  d8_ = nn::ConvTranspose2d(store, "aux.dec8", c.feat_c16, ch[2], 4, 2, 1);
  da8_ = nn::AdaptiveActivation(store, "aux.dec_act8", ch[2]);
  d4_ = nn::ConvTranspose2d(store, "aux.dec4", ch[2], c.feat_c4, 4, 2, 1);
  da4_ = nn::AdaptiveActivation(store, "aux.dec_act4", c.feat_c4);
  dec_afp_ = nn::AttentionBlock(store, "aux.dec_afp", c.feat_c4, c.attention_downsample);
  d2_ = nn::ConvTranspose2d(store, "aux.dec2", c.feat_c4, c.feat_c2, 4, 2, 1);
  da2_ = nn::AdaptiveActivation(store, "aux.dec_act2", c.feat_c2);
  d1_ = nn::ConvTranspose2d(store, "aux.dec1", c.feat_c2, c.feat_c1, 4, 2, 1);
  da1_ = nn::AdaptiveActivation(store, "aux.dec_act1", c.feat_c1);
}

Var AuxNet::encode(Tape& tape, Var x) const {
  require_padded(x.shape(), pad_multiple_);
  Var t = ea1_(tape, e1_(tape, x));
  t = ea2_(tape, e2_(tape, t));
  t = enc_afp_(tape, t, t);
  t = ea3_(tape, e3_(tape, t));
  return e4_(tape, t);
}

MultiScaleFeatures AuxNet::decode(Tape& tape, Var y_hat) const {
  MultiScaleFeatures f;
  f.f16 = da16_(tape, d16_(tape, y_hat));
  Var t = da8_(tape, d8_(tape, f.f16));
  t = da4_(tape, d4_(tape, t));
  f.f4 = dec_afp_(tape, t, t);
  f.f2 = da2_(tape, d2_(tape, f.f4));
  f.f1 = da1_(tape, d1_(tape, f.f2));
  return f;
}

}  // namespace aifc

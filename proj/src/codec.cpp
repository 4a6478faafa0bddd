#include "aifc/codec.hpp"

#include <cmath>

#include "aifc/error.hpp"
#include "aifc/ops.hpp"

namespace aifc {

double EncodeReport::aux_ratio() const {
  const std::size_t total = payload_bytes();
  return total ? static_cast<double>(aux_bytes()) / static_cast<double>(total) : 0.0;
}

double EncodeReport::bpp() const { return 8.0 * static_cast<double>(file_bytes) / (static_cast<double>(width) * height); }

double EncodeReport::estimated_bits() const {
  double b = 0.0;
  for (const auto& s : streams) b += s.estimated_bits;
  return b;
}

namespace {

using entropy::LatentCode;

double neg_log2(double p) { return -std::log2(std::max(p, entropy::kLikelihoodFloor)); }

LatentCode make_code(const Shape& s, std::vector<entropy::ChannelRange> segments, entropy::LatentOrigin origin) {
  LatentCode code;
  code.channels = s[1];
  code.height = s[2];
  code.width = s[3];
  code.values.assign(shape_numel(s), 0);
  code.segments = std::move(segments);
  code.origin = origin;
  return code;
}

// Hyper-latent: z rounded to integers, one factorized table per channel.
// `coder` is either the encoder (values known) or the decoder.
template <typename Coder>
Tensor code_hyper(const entropy::FactorizedModel& model, const Shape& shape, Coder&& coder, LatentCode& code,
                  StreamStats& stats) {
  Tensor z_hat(shape);
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  for (int c = 0; c < shape[1]; ++c) {
    const entropy::CdfTable table = model.table(c);
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t idx = c * plane + k;
      const std::int64_t v = coder(table, idx);
      code.values[idx] = v;
      z_hat[idx] = static_cast<double>(v);
      stats.estimated_bits += neg_log2(model.pmf(c, static_cast<double>(v)));
      stats.escapes += (v < table.min_symbol || v > table.max_symbol());
      ++stats.symbols;
    }
  }
  return z_hat;
}

// Segment loop shared by encoder and decoder: estimate (mu, sigma) for segment
// i from the reconstruction of segments < i, code each residual, reconstruct.
template <typename Coder>
Tensor code_segments(Tape& tape, const SegmentEstimator& est, const entropy::GaussianConditional& gc, Var cond,
                     const Shape& shape, Coder&& coder, LatentCode& code, StreamStats& stats) {
  Tensor y_hat(shape);
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  Var prefix;
  for (int i = 0; i < est.num_segments(); ++i) {
    const entropy::ChannelRange seg = est.segments()[i];
    GaussianParams p = est(tape, i, cond, prefix);
    const Tensor& mu = p.mu.value();
    const Tensor& sigma = p.sigma.value();
    for (std::size_t k = 0; k < mu.size(); ++k) {
      if (!std::isfinite(mu[k]) || !std::isfinite(sigma[k]))
        throw CorruptStreamError("non-finite entropy parameters in segment " + std::to_string(i));
      const double s = gc.floor(sigma[k]);
      const std::size_t idx = seg.begin * plane + k;
      const entropy::CdfTable table = gc.table(s);
      const std::int64_t r = coder(table, idx, mu[k]);
      code.values[idx] = r;
      y_hat[idx] = static_cast<double>(r) + mu[k];
      stats.estimated_bits += neg_log2(entropy::gaussian_pmf(static_cast<double>(r), s));
      stats.escapes += (r < table.min_symbol || r > table.max_symbol());
      ++stats.symbols;
    }
    Tensor pre({1, seg.end, shape[2], shape[3]});
    std::copy(y_hat.ptr(), y_hat.ptr() + seg.end * plane, pre.ptr());
    prefix = tape.constant(std::move(pre));
  }
  return y_hat;
}

Tensor rounded(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) throw Error("non-finite latent value");
    out[i] = static_cast<double>(entropy::quantize_residual(t[i], 0.0));
  }
  return out;
}

void check_extent(int width, int height, int pad) {
  const std::int64_t px = static_cast<std::int64_t>(padded_extent(width, pad)) * padded_extent(height, pad);
  if (px > kMaxPixels) throw InvalidArgument("image too large: " + std::to_string(width) + "x" + std::to_string(height));
}

}  // namespace

EncodeResult encode_image(const CodecModel& model, const Image& image) {
  const CodecConfig& cfg = model.config();
  if (image.width <= 0 || image.height <= 0) throw InvalidArgument("cannot encode a zero-size image");
  if (image.width > 65535 || image.height > 65535) throw InvalidArgument("image dimensions exceed 65535");
  check_extent(image.width, image.height, cfg.pad_multiple);

  const entropy::GaussianConditional gc(cfg.sigma_min);
  EncodeResult res;
  EncodeReport& rep = res.report;
  rep.width = image.width;
  rep.height = image.height;
  CodecTrace& tr = res.trace;
  std::array<RangeEncoder, kNumStreams> enc;

  Tape tape(false);
  Var x = tape.constant(image_to_tensor(image, cfg.pad_multiple));

  // Auxiliary network.
  Var y_aux = model.aux().encode(tape, x);
  const Tensor z_aux = rounded(model.aux().hyper().encode(tape, y_aux).value());
  tr.codes[kZAux] = make_code(z_aux.shape(), {{0, z_aux.dim(1)}}, entropy::LatentOrigin::kAux);
  code_hyper(model.aux().z_model(), z_aux.shape(),
             [&](const entropy::CdfTable& t, std::size_t i) {
               const auto v = static_cast<std::int64_t>(z_aux[i]);
               entropy::encode_value(enc[kZAux], t, v);
               return v;
             },
             tr.codes[kZAux], rep.streams[kZAux]);
  Var z_apm = model.aux().hyper().decode(tape, tape.constant(z_aux));
  const Tensor& ya = y_aux.value();
  tr.codes[kYAux] = make_code(ya.shape(), model.aux().estimator().segments(), entropy::LatentOrigin::kAux);
  tr.y_aux_hat = code_segments(tape, model.aux().estimator(), gc, z_apm, ya.shape(),
                               [&](const entropy::CdfTable& t, std::size_t i, double mu) {
                                 const std::int64_t r = entropy::quantize_residual(ya[i], mu);
                                 entropy::encode_value(enc[kYAux], t, r);
                                 return r;
                               },
                               tr.codes[kYAux], rep.streams[kYAux]);
  const MultiScaleFeatures feats = model.aux().decode(tape, tape.constant(tr.y_aux_hat));

  // Main network.
  Var y = model.main().encode(tape, x, feats);
  const Tensor z = rounded(model.main().hyper().encode(tape, y).value());
  tr.codes[kZMain] = make_code(z.shape(), {{0, z.dim(1)}}, entropy::LatentOrigin::kMain);
  code_hyper(model.main().z_model(), z.shape(),
             [&](const entropy::CdfTable& t, std::size_t i) {
               const auto v = static_cast<std::int64_t>(z[i]);
               entropy::encode_value(enc[kZMain], t, v);
               return v;
             },
             tr.codes[kZMain], rep.streams[kZMain]);
  Var z_pm = model.main().hyper().decode(tape, tape.constant(z));
  const Tensor& ym = y.value();
  tr.codes[kYMain] = make_code(ym.shape(), model.main().estimator().segments(), entropy::LatentOrigin::kMain);
  tr.y_hat = code_segments(tape, model.main().estimator(), gc, model.main().ape_condition(z_pm, feats), ym.shape(),
                           [&](const entropy::CdfTable& t, std::size_t i, double mu) {
                             const std::int64_t r = entropy::quantize_residual(ym[i], mu);
                             entropy::encode_value(enc[kYMain], t, r);
                             return r;
                           },
                           tr.codes[kYMain], rep.streams[kYMain]);
  tr.x_hat = model.main().decode(tape, tape.constant(tr.y_hat), feats).value();
  res.reconstruction = tensor_to_image(tr.x_hat, image.width, image.height);

  Container c;
  c.header.fingerprint = model.fingerprint();
  c.header.width = static_cast<std::uint16_t>(image.width);
  c.header.height = static_cast<std::uint16_t>(image.height);
  c.header.lambda_index = lambda_index(cfg.lambda);
  for (int s = 0; s < kNumStreams; ++s) {
    c.streams[s] = enc[s].finish();
    rep.streams[s].bytes = c.streams[s].size();
  }
  res.bytes = write_container(std::move(c));
  rep.file_bytes = res.bytes.size();
  return res;
}

DecodeResult decode_image(const CodecModel& model, std::span<const std::uint8_t> bytes) {
  const CodecConfig& cfg = model.config();
  Container c = parse_container(bytes);
  if (c.header.fingerprint != model.fingerprint())
    throw ConfigMismatchError("stream was encoded with different weights or config");
  const int width = c.header.width;
  const int height = c.header.height;
  try {
    check_extent(width, height, cfg.pad_multiple);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }

  const entropy::GaussianConditional gc(cfg.sigma_min);
  DecodeResult res;
  res.header = c.header;
  CodecTrace& tr = res.trace;
  StreamStats ignored;
  std::array<RangeDecoder, kNumStreams> dec{RangeDecoder(c.streams[0]), RangeDecoder(c.streams[1]),
                                            RangeDecoder(c.streams[2]), RangeDecoder(c.streams[3])};
  auto hyper_decoder = [&](int s) {
    return [&dec, s](const entropy::CdfTable& t, std::size_t) { return entropy::decode_value(dec[s], t); };
  };
  auto residual_decoder = [&](int s) {
    return [&dec, s](const entropy::CdfTable& t, std::size_t, double) { return entropy::decode_value(dec[s], t); };
  };

  const int hp = padded_extent(height, cfg.pad_multiple);
  const int wp = padded_extent(width, cfg.pad_multiple);
  const Shape z_shape{1, cfg.hyper_channels, hp / 64, wp / 64};
  const Shape ya_shape{1, cfg.aux_latent, hp / 16, wp / 16};
  const Shape y_shape{1, cfg.main_latent, hp / 16, wp / 16};

  Tape tape(false);
  tr.codes[kZAux] = make_code(z_shape, {{0, z_shape[1]}}, entropy::LatentOrigin::kAux);
  const Tensor z_aux = code_hyper(model.aux().z_model(), z_shape, hyper_decoder(kZAux), tr.codes[kZAux], ignored);
  Var z_apm = model.aux().hyper().decode(tape, tape.constant(z_aux));
  tr.codes[kYAux] = make_code(ya_shape, model.aux().estimator().segments(), entropy::LatentOrigin::kAux);
  tr.y_aux_hat = code_segments(tape, model.aux().estimator(), gc, z_apm, ya_shape, residual_decoder(kYAux),
                               tr.codes[kYAux], ignored);
  const MultiScaleFeatures feats = model.aux().decode(tape, tape.constant(tr.y_aux_hat));

  tr.codes[kZMain] = make_code(z_shape, {{0, z_shape[1]}}, entropy::LatentOrigin::kMain);
  const Tensor z = code_hyper(model.main().z_model(), z_shape, hyper_decoder(kZMain), tr.codes[kZMain], ignored);
  Var z_pm = model.main().hyper().decode(tape, tape.constant(z));
  tr.codes[kYMain] = make_code(y_shape, model.main().estimator().segments(), entropy::LatentOrigin::kMain);
  tr.y_hat = code_segments(tape, model.main().estimator(), gc, model.main().ape_condition(z_pm, feats), y_shape,
                           residual_decoder(kYMain), tr.codes[kYMain], ignored);
  tr.x_hat = model.main().decode(tape, tape.constant(tr.y_hat), feats).value();
  for (double v : tr.x_hat.data())
    if (!std::isfinite(v)) throw CorruptStreamError("decoded image contains non-finite values");
  res.image = tensor_to_image(tr.x_hat, width, height);
  return res;
}

}  // namespace aifc

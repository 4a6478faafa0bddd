#include "aifc/model.hpp"

#include <cstring>

#include "aifc/error.hpp"
#include "aifc/ops.hpp"
#include "aifc/weights_io.hpp"

namespace aifc {

namespace {

const CodecConfig& validated(const CodecConfig& c) {
  c.validate();
  return c;
}

}  // namespace

CodecModel::CodecModel(const CodecConfig& config, std::uint64_t seed)
    : config_(validated(config)), store_(seed), aux_(store_, config_), main_(store_, config_) {}

std::uint64_t CodecModel::fingerprint() const {
  const std::string text = config_.to_text();
  std::uint64_t h = fnv1a64(text.data(), text.size());
  for (const Parameter& p : store_.all()) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.ptr(), p.value.size() * sizeof(double), h);
  }
  return h;
}

void CodecModel::round_to_f32() {
  for (Parameter& p : store_.all())
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
}

void CodecModel::save(const std::string& path) const {
  nlohmann::json meta;
  meta["config"] = config_.to_text();
  meta["config_hash"] = config_.hash();
  save_weights(path, store_, meta);
}

void CodecModel::load(const std::string& path) {
  const nlohmann::json meta = load_weights(path, store_);
  if (!meta.contains("config") || !meta["config"].is_string())
    throw ConfigMismatchError("weights " + path + " carry no config");
  const CodecConfig stored = CodecConfig::parse(meta["config"].get<std::string>());
  if (stored.hash() != config_.hash())
    throw ConfigMismatchError("weights " + path + " were trained with a different config");
}

Var rd_loss(Var x, Var x_hat, Var bits_total, double lambda) {
  const double pixels = static_cast<double>(x.dim(2)) * x.dim(3);
  Var rate = ops::scale(bits_total, 1.0 / pixels);
  if (lambda == 0.0) return rate;
  return ops::add(rate, ops::scale(ops::mse(x, x_hat), lambda * 255.0 * 255.0));
}

namespace {

// Runs the segment loop of one latent under noise relaxation. Returns the
// straight-through reconstruction and accumulates the rate of every segment.
Var relaxed_segments(Tape& tape, const SegmentEstimator& est, Var y, Var cond, std::mt19937_64& rng, Var& bits) {
  std::vector<Var> recon;
  Var prefix;
  for (int i = 0; i < est.num_segments(); ++i) {
    const auto& seg = est.segments()[i];
    GaussianParams p = est(tape, i, cond, prefix);
    Var yi = ops::slice(y, 1, seg.begin, seg.end);
    entropy::RelaxedResidual r = entropy::noise_quantize(yi, p.mu, rng);
    Var b = ops::sum(ops::gaussian_bits(r.rate_input, p.sigma));
    bits = bits.valid() ? ops::add(bits, b) : b;
    recon.push_back(r.reconstruction);
    prefix = recon.size() == 1 ? recon[0] : ops::concat(recon, 1);
  }
  return prefix;
}

Var relaxed_hyper_bits(Tape& tape, const entropy::FactorizedModel& model, Var z, std::mt19937_64& rng) {
  Var noisy = ops::add(z, tape.constant(entropy::uniform_noise(z.shape(), rng)));
  return ops::sum(model.bits(tape, noisy));
}

}  // namespace

TrainForward CodecModel::train_forward(Tape& tape, Var x, double lambda, std::mt19937_64& rng) const {
  TrainForward f;
  Var y_aux = aux_.encode(tape, x);
  Var z_aux = aux_.hyper().encode(tape, y_aux);
  f.bits_z_aux = relaxed_hyper_bits(tape, aux_.z_model(), z_aux, rng);
  Var z_apm = aux_.hyper().decode(tape, ops::ste_round(z_aux));
  Var y_aux_hat = relaxed_segments(tape, aux_.estimator(), y_aux, z_apm, rng, f.bits_y_aux);
  MultiScaleFeatures feats = aux_.decode(tape, y_aux_hat);

  Var y = main_.encode(tape, x, feats);
  Var z = main_.hyper().encode(tape, y);
  f.bits_z = relaxed_hyper_bits(tape, main_.z_model(), z, rng);
  Var z_pm = main_.hyper().decode(tape, ops::ste_round(z));
  Var y_hat = relaxed_segments(tape, main_.estimator(), y, main_.ape_condition(z_pm, feats), rng, f.bits_y);
  f.x_hat = main_.decode(tape, y_hat, feats);

  f.bits_total = ops::add(ops::add(f.bits_z_aux, f.bits_y_aux), ops::add(f.bits_z, f.bits_y));
  f.mse = ops::mse(x, f.x_hat);
  f.loss = rd_loss(x, f.x_hat, f.bits_total, lambda);
  return f;
}

}  // namespace aifc

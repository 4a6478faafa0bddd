#include "aifc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "aifc/error.hpp"
#include "aifc/weights_io.hpp"

namespace aifc {

Trainer::Trainer(CodecModel& model, TrainOptions options) : model_(model), opt_(options), rng_(options.seed) {
  for (const Parameter& p : model_.params().all()) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

LossRecord Trainer::step(const Tensor& x) {
  auto& params = model_.params().all();
  model_.params().zero_grad();
  Tape tape;
  Var xv = tape.constant(x);
  TrainForward f = model_.train_forward(tape, xv, model_.config().lambda, rng_);
  LossRecord rec;
  rec.step = t_;
  rec.loss = f.loss.value()[0];
  rec.bpp = f.bits_total.value()[0] / (static_cast<double>(x.dim(2)) * x.dim(3));
  rec.mse = f.mse.value()[0];
  if (!std::isfinite(rec.loss))
    throw DivergenceError("non-finite loss at step " + std::to_string(t_) + " (bpp " + std::to_string(rec.bpp) +
                          ", mse " + std::to_string(rec.mse) + ")");
  tape.backward(f.loss);

  double norm2 = 0.0;
  for (const Parameter& p : params) norm2 += sum_squares(p.grad);
  const double norm = std::sqrt(norm2);
  const double clip = (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) ? opt_.clip_norm / norm : 1.0;

  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k].value;
    const Tensor& g = params[k].grad;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
      w[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
  }
  return rec;
}

std::vector<LossRecord> Trainer::run(const std::vector<Tensor>& patches, int steps) {
  if (steps < 0) throw InvalidArgument("negative step count");
  if (steps > 0 && patches.empty()) throw InvalidArgument("training needs at least one patch");
  std::vector<LossRecord> trace;
  for (int s = 0; s < steps; ++s) {
    LossRecord r = step(patches[static_cast<std::size_t>(t_) % patches.size()]);
    if (r.step == 0) first_loss_ = r.loss;
    if (first_loss_ > 0.0 && r.loss > opt_.divergence_factor * first_loss_)
      throw DivergenceError("loss " + std::to_string(r.loss) + " at step " + std::to_string(r.step) + " exceeds " +
                            std::to_string(opt_.divergence_factor) + "x the initial loss " + std::to_string(first_loss_));
    trace.push_back(r);
  }
  return trace;
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  const auto& params = model_.params().all();
  for (std::size_t k = 0; k < params.size(); ++k) tensors.emplace_back("param/" + params[k].name, &params[k].value);
  for (std::size_t k = 0; k < params.size(); ++k) tensors.emplace_back("adam_m/" + params[k].name, &m_[k]);
  for (std::size_t k = 0; k < params.size(); ++k) tensors.emplace_back("adam_v/" + params[k].name, &v_[k]);
  std::ostringstream rng;
  rng << rng_;
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["config"] = model_.config().to_text();
  meta["config_hash"] = model_.config().hash();
  meta["step"] = t_;
  meta["seed"] = opt_.seed;
  meta["lambda"] = model_.config().lambda;
  meta["rng"] = rng.str();
  char first[32];
  std::snprintf(first, sizeof first, "%a", first_loss_);
  meta["first_loss"] = first;
  write_tensor_file(path, tensors, DType::kF64, meta);
}

void Trainer::load_checkpoint(const std::string& path) {
  TensorFile f = read_tensor_file(path);
  if (f.dtype != DType::kF64 || f.meta.value("kind", "") != "checkpoint")
    throw FormatError(path + " is not a training checkpoint");
  if (f.meta.value("config_hash", std::uint64_t{0}) != model_.config().hash())
    throw ConfigMismatchError("checkpoint " + path + " belongs to a different config");
  auto& params = model_.params().all();
  if (f.tensors.size() != 3 * params.size()) throw ConfigMismatchError("checkpoint tensor count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (int part = 0; part < 3; ++part) {
      NamedTensor& nt = f.tensors[part * params.size() + k];
      static const char* kPrefix[3] = {"param/", "adam_m/", "adam_v/"};
      if (nt.name != kPrefix[part] + params[k].name || nt.tensor.shape() != params[k].value.shape())
        throw ConfigMismatchError("checkpoint entry " + nt.name + " does not match the model");
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].value = std::move(f.tensors[k].tensor);
    m_[k] = std::move(f.tensors[params.size() + k].tensor);
    v_[k] = std::move(f.tensors[2 * params.size() + k].tensor);
  }
  t_ = f.meta.at("step").get<long>();
  opt_.seed = f.meta.at("seed").get<std::uint64_t>();
  std::istringstream rng(f.meta.at("rng").get<std::string>());
  rng >> rng_;
  first_loss_ = std::strtod(f.meta.at("first_loss").get<std::string>().c_str(), nullptr);
}

LossRecord evaluate_loss(const CodecModel& model, const std::vector<Tensor>& patches, std::uint64_t seed) {
  if (patches.empty()) throw InvalidArgument("evaluation needs at least one patch");
  std::mt19937_64 rng(seed);
  LossRecord mean;
  for (const Tensor& x : patches) {
    Tape tape(false);
    TrainForward f = model.train_forward(tape, tape.constant(x), model.config().lambda, rng);
    mean.loss += f.loss.value()[0];
    mean.bpp += f.bits_total.value()[0] / (static_cast<double>(x.dim(2)) * x.dim(3));
    mean.mse += f.mse.value()[0];
  }
  const double n = static_cast<double>(patches.size());
  mean.loss /= n;
  mean.bpp /= n;
  mean.mse /= n;
  return mean;
}

std::string format_loss_csv(const std::vector<LossRecord>& records) {
  std::string out = "step,loss,bpp,mse\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g\n", r.step, r.loss, r.bpp, r.mse);
    out += buf;
  }
  return out;
}

std::vector<Tensor> synthetic_patches(int count, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> out;
  for (int n = 0; n < count; ++n) {
    Tensor t({1, 3, size, size});
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
      base[c] = 0.2 + 0.6 * u(rng);
      gx[c] = 0.4 * (u(rng) - 0.5);
      gy[c] = 0.4 * (u(rng) - 0.5);
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          t.at(0, c, y, x) = base[c] + gx[c] * (x / double(size) - 0.5) + gy[c] * (y / double(size) - 0.5);
    const int shapes = 1 + static_cast<int>(u(rng) * 3.0);
    for (int s = 0; s < shapes; ++s) {
      const bool ellipse = u(rng) < 0.5;
      const double cx = u(rng) * size, cy = u(rng) * size;
      const double rx = (0.1 + 0.25 * u(rng)) * size, ry = (0.1 + 0.25 * u(rng)) * size;
      double col[3];
      for (double& c : col) c = u(rng);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = (x - cx) / rx, dy = (y - cy) / ry;
          const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
          if (inside)
            for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = col[c];
        }
    }
    for (double& v : t.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace aifc

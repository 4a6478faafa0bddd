// aifc: encode, decode, train and evaluate the auxiliary-info predictive codec.
//
// Exit codes: 0 ok, 1 usage, 2 missing file or unparsable input, 3 config
// mismatch or malformed stream, 4 internal invariant breach, 5 RD curves
// without PSNR overlap.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "aifc/codec.hpp"
#include "aifc/error.hpp"
#include "aifc/metrics.hpp"
#include "aifc/train.hpp"
#include "aifc/weights_io.hpp"

namespace fs = std::filesystem;
using namespace aifc;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kFormat = 3, kInternal = 4, kNoOverlap = 5 };

std::unique_ptr<CodecModel> load_model(const std::string& config_path, const std::string& weights_path) {
  const CodecConfig cfg = CodecConfig::load(config_path);
  if (!fs::exists(weights_path)) throw IoError("no such file: " + weights_path);
  auto model = std::make_unique<CodecModel>(cfg);
  model->load(weights_path);
  return model;
}

// Config stored in a weights manifest.
CodecConfig config_of_weights(const std::string& weights_path) {
  const TensorFile f = read_tensor_file(weights_path);
  if (!f.meta.contains("config")) throw ConfigMismatchError(weights_path + " carries no config");
  return CodecConfig::parse(f.meta["config"].get<std::string>());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<fs::path> ppm_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("no such directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .ppm files in " + dir);
  return files;
}

struct EncodeArgs {
  std::string input, weights, config, output, recon;
  bool report = false;
  bool verify = false;
};

int run_encode(const EncodeArgs& a) {
  const Image img = read_ppm(a.input);
  auto model = load_model(a.config, a.weights);
  EncodeResult res = encode_image(*model, img);
  write_file(a.output, res.bytes);
  if (!a.recon.empty()) write_ppm(a.recon, res.reconstruction);
  std::string psnr_field;
  if (a.verify) {
    DecodeResult dec = decode_image(*model, res.bytes);
    if (!(dec.image == res.reconstruction)) {
      std::cerr << "error: decoded image differs from the encoder-side reconstruction\n";
      return kInternal;
    }
    std::cout << "roundtrip=exact\n";
    psnr_field = fixed(psnr(img, dec.image), 4);
  }
  if (a.report) {
    const EncodeReport& r = res.report;
    std::cout << "bpp,psnr,aux_bytes,main_bytes,aux_ratio\n"
              << fixed(r.bpp(), 6) << ',' << psnr_field << ',' << r.aux_bytes() << ',' << r.main_bytes() << ','
              << fixed(r.aux_ratio(), 2) << '\n';
  }
  return kOk;
}

struct DecodeArgs {
  std::string input, weights, config, output, verify;
};

int run_decode(const DecodeArgs& a) {
  const auto bytes = read_file(a.input);
  auto model = load_model(a.config, a.weights);
  DecodeResult dec = decode_image(*model, bytes);
  write_ppm(a.output, dec.image);
  if (!a.verify.empty()) {
    const Image ref = read_ppm(a.verify);
    if (dec.image == ref) {
      std::cout << "roundtrip=exact\n";
    } else {
      const bool same_size = ref.width == dec.image.width && ref.height == dec.image.height;
      std::cout << "roundtrip=differs";
      if (same_size) std::cout << " psnr=" << fixed(psnr(ref, dec.image), 4);
      std::cout << '\n';
      return kInternal;
    }
  }
  return kOk;
}

struct TrainArgs {
  std::string config, output, inputs, loss_csv, checkpoint, resume;
  int steps = 200;
  int patches = 100;
  int patch_size = 64;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 1;
  std::uint64_t noise_seed = 2;
  double lr = 1e-4;
  double lambda = -1.0;
};

int run_train(const TrainArgs& a) {
  CodecConfig cfg = CodecConfig::load(a.config);
  if (a.lambda >= 0.0) cfg.lambda = a.lambda;
  CodecModel model(cfg, a.init_seed);
  TrainOptions opt;
  opt.lr = a.lr;
  opt.seed = a.noise_seed;
  Trainer trainer(model, opt);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);

  std::vector<Tensor> data;
  if (!a.inputs.empty()) {
    for (const auto& p : ppm_files(a.inputs)) data.push_back(image_to_tensor(read_ppm(p.string()), cfg.pad_multiple));
  } else {
    if (a.patch_size % cfg.pad_multiple) throw InvalidArgument("patch size must be a multiple of pad_multiple");
    data = synthetic_patches(a.patches, a.patch_size, a.data_seed);
  }
  const auto trace = trainer.run(data, a.steps);
  model.save(a.output);
  if (!a.loss_csv.empty()) {
    std::ofstream f(a.loss_csv, std::ios::trunc);
    if (!f) throw IoError("cannot write " + a.loss_csv);
    f << format_loss_csv(trace);
  }
  if (!a.checkpoint.empty()) trainer.save_checkpoint(a.checkpoint);
  if (!trace.empty())
    std::cout << "steps=" << trainer.steps_done() << " first_loss=" << fixed(trace.front().loss, 6)
              << " last_loss=" << fixed(trace.back().loss, 6) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string inputs, weights_list, out;
};

int run_eval_curve(const EvalArgs& a) {
  const auto files = ppm_files(a.inputs);
  std::ifstream list(a.weights_list);
  if (!list) throw IoError("no such file: " + a.weights_list);
  const fs::path base = fs::path(a.weights_list).parent_path();
  std::map<double, std::string> entries;
  std::string line;
  int n = 0;
  while (std::getline(list, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    double lambda;
    std::string path;
    if (!(row >> lambda)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ParseError(a.weights_list + ": line " + std::to_string(n) + ": expected '<lambda> <weights path>'", n);
    }
    if (!(row >> path)) throw ParseError(a.weights_list + ": line " + std::to_string(n) + ": missing weights path", n);
    const fs::path p = fs::path(path).is_absolute() ? fs::path(path) : base / path;
    if (!entries.emplace(lambda, p.string()).second)
      throw ParseError(a.weights_list + ": line " + std::to_string(n) + ": duplicate lambda", n);
  }
  if (entries.empty()) throw ParseError(a.weights_list + ": no entries");

  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_ppm(f.string()));
  std::vector<RDPoint> points;
  for (const auto& [lambda, path] : entries) {
    CodecModel model(config_of_weights(path));
    model.load(path);
    RDPoint pt;
    pt.lambda = lambda;
    for (const Image& img : images) {
      EncodeResult res = encode_image(model, img);
      pt.bpp += res.report.bpp();
      pt.psnr_db += psnr(img, res.reconstruction);
    }
    pt.bpp /= static_cast<double>(images.size());
    pt.psnr_db /= static_cast<double>(images.size());
    points.push_back(pt);
  }
  std::ofstream out(a.out, std::ios::trunc);
  if (!out) throw IoError("cannot write " + a.out);
  out << format_rd_csv(points);
  return kOk;
}

int run_bd_rate(const std::string& anchor, const std::string& test) {
  const double v = bd_rate(read_rd_csv(anchor), read_rd_csv(test));
  std::cout << fixed(v, 2) << '\n';
  return kOk;
}

int run_inspect(const std::string& input) {
  const auto bytes = read_file(input);
  const ContainerHeader h = parse_header(bytes);
  std::cout << "magic: AIFC\n"
            << "version: " << int(h.version) << '\n'
            << "fingerprint: " << hex64(h.fingerprint) << '\n'
            << "width: " << h.width << '\n'
            << "height: " << h.height << '\n'
            << "lambda_index: " << int(h.lambda_index);
  if (h.lambda_index < kLambdaGrid.size()) std::cout << " (lambda " << kLambdaGrid[h.lambda_index] << ')';
  std::cout << '\n';
  static const char* kNames[kNumStreams] = {"z_aux", "y_aux", "z", "y"};
  for (int s = 0; s < kNumStreams; ++s) std::cout << "stream." << kNames[s] << ": " << h.lengths[s] << '\n';
  std::cout << "payload: " << h.payload_size() << '\n'
            << "file: " << bytes.size() << '\n'
            << "checksum: " << hex64(h.checksum).substr(8) << '\n';
  parse_container(bytes);
  std::cout << "checksum_ok: yes\n";
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Auxiliary-info predictive learned image codec"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Compress a PPM image");
  c_enc->add_option("--input", enc.input, "Input image (binary PPM)")->required();
  c_enc->add_option("--weights", enc.weights, "Weights file")->required();
  c_enc->add_option("--config", enc.config, "Codec config")->required();
  c_enc->add_option("--output", enc.output, "Output container")->required();
  c_enc->add_option("--recon", enc.recon, "Also write the reconstruction as PPM");
  c_enc->add_flag("--report", enc.report, "Print bpp,psnr,aux_bytes,main_bytes,aux_ratio");
  c_enc->add_flag("--verify", enc.verify, "Decode in-process and check the reconstruction");

  DecodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Decompress a container to PPM");
  c_dec->add_option("--input", dec.input, "Input container")->required();
  c_dec->add_option("--weights", dec.weights, "Weights file")->required();
  c_dec->add_option("--config", dec.config, "Codec config")->required();
  c_dec->add_option("--output", dec.output, "Output image (PPM)")->required();
  c_dec->add_option("--verify", dec.verify, "Compare with the encoder-side reconstruction");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Rate-distortion training");
  c_tr->add_option("--config", tr.config, "Codec config")->required();
  c_tr->add_option("--output", tr.output, "Output weights file")->required();
  c_tr->add_option("--steps", tr.steps, "Optimizer steps (0 writes the initial weights)")->check(CLI::NonNegativeNumber);
  c_tr->add_option("--inputs", tr.inputs, "Directory of PPM training images (default: synthetic patches)");
  c_tr->add_option("--patches", tr.patches, "Number of synthetic patches")->check(CLI::PositiveNumber);
  c_tr->add_option("--patch-size", tr.patch_size, "Synthetic patch size")->check(CLI::PositiveNumber);
  c_tr->add_option("--init-seed", tr.init_seed, "Weight initialization seed");
  c_tr->add_option("--data-seed", tr.data_seed, "Synthetic data seed");
  c_tr->add_option("--noise-seed", tr.noise_seed, "Quantization noise seed");
  c_tr->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  c_tr->add_option("--lambda", tr.lambda, "Override the config lambda")->check(CLI::NonNegativeNumber);
  c_tr->add_option("--loss-csv", tr.loss_csv, "Write the loss trace as CSV");
  c_tr->add_option("--checkpoint", tr.checkpoint, "Write a resumable checkpoint");
  c_tr->add_option("--resume", tr.resume, "Resume from a checkpoint");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval-curve", "Encode a directory of images with one model per lambda");
  c_ev->add_option("--inputs", ev.inputs, "Directory of PPM images")->required();
  c_ev->add_option("--weights-list", ev.weights_list, "Lines of '<lambda> <weights path>'")->required();
  c_ev->add_option("--out", ev.out, "Output RD csv")->required();

  std::string anchor, test;
  auto* c_bd = app.add_subcommand("bd-rate", "BD-rate of --test against --anchor (negative means bit saving)");
  c_bd->add_option("--anchor", anchor, "Anchor RD csv")->required();
  c_bd->add_option("--test", test, "Test RD csv")->required();

  std::string inspect_input;
  auto* c_in = app.add_subcommand("inspect", "Print a container header and validate its checksum");
  c_in->add_option("--input", inspect_input, "Container file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*c_enc) return run_encode(enc);
    if (*c_dec) return run_decode(dec);
    if (*c_tr) return run_train(tr);
    if (*c_ev) return run_eval_curve(ev);
    if (*c_bd) return run_bd_rate(anchor, test);
    if (*c_in) return run_inspect(inspect_input);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const NoOverlapError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNoOverlap;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const ConfigMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const CorruptStreamError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }

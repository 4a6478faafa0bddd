#include "aifc/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "aifc/error.hpp"

namespace aifc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, int line) {
  int out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ParseError("line " + std::to_string(line) + ": expected integer, got '" + v + "'", line);
  return out;
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": expected number, got '" + v + "'", line);
  }
}

std::vector<int> parse_list(const std::string& v, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), line));
  return out;
}

std::string list_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string double_text(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

}  // namespace

void CodecConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw InvalidArgument(std::string("config: ") + name + " must be positive");
  };
  if (aux_channels.size() != 3) throw InvalidArgument("config: aux_channels needs three widths");
  if (main_channels.size() != 3) throw InvalidArgument("config: main_channels needs three widths");
  for (int c : aux_channels) positive(c, "aux_channels");
  for (int c : main_channels) positive(c, "main_channels");
  positive(aux_latent, "aux_latent");
  positive(hyper_channels, "hyper_channels");
  positive(feat_c1, "feat_c1");
  positive(feat_c2, "feat_c2");
  positive(feat_c4, "feat_c4");
  positive(feat_c16, "feat_c16");
  positive(main_full, "main_full");
  positive(main_latent, "main_latent");
  positive(num_slices, "num_slices");
  positive(main_segments, "main_segments");
  positive(pe_hidden, "pe_hidden");
  positive(attention_downsample, "attention_downsample");
  if (aux_segments() > aux_latent) throw InvalidArgument("config: more aux segments than aux latent channels");
  if (main_segments > main_latent) throw InvalidArgument("config: more main segments than latent channels");
  if (!(sigma_min > 0.0)) throw InvalidArgument("config: sigma_min must be positive");
  if (pad_multiple < 64 || pad_multiple % 64) throw InvalidArgument("config: pad_multiple must be a multiple of 64");
  if (lambda < 0.0) throw InvalidArgument("config: lambda must be non-negative");
  if (cdf_precision != 16) throw InvalidArgument("config: only 16-bit CDF precision is supported");
  if ((pad_multiple / 4) % attention_downsample)
    throw InvalidArgument("config: attention_downsample must divide the 1/4-scale extent");
}

std::string CodecConfig::to_text() const {
  std::ostringstream os;
  os << "aux_channels = " << list_text(aux_channels) << '\n'
     << "aux_latent = " << aux_latent << '\n'
     << "hyper_channels = " << hyper_channels << '\n'
     << "feat_c1 = " << feat_c1 << '\n'
     << "feat_c2 = " << feat_c2 << '\n'
     << "feat_c4 = " << feat_c4 << '\n'
     << "feat_c16 = " << feat_c16 << '\n'
     << "main_full = " << main_full << '\n'
     << "main_channels = " << list_text(main_channels) << '\n'
     << "main_latent = " << main_latent << '\n'
     << "num_slices = " << num_slices << '\n'
     << "main_segments = " << main_segments << '\n'
     << "pe_hidden = " << pe_hidden << '\n'
     << "attention_downsample = " << attention_downsample << '\n'
     << "sigma_min = " << double_text(sigma_min) << '\n'
     << "pad_multiple = " << pad_multiple << '\n'
     << "lambda = " << double_text(lambda) << '\n'
     << "cdf_precision = " << cdf_precision << '\n';
  return os.str();
}

CodecConfig CodecConfig::parse(const std::string& text) {
  CodecConfig c;
  using Setter = std::function<void(const std::string&, int)>;
  const std::map<std::string, Setter> setters{
      {"aux_channels", [&](const std::string& v, int l) { c.aux_channels = parse_list(v, l); }},
      {"aux_latent", [&](const std::string& v, int l) { c.aux_latent = parse_int(v, l); }},
      {"hyper_channels", [&](const std::string& v, int l) { c.hyper_channels = parse_int(v, l); }},
      {"feat_c1", [&](const std::string& v, int l) { c.feat_c1 = parse_int(v, l); }},
      {"feat_c2", [&](const std::string& v, int l) { c.feat_c2 = parse_int(v, l); }},
      {"feat_c4", [&](const std::string& v, int l) { c.feat_c4 = parse_int(v, l); }},
      {"feat_c16", [&](const std::string& v, int l) { c.feat_c16 = parse_int(v, l); }},
      {"main_full", [&](const std::string& v, int l) { c.main_full = parse_int(v, l); }},
      {"main_channels", [&](const std::string& v, int l) { c.main_channels = parse_list(v, l); }},
      {"main_latent", [&](const std::string& v, int l) { c.main_latent = parse_int(v, l); }},
      {"num_slices", [&](const std::string& v, int l) { c.num_slices = parse_int(v, l); }},
      {"main_segments", [&](const std::string& v, int l) { c.main_segments = parse_int(v, l); }},
      {"pe_hidden", [&](const std::string& v, int l) { c.pe_hidden = parse_int(v, l); }},
      {"attention_downsample", [&](const std::string& v, int l) { c.attention_downsample = parse_int(v, l); }},
      {"sigma_min", [&](const std::string& v, int l) { c.sigma_min = parse_double(v, l); }},
      {"pad_multiple", [&](const std::string& v, int l) { c.pad_multiple = parse_int(v, l); }},
      {"lambda", [&](const std::string& v, int l) { c.lambda = parse_double(v, l); }},
      {"cdf_precision", [&](const std::string& v, int l) { c.cdf_precision = parse_int(v, l); }},
  };
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(line) + ": expected key = value", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ParseError("line " + std::to_string(line) + ": unknown key '" + key + "'", line);
    if (!seen.insert(key).second) throw ParseError("line " + std::to_string(line) + ": duplicate key '" + key + "'", line);
    it->second(value, line);
  }
  c.validate();
  return c;
}

CodecConfig CodecConfig::load(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void CodecConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << to_text();
}

std::uint64_t CodecConfig::hash() const {
  const std::string t = to_text();
  return fnv1a64(t.data(), t.size());
}

std::uint8_t lambda_index(double lambda) {
  for (std::size_t i = 0; i < kLambdaGrid.size(); ++i)
    if (std::abs(kLambdaGrid[i] - lambda) <= 1e-12 * kLambdaGrid[i]) return static_cast<std::uint8_t>(i);
  return 255;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace aifc

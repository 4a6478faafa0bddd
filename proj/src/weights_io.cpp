#include "aifc/weights_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "aifc/error.hpp"

namespace aifc {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {
constexpr const char* kFormat = "aifc-tensors";
constexpr int kVersion = 1;
}  // namespace

std::string manifest_path(const std::string& data_path) { return data_path + ".json"; }

void write_tensor_file(const std::string& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                       DType dtype, const nlohmann::json& meta) {
  const std::size_t elem = dtype == DType::kF32 ? 4 : 8;
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["dtype"] = dtype == DType::kF32 ? "f32" : "f64";
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();

  std::ofstream data(path, std::ios::binary | std::ios::trunc);
  if (!data) throw IoError("cannot write " + path);
  std::size_t offset = 0;
  std::set<std::string> names;
  for (const auto& [name, t] : tensors) {
    if (!names.insert(name).second) throw InvalidArgument("duplicate tensor name " + name);
    std::vector<char> buf(t->size() * elem);
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (dtype == DType::kF32) {
        const float f = static_cast<float>((*t)[i]);
        std::memcpy(buf.data() + i * 4, &f, 4);
      } else {
        const double d = (*t)[i];
        std::memcpy(buf.data() + i * 8, &d, 8);
      }
    }
    data.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    manifest["tensors"].push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}, {"bytes", buf.size()}});
    offset += buf.size();
  }
  if (!data) throw IoError("write failed: " + path);
  std::ofstream man(manifest_path(path), std::ios::trunc);
  if (!man) throw IoError("cannot write " + manifest_path(path));
  man << manifest.dump(1) << '\n';
}

TensorFile read_tensor_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
  const std::string mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) throw IoError("no such file: " + mpath);
  nlohmann::json manifest;
  try {
    std::ifstream man(mpath);
    manifest = nlohmann::json::parse(man);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + mpath + ": " + e.what());
  }
  TensorFile out;
  try {
    if (manifest.at("format") != kFormat) throw ParseError("not a tensor manifest: " + mpath);
    if (manifest.at("version") != kVersion) throw VersionError("unsupported tensor manifest version in " + mpath);
    const std::string dt = manifest.at("dtype");
    if (dt == "f32") {
      out.dtype = DType::kF32;
    } else if (dt == "f64") {
      out.dtype = DType::kF64;
    } else {
      throw ParseError("unknown dtype " + dt);
    }
    out.meta = manifest.value("meta", nlohmann::json::object());

    std::ifstream data(path, std::ios::binary);
    std::vector<char> blob((std::istreambuf_iterator<char>(data)), std::istreambuf_iterator<char>());
    const std::size_t elem = out.dtype == DType::kF32 ? 4 : 8;
    for (const auto& rec : manifest.at("tensors")) {
      NamedTensor nt;
      nt.name = rec.at("name");
      Shape shape = rec.at("shape").get<Shape>();
      const std::size_t offset = rec.at("offset");
      const std::size_t bytes = rec.at("bytes");
      const std::size_t n = shape_numel(shape);
      if (bytes != n * elem) throw ParseError("tensor " + nt.name + ": byte count does not match shape");
      if (offset + bytes > blob.size()) throw TruncatedError("tensor " + nt.name + " extends past end of " + path);
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (out.dtype == DType::kF32) {
          float f;
          std::memcpy(&f, blob.data() + offset + i * 4, 4);
          values[i] = f;
        } else {
          std::memcpy(&values[i], blob.data() + offset + i * 8, 8);
        }
      }
      nt.tensor = Tensor(std::move(shape), std::move(values));
      out.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + mpath + ": " + e.what());
  }
  return out;
}

void save_weights(const std::string& path, const ParameterStore& store, const nlohmann::json& meta) {
  std::vector<std::pair<std::string, const Tensor*>> list;
  for (const auto& p : store.all()) list.emplace_back(p.name, &p.value);
  write_tensor_file(path, list, DType::kF32, meta);
}

nlohmann::json load_weights(const std::string& path, ParameterStore& store) {
  TensorFile f = read_tensor_file(path);
  if (f.tensors.size() != store.all().size())
    throw ConfigMismatchError("weights file has " + std::to_string(f.tensors.size()) + " tensors, model expects " +
                              std::to_string(store.all().size()));
  for (auto& nt : f.tensors) {
    if (!store.contains(nt.name)) throw ConfigMismatchError("unexpected tensor " + nt.name + " in " + path);
    Parameter& p = store.get(nt.name);
    if (p.value.shape() != nt.tensor.shape())
      throw ConfigMismatchError("tensor " + nt.name + " has shape " + shape_str(nt.tensor.shape()) + ", model expects " +
                                shape_str(p.value.shape()));
    p.value = std::move(nt.tensor);
  }
  return f.meta;
}

}  // namespace aifc

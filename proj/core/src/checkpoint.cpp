#include "lgvi/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace lgvi::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

void save_tensors(const std::string& prefix,
                  const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
  fs::path dir = fs::path(prefix).parent_path();
  if (!dir.empty()) fs::create_directories(dir);

  json manifest;
  manifest["format"] = "lgvi-checkpoint-v1";
  manifest["blob"] = fs::path(prefix + ".bin").filename().string();
  json params = json::object();

  std::ofstream blob(prefix + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: cannot write " + prefix + ".bin");
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    params[name] = {{"shape", t->shape}, {"dtype", "f32"}, {"offset", offset}};
    blob.write(reinterpret_cast<const char*>(t->data.data()),
               static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    offset += t->data.size() * sizeof(float);
  }
  manifest["params"] = params;
  manifest["total_bytes"] = offset;

  std::ofstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("checkpoint: cannot write " + prefix + ".json");
  mf << manifest.dump(2) << "\n";
}

std::map<std::string, Tensor<float>> load_tensors(const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("checkpoint: missing " + prefix + ".json");
  json manifest;
  mf >> manifest;
  if (manifest.at("format") != "lgvi-checkpoint-v1")
    throw std::runtime_error("checkpoint: unknown format in " + prefix + ".json");

  std::ifstream blob(prefix + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: missing " + prefix + ".bin");

  std::map<std::string, Tensor<float>> out;
  for (auto it = manifest.at("params").begin(); it != manifest.at("params").end(); ++it) {
    const auto& meta = it.value();
    if (meta.at("dtype") != "f32")
      throw std::runtime_error("checkpoint: unsupported dtype for " + it.key());
    Shape shape = meta.at("shape").get<Shape>();
    Tensor<float> t(shape);
    blob.seekg(static_cast<std::streamoff>(meta.at("offset").get<uint64_t>()));
    blob.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!blob) throw std::runtime_error("checkpoint: truncated blob reading " + it.key());
    out.emplace(it.key(), std::move(t));
  }
  return out;
}

void save_params(const std::string& prefix, const ParamStore<float>& ps) {
  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  for (const auto& [name, var] : ps.params) tensors.emplace_back(name, &var->value);
  save_tensors(prefix, tensors);
}

int load_params(const std::string& prefix, ParamStore<float>& ps, bool strict) {
  auto stored = load_tensors(prefix);
  int loaded = 0;
  for (auto& [name, t] : stored) {
    auto it = ps.params.find(name);
    if (it == ps.params.end()) {
      if (strict) throw std::runtime_error("checkpoint: unexpected parameter " + name);
      continue;
    }
    if (it->second->value.shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name + " (" +
                               shape_str(t.shape) + " vs " +
                               shape_str(it->second->value.shape) + ")");
    it->second->value = std::move(t);
    ++loaded;
  }
  if (strict && loaded != static_cast<int>(ps.params.size()))
    throw std::runtime_error("checkpoint: store has parameters missing from " + prefix);
  return loaded;
}

bool exists(const std::string& prefix) {
  return fs::exists(prefix + ".json") && fs::exists(prefix + ".bin");
}

}  // namespace lgvi::ckpt

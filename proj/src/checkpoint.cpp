#include "udaseg/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "udaseg/common.hpp"

namespace udaseg {

namespace {
constexpr char kMagic[4] = {'U', 'S', 'C', 'K'};
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json meta = ck.meta;
  meta["format_version"] = Checkpoint::kFormatVersion;
  auto& index = meta["tensors"];
  index = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  std::string js = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 4);
  uint32_t ver = Checkpoint::kFormatVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  uint64_t jlen = js.size();
  out.write(reinterpret_cast<const char*>(&jlen), sizeof(jlen));
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& [name, t] : ck.tensors)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("'" + path + "' is not a checkpoint archive");
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != Checkpoint::kFormatVersion)
    throw DataError("checkpoint '" + path + "': unsupported format version " +
                    std::to_string(ver));
  uint64_t jlen = 0;
  in.read(reinterpret_cast<char*>(&jlen), sizeof(jlen));
  std::string js(jlen, '\0');
  in.read(js.data(), static_cast<std::streamsize>(jlen));
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': corrupt metadata: " + e.what());
  }
  for (const auto& entry : ck.meta.at("tensors")) {
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw DataError("checkpoint '" + path + "': truncated tensor data");
    ck.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

}  // namespace udaseg

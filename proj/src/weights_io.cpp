#include "stzoo/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "stzoo/common.hpp"

namespace stzoo {

namespace {
constexpr char kMagic[8] = {'S', 'T', 'Z', 'W', '0', '0', '0', '1'};
}

const NamedArray* Archive::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_archive(const std::string& path, const std::vector<NamedArray>& arrays,
                  const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& a : arrays) {
    nlohmann::json e;
    e["name"] = a.name;
    e["shape"] = a.shape;
    e["dtype"] = "float32";
    e["offset"] = offset;
    header["arrays"].push_back(e);
    offset += a.data.size() * sizeof(float);
  }
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(cat("cannot open '", path, "' for writing"));
  out.write(kMagic, sizeof(kMagic));
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& a : arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  if (!out) throw DataError(cat("write failed for '", path, "'"));
}

Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(cat("cannot open weight file '", path, "'"));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(cat("'", path, "' is not a STZW archive"));
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError(cat("truncated header in '", path, "'"));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(cat("bad header in '", path, "': ", e.what()));
  }
  Archive ar;
  ar.meta = header.value("meta", nlohmann::json::object());
  std::streampos payload = in.tellg();
  for (const auto& e : header.at("arrays")) {
    NamedArray a;
    a.name = e.at("name").get<std::string>();
    a.shape = e.at("shape").get<std::vector<int64_t>>();
    if (e.at("dtype").get<std::string>() != "float32")
      throw DataError(cat("unsupported dtype for '", a.name, "' in '", path, "'"));
    int64_t n = 1;
    for (int64_t d : a.shape) n *= d;
    a.data.resize(static_cast<size_t>(n));
    in.seekg(payload + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    if (!in) throw DataError(cat("truncated payload for '", a.name, "' in '", path, "'"));
    ar.arrays.push_back(std::move(a));
  }
  return ar;
}

}  // namespace stzoo

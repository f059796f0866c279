// core/src/checkpoint.cpp

#include "biaslattice/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace biaslattice {

namespace fs = std::filesystem;
using nlohmann::json;

void doubles_to_bytes(const double* src, size_t n, uint8_t* dst) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits = std::bit_cast<uint64_t>(src[i]);
    for (int b = 0; b < 8; ++b) dst[i * 8 + static_cast<size_t>(b)] = static_cast<uint8_t>(bits >> (8 * b));
  }
}

void bytes_to_doubles(const uint8_t* src, size_t n, double* dst) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(src[i * 8 + static_cast<size_t>(b)]) << (8 * b);
    dst[i] = std::bit_cast<double>(bits);
  }
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

uint64_t fnv1a_update(uint64_t h, const uint8_t* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<uint8_t> tensor_bytes(const Tensor& t) {
  std::vector<uint8_t> bytes(t.data.size() * 8);
  doubles_to_bytes(t.data.data(), t.data.size(), bytes.data());
  return bytes;
}

}  // namespace

std::string base64_encode(const uint8_t* data, size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (size_t i = 0; i < n; i += 3) {
    uint32_t v = static_cast<uint32_t>(data[i]) << 16;
    if (i + 1 < n) v |= static_cast<uint32_t>(data[i + 1]) << 8;
    if (i + 2 < n) v |= data[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    int v = val(c);
    if (v < 0) throw DataError("base64: invalid character");
    buf = (buf << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

uint64_t params_checksum(const NamedTensors& tensors) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : tensors) {
    std::vector<uint8_t> bytes = tensor_bytes(*t);
    h = fnv1a_update(h, bytes.data(), bytes.size());
  }
  return h;
}

std::string checksum_hex(uint64_t checksum) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(checksum));
  return std::string(buf);
}

void save_checkpoint(const std::string& dir, const std::string& kind, const std::string& config_json,
                     const NamedTensors& tensors) {
  fs::create_directories(dir);

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = kind;
  manifest["config"] = json::parse(config_json);

  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw CheckpointError(strcat_all("cannot write ", dir, "/params.bin"));

  uint64_t offset = 0;
  json entries = json::array();
  for (const auto& [name, t] : tensors) {
    std::vector<uint8_t> bytes = tensor_bytes(*t);
    bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["offset"] = offset;
    e["length"] = bytes.size();
    entries.push_back(std::move(e));
    offset += bytes.size();
  }
  bin.close();
  manifest["tensors"] = std::move(entries);
  manifest["checksum"] = checksum_hex(params_checksum(tensors));

  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw CheckpointError(strcat_all("cannot write ", dir, "/manifest.json"));
  mf << manifest.dump(2) << "\n";
}

CheckpointManifest read_manifest(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw CheckpointError(strcat_all("missing manifest: ", mpath.string()));
  json manifest = json::parse(mf, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded()) throw CheckpointError(strcat_all("corrupt manifest: ", mpath.string()));
  int version = manifest.value("format_version", -1);
  if (version != kCheckpointFormatVersion)
    throw CheckpointError(strcat_all("incompatible checkpoint format_version ", version, " (expected ",
                                     kCheckpointFormatVersion, ") in ", mpath.string()));
  CheckpointManifest out;
  out.kind = manifest.value("kind", "");
  out.config_json = manifest.at("config").dump();
  out.checksum = std::stoull(manifest.at("checksum").get<std::string>(), nullptr, 16);
  for (const json& e : manifest.at("tensors")) {
    CheckpointManifest::Entry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<std::vector<int64_t>>();
    entry.offset = e.at("offset").get<uint64_t>();
    entry.length = e.at("length").get<uint64_t>();
    out.tensors.push_back(std::move(entry));
  }
  return out;
}

void load_checkpoint(const std::string& dir, const std::string& expected_kind,
                     const NamedTensors& tensors) {
  CheckpointManifest manifest = read_manifest(dir);
  if (manifest.kind != expected_kind)
    throw CheckpointError(strcat_all("checkpoint kind mismatch: expected ", expected_kind, ", found ",
                                     manifest.kind, " in ", dir));
  if (manifest.tensors.size() != tensors.size())
    throw CheckpointError(strcat_all("checkpoint tensor count mismatch: manifest ",
                                     manifest.tensors.size(), ", model ", tensors.size()));

  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw CheckpointError(strcat_all("missing ", dir, "/params.bin"));

  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& entry = manifest.tensors[i];
    Tensor* t = tensors[i].second;
    if (entry.name != tensors[i].first)
      throw CheckpointError(strcat_all("checkpoint tensor ", i, " name mismatch: manifest '", entry.name,
                                       "', model '", tensors[i].first, "'"));
    if (entry.shape != t->shape)
      throw CheckpointError(strcat_all("checkpoint tensor '", entry.name, "' shape mismatch"));
    if (entry.length != t->data.size() * 8)
      throw CheckpointError(strcat_all("checkpoint tensor '", entry.name, "' length mismatch"));
    std::vector<uint8_t> bytes(entry.length);
    bin.seekg(static_cast<std::streamoff>(entry.offset));
    bin.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!bin) throw CheckpointError(strcat_all("short read in ", dir, "/params.bin"));
    bytes_to_doubles(bytes.data(), t->data.size(), t->data.data());
  }

  uint64_t check = params_checksum(tensors);
  if (check != manifest.checksum)
    throw CheckpointError(strcat_all("checkpoint checksum mismatch in ", dir, ": manifest ",
                                     checksum_hex(manifest.checksum), ", data ", checksum_hex(check)));
}

}  // namespace biaslattice

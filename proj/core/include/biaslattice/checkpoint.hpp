// core/include/biaslattice/checkpoint.hpp
//
// Shared checkpoint layout: a directory holding manifest.json (kind, config,
// named tensor table with shape/offset/length) and params.bin (concatenated
// little-endian 64-bit floats). Round trips are bit-exact.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "biaslattice/common.hpp"
#include "biaslattice/tensor.hpp"

namespace biaslattice {

inline constexpr int kCheckpointFormatVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;

// FNV-1a over the little-endian byte image of the tensors, in order. Used
// for params.bin integrity and for frozen-base assertions during training.
uint64_t params_checksum(const NamedTensors& tensors);
std::string checksum_hex(uint64_t checksum);

// kind: "transducer" | "adapters"; config_json: module-specific config blob.
void save_checkpoint(const std::string& dir, const std::string& kind, const std::string& config_json,
                     const NamedTensors& tensors);

struct CheckpointManifest {
  std::string kind;
  std::string config_json;
  uint64_t checksum = 0;
  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
    uint64_t offset = 0;  // bytes into params.bin
    uint64_t length = 0;  // bytes
  };
  std::vector<Entry> tensors;
};

CheckpointManifest read_manifest(const std::string& dir);

// Loads params.bin into the given tensors, which must match the manifest in
// names, order and shapes. Verifies the checksum.
void load_checkpoint(const std::string& dir, const std::string& expected_kind,
                     const NamedTensors& tensors);

// Raw little-endian helpers (also used by the dataset feature blobs).
void doubles_to_bytes(const double* src, size_t n, uint8_t* dst);
void bytes_to_doubles(const uint8_t* src, size_t n, double* dst);

std::string base64_encode(const uint8_t* data, size_t n);
std::vector<uint8_t> base64_decode(const std::string& text);

}  // namespace biaslattice

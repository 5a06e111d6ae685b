#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camloc/tensor.hpp"

namespace camloc {

// ---------------------------------------------------------------------------
// Checkpoint format: text header (key-value) followed by raw little-endian
// float64 arrays in declaration order.
//
//   camloc-checkpoint v1
//   seed <u64>
//   epoch <int>
//   config <one-line json>
//   array <name> <dim0> <dim1> ...
//   ...
//   end
//   <binary payload>
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string config_json;  // one line
  std::vector<std::pair<std::string, Tensor>> arrays;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Single-tensor file: same header/payload byte layout as checkpoint arrays.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Binary PGM (P5), one byte per pixel.
void write_pgm(const std::vector<std::uint8_t>& gray, int h, int w, const std::string& path);
/// Binary PPM (P6), three bytes per pixel.
void write_ppm(const std::vector<std::uint8_t>& rgb, int h, int w, const std::string& path);
/// Reads a binary PGM written by write_pgm.
std::vector<std::uint8_t> read_pgm(const std::string& path, int* h, int* w);

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex_u64(std::uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace camloc

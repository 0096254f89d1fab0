#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/model.hpp"

namespace covfuzz {

// Model container layout:
//
//   covfuzz-model 1
//   name <name>
//   input_shape <d0> <d1> ...
//   input_scale <float, shortest round-trip decimal>
//   layer <kind> [key value ...] traced <0|1> [weights <n> bias <m>]
//   ...
//   end
//   <raw little-endian float32: weights then bias of each parametrised layer, in order>
//
// Layer keys: dense {in, out, activation}; conv2d {kernel <h> <w>, in, out,
// stride, activation}; maxpool2d {window, stride}; relu/flatten/softmax none.

std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Shared helpers for the little-endian float32 blocks used by all binary files.
void append_f32_le(std::string& out, float value);
float read_f32_le(const unsigned char* p);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string format_float(float value);
float parse_float(std::string_view text);

}  // namespace covfuzz

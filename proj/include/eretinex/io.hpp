#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eretinex/nn.hpp"
#include "eretinex/tensor.hpp"

// File formats shared across the pipeline.
//
//   ERTX tensor:      "ERTX" | u8 rank | rank x u32 dims | f32 payload, row-major
//   ERCK checkpoint:  "ERCK" | u32 count | count x {u16 name_len, name, ERTX}
//                     [ "ERCF" | u32 len | key=value config text ]
//   PPM:              binary P6, maxval 255, [3,H,W] tensors in [0,1]
//
// All integers and floats are little-endian.
namespace eretinex::io {

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

struct CheckpointEntry {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::vector<CheckpointEntry> entries;
    // Model configuration as "key=value" lines; empty for bare parameter sets.
    std::string config_text;

    std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class T>
Checkpoint to_checkpoint(const nn::ParameterList<T>& params, std::string config_text = {});

// Copies checkpoint values into `params` by name. Every parameter must be
// present with an identical shape; extra checkpoint entries are an error.
template <class T>
void apply_checkpoint(const Checkpoint& ckpt, nn::ParameterList<T>& params);

// Round-half-up quantization: byte = floor(clamp(v, 0, 1) * 255 + 0.5).
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
void save_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor load_ppm(const std::filesystem::path& path);

// Dispatches on extension: ".ppm" -> PPM, anything else -> ERTX.
Tensor load_image(const std::filesystem::path& path);
void save_image(const Tensor& image, const std::filesystem::path& path);

}  // namespace eretinex::io

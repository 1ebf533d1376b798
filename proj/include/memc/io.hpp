// Readers and writers for Middlebury .flo flow files, PPM/PNG images, and
// the model container. All parsers are total on arbitrary bytes: they either
// succeed or throw IoError, never crash. File writes go through a temp file
// plus rename, so failed writes leave no partial outputs.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memc/pipeline.hpp"
#include "memc/tensor.hpp"
#include "memc/warp.hpp"

namespace memc {

// --- Middlebury .flo -------------------------------------------------------
// Layout: f32 magic 202021.25 ("PIEH"), i32 width, i32 height, then
// height x width x (u, v) little-endian f32 pairs. Reads accept any finite
// magic within 1e-3 of the constant; writes emit it exactly.

FlowField decode_flo(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_flo(const FlowField& flow); // requires n == 1

FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& flow);

// --- Images ----------------------------------------------------------------
// 8-bit RGB PNG and P6 PPM (maxval 255); pixel values map to [0,1] by /255.
// Writing quantizes with round-half-up; decode_image sniffs the format.

Tensor decode_image(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
std::vector<std::uint8_t> encode_png(const Tensor& image);

Tensor read_image(const std::string& path);
// Format chosen by extension: .ppm or .png.
void write_image(const std::string& path, const Tensor& image);

// --- Model container -------------------------------------------------------
// Magic "MEMC", u32 version = 1, u32 tensor count; per tensor: u16 name
// length, UTF-8 name, four u32 dims (n, c, h, w), then n*c*h*w little-endian
// f64 values. Deterministic name order; byte-exact round trip.

void write_model(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_model(const std::string& path);

// Model file helpers for whole pipelines: parameters plus one reserved
// "__config__" tensor holding the architecture description.
void save_pipeline(const std::string& path, const Pipeline& pipeline);
Pipeline load_pipeline(const std::string& path);

// --- Raw file helpers ------------------------------------------------------
std::vector<std::uint8_t> read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);

} // namespace memc

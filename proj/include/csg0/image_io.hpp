#pragma once

#include "csg0/labelspace.hpp"
#include "csg0/tensor.hpp"

#include <filesystem>

namespace csg0 {

// Binary PGM (P5): one byte per pixel holding the continual class id.
void write_pgm(const std::filesystem::path& path, const SemanticMap& map);
SemanticMap read_pgm(const std::filesystem::path& path);

// Binary PPM (P6) from a [1,3,H,W] tensor in [-1,1]; values are clamped.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
// Inverse of write_ppm up to 8-bit quantization.
Tensor read_ppm(const std::filesystem::path& path);

} // namespace csg0

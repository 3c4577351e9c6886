#pragma once

#include "core/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace arapgs {

/// Binary little-endian PLY in the layout written by the reference 3DGS
/// trainer: x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3,
/// all float32. Normals are accepted on read and written as zeros.
GaussianScene read_ply(const std::filesystem::path& path);
GaussianScene parse_ply(std::span<const std::uint8_t> bytes);

void write_ply(const GaussianScene& scene, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ply(const GaussianScene& scene);

std::string ply_header(std::size_t count, std::size_t rest_dim);
std::size_t ply_record_size(std::size_t rest_dim);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace arapgs

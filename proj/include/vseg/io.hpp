#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vseg/image.hpp"
#include "vseg/sample.hpp"

namespace vseg {

// Binary PGM (P5), 8-bit, maxval 255; intensities round(255 * v).
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

// Mask PGM holds 0 and 255 only.
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_pgm(const std::filesystem::path& path, Spacing spacing);

// "PMAP", u32 version=1, u32 height, u32 width, then little-endian float32.
void write_pmap(const std::filesystem::path& path, const ProbabilityMap& map);
ProbabilityMap read_pmap(const std::filesystem::path& path);

struct ManifestRow {
    std::string id;
    std::string image_path; // relative to the manifest directory unless absolute
    std::string mask_path;
    std::string patient_id;
    std::string view_tag;
    double spacing_row_mm = 0.3;
    double spacing_col_mm = 0.3;

    friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

inline constexpr const char* kManifestHeader =
    "id,image_path,mask_path,patient_id,view_tag,spacing_row_mm,spacing_col_mm";

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Reads every image/mask pair listed in the manifest.
std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path);

} // namespace vseg

#ifndef DEMS_DATA_HPP
#define DEMS_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dems/image.hpp"
#include "dems/rng.hpp"

namespace dems {

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
    std::string id;
};

struct DatasetManifest {
    std::string root;
    int target_height = 0;
    int target_width = 0;
    std::vector<ManifestEntry> entries;  // sorted by id
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<SamplePair> samples;  // same order as manifest.entries
};

// Loads `root/images/*.png` with matching `root/masks/*.png`. Images are
// scaled to [0,1] and resized bilinearly to the target; masks are resized
// nearest-neighbor and binarized at intensity > 127. Throws on a missing
// mask, an unreadable file, or an empty directory.
LoadedDataset load_dataset(const std::filesystem::path& root, int target_height,
                           int target_width);

struct SplitSpec {
    std::uint64_t seed = 0;
    double labeled_fraction = 0.0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> labeled_ids;  // subset of train_ids
};

// Deterministic 7:3 train/val partition (rounding toward train) plus a
// labeled subset of round-half-up(fraction * |train|) ids, floor 1. The same
// (manifest, seed, fraction) always yields the same split.
SplitSpec split(const DatasetManifest& manifest, std::uint64_t seed, double labeled_fraction);

void save_split(const std::filesystem::path& path, const SplitSpec& spec);
SplitSpec load_split(const std::filesystem::path& path);

struct SynthParams {
    int height = 224;
    int width = 224;
    double min_foreground = 0.01;  // accepted foreground fraction range
    double max_foreground = 0.20;
    double speckle_sigma = 0.15;
    double smooth_sigma = 0.8;
};

// Writes n synthetic grayscale pairs under root/images and root/masks. Every
// image holds one or two bright ellipses or curved ribbons over a dark
// background with a smooth intensity gradient and multiplicative speckle;
// masks are the exact rendered foreground. Regeneration with the same seed is
// byte-identical.
void synth_generate(const std::filesystem::path& root, int n, std::uint64_t seed,
                    const SynthParams& params = {});

// 8-bit grayscale PNG helpers.
Image read_image_8bit(const std::filesystem::path& path);
Mask read_mask_8bit(const std::filesystem::path& path, int target_height = 0,
                    int target_width = 0);
void write_image_8bit(const std::filesystem::path& path, const Image& img);
void write_mask_8bit(const std::filesystem::path& path, const Mask& mask);

Image resize_bilinear(const Image& img, int height, int width);
Mask resize_nearest(const Mask& mask, int height, int width);

}  // namespace dems

#endif

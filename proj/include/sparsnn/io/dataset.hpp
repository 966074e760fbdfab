#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/io/config.hpp"
#include "sparsnn/models/data.hpp"

namespace sparsnn {

struct Dataset {
    // [N, C, H, W]
    Tensor images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
    DataView view() const { return {&images, &labels}; }
};

// Raw format: "SNND", u32 count, u32 C, u32 H, u32 W (little-endian), then
// count*C*H*W little-endian f32 pixels, then count u8 labels.
//
// IDX: the classic big-endian header (two zero bytes, element type, rank,
// then one u32 per axis). Images are rank 3 [N,H,W] or rank 4 [N,C,H,W] of
// u8 (scaled by 1/255) or f32; labels are a rank-1 u8 file.
Dataset load_dataset(const std::string& images_path, const std::string& labels_path, DataFormat format,
                     std::size_t num_classes);

// Picks the format from the file magic.
Dataset load_dataset_auto(const std::string& images_path, const std::string& labels_path, std::size_t num_classes);

std::vector<std::uint8_t> encode_raw_dataset(const Dataset& d);
void save_raw_dataset(const std::string& path, const Dataset& d);
void save_idx_dataset(const std::string& images_path, const std::string& labels_path, const Dataset& d);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);

// Per-channel mean and standard deviation of a dataset.
struct Normalization {
    std::vector<float> mean;
    std::vector<float> stddev;

    bool empty() const { return mean.empty(); }
    static Normalization fit(const Tensor& images);
    Tensor apply(const Tensor& images) const;
};

// K-class synthetic image set: every class has a smooth random prototype; a
// sample is its prototype shifted by up to `max_shift` pixels plus Gaussian
// noise, clamped to [0,1]. Labels cycle through the classes.
struct ToyDatasetOptions {
    std::size_t classes = 10;
    std::size_t samples = 2000;
    std::size_t size = 8;
    double noise = 0.25;
    std::size_t max_shift = 1;
    std::uint64_t seed = 7;
    // Prototypes come from this seed so train and test splits share them.
    std::uint64_t prototype_seed = 1234;
};

Dataset make_toy_dataset(const ToyDatasetOptions& opts);

}  // namespace sparsnn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/io/dataset.hpp"
#include "sparsnn/models/model.hpp"

namespace sparsnn {

enum class Stage : std::uint8_t { Ann = 0, Converted = 1, Snn = 2 };

const char* stage_name(Stage s);

// Binary model snapshot. Layout (all integers and reals little-endian):
//   "SNNC", u32 version, u8 stage, u64 config hash, u8 prune mode,
//   str model spec, u32 C + C f32 means + C f32 stddevs, u32 calibration T,
//   u64 step, u64 epoch, u32 layer count, then per layer:
//   str name, u32 layer index, u32 rank, rank x u32 dims, f32 weights,
//   u32 n + n packed mask bytes, f32 threshold, f32 leak,
//   u8 has-momentum [+ f32 momentum].
// A str is u32 length + bytes.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    Stage stage = Stage::Ann;
    std::uint64_t config_hash = 0;
    ModelSpec spec;
    Normalization norm;
    std::uint32_t calib_timesteps = 0;
    ModelState state;
    bool with_momentum = true;

    std::vector<std::uint8_t> encode() const;
    static Checkpoint decode(const std::vector<std::uint8_t>& bytes, const std::string& origin = "checkpoint");

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // FNV-1a of the encoded bytes.
    std::uint64_t hash() const;
};

std::string hex64(std::uint64_t v);

}  // namespace sparsnn

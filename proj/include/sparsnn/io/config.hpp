#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sparsnn/attention/attention.hpp"
#include "sparsnn/encoding/encoding.hpp"
#include "sparsnn/metrics/metrics.hpp"
#include "sparsnn/snn/snn.hpp"
#include "sparsnn/sparse/agc.hpp"

namespace sparsnn {

enum class DataFormat { Raw, Idx };

const char* data_format_name(DataFormat f);
DataFormat parse_data_format(const std::string& s);

// Flat key=value run description. Every key is optional; unknown keys are
// rejected so typos do not silently fall back to defaults.
struct RunConfig {
    // Preset name, or "spec:" followed by a serialized ModelSpec.
    std::string model = "vgg-mini";
    std::size_t num_classes = 10;
    // Negative means auto: 0.2 for a dense model, 0.05 when d < 1.
    double conv_dropout = -1.0;
    double linear_dropout = 0.5;

    DataFormat data_format = DataFormat::Raw;
    std::string train_images, train_labels, test_images, test_labels;
    // Per-channel standardization with training-set statistics (ANN and
    // direct-coded SNN inputs; Poisson inputs always use raw [0,1] pixels).
    bool normalize = true;

    std::uint64_t seed = 1;

    AgcConfig ann;
    // "auto" pairs the last activation of each stage by spatial size.
    std::string attention_pairs = "auto";

    SnnTrainConfig snn;
    std::size_t calib_batch = 512;
    CalibrationConfig calib;

    EnergyModel energy;
    std::string out_dir = ".";

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    // Applies one key=value assignment.
    void set(const std::string& key, const std::string& value);
    // Schedules inside their epoch ranges, d in (0,1], positive sizes.
    void validate() const;
    // Every key with its current value, one per line, sorted by key.
    std::string canonical() const;
    std::uint64_t hash() const;

    ModelSpec model_spec(const Shape& input) const;
};

}  // namespace sparsnn

#include "sparsnn/sparse/mask.hpp"

#include <algorithm>

namespace sparsnn {

const char* prune_mode_name(PruneMode mode) { return mode == PruneMode::Irregular ? "irregular" : "channel"; }

PruneMode parse_prune_mode(const std::string& s) {
    if (s == "irregular") return PruneMode::Irregular;
    if (s == "channel") return PruneMode::Channel;
    throw ConfigError("unknown prune mode '" + s + "' (expected irregular|channel)");
}

std::size_t PruneMask::nnz() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool PruneMask::channel_on(std::size_t c) const {
    const std::size_t kk = shape_[2] * shape_[3];
    for (std::size_t o = 0; o < shape_[0]; ++o)
        for (std::size_t j = 0; j < kk; ++j)
            if (bits_[(o * shape_[1] + c) * kk + j]) return true;
    return false;
}

void PruneMask::set_channel(std::size_t c, bool on) {
    const std::size_t kk = shape_[2] * shape_[3];
    for (std::size_t o = 0; o < shape_[0]; ++o)
        for (std::size_t j = 0; j < kk; ++j) bits_[(o * shape_[1] + c) * kk + j] = on ? 1 : 0;
}

std::size_t PruneMask::active_channels() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < channels(); ++c) n += channel_on(c) ? 1 : 0;
    return n;
}

bool PruneMask::channel_constant() const {
    if (shape_.size() != 4) return true;
    const std::size_t kk = shape_[2] * shape_[3];
    for (std::size_t c = 0; c < shape_[1]; ++c) {
        const std::uint8_t first = bits_[c * kk];
        for (std::size_t o = 0; o < shape_[0]; ++o)
            for (std::size_t j = 0; j < kk; ++j)
                if (bits_[(o * shape_[1] + c) * kk + j] != first) return false;
    }
    return true;
}

std::vector<std::uint8_t> PruneMask::packed() const {
    std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return out;
}

PruneMask PruneMask::unpack(Shape shape, const std::vector<std::uint8_t>& bytes) {
    PruneMask m(std::move(shape), false);
    if (bytes.size() != (m.size() + 7) / 8)
        throw FormatError("packed mask has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string((m.size() + 7) / 8));
    for (std::size_t i = 0; i < m.size(); ++i) m.bits_[i] = (bytes[i / 8] >> (i % 8)) & 1u;
    return m;
}

}  // namespace sparsnn

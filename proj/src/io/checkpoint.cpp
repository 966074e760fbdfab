#include "sparsnn/io/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

namespace sparsnn {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Ann: return "ann";
        case Stage::Converted: return "converted";
        case Stage::Snn: return "snn";
    }
    return "?";
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void size(std::size_t v) {
        if (v > 0xffffffffULL) throw FormatError("checkpoint field exceeds 32 bits");
        u32(static_cast<std::uint32_t>(v));
    }
    void str(const std::string& s) {
        size(s.size());
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void bytes(const std::vector<std::uint8_t>& b) {
        size(b.size());
        out_.insert(out_.end(), b.begin(), b.end());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& b, std::string origin) : b_(b), origin_(std::move(origin)) {}
    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        const auto* p = take(4);
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | std::uint64_t(u32()) << 32;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const std::size_t n = u32();
        const auto* p = take(n);
        return std::string(p, p + n);
    }
    std::vector<std::uint8_t> bytes() {
        const std::size_t n = u32();
        const auto* p = take(n);
        return std::vector<std::uint8_t>(p, p + n);
    }
    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::uint8_t* take(std::size_t n) {
        if (b_.size() - pos_ < n)
            throw FormatError(origin_ + ": truncated checkpoint: expected at least " + std::to_string(pos_ + n) +
                              " bytes, got " + std::to_string(b_.size()));
        const auto* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    const std::vector<std::uint8_t>& b_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::encode() const {
    Writer w;
    for (char c : {'S', 'N', 'N', 'C'}) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(stage));
    w.u64(config_hash);
    w.u8(state.mode == PruneMode::Irregular ? 0 : 1);
    w.str(spec.serialize());
    SPARSNN_CHECK(norm.mean.size() == norm.stddev.size(), "normalization means and deviations disagree");
    w.size(norm.mean.size());
    for (float v : norm.mean) w.f32(v);
    for (float v : norm.stddev) w.f32(v);
    w.u32(calib_timesteps);
    w.u64(state.step);
    w.u64(state.epoch);
    w.size(state.params.size());
    for (const auto& p : state.params) {
        w.str(p.name);
        w.size(p.layer);
        w.size(p.weight.rank());
        for (auto d : p.weight.shape()) w.size(d);
        for (float v : p.weight.data()) w.f32(v);
        SPARSNN_CHECK(p.mask.shape() == p.weight.shape(), "mask and weight shapes disagree for " + p.name);
        w.bytes(p.mask.packed());
        w.f32(p.threshold);
        w.f32(p.leak);
        const bool mom = with_momentum && p.momentum.size() == p.weight.size();
        w.u8(mom ? 1 : 0);
        if (mom)
            for (float v : p.momentum.data()) w.f32(v);
    }
    return w.take();
}

Checkpoint Checkpoint::decode(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, "SNNC", 4) != 0) throw FormatError(origin + ": magic mismatch (expected \"SNNC\")");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError(origin + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kVersion) + ")");
    Checkpoint c;
    const std::uint8_t stage = r.u8();
    if (stage > 2) throw FormatError(origin + ": unknown stage tag " + std::to_string(stage));
    c.stage = static_cast<Stage>(stage);
    c.config_hash = r.u64();
    const std::uint8_t mode = r.u8();
    if (mode > 1) throw FormatError(origin + ": unknown prune mode " + std::to_string(mode));
    c.state.mode = mode == 0 ? PruneMode::Irregular : PruneMode::Channel;
    try {
        c.spec = ModelSpec::parse(r.str());
        c.spec.validate();
    } catch (const Error& e) {
        throw FormatError(origin + ": bad model description: " + e.what());
    }
    const std::size_t channels = r.u32();
    for (std::size_t i = 0; i < channels; ++i) c.norm.mean.push_back(r.f32());
    for (std::size_t i = 0; i < channels; ++i) c.norm.stddev.push_back(r.f32());
    c.calib_timesteps = r.u32();
    c.state.step = r.u64();
    c.state.epoch = r.u64();
    const std::size_t n = r.u32();
    const auto layers = c.spec.weight_layers();
    if (n != layers.size())
        throw FormatError(origin + ": " + std::to_string(n) + " parameter layers, model has " +
                          std::to_string(layers.size()));
    bool any_mom = false, all_mom = true;
    for (std::size_t i = 0; i < n; ++i) {
        ParamLayer<float> p;
        p.name = r.str();
        p.layer = r.u32();
        if (p.layer != layers[i]) throw FormatError(origin + ": layer " + p.name + " is out of order");
        const std::size_t rank = r.u32();
        if (rank == 0 || rank > 4) throw FormatError(origin + ": layer " + p.name + " has rank " + std::to_string(rank));
        Shape s;
        for (std::size_t k = 0; k < rank; ++k) s.push_back(r.u32());
        if (s != c.spec.weight_shape(p.layer))
            throw FormatError(origin + ": layer " + p.name + " has shape " + shape_string(s) + ", model expects " +
                              shape_string(c.spec.weight_shape(p.layer)));
        p.weight = Tensor(s);
        for (auto& v : p.weight.data()) v = r.f32();
        p.mask = PruneMask::unpack(s, r.bytes());
        p.threshold = r.f32();
        p.leak = r.f32();
        const std::uint8_t has = r.u8();
        if (has > 1) throw FormatError(origin + ": bad momentum flag for " + p.name);
        p.momentum = Tensor(s);
        if (has)
            for (auto& v : p.momentum.data()) v = r.f32();
        any_mom = any_mom || has;
        all_mom = all_mom && has;
        c.state.params.push_back(std::move(p));
    }
    if (any_mom != all_mom) throw FormatError(origin + ": momentum present for only some layers");
    c.with_momentum = all_mom && n > 0;
    if (!r.done())
        throw FormatError(origin + ": trailing data: expected " + std::to_string(r.pos()) + " bytes, got " +
                          std::to_string(bytes.size()));
    return c;
}

void Checkpoint::save(const std::string& path) const { write_file(path, encode()); }

Checkpoint Checkpoint::load(const std::string& path) { return decode(read_file(path), path); }

std::uint64_t Checkpoint::hash() const {
    const auto b = encode();
    return fnv1a(b.data(), b.size());
}

}  // namespace sparsnn

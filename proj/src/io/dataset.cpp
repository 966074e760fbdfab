#include "sparsnn/io/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sparsnn/numerics/rng.hpp"

namespace sparsnn {

namespace {

constexpr char kRawMagic[4] = {'S', 'N', 'N', 'D'};

std::uint32_t le32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint32_t be32(const std::uint8_t* p) {
    return std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[0]) << 24;
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void need(const std::string& path, std::size_t expected, std::size_t actual) {
    if (actual < expected)
        throw FormatError(path + ": truncated file: expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(actual));
}

std::uint32_t to_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffULL) throw FormatError(std::string(what) + " does not fit the 32-bit header field");
    return static_cast<std::uint32_t>(v);
}

void check_labels(const std::string& path, const std::vector<int>& labels, std::size_t num_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw FormatError(path + ": label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                              " is out of range for " + std::to_string(num_classes) + " classes");
}

Dataset load_raw(const std::string& path, std::size_t num_classes) {
    const auto b = read_file(path);
    need(path, 20, b.size());
    if (std::memcmp(b.data(), kRawMagic, 4) != 0) throw FormatError(path + ": magic mismatch (expected \"SNND\")");
    const std::size_t n = le32(b.data() + 4), c = le32(b.data() + 8), h = le32(b.data() + 12), w = le32(b.data() + 16);
    if (n == 0 || c == 0 || h == 0 || w == 0) throw FormatError(path + ": header has a zero dimension");
    const std::size_t pixels = n * c * h * w;
    const std::size_t expected = 20 + 4 * pixels + n;
    need(path, expected, b.size());
    if (b.size() > expected)
        throw FormatError(path + ": trailing data: expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(b.size()));
    Dataset d;
    d.images = Tensor({n, c, h, w});
    for (std::size_t i = 0; i < pixels; ++i) d.images[i] = std::bit_cast<float>(le32(b.data() + 20 + 4 * i));
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.labels[i] = b[20 + 4 * pixels + i];
    if (!d.images.all_finite()) throw FormatError(path + ": non-finite pixel values");
    check_labels(path, d.labels, num_classes);
    return d;
}

struct IdxHeader {
    std::uint8_t type = 0;
    std::vector<std::size_t> dims;
    std::size_t offset = 0;
};

IdxHeader idx_header(const std::string& path, const std::vector<std::uint8_t>& b) {
    need(path, 4, b.size());
    if (b[0] != 0 || b[1] != 0) throw FormatError(path + ": magic mismatch (IDX files start with two zero bytes)");
    IdxHeader h;
    h.type = b[2];
    if (h.type != 0x08 && h.type != 0x0D)
        throw FormatError(path + ": unsupported IDX element type 0x" + std::to_string(h.type) +
                          " (expected u8 0x08 or f32 0x0D)");
    const std::size_t rank = b[3];
    if (rank == 0) throw FormatError(path + ": IDX rank is zero");
    need(path, 4 + 4 * rank, b.size());
    for (std::size_t i = 0; i < rank; ++i) h.dims.push_back(be32(b.data() + 4 + 4 * i));
    h.offset = 4 + 4 * rank;
    return h;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
    if (labels_path.empty()) throw ConfigError(images_path + ": IDX images need a separate labels file");
    const auto b = read_file(images_path);
    const IdxHeader h = idx_header(images_path, b);
    if (h.dims.size() != 3 && h.dims.size() != 4)
        throw FormatError(images_path + ": IDX images must be rank 3 or 4, got rank " + std::to_string(h.dims.size()));
    Shape s = h.dims.size() == 3 ? Shape{h.dims[0], 1, h.dims[1], h.dims[2]} : Shape(h.dims.begin(), h.dims.end());
    for (auto v : s)
        if (v == 0) throw FormatError(images_path + ": header has a zero dimension");
    const std::size_t pixels = shape_size(s);
    const std::size_t esize = h.type == 0x08 ? 1 : 4;
    const std::size_t expected = h.offset + esize * pixels;
    need(images_path, expected, b.size());
    Dataset d;
    d.images = Tensor(s);
    for (std::size_t i = 0; i < pixels; ++i)
        d.images[i] = h.type == 0x08 ? static_cast<float>(b[h.offset + i]) / 255.0f
                                     : std::bit_cast<float>(be32(b.data() + h.offset + 4 * i));
    if (!d.images.all_finite()) throw FormatError(images_path + ": non-finite pixel values");

    const auto lb = read_file(labels_path);
    const IdxHeader lh = idx_header(labels_path, lb);
    if (lh.type != 0x08 || lh.dims.size() != 1) throw FormatError(labels_path + ": labels must be a rank-1 u8 IDX file");
    if (lh.dims[0] != s[0])
        throw FormatError(labels_path + ": " + std::to_string(lh.dims[0]) + " labels for " + std::to_string(s[0]) +
                          " images");
    need(labels_path, lh.offset + lh.dims[0], lb.size());
    d.labels.resize(s[0]);
    for (std::size_t i = 0; i < s[0]; ++i) d.labels[i] = lb[lh.offset + i];
    check_labels(labels_path, d.labels, num_classes);
    return d;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("short write to '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Dataset load_dataset(const std::string& images_path, const std::string& labels_path, DataFormat format,
                     std::size_t num_classes) {
    return format == DataFormat::Raw ? load_raw(images_path, num_classes)
                                     : load_idx(images_path, labels_path, num_classes);
}

Dataset load_dataset_auto(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
    std::ifstream in(images_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + images_path + "'");
    char m[4] = {};
    in.read(m, 4);
    const bool raw = in.gcount() == 4 && std::memcmp(m, kRawMagic, 4) == 0;
    return load_dataset(images_path, labels_path, raw ? DataFormat::Raw : DataFormat::Idx, num_classes);
}

std::vector<std::uint8_t> encode_raw_dataset(const Dataset& d) {
    const Shape& s = d.images.shape();
    SPARSNN_CHECK(s.size() == 4 && s[0] == d.labels.size(), "dataset images and labels disagree");
    std::vector<std::uint8_t> out(kRawMagic, kRawMagic + 4);
    for (auto v : s) put_le32(out, to_u32(v, "dataset dimension"));
    out.reserve(out.size() + 4 * d.images.size() + d.labels.size());
    for (std::size_t i = 0; i < d.images.size(); ++i) put_le32(out, std::bit_cast<std::uint32_t>(d.images[i]));
    for (int l : d.labels) {
        if (l < 0 || l > 255) throw FormatError("label " + std::to_string(l) + " does not fit the u8 label field");
        out.push_back(static_cast<std::uint8_t>(l));
    }
    return out;
}

void save_raw_dataset(const std::string& path, const Dataset& d) { write_file(path, encode_raw_dataset(d)); }

void save_idx_dataset(const std::string& images_path, const std::string& labels_path, const Dataset& d) {
    const Shape& s = d.images.shape();
    std::vector<std::uint8_t> img{0, 0, 0x0D, 4};
    for (auto v : s) put_be32(img, to_u32(v, "dataset dimension"));
    for (std::size_t i = 0; i < d.images.size(); ++i) put_be32(img, std::bit_cast<std::uint32_t>(d.images[i]));
    std::vector<std::uint8_t> lab{0, 0, 0x08, 1};
    put_be32(lab, to_u32(d.labels.size(), "label count"));
    for (int l : d.labels) lab.push_back(static_cast<std::uint8_t>(l));
    write_file(images_path, img);
    write_file(labels_path, lab);
}

Normalization Normalization::fit(const Tensor& images) {
    SPARSNN_CHECK(images.rank() == 4, "normalization expects [N,C,H,W] images");
    const std::size_t n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
    Normalization norm;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < hw; ++k) {
                const double v = images[(i * c + ch) * hw + k];
                s += v;
                s2 += v * v;
            }
        const double cnt = static_cast<double>(n * hw);
        const double mean = s / cnt;
        const double var = std::max(0.0, s2 / cnt - mean * mean);
        norm.mean.push_back(static_cast<float>(mean));
        norm.stddev.push_back(static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0));
    }
    return norm;
}

Tensor Normalization::apply(const Tensor& images) const {
    if (empty()) return images;
    if (images.rank() != 4 || images.dim(1) != mean.size())
        throw DimensionError("normalization has " + std::to_string(mean.size()) + " channels, images are " +
                             shape_string(images.shape()));
    Tensor out = images;
    const std::size_t c = images.dim(1), hw = images.dim(2) * images.dim(3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t ch = (i / hw) % c;
        out[i] = (out[i] - mean[ch]) / stddev[ch];
    }
    return out;
}

Dataset make_toy_dataset(const ToyDatasetOptions& o) {
    if (o.classes < 2 || o.classes > 256) throw ConfigError("toy dataset needs 2..256 classes");
    if (o.samples == 0 || o.size < 4) throw ConfigError("toy dataset needs samples > 0 and size >= 4");
    const std::size_t sz = o.size;
    // Prototypes: three Gaussian bumps at random centres, scaled to peak 1.
    Rng prng = make_rng(o.prototype_seed).split("prototypes");
    std::vector<std::vector<double>> protos(o.classes, std::vector<double>(sz * sz, 0.0));
    for (auto& p : protos) {
        for (int bump = 0; bump < 3; ++bump) {
            const double cy = prng.uniform(0.0, static_cast<double>(sz - 1));
            const double cx = prng.uniform(0.0, static_cast<double>(sz - 1));
            const double sigma = prng.uniform(0.8, 2.0);
            const double amp = prng.uniform(0.5, 1.0);
            for (std::size_t y = 0; y < sz; ++y)
                for (std::size_t x = 0; x < sz; ++x) {
                    const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                    p[y * sz + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                }
        }
        const double peak = *std::max_element(p.begin(), p.end());
        for (auto& v : p) v /= peak;
    }
    Rng rng = make_rng(o.seed).split("toy");
    Dataset d;
    d.images = Tensor({o.samples, 1, sz, sz});
    d.labels.resize(o.samples);
    const long span = static_cast<long>(2 * o.max_shift + 1);
    for (std::size_t i = 0; i < o.samples; ++i) {
        const std::size_t k = i % o.classes;
        d.labels[i] = static_cast<int>(k);
        const long sy = static_cast<long>(rng.below(static_cast<std::uint64_t>(span))) - static_cast<long>(o.max_shift);
        const long sx = static_cast<long>(rng.below(static_cast<std::uint64_t>(span))) - static_cast<long>(o.max_shift);
        for (std::size_t y = 0; y < sz; ++y)
            for (std::size_t x = 0; x < sz; ++x) {
                const long py = static_cast<long>(y) - sy, px = static_cast<long>(x) - sx;
                double v = 0.0;
                if (py >= 0 && px >= 0 && py < static_cast<long>(sz) && px < static_cast<long>(sz))
                    v = protos[k][static_cast<std::size_t>(py) * sz + static_cast<std::size_t>(px)];
                v += o.noise * rng.normal();
                d.images[(i * sz + y) * sz + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return d;
}

}  // namespace sparsnn

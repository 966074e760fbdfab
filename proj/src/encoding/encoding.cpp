#include "sparsnn/encoding/encoding.hpp"

#include <cstring>

#include "sparsnn/numerics/rng.hpp"

namespace sparsnn {

const char* encoding_name(Encoding e) { return e == Encoding::Direct ? "direct" : "poisson"; }

Encoding parse_encoding(const std::string& s) {
    if (s == "direct") return Encoding::Direct;
    if (s == "poisson" || s == "rate") return Encoding::Poisson;
    throw ConfigError("unknown encoding '" + s + "' (expected direct or poisson)");
}

const Tensor& InputWindow::frame(std::size_t t) const {
    if (t >= timesteps)
        throw DimensionError("time step " + std::to_string(t) + " outside window of " + std::to_string(timesteps));
    return encoding == Encoding::Direct ? frames.at(0) : frames.at(t);
}

Tensor InputWindow::stacked() const {
    Shape s{timesteps};
    const Shape& inner = frame_shape();
    s.insert(s.end(), inner.begin(), inner.end());
    Tensor out(s);
    const std::size_t n = shape_size(inner);
    for (std::size_t t = 0; t < timesteps; ++t)
        std::memcpy(out.data().data() + t * n, frame(t).data().data(), n * sizeof(float));
    return out;
}

InputWindow poisson_encode(const Tensor& image, std::size_t timesteps, std::uint64_t seed) {
    if (timesteps == 0) throw ConfigError("encoding needs at least one time step");
    for (std::size_t i = 0; i < image.size(); ++i)
        if (!(image[i] >= 0.0f && image[i] <= 1.0f))
            throw ConfigError("poisson_encode: pixel " + std::to_string(i) + " = " + std::to_string(image[i]) +
                              " lies outside [0,1]");
    InputWindow w{Encoding::Poisson, timesteps, seed, {}};
    Rng rng = make_rng(seed).split("poisson");
    w.frames.reserve(timesteps);
    for (std::size_t t = 0; t < timesteps; ++t) {
        Tensor f(image.shape());
        for (std::size_t i = 0; i < image.size(); ++i) f[i] = rng.uniform() < image[i] ? 1.0f : 0.0f;
        w.frames.push_back(std::move(f));
    }
    return w;
}

InputWindow direct_encode(const Tensor& image, std::size_t timesteps) {
    if (timesteps == 0) throw ConfigError("encoding needs at least one time step");
    return InputWindow{Encoding::Direct, timesteps, 0, {image}};
}

InputWindow encode(const Tensor& image, Encoding encoding, std::size_t timesteps, std::uint64_t seed) {
    return encoding == Encoding::Direct ? direct_encode(image, timesteps) : poisson_encode(image, timesteps, seed);
}

}  // namespace sparsnn

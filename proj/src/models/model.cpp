#include "sparsnn/models/model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace sparsnn {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Linear: return "linear";
        case LayerKind::Relu: return "relu";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Dropout: return "dropout";
    }
    return "?";
}

LayerSpec LayerSpec::conv(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.units = out;
    l.kernel = k;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpec LayerSpec::linear(std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::Linear;
    l.units = out;
    return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::avgpool(std::size_t k) {
    LayerSpec l;
    l.kind = LayerKind::AvgPool;
    l.pool = k;
    return l;
}

LayerSpec LayerSpec::dropout_layer(double rate) {
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.dropout = rate;
    return l;
}

namespace {

std::string layer_label(std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + ")";
}

}  // namespace

std::vector<Shape> ModelSpec::output_shapes() const {
    if (input.size() != 3) throw DimensionError("model input must be [C,H,W], got " + shape_string(input));
    std::vector<Shape> out;
    Shape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur.size() != 3)
                    throw DimensionError(layer_label(i, l) + " needs a [C,H,W] input, got " + shape_string(cur));
                if (l.units == 0 || l.kernel == 0 || l.stride == 0)
                    throw ConfigError(layer_label(i, l) + " needs positive channels, kernel and stride");
                cur = Shape{l.units, ops::conv_output_size(cur[1], l.kernel, l.stride, l.pad),
                            ops::conv_output_size(cur[2], l.kernel, l.stride, l.pad)};
                break;
            }
            case LayerKind::Linear:
                if (l.units == 0) throw ConfigError(layer_label(i, l) + " needs positive output features");
                cur = Shape{l.units};
                break;
            case LayerKind::AvgPool:
                if (cur.size() != 3 || l.pool == 0 || l.pool > cur[1] || l.pool > cur[2])
                    throw DimensionError(layer_label(i, l) + ": window " + std::to_string(l.pool) +
                                         " does not fit input " + shape_string(cur));
                cur = Shape{cur[0], cur[1] / l.pool, cur[2] / l.pool};
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::Dropout:
                if (l.dropout < 0.0 || l.dropout >= 1.0)
                    throw ConfigError(layer_label(i, l) + ": rate must lie in [0,1)");
                break;
        }
        out.push_back(cur);
    }
    return out;
}

std::vector<Shape> ModelSpec::input_shapes() const {
    std::vector<Shape> outs = output_shapes();
    std::vector<Shape> ins;
    ins.push_back(input);
    for (std::size_t i = 0; i + 1 < outs.size(); ++i) ins.push_back(outs[i]);
    return ins;
}

void ModelSpec::validate() const {
    if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
    if (layers.empty()) throw ConfigError("model has no layers");
    output_shapes();
    const LayerSpec& last = layers.back();
    if (last.kind != LayerKind::Linear || last.units != num_classes)
        throw ConfigError("model must end in one linear classifier head with " + std::to_string(num_classes) +
                          " outputs");
    if (weight_layers().size() < 2) throw ConfigError("model needs at least one hidden weight layer");
    for (std::size_t w : weight_layers())
        if (w + 1 != layers.size() && !is_spiking(w))
            throw ConfigError("weight " + layer_label(w, layers[w]) +
                              " must be followed by relu (only the classifier head may omit it)");
}

std::vector<std::size_t> ModelSpec::weight_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].has_weight()) out.push_back(i);
    return out;
}

Shape ModelSpec::weight_shape(std::size_t layer) const {
    const std::vector<Shape> ins = input_shapes();
    const LayerSpec& l = layers.at(layer);
    if (l.kind == LayerKind::Conv) return Shape{l.units, ins[layer][0], l.kernel, l.kernel};
    if (l.kind == LayerKind::Linear) return Shape{l.units, shape_size(ins[layer])};
    throw InvariantError(layer_label(layer, l) + " has no weight");
}

bool ModelSpec::is_spiking(std::size_t layer) const {
    return layers.at(layer).has_weight() && layer + 1 < layers.size() && layers[layer + 1].kind == LayerKind::Relu;
}

std::string ModelSpec::serialize() const {
    std::ostringstream os;
    os << "name=" << name << ";input=";
    for (std::size_t i = 0; i < input.size(); ++i) os << (i ? "x" : "") << input[i];
    os << ";classes=" << num_classes << ";layers=";
    char buf[64];
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (i) os << ',';
        switch (l.kind) {
            case LayerKind::Conv: os << "conv:" << l.units << ':' << l.kernel << ':' << l.stride << ':' << l.pad; break;
            case LayerKind::Linear: os << "linear:" << l.units; break;
            case LayerKind::Relu: os << "relu"; break;
            case LayerKind::AvgPool: os << "avgpool:" << l.pool; break;
            case LayerKind::Dropout:
                std::snprintf(buf, sizeof buf, "%.17g", l.dropout);
                os << "dropout:" << buf;
                break;
        }
    }
    return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

std::size_t parse_size(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("model spec: bad integer '" + s + "' in " + ctx);
    }
}

double parse_real(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("model spec: bad number '" + s + "' in " + ctx);
    }
}

}  // namespace

ModelSpec ModelSpec::parse(const std::string& text) {
    ModelSpec spec;
    for (const std::string& field : split(text, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ConfigError("model spec: field '" + field + "' lacks '='");
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "name") {
            spec.name = value;
        } else if (key == "input") {
            for (const auto& d : split(value, 'x')) spec.input.push_back(parse_size(d, "input"));
        } else if (key == "classes") {
            spec.num_classes = parse_size(value, "classes");
        } else if (key == "layers") {
            for (const auto& item : split(value, ',')) {
                const auto parts = split(item, ':');
                const std::string& kind = parts.at(0);
                auto arg = [&](std::size_t i) -> const std::string& {
                    if (i >= parts.size()) throw ConfigError("model spec: layer '" + item + "' is missing arguments");
                    return parts[i];
                };
                if (kind == "conv") {
                    spec.layers.push_back(LayerSpec::conv(parse_size(arg(1), item), parse_size(arg(2), item),
                                                          parts.size() > 3 ? parse_size(parts[3], item) : 1,
                                                          parts.size() > 4 ? parse_size(parts[4], item) : 0));
                } else if (kind == "linear") {
                    spec.layers.push_back(LayerSpec::linear(parse_size(arg(1), item)));
                } else if (kind == "relu") {
                    spec.layers.push_back(LayerSpec::relu());
                } else if (kind == "avgpool") {
                    spec.layers.push_back(LayerSpec::avgpool(parts.size() > 1 ? parse_size(parts[1], item) : 2));
                } else if (kind == "dropout") {
                    spec.layers.push_back(LayerSpec::dropout_layer(parse_real(arg(1), item)));
                } else {
                    throw ConfigError("model spec: unknown layer kind '" + kind + "'");
                }
            }
        } else {
            throw ConfigError("model spec: unknown field '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

ModelSpec preset_model(const std::string& name, const PresetOptions& opts) {
    ModelSpec spec;
    spec.name = name;
    spec.input = opts.input;
    spec.num_classes = opts.num_classes;
    auto conv_block = [&](std::size_t ch) {
        spec.layers.push_back(LayerSpec::conv(ch, 3, 1, 1));
        spec.layers.push_back(LayerSpec::relu());
        if (opts.conv_dropout > 0.0) spec.layers.push_back(LayerSpec::dropout_layer(opts.conv_dropout));
    };
    auto dense_block = [&](std::size_t units) {
        spec.layers.push_back(LayerSpec::linear(units));
        spec.layers.push_back(LayerSpec::relu());
        if (opts.linear_dropout > 0.0) spec.layers.push_back(LayerSpec::dropout_layer(opts.linear_dropout));
    };
    auto pool = [&] { spec.layers.push_back(LayerSpec::avgpool(2)); };

    if (name == "vgg-mini") {
        conv_block(16);
        conv_block(16);
        pool();
        conv_block(32);
        conv_block(32);
        pool();
        dense_block(64);
    } else if (name == "vgg9-meta") {
        conv_block(64);
        conv_block(64);
        pool();
        conv_block(128);
        conv_block(128);
        pool();
        conv_block(256);
        conv_block(256);
        conv_block(256);
        pool();
        dense_block(1024);
    } else if (name == "vgg16") {
        for (std::size_t ch : {64, 128}) {
            conv_block(ch);
            conv_block(ch);
            pool();
        }
        for (std::size_t ch : {256, 512, 512}) {
            conv_block(ch);
            conv_block(ch);
            conv_block(ch);
            pool();
        }
        dense_block(4096);
        dense_block(4096);
    } else {
        throw ConfigError("unknown model preset '" + name + "' (expected vgg-mini|vgg9-meta|vgg16)");
    }
    spec.layers.push_back(LayerSpec::linear(opts.num_classes));
    spec.validate();
    return spec;
}

template <typename T>
ParamLayer<T>& BasicModelState<T>::param_for_layer(std::size_t layer) {
    for (auto& p : params)
        if (p.layer == layer) return p;
    throw InvariantError("no parameters for layer " + std::to_string(layer));
}

template <typename T>
const ParamLayer<T>& BasicModelState<T>::param_for_layer(std::size_t layer) const {
    for (const auto& p : params)
        if (p.layer == layer) return p;
    throw InvariantError("no parameters for layer " + std::to_string(layer));
}

template <typename T>
std::size_t BasicModelState<T>::total_weights() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.weight.size();
    return n;
}

template <typename T>
std::size_t BasicModelState<T>::active_weights() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.mask.nnz();
    return n;
}

template <typename T>
void BasicModelState<T>::apply_masks() {
    for (auto& p : params) p.mask.apply(p.weight);
}

template <typename T>
BasicModelState<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed).split("init");
    BasicModelState<T> state;
    for (std::size_t layer : spec.weight_layers()) {
        const Shape ws = spec.weight_shape(layer);
        const std::size_t fan_in = shape_size(ws) / ws[0];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        ParamLayer<T> p;
        p.layer = layer;
        p.name = std::string(layer_kind_name(spec.layers[layer].kind)) + std::to_string(layer);
        p.weight = BasicTensor<T>(ws);
        for (auto& v : p.weight.data()) v = static_cast<T>(stddev * rng.normal());
        p.mask = PruneMask(ws, true);
        p.momentum = BasicTensor<T>(ws);
        state.params.push_back(std::move(p));
    }
    return state;
}

void check_batch_shape(const ModelSpec& spec, const Shape& s) {
    if (s.size() != spec.input.size() + 1 || !std::equal(spec.input.begin(), spec.input.end(), s.begin() + 1))
        throw DimensionError("batch shape " + shape_string(s) + " does not match model input [N," +
                             shape_string(spec.input).substr(1));
}

template <typename T>
AnnForward<T> ann_forward(const BasicModelState<T>& state, const ModelSpec& spec, const BasicTensor<T>& batch,
                          bool train_mode, Rng* dropout_rng) {
    check_batch_shape(spec, batch.shape());
    AnnForward<T> f;
    Var x = f.tape.constant(batch);
    f.activations.resize(spec.layers.size());
    f.weights.resize(state.params.size());
    std::size_t pi = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        try {
            switch (l.kind) {
                case LayerKind::Conv:
                case LayerKind::Linear: {
                    const ParamLayer<T>& p = state.params.at(pi);
                    SPARSNN_CHECK(p.layer == i, "parameter list out of step with the layer list");
                    BasicTensor<T> w = p.weight;
                    p.mask.apply(w);
                    const Var wv = f.tape.parameter(std::move(w));
                    f.weights[pi++] = wv;
                    x = l.kind == LayerKind::Conv ? f.tape.conv2d(x, wv, {l.stride, l.pad}) : f.tape.linear(x, wv);
                    break;
                }
                case LayerKind::Relu: x = f.tape.relu(x); break;
                case LayerKind::AvgPool: x = f.tape.avgpool2d(x, l.pool); break;
                case LayerKind::Dropout:
                    if (train_mode && l.dropout > 0.0) {
                        SPARSNN_CHECK(dropout_rng != nullptr, "train-mode forward needs a dropout generator");
                        x = f.tape.dropout(x, ops::dropout_mask<T>(f.tape.value(x).shape(), l.dropout, *dropout_rng));
                    }
                    break;
            }
        } catch (const NumericError& e) {
            throw NumericError("ann_forward: " + layer_label(i, l) + ": " + e.what());
        }
        f.activations[i] = x;
    }
    f.logits = x;
    return f;
}

template <typename T>
std::vector<BasicTensor<T>> ann_infer(const BasicModelState<T>& state, const ModelSpec& spec,
                                      const BasicTensor<T>& batch) {
    check_batch_shape(spec, batch.shape());
    std::vector<BasicTensor<T>> outs;
    outs.reserve(spec.layers.size());
    const BasicTensor<T>* x = &batch;
    std::size_t pi = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear: {
                BasicTensor<T> w = state.params.at(pi).weight;
                state.params.at(pi++).mask.apply(w);
                outs.push_back(l.kind == LayerKind::Conv ? ops::conv2d(*x, w, {l.stride, l.pad}) : ops::linear(*x, w));
                break;
            }
            case LayerKind::Relu: outs.push_back(ops::relu(*x)); break;
            case LayerKind::AvgPool: outs.push_back(ops::avgpool2d(*x, l.pool)); break;
            case LayerKind::Dropout: outs.push_back(*x); break;
        }
        x = &outs.back();
    }
    if (!outs.back().all_finite()) throw NumericError("ann_infer: non-finite logits");
    return outs;
}

template struct BasicModelState<float>;
template struct BasicModelState<double>;
template BasicModelState<float> build_model<float>(const ModelSpec&, std::uint64_t);
template BasicModelState<double> build_model<double>(const ModelSpec&, std::uint64_t);
template AnnForward<float> ann_forward(const BasicModelState<float>&, const ModelSpec&, const Tensor&, bool, Rng*);
template AnnForward<double> ann_forward(const BasicModelState<double>&, const ModelSpec&, const Tensor64&, bool,
                                        Rng*);
template std::vector<Tensor> ann_infer(const BasicModelState<float>&, const ModelSpec&, const Tensor&);
template std::vector<Tensor64> ann_infer(const BasicModelState<double>&, const ModelSpec&, const Tensor64&);

}  // namespace sparsnn

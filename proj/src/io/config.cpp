#include "sparsnn/io/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace sparsnn {

const char* data_format_name(DataFormat f) { return f == DataFormat::Raw ? "raw" : "idx"; }

DataFormat parse_data_format(const std::string& s) {
    if (s == "raw" || s == "raw-f32") return DataFormat::Raw;
    if (s == "idx") return DataFormat::Idx;
    throw ConfigError("unknown data format '" + s + "' (expected raw or idx)");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used == v.size() && v.find('-') == std::string::npos) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_epochs(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty() || v == "none") return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
    return out;
}

std::string epochs_string(const std::vector<LrMilestone>& ms) {
    if (ms.empty()) return "none";
    std::string s;
    for (std::size_t i = 0; i < ms.size(); ++i) s += (i ? "," : "") + std::to_string(ms[i].epoch);
    return s;
}

double common_factor(const std::vector<LrMilestone>& ms, double fallback) {
    return ms.empty() ? fallback : ms.front().factor;
}

void set_milestones(OptimizerConfig& o, const std::vector<std::size_t>& epochs, double factor) {
    o.milestones.clear();
    for (auto e : epochs) o.milestones.push_back({e, factor});
}

std::vector<std::size_t> milestone_epochs(const OptimizerConfig& o) {
    std::vector<std::size_t> e;
    for (const auto& m : o.milestones) e.push_back(m.epoch);
    return e;
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(KEY, MEMBER)                                                                    \
    Field { KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); },          \
            [](const RunConfig& c) { return std::to_string(c.MEMBER); } }
#define DOUBLE_FIELD(KEY, MEMBER)                                                                  \
    Field { KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },        \
            [](const RunConfig& c) { return fmt_double(c.MEMBER); } }
#define BOOL_FIELD(KEY, MEMBER)                                                                    \
    Field { KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },          \
            [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } }
#define STRING_FIELD(KEY, MEMBER)                                                                  \
    Field { KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                        \
            [](const RunConfig& c) { return c.MEMBER; } }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        STRING_FIELD("model", model),
        SIZE_FIELD("num_classes", num_classes),
        {"model.conv_dropout",
         [](RunConfig& c, const std::string& v) {
             c.conv_dropout = v == "auto" ? -1.0 : to_double("model.conv_dropout", v);
         },
         [](const RunConfig& c) { return c.conv_dropout < 0.0 ? std::string("auto") : fmt_double(c.conv_dropout); }},
        DOUBLE_FIELD("model.linear_dropout", linear_dropout),
        {"data.format", [](RunConfig& c, const std::string& v) { c.data_format = parse_data_format(v); },
         [](const RunConfig& c) { return std::string(data_format_name(c.data_format)); }},
        STRING_FIELD("data.train", train_images),
        STRING_FIELD("data.train_labels", train_labels),
        STRING_FIELD("data.test", test_images),
        STRING_FIELD("data.test_labels", test_labels),
        BOOL_FIELD("data.normalize", normalize),
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_size("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"prune.mode", [](RunConfig& c, const std::string& v) { c.ann.sparsity.mode = parse_prune_mode(v); },
         [](const RunConfig& c) { return std::string(prune_mode_name(c.ann.sparsity.mode)); }},
        DOUBLE_FIELD("prune.density", ann.sparsity.density),
        DOUBLE_FIELD("prune.initial_rate", ann.sparsity.initial_prune_rate),
        DOUBLE_FIELD("attention.alpha", ann.attention.alpha),
        SIZE_FIELD("attention.epsilon", ann.attention.cutoff_epoch),
        {"attention.power",
         [](RunConfig& c, const std::string& v) { c.ann.attention.power = static_cast<int>(to_size("attention.power", v)); },
         [](const RunConfig& c) { return std::to_string(c.ann.attention.power); }},
        BOOL_FIELD("attention.squared", ann.attention.squared),
        STRING_FIELD("attention.pairs", attention_pairs),
        SIZE_FIELD("ann.epochs", ann.epochs),
        SIZE_FIELD("ann.batch_size", ann.batch_size),
        DOUBLE_FIELD("ann.lr", ann.optimizer.lr),
        DOUBLE_FIELD("ann.momentum", ann.optimizer.momentum),
        DOUBLE_FIELD("ann.weight_decay", ann.optimizer.weight_decay),
        {"ann.milestones",
         [](RunConfig& c, const std::string& v) {
             set_milestones(c.ann.optimizer, to_epochs("ann.milestones", v), common_factor(c.ann.optimizer.milestones, 0.1));
         },
         [](const RunConfig& c) { return epochs_string(c.ann.optimizer.milestones); }},
        {"ann.lr_factor",
         [](RunConfig& c, const std::string& v) {
             set_milestones(c.ann.optimizer, milestone_epochs(c.ann.optimizer), to_double("ann.lr_factor", v));
         },
         [](const RunConfig& c) { return fmt_double(common_factor(c.ann.optimizer.milestones, 0.1)); }},
        SIZE_FIELD("snn.timesteps", snn.timesteps),
        {"snn.neuron", [](RunConfig& c, const std::string& v) { c.snn.neuron.model = parse_neuron_model(v); },
         [](const RunConfig& c) { return std::string(neuron_model_name(c.snn.neuron.model)); }},
        DOUBLE_FIELD("snn.gamma", snn.neuron.gamma),
        {"snn.encoding", [](RunConfig& c, const std::string& v) { c.snn.encoding = parse_encoding(v); },
         [](const RunConfig& c) { return std::string(encoding_name(c.snn.encoding)); }},
        SIZE_FIELD("snn.epochs", snn.epochs),
        SIZE_FIELD("snn.batch_size", snn.batch_size),
        DOUBLE_FIELD("snn.lr", snn.optimizer.lr),
        {"snn.milestones",
         [](RunConfig& c, const std::string& v) {
             set_milestones(c.snn.optimizer, to_epochs("snn.milestones", v), common_factor(c.snn.optimizer.milestones, 0.5));
         },
         [](const RunConfig& c) { return epochs_string(c.snn.optimizer.milestones); }},
        {"snn.lr_factor",
         [](RunConfig& c, const std::string& v) {
             set_milestones(c.snn.optimizer, milestone_epochs(c.snn.optimizer), to_double("snn.lr_factor", v));
         },
         [](const RunConfig& c) { return fmt_double(common_factor(c.snn.optimizer.milestones, 0.5)); }},
        BOOL_FIELD("snn.train_weights", snn.train_weights),
        BOOL_FIELD("snn.train_threshold", snn.train_threshold),
        BOOL_FIELD("snn.train_leak", snn.train_leak),
        SIZE_FIELD("calib.batch", calib_batch),
        DOUBLE_FIELD("calib.percentile", calib.percentile),
        DOUBLE_FIELD("calib.scale", calib.scale),
        DOUBLE_FIELD("energy.e_ac", energy.e_ac),
        DOUBLE_FIELD("energy.e_mac", energy.e_mac),
        STRING_FIELD("out.dir", out_dir),
    };
    return f;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

void check_schedule(const char* which, const OptimizerConfig& o, std::size_t epochs) {
    for (const auto& m : o.milestones)
        if (m.epoch == 0 || m.epoch >= epochs)
            throw ConfigError(std::string(which) + ".milestones: epoch " + std::to_string(m.epoch) +
                              " lies outside the " + std::to_string(epochs) + "-epoch schedule");
    for (std::size_t i = 1; i < o.milestones.size(); ++i)
        if (o.milestones[i].epoch <= o.milestones[i - 1].epoch)
            throw ConfigError(std::string(which) + ".milestones must be strictly increasing");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    const double d = ann.sparsity.density;
    if (!(d > 0.0 && d <= 1.0)) throw ConfigError("prune.density must lie in (0,1]");
    ann.validate();
    check_schedule("ann", ann.optimizer, ann.epochs);
    snn.validate();
    if (snn.epochs > 0) check_schedule("snn", snn.optimizer, snn.epochs);
    if (ann.attention.power < 1) throw ConfigError("attention.power must be >= 1");
    if (ann.attention.alpha < 0.0) throw ConfigError("attention.alpha must be >= 0");
    if (calib_batch == 0) throw ConfigError("calib.batch must be positive");
    if (calib.percentile < 0.0 || calib.percentile > 100.0) throw ConfigError("calib.percentile must lie in [0,100]");
    if (!(calib.scale > 0.0)) throw ConfigError("calib.scale must be positive");
    energy.validate();
}

std::string RunConfig::canonical() const {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& f : fields()) kv.emplace_back(f.key, f.get(*this));
    std::sort(kv.begin(), kv.end());
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t RunConfig::hash() const {
    const std::string c = canonical();
    return fnv1a(c.data(), c.size());
}

ModelSpec RunConfig::model_spec(const Shape& input) const {
    ModelSpec spec;
    if (model.rfind("spec:", 0) == 0) {
        spec = ModelSpec::parse(model.substr(5));
        if (spec.input != input)
            throw DimensionError("inline model input " + shape_string(spec.input) + " does not match the data " +
                                 shape_string(input));
    } else {
        PresetOptions o;
        o.input = input;
        o.num_classes = num_classes;
        o.conv_dropout = conv_dropout >= 0.0 ? conv_dropout : (ann.sparsity.density < 1.0 ? 0.05 : 0.2);
        o.linear_dropout = linear_dropout;
        spec = preset_model(model, o);
    }
    if (spec.num_classes != num_classes)
        throw ConfigError("model has " + std::to_string(spec.num_classes) + " classes, config says " +
                          std::to_string(num_classes));
    spec.validate();
    return spec;
}

}  // namespace sparsnn

#include "sparsnn/io/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <sstream>

namespace sparsnn {

namespace {

std::string path_in(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::vector<std::pair<std::size_t, std::size_t>> parse_pairs(const std::string& text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        try {
            if (colon == std::string::npos) throw std::invalid_argument("no colon");
            out.emplace_back(std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("attention.pairs: expected 'auto' or c:m,c:m,..., got '" + text + "'");
        }
    }
    return out;
}

DataView view_of(const Tensor& images, const Dataset& d) { return {&images, &d.labels}; }

}  // namespace

RunData load_run_data(const RunConfig& cfg) {
    if (cfg.train_images.empty()) throw ConfigError("data.train is not set");
    if (cfg.test_images.empty()) throw ConfigError("data.test is not set");
    RunData d;
    d.train = load_dataset(cfg.train_images, cfg.train_labels, cfg.data_format, cfg.num_classes);
    d.test = load_dataset(cfg.test_images, cfg.test_labels, cfg.data_format, cfg.num_classes);
    if (d.train.sample_shape() != d.test.sample_shape())
        throw DimensionError("train samples are " + shape_string(d.train.sample_shape()) + ", test samples are " +
                             shape_string(d.test.sample_shape()));
    if (cfg.normalize) d.norm = Normalization::fit(d.train.images);
    return d;
}

Tensor model_input(const Tensor& images, const Normalization& norm, bool normalize) {
    return normalize ? norm.apply(images) : images;
}

Tensor snn_input(const Tensor& images, const Normalization& norm, const SnnTrainConfig& snn) {
    return snn.encoding == Encoding::Poisson ? images : norm.apply(images);
}

AnnRun run_train_ann(const RunConfig& cfg, const RunData& data, const Checkpoint* meta, std::ostream* log) {
    cfg.validate();
    const ModelSpec spec = cfg.model_spec(data.train.sample_shape());
    AgcConfig agc = cfg.ann;
    const bool guided = agc.attention.alpha > 0.0 && agc.attention.cutoff_epoch > 0;
    if (guided) {
        if (!meta) throw ConfigError("missing meta model: attention.alpha > 0 needs --meta CKPT");
        if (meta->spec.input != spec.input)
            throw DimensionError("meta model input " + shape_string(meta->spec.input) + " does not match the data " +
                                 shape_string(spec.input));
        agc.attention.pairs = cfg.attention_pairs == "auto" ? default_attention_pairs(spec, meta->spec)
                                                            : parse_pairs(cfg.attention_pairs);
        agc.attention.validate(spec, meta->spec);
    }
    AnnRun run;
    ModelState state = build_model<float>(spec, cfg.seed);
    state.mode = agc.sparsity.mode;
    if (agc.sparsity.density < 1.0)
        init_masks(state, spec, agc.sparsity.density, agc.sparsity.mode, cfg.seed, &run.sparsity_diag);

    const Normalization norm = cfg.normalize ? data.norm : Normalization{};
    const Tensor train_x = model_input(data.train.images, norm, cfg.normalize);
    const Tensor test_x = model_input(data.test.images, norm, cfg.normalize);
    const DataView train = view_of(train_x, data.train), test = view_of(test_x, data.test);
    const MetaModel mm = guided ? MetaModel{&meta->spec, &meta->state} : MetaModel{};

    for (std::size_t e = 0; e < agc.epochs; ++e) {
        AgcEpochLog l = agc_train_epoch(state, spec, train, agc, e, cfg.seed, mm, &run.sparsity_diag,
                                        &run.attention_diag);
        const double acc = ann_evaluate(state, spec, test).accuracy;
        if (log)
            *log << "ann epoch " << e << " lr " << l.lr << " ce " << l.ce << " ag " << l.ag << " train "
                 << l.train_accuracy << " test " << acc << " density " << l.density << '\n';
        run.epochs.push_back(std::move(l));
        run.test_accuracy.push_back(acc);
    }
    run.checkpoint.stage = Stage::Ann;
    run.checkpoint.config_hash = cfg.hash();
    run.checkpoint.spec = spec;
    run.checkpoint.norm = norm;
    run.checkpoint.state = std::move(state);
    return run;
}

ConvertRun run_convert(const Checkpoint& ann, const RunConfig& cfg, const RunData& data, std::ostream* log) {
    cfg.validate();
    if (ann.stage != Stage::Ann)
        throw ConfigError(std::string("convert needs an ann-stage checkpoint, got stage '") + stage_name(ann.stage) +
                          "'");
    if (ann.spec.input != data.train.sample_shape())
        throw DimensionError("checkpoint input " + shape_string(ann.spec.input) + " does not match the data " +
                             shape_string(data.train.sample_shape()));
    const std::size_t n = data.train.size();
    if (n == 0) throw ConfigError("calibration batch unavailable: the training set is empty");
    const std::size_t nb = std::min(cfg.calib_batch, n);
    const Tensor all = snn_input(data.train.images, ann.norm, cfg.snn);
    const Tensor calib_x = gather_batch(all, identity_order(n), 0, nb);
    const InputWindow window = encode(calib_x, cfg.snn.encoding, cfg.snn.timesteps, cfg.seed);

    ConvertRun run;
    run.checkpoint = ann;
    run.checkpoint.with_momentum = false;
    for (auto& p : run.checkpoint.state.params) p.momentum.fill(0.0f);
    CalibrationConfig cc = cfg.calib;
    cc.timesteps = cfg.snn.timesteps;
    run.calibration = calibrate_thresholds(run.checkpoint.state, run.checkpoint.spec, window, cc);
    run.checkpoint.stage = Stage::Converted;
    run.checkpoint.calib_timesteps = static_cast<std::uint32_t>(cfg.snn.timesteps);
    run.checkpoint.config_hash = cfg.hash();

    const Tensor test_x = snn_input(data.test.images, ann.norm, cfg.snn);
    run.test_accuracy = snn_evaluate(run.checkpoint.state, run.checkpoint.spec, view_of(test_x, data.test),
                                     cfg.snn.timesteps, cfg.snn.encoding, 256, cfg.seed)
                            .accuracy;
    if (log) {
        *log << "thresholds";
        for (double v : run.calibration.thresholds) *log << ' ' << v;
        *log << "\nconverted test accuracy at T=" << cfg.snn.timesteps << ": " << run.test_accuracy << '\n';
    }
    return run;
}

SnnRun run_train_snn(const Checkpoint& in, const RunConfig& cfg, const RunData& data, std::ostream* log) {
    cfg.validate();
    if (in.stage == Stage::Ann)
        throw ConfigError("train-snn needs a converted or snn-stage checkpoint, got stage 'ann'");
    if (in.spec.input != data.train.sample_shape())
        throw DimensionError("checkpoint input " + shape_string(in.spec.input) + " does not match the data " +
                             shape_string(data.train.sample_shape()));
    if (in.calib_timesteps != 0 && in.calib_timesteps != cfg.snn.timesteps && log)
        *log << "warning: thresholds were calibrated at T=" << in.calib_timesteps << ", training at T="
             << cfg.snn.timesteps << '\n';
    SnnRun run;
    run.checkpoint = in;
    ModelState& state = run.checkpoint.state;
    std::vector<PruneMask> masks;
    for (const auto& p : state.params) masks.push_back(p.mask);

    const Tensor train_x = snn_input(data.train.images, in.norm, cfg.snn);
    const Tensor test_x = snn_input(data.test.images, in.norm, cfg.snn);
    const DataView train = view_of(train_x, data.train), test = view_of(test_x, data.test);
    SnnTrainer trainer{Adam<float>(cfg.snn.optimizer.adam_beta1, cfg.snn.optimizer.adam_beta2, cfg.snn.optimizer.adam_eps),
                       -1.0};
    for (std::size_t e = 0; e < cfg.snn.epochs; ++e) {
        EpochStats s = snn_train_epoch(state, run.checkpoint.spec, train, cfg.snn, trainer, e, cfg.seed);
        const double acc =
            snn_evaluate(state, run.checkpoint.spec, test, cfg.snn.timesteps, cfg.snn.encoding, 256, cfg.seed).accuracy;
        if (log)
            *log << "snn epoch " << e << " loss " << s.loss << " train " << s.accuracy << " test " << acc << '\n';
        run.epochs.push_back(s);
        run.test_accuracy.push_back(acc);
    }
    for (std::size_t i = 0; i < masks.size(); ++i)
        if (!(masks[i] == state.params[i].mask))
            throw InvariantError("SNN training changed the mask of " + state.params[i].name);
    run.checkpoint.stage = Stage::Snn;
    run.checkpoint.config_hash = cfg.hash();
    return run;
}

ProfileRun run_profile(const Checkpoint& ckpt, const Dataset& data, const RunConfig& cfg) {
    ProfileRun r;
    const ModelSpec& spec = ckpt.spec;
    const ModelState& state = ckpt.state;
    const CompressionRatios cr = compression_ratios(state, spec);
    const bool spiking = ckpt.stage != Stage::Ann;
    if (spiking) {
        if (data.sample_shape() != spec.input)
            throw DimensionError("profile data samples are " + shape_string(data.sample_shape()) +
                                 ", the model expects " + shape_string(spec.input));
        const Tensor x = snn_input(data.images, ckpt.norm, cfg.snn);
        const SnnEvalResult ev = snn_evaluate(state, spec, {&x, &data.labels}, cfg.snn.timesteps, cfg.snn.encoding,
                                              256, cfg.seed, true);
        r.record = ev.record;
        r.rows = metrics_rows(spec, state, &r.record, cfg.energy);
        r.summary.emplace_back("accuracy", ev.accuracy);
        r.summary.emplace_back("timesteps", static_cast<double>(cfg.snn.timesteps));
        r.summary.emplace_back("energy_snn", snn_energy(spec, state, r.record, cfg.snn.encoding, cfg.energy).total);
    } else {
        r.rows = metrics_rows(spec, state, nullptr, cfg.energy);
        if (data.size() > 0 && data.sample_shape() == spec.input) {
            const Tensor x = model_input(data.images, ckpt.norm, !ckpt.norm.empty());
            r.summary.emplace_back("accuracy", ann_evaluate(state, spec, {&x, &data.labels}).accuracy);
        }
    }
    r.summary.emplace_back("energy_ann_dense", ann_energy(spec, state, false, cfg.energy).total);
    r.summary.emplace_back("energy_ann_compressed", ann_energy(spec, state, true, cfg.energy).total);
    r.summary.emplace_back("weight_compression", cr.weight);
    r.summary.emplace_back("channel_compression", cr.channel);
    return r;
}

std::string ann_log_csv(const AnnRun& run) {
    std::ostringstream os;
    os << std::setprecision(8) << "epoch,lr,ce,ag,train_accuracy,test_accuracy,density,prune_rate\n";
    for (std::size_t i = 0; i < run.epochs.size(); ++i) {
        const auto& e = run.epochs[i];
        os << e.epoch << ',' << e.lr << ',' << e.ce << ',' << e.ag << ',' << e.train_accuracy << ','
           << run.test_accuracy[i] << ',' << e.density << ',' << e.prune_rate << '\n';
    }
    return os.str();
}

std::string sparsity_csv(const AnnRun& run) {
    std::ostringstream os;
    os << std::setprecision(8) << "epoch,layer,density,pruned,regrown\n";
    for (const auto& e : run.epochs)
        for (const auto& r : e.sparsity)
            os << r.epoch << ',' << r.layer << ',' << r.density << ',' << r.pruned << ',' << r.regrown << '\n';
    return os.str();
}

std::string snn_log_csv(const SnnRun& run) {
    std::ostringstream os;
    os << std::setprecision(8) << "epoch,loss,train_accuracy,test_accuracy\n";
    for (std::size_t i = 0; i < run.epochs.size(); ++i)
        os << run.epochs[i].epoch << ',' << run.epochs[i].loss << ',' << run.epochs[i].accuracy << ','
           << run.test_accuracy[i] << '\n';
    return os.str();
}

std::string summary_csv(const ProfileRun& run) {
    std::ostringstream os;
    os << std::setprecision(10) << "metric,value\n";
    for (const auto& [k, v] : run.summary) os << k << ',' << v << '\n';
    return os.str();
}

namespace {

std::string quoted(const std::string& s) {
    std::string o = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') o += '\\';
        if (c == '\n') {
            o += "\\n";
            continue;
        }
        o += c;
    }
    return o + '"';
}

void report(std::ostream& err, const std::string& kind, const std::string& msg) {
    err << "error: kind=" << kind << " message=" << quoted(msg) << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attention-guided sparse training and ANN-to-SNN conversion"};
    app.require_subcommand(1);

    std::string config, meta, in, out_path, data, labels, out_dir;
    ToyDatasetOptions toy;
    std::size_t toy_train = 2000, toy_test = 1000;

    auto* ta = app.add_subcommand("train-ann", "Sparse ANN training with attention guidance");
    ta->add_option("--config", config, "key=value config file")->required();
    ta->add_option("--meta", meta, "Dense meta-model checkpoint (needed when attention.alpha > 0)");
    ta->add_option("--out", out_path, "Checkpoint path (default <out.dir>/ann.ckpt)");

    auto* cv = app.add_subcommand("convert", "Calibrate thresholds and convert an ANN checkpoint");
    cv->add_option("--in", in, "ann-stage checkpoint")->required();
    cv->add_option("--config", config, "key=value config file")->required();
    cv->add_option("--out", out_path, "Checkpoint path (default <out.dir>/converted.ckpt)");

    auto* ts = app.add_subcommand("train-snn", "Surrogate-gradient fine-tuning of a converted SNN");
    ts->add_option("--in", in, "converted or snn-stage checkpoint")->required();
    ts->add_option("--config", config, "key=value config file")->required();
    ts->add_option("--out", out_path, "Checkpoint path (default <out.dir>/snn.ckpt)");

    auto* pf = app.add_subcommand("profile", "Spiking activity, FLOPs and energy report");
    pf->add_option("--in", in, "Checkpoint")->required();
    pf->add_option("--data", data, "Dataset file (raw or idx images)")->required();
    pf->add_option("--labels", labels, "Labels file for idx data");
    pf->add_option("--out", out_dir, "Report directory")->required();
    pf->add_option("--config", config, "key=value config file (T, encoding, energy model)");

    auto* mt = app.add_subcommand("make-toy", "Write the synthetic toy dataset");
    mt->add_option("--out", out_dir, "Output directory")->required();
    mt->add_option("--classes", toy.classes, "Number of classes");
    mt->add_option("--train", toy_train, "Training samples");
    mt->add_option("--test", toy_test, "Test samples");
    mt->add_option("--size", toy.size, "Image side length");
    mt->add_option("--noise", toy.noise, "Gaussian pixel noise");
    mt->add_option("--shift", toy.max_shift, "Maximum random shift in pixels");
    mt->add_option("--seed", toy.seed, "Sample seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        report(err, "usage", e.what());
        return 1;
    }

    try {
        if (mt->parsed()) {
            ensure_dir(out_dir);
            ToyDatasetOptions o = toy;
            o.samples = toy_train;
            save_raw_dataset(path_in(out_dir, "train.snnd"), make_toy_dataset(o));
            o.samples = toy_test;
            o.seed = toy.seed + 1;
            save_raw_dataset(path_in(out_dir, "test.snnd"), make_toy_dataset(o));
            out << "wrote " << path_in(out_dir, "train.snnd") << " and " << path_in(out_dir, "test.snnd") << '\n';
            return 0;
        }
        if (pf->parsed()) {
            const RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
            const Checkpoint ck = Checkpoint::load(in);
            const Dataset d = load_dataset_auto(data, labels, ck.spec.num_classes);
            const ProfileRun r = run_profile(ck, d, cfg);
            ensure_dir(out_dir);
            std::ostringstream rows;
            write_metrics_csv(rows, r.rows);
            write_text(path_in(out_dir, "metrics.csv"), rows.str());
            write_text(path_in(out_dir, "summary.csv"), summary_csv(r));
            out << summary_csv(r);
            return 0;
        }
        const RunConfig cfg = RunConfig::load(config);
        ensure_dir(cfg.out_dir);
        const RunData rd = load_run_data(cfg);
        if (ta->parsed()) {
            Checkpoint meta_ck;
            if (!meta.empty()) meta_ck = Checkpoint::load(meta);
            const AnnRun r = run_train_ann(cfg, rd, meta.empty() ? nullptr : &meta_ck, &out);
            const std::string path = out_path.empty() ? path_in(cfg.out_dir, "ann.ckpt") : out_path;
            r.checkpoint.save(path);
            write_text(path_in(cfg.out_dir, "ann_log.csv"), ann_log_csv(r));
            write_text(path_in(cfg.out_dir, "sparsity.csv"), sparsity_csv(r));
            out << "checkpoint " << path << " hash " << hex64(r.checkpoint.hash()) << '\n';
        } else if (cv->parsed()) {
            const ConvertRun r = run_convert(Checkpoint::load(in), cfg, rd, &out);
            const std::string path = out_path.empty() ? path_in(cfg.out_dir, "converted.ckpt") : out_path;
            r.checkpoint.save(path);
            out << "checkpoint " << path << " hash " << hex64(r.checkpoint.hash()) << '\n';
        } else if (ts->parsed()) {
            const SnnRun r = run_train_snn(Checkpoint::load(in), cfg, rd, &out);
            const std::string path = out_path.empty() ? path_in(cfg.out_dir, "snn.ckpt") : out_path;
            r.checkpoint.save(path);
            write_text(path_in(cfg.out_dir, "snn_log.csv"), snn_log_csv(r));
            out << "checkpoint " << path << " hash " << hex64(r.checkpoint.hash()) << '\n';
        }
        return 0;
    } catch (const InvariantError& e) {
        report(err, e.kind(), e.what());
        return 2;
    } catch (const Error& e) {
        report(err, e.kind(), e.what());
        return 1;
    } catch (const std::bad_alloc&) {
        report(err, "resource", "out of memory");
        return 1;
    } catch (const std::exception& e) {
        report(err, "internal", e.what());
        return 2;
    }
}

}  // namespace sparsnn

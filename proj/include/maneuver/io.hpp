#pragma once

// JSON configuration mapping plus persistence of windowed datasets
// (manifest.json + windows.bin) and trained models (.mrm files).

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "maneuver/binary.hpp"
#include "maneuver/error.hpp"
#include "maneuver/nn.hpp"
#include "maneuver/preprocessing.hpp"
#include "maneuver/synthgen.hpp"
#include "maneuver/training.hpp"

namespace maneuver {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

struct RebalanceConfig {
    std::set<std::string> drop;
    std::map<std::string, std::size_t> undersample;
    std::uint64_t seed = 0;
};

struct PipelineConfig {
    synth::ScenarioConfig synth;
    SplitConfig split;
    RebalanceConfig rebalance;
    ModelConfig model;  // n_features and n_classes are taken from the dataset
    TrainConfig train;

    // Applies one seed to every seeded stage.
    void override_seed(std::uint64_t seed) {
        synth.seed = seed;
        split.seed = seed;
        rebalance.seed = seed;
        model.init_seed = seed;
        train.shuffle_seed = seed;
    }
};

namespace detail {

template <typename T>
void read_field(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!seen.contains(it.key())) {
            throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
        }
    }
}

inline const json& section(const json& root, const char* key) {
    static const json empty = json::object();
    if (!root.contains(key)) return empty;
    if (!root.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
    return root.at(key);
}

}  // namespace detail

inline json to_json(const SplitConfig& c) {
    return {{"n_partitions", c.n_partitions}, {"test_fraction", c.test_fraction},
            {"window_length", c.window_length}, {"step_size", c.step_size},
            {"scale", c.scale},               {"seed", c.seed}};
}

inline SplitConfig split_from_json(const json& j) {
    SplitConfig c;
    std::set<std::string> seen;
    detail::read_field(j, "n_partitions", c.n_partitions, seen);
    detail::read_field(j, "test_fraction", c.test_fraction, seen);
    detail::read_field(j, "window_length", c.window_length, seen);
    detail::read_field(j, "step_size", c.step_size, seen);
    detail::read_field(j, "scale", c.scale, seen);
    detail::read_field(j, "seed", c.seed, seen);
    detail::reject_unknown(j, seen, "split");
    return c;
}

inline json to_json(const ModelConfig& c) {
    return {{"n_lstm_layers", c.n_lstm_layers}, {"hidden_size", c.hidden_size}, {"lstm_dropout", c.lstm_dropout},
            {"fc_dropout", c.fc_dropout},       {"fc1_size", c.fc1_size},       {"fc2_size", c.fc2_size},
            {"n_features", c.n_features},       {"n_classes", c.n_classes},     {"init_seed", c.init_seed}};
}

inline ModelConfig model_from_json(const json& j) {
    ModelConfig c;
    std::set<std::string> seen;
    detail::read_field(j, "n_lstm_layers", c.n_lstm_layers, seen);
    detail::read_field(j, "hidden_size", c.hidden_size, seen);
    detail::read_field(j, "lstm_dropout", c.lstm_dropout, seen);
    detail::read_field(j, "fc_dropout", c.fc_dropout, seen);
    detail::read_field(j, "fc1_size", c.fc1_size, seen);
    detail::read_field(j, "fc2_size", c.fc2_size, seen);
    detail::read_field(j, "n_features", c.n_features, seen);
    detail::read_field(j, "n_classes", c.n_classes, seen);
    detail::read_field(j, "init_seed", c.init_seed, seen);
    detail::reject_unknown(j, seen, "model");
    return c;
}

inline json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"shuffle_seed", c.shuffle_seed},
            {"loss", "cross_entropy"},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"}};
}

inline TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    std::set<std::string> seen;
    std::string loss = "cross_entropy";
    std::string optimizer = "adam";
    detail::read_field(j, "epochs", c.epochs, seen);
    detail::read_field(j, "batch_size", c.batch_size, seen);
    detail::read_field(j, "learning_rate", c.learning_rate, seen);
    detail::read_field(j, "shuffle_seed", c.shuffle_seed, seen);
    detail::read_field(j, "loss", loss, seen);
    detail::read_field(j, "optimizer", optimizer, seen);
    detail::reject_unknown(j, seen, "train");
    if (loss != "cross_entropy") throw ConfigError("unsupported loss '" + loss + "'");
    if (optimizer == "adam") {
        c.optimizer = OptimizerKind::adam;
    } else if (optimizer == "sgd") {
        c.optimizer = OptimizerKind::sgd;
    } else {
        throw ConfigError("unsupported optimizer '" + optimizer + "'");
    }
    return c;
}

inline json to_json(const synth::ScenarioConfig& c) {
    json weights = json::object();
    for (const auto& [k, v] : c.weights) weights[k] = v;
    return {{"n_drivers", c.n_drivers},
            {"frames_per_driver", c.frames_per_driver},
            {"weights", weights},
            {"seed", c.seed},
            {"capture_period_ms", c.capture_period_ms},
            {"noise_scale", c.noise_scale},
            {"amplitude_jitter", c.amplitude_jitter}};
}

inline synth::ScenarioConfig scenario_from_json(const json& j) {
    synth::ScenarioConfig c;
    std::set<std::string> seen;
    detail::read_field(j, "n_drivers", c.n_drivers, seen);
    detail::read_field(j, "frames_per_driver", c.frames_per_driver, seen);
    detail::read_field(j, "weights", c.weights, seen);
    detail::read_field(j, "seed", c.seed, seen);
    detail::read_field(j, "capture_period_ms", c.capture_period_ms, seen);
    detail::read_field(j, "noise_scale", c.noise_scale, seen);
    detail::read_field(j, "amplitude_jitter", c.amplitude_jitter, seen);
    detail::reject_unknown(j, seen, "synth");
    return c;
}

inline json to_json(const RebalanceConfig& c) {
    json undersample = json::object();
    for (const auto& [k, v] : c.undersample) undersample[k] = v;
    return {{"drop", c.drop}, {"undersample", undersample}, {"seed", c.seed}};
}

inline RebalanceConfig rebalance_from_json(const json& j) {
    RebalanceConfig c;
    std::set<std::string> seen;
    detail::read_field(j, "drop", c.drop, seen);
    detail::read_field(j, "undersample", c.undersample, seen);
    detail::read_field(j, "seed", c.seed, seen);
    detail::reject_unknown(j, seen, "rebalance");
    return c;
}

inline json to_json(const PipelineConfig& c) {
    return {{"synth", to_json(c.synth)},
            {"split", to_json(c.split)},
            {"rebalance", to_json(c.rebalance)},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)}};
}

inline PipelineConfig pipeline_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known = {"synth", "split", "rebalance", "model", "train"};
        if (!known.contains(it.key())) throw ConfigError("unknown config section '" + it.key() + "'");
    }
    PipelineConfig c;
    c.synth = scenario_from_json(detail::section(j, "synth"));
    c.split = split_from_json(detail::section(j, "split"));
    c.rebalance = rebalance_from_json(detail::section(j, "rebalance"));
    c.model = model_from_json(detail::section(j, "model"));
    c.train = train_from_json(detail::section(j, "train"));
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline PipelineConfig load_pipeline_config(const std::string& path) { return pipeline_from_json(read_json_file(path)); }

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Windowed dataset archive

inline constexpr char kWindowMagic[8] = {'M', 'R', 'W', 'I', 'N', 'D', 'O', 'W'};
inline constexpr std::uint32_t kWindowVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kWindowArchiveName = "windows.bin";

inline json to_json(const RobustScaler& s) { return {{"median", s.median}, {"iqr", s.iqr}}; }

inline RobustScaler scaler_from_json(const json& j) {
    RobustScaler s;
    try {
        s.median = j.at("median").get<std::vector<double>>();
        s.iqr = j.at("iqr").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("scaler: ") + e.what());
    }
    if (s.median.size() != s.iqr.size()) throw DimensionError("scaler median/iqr size mismatch");
    return s;
}

inline json class_counts_json(std::span<const WindowSample> samples, const LabelCodec& codec) {
    json out = json::object();
    const auto counts = class_counts(samples, codec.size());
    for (std::size_t k = 0; k < counts.size(); ++k) out[codec.labels()[k]] = counts[k];
    return out;
}

inline void write_window_archive(std::ostream& out, const WindowedDataset& ds) {
    std::size_t steps = ds.config.window_length;
    std::size_t features = kFeatureCount;
    out.write(kWindowMagic, sizeof(kWindowMagic));
    binary::write_u32(out, kWindowVersion);
    binary::write_u64(out, ds.train.size());
    binary::write_u64(out, ds.test.size());
    binary::write_u32(out, static_cast<std::uint32_t>(steps));
    binary::write_u32(out, static_cast<std::uint32_t>(features));
    for (const auto* split : {&ds.train, &ds.test}) {
        for (const auto& s : *split) {
            if (s.features.rows() != steps || s.features.cols() != features) {
                throw DimensionError("window shape differs from archive shape");
            }
            binary::write_i32(out, s.label_code);
            binary::write_string(out, s.source.driver_id);
            binary::write_u64(out, s.source.partition_index);
            binary::write_u64(out, s.source.start_frame);
            binary::write_f64s(out, s.features.values());
        }
    }
}

inline void read_window_archive(std::istream& in, WindowedDataset& ds) {
    char magic[8];
    binary::read_exact(in, magic, sizeof(magic));
    if (!std::equal(magic, magic + 8, kWindowMagic)) throw DataError("not a window archive");
    const auto version = binary::read_u32(in);
    if (version != kWindowVersion) {
        throw DimensionError("window archive version " + std::to_string(version) + " is not supported");
    }
    const auto n_train = binary::read_u64(in);
    const auto n_test = binary::read_u64(in);
    const auto steps = binary::read_u32(in);
    const auto features = binary::read_u32(in);
    if (steps != ds.config.window_length || features != kFeatureCount) {
        throw DimensionError("window archive shape does not match manifest");
    }
    auto read_split = [&](std::uint64_t n, std::vector<WindowSample>& out) {
        out.clear();
        out.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            WindowSample s;
            s.label_code = binary::read_i32(in);
            if (s.label_code < 0 || static_cast<std::size_t>(s.label_code) >= ds.codec.size()) {
                throw DataError("window archive label code out of range");
            }
            s.source.driver_id = binary::read_string(in);
            s.source.partition_index = binary::read_u64(in);
            s.source.start_frame = binary::read_u64(in);
            s.features = Matrix(steps, features);
            binary::read_f64s(in, s.features.values());
            out.push_back(std::move(s));
        }
    };
    read_split(n_train, ds.train);
    read_split(n_test, ds.test);
}

// Writes manifest.json and windows.bin into `dir`. `extra` entries are
// merged into the manifest.
inline void save_dataset(const std::string& dir, const WindowedDataset& ds, const json& extra = json::object()) {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "maneuver-windows";
    m["version"] = kWindowVersion;
    m["split"] = to_json(ds.config);
    m["features"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
    m["labels"] = ds.codec.labels();
    m["road_types"] = ds.road_types;
    m["scaler"] = to_json(ds.scaler);
    m["train_windows"] = ds.train.size();
    m["test_windows"] = ds.test.size();
    m["train_counts"] = class_counts_json(ds.train, ds.codec);
    m["test_counts"] = class_counts_json(ds.test, ds.codec);
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    m["archive"] = kWindowArchiveName;
    write_json_file((std::filesystem::path(dir) / kManifestName).string(), m);

    const auto path = (std::filesystem::path(dir) / kWindowArchiveName).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_window_archive(out, ds);
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline WindowedDataset load_dataset(const std::string& dir) {
    const json m = read_json_file((std::filesystem::path(dir) / kManifestName).string());
    WindowedDataset ds;
    try {
        if (m.at("format") != "maneuver-windows") throw DataError("not a window dataset manifest");
        if (m.at("version").get<std::uint32_t>() != kWindowVersion) {
            throw DimensionError("dataset manifest version is not supported");
        }
        ds.config = split_from_json(m.at("split"));
        ds.codec = LabelCodec::from_labels(m.at("labels").get<std::vector<std::string>>());
        ds.road_types = m.at("road_types").get<std::vector<std::string>>();
        ds.scaler = scaler_from_json(m.at("scaler"));
    } catch (const json::exception& e) {
        throw DataError(std::string("dataset manifest: ") + e.what());
    }
    if (ds.scaler.size() != kFeatureCount) throw DimensionError("scaler feature count mismatch");
    const auto path = (std::filesystem::path(dir) / kWindowArchiveName).string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    read_window_archive(in, ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Model file: magic, version, JSON header (config, gate order, pipeline
// metadata), then every parameter tensor as (rows, cols, raw little-endian
// doubles) in ModelParams::tensors() order.

inline constexpr char kModelMagic[8] = {'M', 'R', 'M', 'O', 'D', 'E', 'L', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

// What prediction needs besides the weights.
struct ModelMeta {
    std::vector<std::string> labels;
    std::vector<std::string> road_types;
    RobustScaler scaler;
    std::size_t window_length = 14;
    std::size_t step_size = 6;

    friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

struct SavedModel {
    ManeuverModel model;
    ModelMeta meta;
};

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const ModelParams& p) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& l : p.lstm) {
        out.emplace_back(l.w_ih.rows(), l.w_ih.cols());
        out.emplace_back(l.w_hh.rows(), l.w_hh.cols());
        out.emplace_back(1, l.bias.size());
    }
    for (const auto* d : {&p.fc1, &p.fc2, &p.classifier}) {
        out.emplace_back(d->weight.rows(), d->weight.cols());
        out.emplace_back(1, d->bias.size());
    }
    return out;
}

}  // namespace detail

inline void write_model(std::ostream& out, const ManeuverModel& m, const ModelMeta& meta) {
    json header;
    header["format"] = "maneuver-model";
    header["gate_order"] = kGateOrder;
    header["config"] = to_json(m.config);
    header["meta"] = {{"labels", meta.labels},
                      {"road_types", meta.road_types},
                      {"scaler", to_json(meta.scaler)},
                      {"window_length", meta.window_length},
                      {"step_size", meta.step_size}};
    out.write(kModelMagic, sizeof(kModelMagic));
    binary::write_u32(out, kModelVersion);
    binary::write_string(out, header.dump());
    const auto shapes = detail::tensor_shapes(m.params);
    const auto tensors = m.params.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        binary::write_u32(out, static_cast<std::uint32_t>(shapes[k].first));
        binary::write_u32(out, static_cast<std::uint32_t>(shapes[k].second));
        binary::write_f64s(out, tensors[k]);
    }
}

inline SavedModel read_model(std::istream& in) {
    char magic[8];
    binary::read_exact(in, magic, sizeof(magic));
    if (!std::equal(magic, magic + 8, kModelMagic)) throw DataError("not a model file");
    const auto version = binary::read_u32(in);
    if (version != kModelVersion) {
        throw DimensionError("model file version " + std::to_string(version) + " is not supported");
    }
    SavedModel sm;
    try {
        const json header = json::parse(binary::read_string(in));
        if (header.at("gate_order") != kGateOrder) throw DimensionError("model gate order is not supported");
        sm.model.config = model_from_json(header.at("config"));
        const auto& meta = header.at("meta");
        sm.meta.labels = meta.at("labels").get<std::vector<std::string>>();
        sm.meta.road_types = meta.at("road_types").get<std::vector<std::string>>();
        sm.meta.scaler = scaler_from_json(meta.at("scaler"));
        sm.meta.window_length = meta.at("window_length").get<std::size_t>();
        sm.meta.step_size = meta.at("step_size").get<std::size_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("model header: ") + e.what());
    }
    sm.model.config.validate();
    if (sm.meta.labels.size() != sm.model.config.n_classes) {
        throw DimensionError("model label count differs from n_classes");
    }
    if (sm.meta.scaler.size() != sm.model.config.n_features) {
        throw DimensionError("model scaler size differs from n_features");
    }
    sm.model.params = zero_params(sm.model.config);
    const auto shapes = detail::tensor_shapes(sm.model.params);
    auto tensors = sm.model.params.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        const auto rows = binary::read_u32(in);
        const auto cols = binary::read_u32(in);
        if (rows != shapes[k].first || cols != shapes[k].second) {
            throw DimensionError("model tensor " + std::to_string(k) + " has shape " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + ", config implies " + std::to_string(shapes[k].first) +
                                 "x" + std::to_string(shapes[k].second));
        }
        binary::read_f64s(in, tensors[k]);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DimensionError("trailing data after model tensors");
    return sm;
}

inline void save_model(const std::string& path, const ManeuverModel& m, const ModelMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_model(out, m, meta);
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline SavedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_model(in);
}

}  // namespace maneuver

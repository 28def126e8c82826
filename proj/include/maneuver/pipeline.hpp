#pragma once

// The five pipeline commands (synth, prepare, train, evaluate, predict) as
// library calls. The CLI is a thin argument layer over these.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "maneuver/data_model.hpp"
#include "maneuver/evaluation.hpp"
#include "maneuver/io.hpp"
#include "maneuver/log.hpp"
#include "maneuver/preprocessing.hpp"
#include "maneuver/synthgen.hpp"
#include "maneuver/training.hpp"

namespace maneuver::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kResolvedConfigName = "config.resolved.json";
inline constexpr const char* kModelFileName = "model.mrm";
inline constexpr const char* kHistoryFileName = "history.csv";
inline constexpr const char* kCurvesFileName = "training_curves.svg";

inline void write_resolved_config(const std::string& out_dir, const PipelineConfig& cfg) {
    write_json_file((fs::path(out_dir) / kResolvedConfigName).string(), to_json(cfg));
}

// ---------------------------------------------------------------------------
// synth

struct SynthResult {
    std::vector<std::string> files;
    std::map<std::string, std::size_t> frame_counts;  // per maneuver label
};

// One CSV per driver plus synth_manifest.json.
inline SynthResult cmd_synth(const PipelineConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto recordings = synth::generate(cfg.synth);
    const CategoryCodec roads(synth::road_type_names());
    SynthResult result;
    for (const auto& name : synth::maneuver_names()) result.frame_counts[name] = 0;
    json files = json::array();
    for (const auto& r : recordings) {
        const std::string file = r.driver_id + ".csv";
        write_csv((fs::path(out_dir) / file).string(), r, roads);
        result.files.push_back(file);
        for (const auto& l : r.labels) ++result.frame_counts[l];
        files.push_back({{"file", file}, {"driver_id", r.driver_id}, {"frames", r.size()}});
    }
    json counts = json::object();
    for (const auto& [k, v] : result.frame_counts) counts[k] = v;
    json manifest;
    manifest["format"] = "maneuver-synth";
    manifest["scenario"] = to_json(cfg.synth);
    manifest["road_types"] = synth::road_type_names();
    manifest["files"] = files;
    manifest["class_frame_counts"] = counts;
    write_json_file((fs::path(out_dir) / "synth_manifest.json").string(), manifest);
    write_resolved_config(out_dir, cfg);
    log::info("synth: wrote " + std::to_string(recordings.size()) + " recordings to " + out_dir);
    return result;
}

// ---------------------------------------------------------------------------
// prepare

// Recordings of every *.csv in `data_dir`, in file-name order, sharing one
// road-type codec.
inline std::vector<Recording> ingest_directory(const std::string& data_dir, CategoryCodec& roads,
                                               std::vector<std::string>* sources = nullptr) {
    if (!fs::is_directory(data_dir)) throw DataError("data directory '" + data_dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(data_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no CSV files in '" + data_dir + "'");
    std::vector<Recording> out;
    for (const auto& f : files) {
        out.push_back(ingest_csv(f.string(), CsvSchema{}, roads));
        if (sources) sources->push_back(f.filename().string());
    }
    return out;
}

inline WindowedDataset cmd_prepare(const PipelineConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    CategoryCodec roads;
    std::vector<std::string> sources;
    const auto recordings = ingest_directory(data_dir, roads, &sources);
    WindowedDataset split = timeseries_train_test_split(recordings, cfg.split);
    split.road_types = roads.names();
    json before = {{"train", class_counts_json(split.train, split.codec)},
                   {"test", class_counts_json(split.test, split.codec)}};
    WindowedDataset ds = remove_maneuvers(split, cfg.rebalance.drop, cfg.rebalance.undersample, cfg.rebalance.seed);
    json after = {{"train", class_counts_json(ds.train, ds.codec)}, {"test", class_counts_json(ds.test, ds.codec)}};
    json extra;
    extra["sources"] = sources;
    extra["seed"] = cfg.split.seed;
    extra["rebalance"] = to_json(cfg.rebalance);
    extra["class_counts_before"] = before;
    extra["class_counts_after"] = after;
    save_dataset(out_dir, ds, extra);
    write_resolved_config(out_dir, cfg);
    log::info("prepare: " + std::to_string(ds.train.size()) + " train / " + std::to_string(ds.test.size()) +
              " test windows, " + std::to_string(ds.codec.size()) + " classes");
    return ds;
}

// ---------------------------------------------------------------------------
// train

inline ModelMeta meta_for(const WindowedDataset& ds) {
    return {ds.codec.labels(), ds.road_types, ds.scaler, ds.config.window_length, ds.config.step_size};
}

struct TrainResult {
    ManeuverModel model;
    TrainingHistory history;
};

// Fits on the train split with the test split as per-epoch validation set.
inline TrainResult cmd_train(const PipelineConfig& cfg, const std::string& dataset_dir, const std::string& out_dir) {
    const WindowedDataset ds = load_dataset(dataset_dir);
    if (ds.train.empty() || ds.test.empty()) throw DataError("dataset needs nonempty train and test splits");
    ModelConfig mc = cfg.model;
    mc.n_features = kFeatureCount;
    mc.n_classes = ds.codec.size();
    TrainResult result{make_model(mc), {}};
    result.history = fit_model(result.model, ds.train, ds.test, cfg.train, [](const EpochRecord& r) {
        log::debug("epoch " + std::to_string(r.epoch) + " train_loss=" + text::format_fixed(r.train_loss, 4) +
                   " val_loss=" + text::format_fixed(r.val_loss, 4) +
                   " val_acc=" + text::format_fixed(r.val_accuracy, 4));
    });
    fs::create_directories(out_dir);
    save_model((fs::path(out_dir) / kModelFileName).string(), result.model, meta_for(ds));
    write_history_csv((fs::path(out_dir) / kHistoryFileName).string(), result.history);
    render_training_curves(result.history, (fs::path(out_dir) / kCurvesFileName).string());
    PipelineConfig resolved = cfg;
    resolved.model = mc;
    write_resolved_config(out_dir, resolved);
    log::info("train: final val_accuracy " + text::format_fixed(result.history.back().val_accuracy, 4));
    return result;
}

// ---------------------------------------------------------------------------
// evaluate

enum class SplitChoice { test, train };

inline void check_compatible(const SavedModel& sm, const WindowedDataset& ds) {
    if (sm.model.config.n_classes != ds.codec.size()) {
        throw DimensionError("model has " + std::to_string(sm.model.config.n_classes) + " classes, dataset has " +
                             std::to_string(ds.codec.size()));
    }
    if (sm.meta.labels != ds.codec.labels()) throw DimensionError("model and dataset label sets differ");
    if (sm.meta.window_length != ds.config.window_length) {
        throw DimensionError("model window length differs from dataset window length");
    }
}

inline EvalReport cmd_evaluate(const std::string& model_path, const std::string& dataset_dir,
                               const std::string& out_dir, SplitChoice split = SplitChoice::test) {
    const SavedModel sm = load_model(model_path);
    const WindowedDataset ds = load_dataset(dataset_dir);
    check_compatible(sm, ds);
    const auto& samples = split == SplitChoice::test ? ds.test : ds.train;
    const auto result = evaluate(sm.model, samples);
    std::vector<int> actual;
    for (const auto& s : samples) actual.push_back(s.label_code);
    // Labels come back through the codec's inverse transform.
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < ds.codec.size(); ++k) labels.push_back(ds.codec.decode(static_cast<int>(k)));
    EvalReport report = make_report(confusion_matrix(actual, result.predictions, ds.codec.size(), labels));

    fs::create_directories(out_dir);
    auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
    {
        std::ostringstream s;
        write_confusion_csv(s, report.confusion);
        write_text_file(path("confusion.csv"), s.str());
    }
    {
        std::ostringstream s;
        write_normalized_csv(s, report.recall, HeatmapKind::recall, labels);
        write_text_file(path("recall.csv"), s.str());
    }
    {
        std::ostringstream s;
        write_normalized_csv(s, report.precision, HeatmapKind::precision, labels);
        write_text_file(path("precision.csv"), s.str());
    }
    {
        std::ostringstream s;
        write_summary_csv(s, report);
        write_text_file(path("summary.csv"), s.str());
    }
    render_heatmap(counts_as_matrix(report.confusion), labels, HeatmapKind::confusion, path("confusion.svg"));
    render_heatmap(report.recall.values, labels, HeatmapKind::recall, path("recall.svg"), report.recall.undefined);
    render_heatmap(report.precision.values, labels, HeatmapKind::precision, path("precision.svg"),
                   report.precision.undefined);
    log::info("evaluate: accuracy " + text::format_fixed(result.accuracy, 4) + ", macro recall " +
              text::format_fixed(report.macro_recall(), 4));
    return report;
}

// ---------------------------------------------------------------------------
// predict

struct StreamPrediction {
    std::int64_t window_start_ms = 0;
    std::string label;
    int code = 0;
};

// Scales the stream with the stored scaler and cuts continuous windows with
// the stored window length and step.
inline Tensor3 stream_windows(const Recording& r, const ModelMeta& meta, std::vector<std::size_t>* starts = nullptr) {
    const Matrix scaled = apply_scaler(feature_matrix(r), meta.scaler);
    const auto s = window_starts(scaled.rows(), meta.window_length, meta.step_size);
    Tensor3 out(s.size(), meta.window_length, kFeatureCount);
    for (std::size_t w = 0; w < s.size(); ++w) {
        auto dst = out.item(w);
        for (std::size_t t = 0; t < meta.window_length; ++t) {
            auto row = scaled.row(s[w] + t);
            std::copy(row.begin(), row.end(), dst.begin() + static_cast<std::ptrdiff_t>(t * kFeatureCount));
        }
    }
    if (starts) *starts = s;
    return out;
}

inline std::vector<StreamPrediction> predict_stream(const SavedModel& sm, const Recording& r) {
    std::vector<std::size_t> starts;
    const Tensor3 windows = stream_windows(r, sm.meta, &starts);
    if (starts.empty()) {
        log::warn("predict: input has " + std::to_string(r.size()) + " frames, shorter than one window of " +
                  std::to_string(sm.meta.window_length));
        return {};
    }
    const auto codes = predict(sm.model, windows);
    std::vector<StreamPrediction> out;
    for (std::size_t w = 0; w < codes.size(); ++w) {
        out.push_back({r.frames[starts[w]].timestamp_ms, sm.meta.labels.at(static_cast<std::size_t>(codes[w])),
                       codes[w]});
    }
    return out;
}

inline Recording read_stream(std::istream& in, const ModelMeta& meta) {
    CategoryCodec roads(meta.road_types);
    IngestOptions opts;
    opts.labels_required = false;
    opts.default_driver_id = "stream";
    Recording r = read_csv(in, CsvSchema{}, roads, opts);
    if (roads.names().size() != meta.road_types.size()) {
        throw DataError("stream contains road type '" + roads.names().back() + "' unknown to the model");
    }
    return r;
}

inline void write_predictions_csv(std::ostream& out, const std::vector<StreamPrediction>& preds) {
    out << "window_start_ms,predicted_label\n";
    for (const auto& p : preds) out << p.window_start_ms << ',' << text::csv_field(p.label) << '\n';
}

inline std::vector<StreamPrediction> cmd_predict(const std::string& model_path, std::istream& in, std::ostream& out) {
    const SavedModel sm = load_model(model_path);
    const Recording r = read_stream(in, sm.meta);
    auto preds = predict_stream(sm, r);
    write_predictions_csv(out, preds);
    return preds;
}

}  // namespace maneuver::pipeline

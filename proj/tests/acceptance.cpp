// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Runs the full default-size pipeline twice, so expect a
// couple of minutes of wall clock.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "maneuver/pipeline.hpp"
#include "oracles.hpp"

using namespace maneuver;
namespace fs = std::filesystem;
namespace mp = maneuver::pipeline;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) { return text::format_fixed(v, digits); }

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Recording random_recording(std::size_t n, std::size_t n_labels, Rng& rng, const std::string& driver) {
    Recording r;
    r.driver_id = driver;
    std::size_t label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.below(8) == 0) label = rng.below(n_labels);
        SensorFrame f;
        f.timestamp_ms = static_cast<std::int64_t>(i) * 500;
        f.acc_x = rng.normal();
        f.acc_y = rng.normal(0.0, 3.0);
        f.acc_z = rng.uniform(-1.0, 1.0);
        f.gyro_x = rng.normal();
        f.gyro_y = rng.normal();
        f.gyro_z = rng.normal();
        f.gps_speed = std::abs(rng.normal(10.0, 5.0));
        f.road_type = static_cast<int>(rng.below(3));
        r.frames.push_back(f);
        r.labels.push_back("m" + std::to_string(label));
    }
    return r;
}

// Frame indices per recording that belong to training partitions.
std::vector<std::vector<std::size_t>> training_frames(const std::vector<Recording>& recs, const SplitConfig& cfg) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t ri = 0; ri < recs.size(); ++ri) {
        const auto parts = partition_recording(recs[ri].size(), cfg.n_partitions);
        const auto test = sample_test_partitions(cfg.n_partitions, cfg.test_fraction, recording_split_seed(cfg.seed, ri));
        std::vector<std::size_t> frames;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            if (std::find(test.begin(), test.end(), p) != test.end()) continue;
            for (std::size_t i = parts[p].begin; i < parts[p].end; ++i) frames.push_back(i);
        }
        out.push_back(std::move(frames));
    }
    return out;
}

// ---------------------------------------------------------------------------

Outcome leakage_freedom() {
    const auto t0 = Clock::now();
    Rng rng(20240501);
    std::size_t configs = 0, test_windows = 0;
    for (int trial = 0; trial < 500; ++trial) {
        SplitConfig cfg;
        cfg.n_partitions = 2 + rng.below(39);
        const std::size_t n_test = 1 + rng.below(cfg.n_partitions - 1);
        cfg.test_fraction = static_cast<double>(n_test) / static_cast<double>(cfg.n_partitions);
        cfg.window_length = 1 + rng.below(30);
        cfg.step_size = 1 + rng.below(30);
        cfg.seed = rng.next();
        std::vector<Recording> recs;
        const std::size_t n_recs = 1 + rng.below(3);
        for (std::size_t d = 0; d < n_recs; ++d) {
            const std::size_t len = cfg.n_partitions + rng.below(2000);
            recs.push_back(random_recording(len, 4, rng, "driver" + std::to_string(d)));
        }
        const auto ds = timeseries_train_test_split(recs, cfg);
        std::set<std::pair<std::string, std::size_t>> train;
        for (const auto& s : ds.train)
            for (std::size_t k = 0; k < cfg.window_length; ++k) train.emplace(s.source.driver_id, s.source.start_frame + k);
        for (const auto& s : ds.test) {
            for (std::size_t k = 0; k < cfg.window_length; ++k) {
                if (train.contains({s.source.driver_id, s.source.start_frame + k})) {
                    return {false, "shared frame in trial " + std::to_string(trial)};
                }
            }
        }
        test_windows += ds.test.size();
        ++configs;
    }
    const double secs = seconds_since(t0);
    return {secs < 10.0, std::to_string(configs) + " configs, " + std::to_string(test_windows) +
                             " test windows, no shared frames, " + fmt(secs, 2) + " s (limit 10 s)"};
}

Outcome window_count_oracle() {
    const auto t0 = Clock::now();
    std::size_t cases = 0;
    for (std::size_t n = 0; n <= 200; ++n) {
        Matrix x(n, 1);
        for (std::size_t i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i);
        const std::vector<int> labels(n, 0);
        for (std::size_t w = 1; w <= 30; ++w) {
            for (std::size_t s = 1; s <= 30; ++s) {
                const auto expected = oracle::brute_force_starts(n, w, s);
                const auto windows = slide_windows(x, labels, w, s);
                if (windows.size() != expected.size()) {
                    return {false, "n=" + std::to_string(n) + " w=" + std::to_string(w) + " s=" + std::to_string(s)};
                }
                for (std::size_t i = 0; i < windows.size(); ++i) {
                    if (windows[i].features(0, 0) != static_cast<double>(expected[i])) {
                        return {false, "start mismatch at n=" + std::to_string(n)};
                    }
                }
                ++cases;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {secs < 5.0, std::to_string(cases) + " (n, w, s) cases exact, " + fmt(secs, 2) + " s (limit 5 s)"};
}

Outcome scaler_correctness() {
    double worst_median = 0.0;
    std::size_t mutations = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        std::vector<Recording> recs;
        for (std::size_t d = 0; d < 3; ++d) recs.push_back(random_recording(600 + rng.below(900), 5, rng, "d" + std::to_string(d)));
        SplitConfig cfg;
        cfg.seed = seed;
        const auto ds = timeseries_train_test_split(recs, cfg);

        const auto train_idx = training_frames(recs, cfg);
        std::vector<double> rows;
        std::size_t n_rows = 0;
        for (std::size_t ri = 0; ri < recs.size(); ++ri) {
            const Matrix f = feature_matrix(recs[ri]);
            for (auto i : train_idx[ri]) {
                rows.insert(rows.end(), f.row(i).begin(), f.row(i).end());
                ++n_rows;
            }
        }
        const Matrix scaled = apply_scaler(Matrix(n_rows, kFeatureCount, rows), ds.scaler);
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            std::vector<double> col(n_rows);
            for (std::size_t r = 0; r < n_rows; ++r) col[r] = scaled(r, c);
            std::sort(col.begin(), col.end());
            const double median = n_rows % 2 ? col[n_rows / 2] : 0.5 * (col[n_rows / 2 - 1] + col[n_rows / 2]);
            worst_median = std::max(worst_median, std::abs(median));
        }

        // Mutate every test frame of one recording at a time.
        for (std::size_t ri = 0; ri < recs.size(); ++ri) {
            auto mutated = recs;
            const std::set<std::size_t> keep(train_idx[ri].begin(), train_idx[ri].end());
            for (std::size_t i = 0; i < mutated[ri].size(); ++i) {
                if (keep.contains(i)) continue;
                auto& f = mutated[ri].frames[i];
                f.acc_x = rng.normal(0.0, 1e4);
                f.gyro_z = -f.gyro_z * 1e3;
                f.gps_speed = 1e5 * rng.uniform();
                f.road_type = 2 - f.road_type;
            }
            const auto other = timeseries_train_test_split(mutated, cfg);
            if (!(other.scaler == ds.scaler)) return {false, "scaler changed after test-frame mutation, seed " + std::to_string(seed)};
            ++mutations;
        }
    }
    return {worst_median <= 1e-9, "max |median| of scaled training columns " + sci(worst_median) +
                                      " (limit 1e-9), " + std::to_string(mutations) +
                                      " test-frame mutations left scaler bit-identical"};
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    // Relative error |fd - g| / max(|fd|, |g|, kFloor). A central difference
    // with h = 1e-5 carries roundoff of about eps * |loss| / h ~ 2e-11, so the
    // floor keeps entries whose true gradient is far below that resolution
    // from being scored on noise. The unfloored figure is reported alongside.
    constexpr double kFloor = 1e-6;
    double worst_central = 0.0, worst_unfloored = 0.0, worst_abs_tiny = 0.0;
    std::size_t models = 0, entries = 0, tiny = 0;
    for (std::uint64_t seed = 1; seed <= 24; ++seed) {
        Rng rng(seed * 7919);
        ModelConfig c;
        c.n_lstm_layers = 1 + rng.below(3);
        c.hidden_size = 2 + rng.below(3);
        c.fc1_size = 2 + rng.below(4);
        c.fc2_size = 2 + rng.below(4);
        c.n_features = 8;
        c.n_classes = 2 + rng.below(7);
        c.lstm_dropout = rng.below(2) ? 0.0 : 0.5;
        c.fc_dropout = rng.below(2) ? 0.0 : 0.3;
        c.init_seed = seed;
        ManeuverModel m = make_model(c);
        for (auto t : m.params.tensors())
            for (double& v : t) v += rng.normal(0.0, 0.2);
        const std::size_t batch = 1 + rng.below(4), steps = 2 + rng.below(5);
        Tensor3 x(batch, steps, 8);
        for (double& v : x.values()) v = rng.normal();
        std::vector<int> targets(batch);
        for (int& t : targets) t = static_cast<int>(rng.below(c.n_classes));
        const std::uint64_t dropout_seed = rng.next();

        const auto analytic = backward(m, x, targets, dropout_seed);
        auto params = m.params.tensors();
        const auto grads = analytic.grads.tensors();
        const double h = 1e-5;
        for (std::size_t k = 0; k < params.size(); ++k) {
            for (std::size_t i = 0; i < params[k].size(); ++i) {
                const double orig = params[k][i];
                params[k][i] = orig + h;
                const double up = softmax_cross_entropy(forward(m, x, Mode::train, dropout_seed), targets).loss;
                params[k][i] = orig - h;
                const double down = softmax_cross_entropy(forward(m, x, Mode::train, dropout_seed), targets).loss;
                params[k][i] = orig;
                const double fd = (up - down) / (2 * h);
                const double g = grads[k][i];
                const double diff = std::abs(fd - g);
                worst_central = std::max(worst_central, diff / std::max({std::abs(fd), std::abs(g), kFloor}));
                worst_unfloored = std::max(worst_unfloored, diff / std::max({std::abs(fd), std::abs(g), 1e-300}));
                if (std::max(std::abs(fd), std::abs(g)) < kFloor) {
                    ++tiny;
                    worst_abs_tiny = std::max(worst_abs_tiny, diff);
                }
                ++entries;
            }
        }
        ++models;
    }
    const double secs = seconds_since(t0);
    return {worst_central <= 1e-4 && secs < 30.0,
            std::to_string(models) + " random tiny models, " + std::to_string(entries) +
                " parameters, max relative error (central, h=1e-5, floor 1e-6) " + sci(worst_central) +
                " (limit 1e-4); unfloored " + sci(worst_unfloored) + " comes from " + std::to_string(tiny) +
                " entries with |g| < 1e-6 whose max |fd - g| is " + sci(worst_abs_tiny) + "; " + fmt(secs, 2) +
                " s (limit 30 s)"};
}

Outcome loss_sanity() {
    PipelineConfig cfg;
    const auto recs = synth::generate(cfg.synth);
    const auto ds = timeseries_train_test_split(recs, cfg.split);
    ModelConfig mc = cfg.model;
    mc.n_classes = ds.codec.size();
    const auto model = make_model(mc);
    const double loss = evaluate(model, ds.test).mean_loss;
    const double target = std::log(8.0);
    return {ds.codec.size() == 8 && std::abs(loss - target) <= 0.2,
            "K=" + std::to_string(ds.codec.size()) + ", fresh-model validation cross-entropy " + fmt(loss) +
                " vs ln 8 = " + fmt(target) + " (tolerance 0.2)"};
}

struct RunArtifacts {
    fs::path root;
    EvalReport report;
    double seconds = 0.0;
};

RunArtifacts full_run(const fs::path& root) {
    fs::remove_all(root);
    const auto t0 = Clock::now();
    const PipelineConfig cfg;  // defaults: 3 drivers x 4000 frames, w=14, s=6, P=20
    mp::cmd_synth(cfg, (root / "data").string());
    mp::cmd_prepare(cfg, (root / "data").string(), (root / "dataset").string());
    mp::cmd_train(cfg, (root / "dataset").string(), (root / "model").string());
    RunArtifacts out{root, mp::cmd_evaluate((root / "model" / mp::kModelFileName).string(),
                                            (root / "dataset").string(), (root / "eval").string()),
                     0.0};
    out.seconds = seconds_since(t0);
    return out;
}

Outcome end_to_end(const RunArtifacts& run) {
    double lowest = 1.0;
    std::string lowest_label;
    for (const auto& c : run.report.per_class) {
        if (!c.recall_defined) return {false, "class '" + c.label + "' has no test support"};
        if (c.recall < lowest) {
            lowest = c.recall;
            lowest_label = c.label;
        }
    }
    const double macro = run.report.macro_recall();
    const bool pass = macro >= 0.90 && lowest >= 0.75 && run.seconds <= 300.0 && run.report.per_class.size() == 8;
    return {pass, "macro recall " + fmt(macro) + " (limit 0.90), lowest per-class recall " + fmt(lowest) + " '" +
                      lowest_label + "' (limit 0.75), pipeline " + fmt(run.seconds, 1) + " s (limit 300 s)"};
}

Outcome metric_identities() {
    Rng rng(99);
    double worst_sum = 0.0, worst_diag = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.below(9);
        const std::size_t n = 1 + rng.below(400);
        std::vector<int> actual(n), predicted(n);
        for (std::size_t t = 0; t < n; ++t) {
            actual[t] = static_cast<int>(rng.below(k));
            predicted[t] = rng.below(2) ? actual[t] : static_cast<int>(rng.below(k));
        }
        const auto cm = confusion_matrix(actual, predicted, k);
        const auto rec = recall_matrix(cm);
        const auto prec = precision_matrix(cm);
        for (std::size_t c = 0; c < k; ++c) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                rs += rec.values(c, j);
                cs += prec.values(j, c);
            }
            if (!rec.undefined[c]) worst_sum = std::max(worst_sum, std::abs(rs - 1.0));
            if (!prec.undefined[c]) worst_sum = std::max(worst_sum, std::abs(cs - 1.0));

            // Direct recount from the raw vectors.
            std::size_t tp = 0, support = 0, predicted_c = 0;
            for (std::size_t t = 0; t < n; ++t) {
                const bool a = actual[t] == static_cast<int>(c);
                const bool p = predicted[t] == static_cast<int>(c);
                tp += a && p;
                support += a;
                predicted_c += p;
            }
            if (support > 0) {
                worst_diag = std::max(worst_diag, std::abs(rec.values(c, c) - static_cast<double>(tp) / static_cast<double>(support)));
            } else if (!rec.undefined[c]) {
                return {false, "zero-support class not flagged"};
            }
            if (predicted_c > 0) {
                worst_diag = std::max(worst_diag, std::abs(prec.values(c, c) - static_cast<double>(tp) / static_cast<double>(predicted_c)));
            } else if (!prec.undefined[c]) {
                return {false, "never-predicted class not flagged"};
            }
        }
    }
    return {worst_sum <= 1e-9 && worst_diag == 0.0,
            "1000 random prediction vectors, max |row/column sum - 1| " + sci(worst_sum) +
                " (limit 1e-9), max diagonal deviation from recount " + sci(worst_diag)};
}

Outcome determinism(const RunArtifacts& a, const RunArtifacts& b) {
    const std::vector<fs::path> files = {
        "dataset/windows.bin", "dataset/manifest.json", "model/model.mrm",    "model/history.csv",
        "model/training_curves.svg", "eval/confusion.svg", "eval/recall.svg", "eval/precision.svg",
    };
    std::size_t bytes = 0;
    for (const auto& f : files) {
        const auto x = slurp(a.root / f);
        if (x.empty()) return {false, f.string() + " missing"};
        if (x != slurp(b.root / f)) return {false, f.string() + " differs between runs"};
        bytes += x.size();
    }
    std::size_t csvs = 0;
    for (const auto& e : fs::directory_iterator(a.root / "data")) {
        if (slurp(e.path()) != slurp(b.root / "data" / e.path().filename())) {
            return {false, e.path().filename().string() + " differs between runs"};
        }
        ++csvs;
    }
    return {true, std::to_string(files.size()) + " archives/models/histories/SVGs (" + std::to_string(bytes) +
                      " bytes) and " + std::to_string(csvs) + " generated data files byte-identical"};
}

Outcome streaming_equivalence(const RunArtifacts& run) {
    const auto model_path = (run.root / "model" / mp::kModelFileName).string();
    const auto sm = load_model(model_path);
    std::size_t windows = 0;
    for (const auto& e : fs::directory_iterator(run.root / "data")) {
        if (e.path().extension() != ".csv") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream out;
        const auto streamed = mp::cmd_predict(model_path, in, out);

        CategoryCodec roads(sm.meta.road_types);
        const auto rec = ingest_csv(e.path().string(), CsvSchema{}, roads);
        const Matrix scaled = apply_scaler(feature_matrix(rec), sm.meta.scaler);
        const auto starts = oracle::brute_force_starts(rec.size(), sm.meta.window_length, sm.meta.step_size);
        Tensor3 batch(starts.size(), sm.meta.window_length, kFeatureCount);
        for (std::size_t w = 0; w < starts.size(); ++w)
            for (std::size_t t = 0; t < sm.meta.window_length; ++t)
                for (std::size_t f = 0; f < kFeatureCount; ++f) batch(w, t, f) = scaled(starts[w] + t, f);
        const auto codes = predict(sm.model, batch);

        std::ostringstream expected;
        expected << "window_start_ms,predicted_label\n";
        for (std::size_t w = 0; w < codes.size(); ++w) {
            expected << rec.frames[starts[w]].timestamp_ms << ','
                     << text::csv_field(sm.meta.labels[static_cast<std::size_t>(codes[w])]) << '\n';
        }
        if (streamed.size() != codes.size() || out.str() != expected.str()) {
            return {false, e.path().filename().string() + ": streamed output differs from batch prediction"};
        }
        windows += codes.size();
    }
    return {windows > 0, std::to_string(windows) + " windows, streamed CSV output identical to batch prediction"};
}

}  // namespace

int main() {
    if (!std::getenv("MANEUVER_REC_LOG")) log::threshold() = log::Level::warn;
    report(1, "leakage freedom", leakage_freedom);
    report(2, "window count oracle", window_count_oracle);
    report(3, "scaler correctness", scaler_correctness);
    report(4, "gradient check", gradient_check);
    report(5, "loss sanity", loss_sanity);

    const fs::path base = fs::temp_directory_path() / "maneuver_acceptance";
    RunArtifacts first, second;
    bool runs_ok = true;
    try {
        first = full_run(base / "run_a");
        second = full_run(base / "run_b");
    } catch (const std::exception& e) {
        runs_ok = false;
        std::printf("full pipeline run failed: %s\n", e.what());
    }
    auto need_runs = [&](auto fn) {
        return [&, fn]() -> Outcome { return runs_ok ? fn() : Outcome{false, "pipeline run failed"}; };
    };
    report(6, "end-to-end synthetic run", need_runs([&] { return end_to_end(first); }));
    report(7, "metric identities", metric_identities);
    report(8, "determinism", need_runs([&] { return determinism(first, second); }));
    report(9, "streaming/batch equivalence", need_runs([&] { return streaming_equivalence(first); }));

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}

#pragma once

// Leakage-free partitioned train/test splitting, robust scaling, per-partition
// sliding windows, class rebalancing and label encoding.
//
// A recording is cut into contiguous partitions first. Whole partitions are
// assigned to train or test and windows are cut inside a single partition,
// so no frame ever appears in both a train window and a test window even
// when windows overlap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maneuver/data_model.hpp"
#include "maneuver/error.hpp"
#include "maneuver/matrix.hpp"
#include "maneuver/random.hpp"

namespace maneuver {

struct SplitConfig {
    std::size_t n_partitions = 20;
    double test_fraction = 0.2;
    std::size_t window_length = 14;
    std::size_t step_size = 6;
    bool scale = true;
    std::uint64_t seed = 0;

    std::size_t test_partition_count() const {
        return static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_partitions)));
    }

    void validate() const {
        if (window_length < 1) throw ConfigError("window_length must be >= 1");
        if (step_size < 1) throw ConfigError("step_size must be >= 1");
        if (n_partitions < 2) throw ConfigError("n_partitions must be >= 2");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
            throw ConfigError("test_fraction must lie in (0, 1)");
        }
        const auto n_test = test_partition_count();
        if (n_test < 1 || n_test > n_partitions - 1) {
            throw ConfigError("round(test_fraction * n_partitions) must lie in [1, n_partitions - 1]");
        }
    }
};

// Half-open frame range [begin, end).
struct FrameRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

// Near-equal contiguous blocks; the first (n_frames mod n_partitions)
// partitions carry one extra frame.
inline std::vector<FrameRange> partition_recording(std::size_t n_frames, std::size_t n_partitions) {
    if (n_partitions == 0 || n_partitions > n_frames) {
        throw ConfigError("cannot split " + std::to_string(n_frames) + " frames into " +
                          std::to_string(n_partitions) + " partitions");
    }
    const std::size_t base = n_frames / n_partitions;
    const std::size_t extra = n_frames % n_partitions;
    std::vector<FrameRange> ranges;
    ranges.reserve(n_partitions);
    std::size_t begin = 0;
    for (std::size_t p = 0; p < n_partitions; ++p) {
        const std::size_t len = base + (p < extra ? 1 : 0);
        ranges.push_back({begin, begin + len});
        begin += len;
    }
    return ranges;
}

inline std::vector<FrameRange> partition_recording(const Recording& r, std::size_t n_partitions) {
    return partition_recording(r.size(), n_partitions);
}

// Sorted indices of the partitions held out for testing.
inline std::vector<std::size_t> sample_test_partitions(std::size_t n_partitions, double test_fraction,
                                                       std::uint64_t seed) {
    SplitConfig cfg;
    cfg.n_partitions = n_partitions;
    cfg.test_fraction = test_fraction;
    cfg.validate();
    Rng rng(seed);
    return rng.sample(n_partitions, cfg.test_partition_count());
}

// Bijection between maneuver label strings and contiguous codes; labels are
// kept in lexicographic order.
class LabelCodec {
public:
    LabelCodec() = default;

    template <typename Range>
    static LabelCodec fit(const Range& labels) {
        std::set<std::string> unique(std::begin(labels), std::end(labels));
        LabelCodec c;
        c.labels_.assign(unique.begin(), unique.end());
        return c;
    }

    // Labels must already be distinct; their order is taken as given.
    static LabelCodec from_labels(std::vector<std::string> labels) {
        LabelCodec c;
        c.labels_ = std::move(labels);
        std::set<std::string> seen;
        for (const auto& l : c.labels_) {
            if (!seen.insert(l).second) throw DataError("duplicate label '" + l + "' in codec");
        }
        return c;
    }

    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

    bool contains(const std::string& label) const {
        return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
    }

    int encode(const std::string& label) const {
        auto it = std::find(labels_.begin(), labels_.end(), label);
        if (it == labels_.end()) {
            throw DataError("unknown label '" + label + "'");
        }
        return static_cast<int>(it - labels_.begin());
    }

    const std::string& decode(int code) const {
        if (code < 0 || static_cast<std::size_t>(code) >= labels_.size()) {
            throw DataError("label code " + std::to_string(code) + " out of range [0, " +
                            std::to_string(labels_.size()) + ")");
        }
        return labels_[static_cast<std::size_t>(code)];
    }

    std::vector<int> encode(std::span<const std::string> values) const {
        std::vector<int> out;
        out.reserve(values.size());
        for (const auto& v : values) out.push_back(encode(v));
        return out;
    }

    std::vector<std::string> decode(std::span<const int> codes) const {
        std::vector<std::string> out;
        out.reserve(codes.size());
        for (int c : codes) out.push_back(decode(c));
        return out;
    }

    friend bool operator==(const LabelCodec&, const LabelCodec&) = default;

private:
    std::vector<std::string> labels_;
};

struct RobustScaler {
    std::vector<double> median;
    std::vector<double> iqr;

    std::size_t size() const { return median.size(); }

    static RobustScaler identity(std::size_t n_features) {
        return {std::vector<double>(n_features, 0.0), std::vector<double>(n_features, 1.0)};
    }

    friend bool operator==(const RobustScaler&, const RobustScaler&) = default;
};

namespace detail {

// Linear-interpolation quantile of sorted values (position q * (n - 1)).
inline double sorted_quantile(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline RobustScaler fit_robust_scaler(const Matrix& training_frames) {
    if (training_frames.rows() == 0) {
        throw DataError("cannot fit scaler on empty input");
    }
    RobustScaler s;
    std::vector<double> col(training_frames.rows());
    for (std::size_t j = 0; j < training_frames.cols(); ++j) {
        for (std::size_t i = 0; i < training_frames.rows(); ++i) col[i] = training_frames(i, j);
        std::sort(col.begin(), col.end());
        const double med = detail::sorted_quantile(col, 0.5);
        double iqr = detail::sorted_quantile(col, 0.75) - detail::sorted_quantile(col, 0.25);
        if (iqr == 0.0) iqr = 1.0;
        s.median.push_back(med);
        s.iqr.push_back(iqr);
    }
    return s;
}

inline Matrix apply_scaler(const Matrix& frames, const RobustScaler& scaler) {
    if (frames.cols() != scaler.size()) {
        throw DimensionError("scaler has " + std::to_string(scaler.size()) + " features, input has " +
                             std::to_string(frames.cols()));
    }
    Matrix out(frames.rows(), frames.cols());
    for (std::size_t i = 0; i < frames.rows(); ++i) {
        for (std::size_t j = 0; j < frames.cols(); ++j) {
            out(i, j) = (frames(i, j) - scaler.median[j]) / scaler.iqr[j];
        }
    }
    return out;
}

// Start offsets 0, s, 2s, ... of every complete window.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t window_length, std::size_t step_size) {
    std::vector<std::size_t> starts;
    if (window_length == 0 || step_size == 0 || n < window_length) return starts;
    for (std::size_t s = 0; s + window_length <= n; s += step_size) starts.push_back(s);
    return starts;
}

inline std::size_t window_count(std::size_t n, std::size_t window_length, std::size_t step_size) {
    if (window_length == 0 || step_size == 0 || n < window_length) return 0;
    return (n - window_length) / step_size + 1;
}

struct Window {
    Matrix features;
    std::vector<int> labels;
};

inline std::vector<Window> slide_windows(const Matrix& partition_frames, std::span<const int> partition_labels,
                                         std::size_t window_length, std::size_t step_size) {
    if (partition_labels.size() != partition_frames.rows()) {
        throw DimensionError("label count differs from frame count");
    }
    std::vector<Window> out;
    for (std::size_t s : window_starts(partition_frames.rows(), window_length, step_size)) {
        out.push_back({partition_frames.slice_rows(s, window_length),
                       std::vector<int>(partition_labels.begin() + static_cast<std::ptrdiff_t>(s),
                                        partition_labels.begin() + static_cast<std::ptrdiff_t>(s + window_length))});
    }
    return out;
}

// Most frequent code; among tied codes the one whose last occurrence is
// latest in the window wins.
inline int window_label(std::span<const int> codes) {
    if (codes.empty()) {
        throw DataError("window_label of an empty window");
    }
    std::map<int, std::pair<std::size_t, std::size_t>> stats;  // code -> (count, last position)
    for (std::size_t i = 0; i < codes.size(); ++i) {
        auto& st = stats[codes[i]];
        ++st.first;
        st.second = i;
    }
    int best = codes.front();
    std::pair<std::size_t, std::size_t> best_stat{0, 0};
    for (const auto& [code, st] : stats) {
        if (st > best_stat) {
            best = code;
            best_stat = st;
        }
    }
    return best;
}

struct Provenance {
    std::string driver_id;
    std::size_t partition_index = 0;
    std::size_t start_frame = 0;

    friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

struct WindowSample {
    Matrix features;  // [window_length x n_features], scaled
    int label_code = 0;
    Provenance source;

    friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

struct WindowedDataset {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
    RobustScaler scaler;
    LabelCodec codec;
    SplitConfig config;
    std::vector<std::string> road_types;  // category inventory behind the road_type feature
};

inline std::vector<std::size_t> class_counts(std::span<const WindowSample> samples, std::size_t n_classes) {
    std::vector<std::size_t> counts(n_classes, 0);
    for (const auto& s : samples) {
        if (s.label_code < 0 || static_cast<std::size_t>(s.label_code) >= n_classes) {
            throw DataError("label code out of range");
        }
        ++counts[static_cast<std::size_t>(s.label_code)];
    }
    return counts;
}

// Seed of the per-recording substream used to draw its test partitions.
inline std::uint64_t recording_split_seed(std::uint64_t seed, std::size_t recording_index) {
    return derive_seed(seed, 0x5e1, recording_index);
}

// Partition -> sample test partitions -> fit one scaler on the pooled
// training partitions of all recordings -> scale -> window each partition
// -> pool windows in recording order.
inline WindowedDataset timeseries_train_test_split(std::span<const Recording> recordings, const SplitConfig& cfg) {
    cfg.validate();
    if (recordings.empty()) {
        throw DataError("no recordings given");
    }
    for (const auto& r : recordings) {
        validate(r);
        if (r.size() < cfg.n_partitions) {
            throw DataError("recording '" + r.driver_id + "' has " + std::to_string(r.size()) +
                            " frames, fewer than " + std::to_string(cfg.n_partitions) + " partitions");
        }
    }

    WindowedDataset ds;
    ds.config = cfg;
    {
        std::vector<std::string> all;
        for (const auto& r : recordings) all.insert(all.end(), r.labels.begin(), r.labels.end());
        ds.codec = LabelCodec::fit(all);
    }

    struct Plan {
        Matrix features;
        std::vector<int> codes;
        std::vector<FrameRange> ranges;
        std::vector<bool> is_test;
    };
    std::vector<Plan> plans;
    plans.reserve(recordings.size());
    std::size_t n_train_frames = 0;
    for (std::size_t ri = 0; ri < recordings.size(); ++ri) {
        const auto& r = recordings[ri];
        Plan p{feature_matrix(r), ds.codec.encode(r.labels), partition_recording(r, cfg.n_partitions),
               std::vector<bool>(cfg.n_partitions, false)};
        for (auto idx : sample_test_partitions(cfg.n_partitions, cfg.test_fraction, recording_split_seed(cfg.seed, ri))) {
            p.is_test[idx] = true;
        }
        for (std::size_t pi = 0; pi < p.ranges.size(); ++pi) {
            if (!p.is_test[pi]) n_train_frames += p.ranges[pi].size();
        }
        plans.push_back(std::move(p));
    }

    if (cfg.scale) {
        Matrix pooled(n_train_frames, kFeatureCount);
        std::size_t row = 0;
        for (const auto& p : plans) {
            for (std::size_t pi = 0; pi < p.ranges.size(); ++pi) {
                if (p.is_test[pi]) continue;
                for (std::size_t i = p.ranges[pi].begin; i < p.ranges[pi].end; ++i, ++row) {
                    std::copy(p.features.row(i).begin(), p.features.row(i).end(), pooled.row(row).begin());
                }
            }
        }
        ds.scaler = fit_robust_scaler(pooled);
    } else {
        ds.scaler = RobustScaler::identity(kFeatureCount);
    }

    for (std::size_t ri = 0; ri < recordings.size(); ++ri) {
        const auto& p = plans[ri];
        const Matrix scaled = apply_scaler(p.features, ds.scaler);
        for (std::size_t pi = 0; pi < p.ranges.size(); ++pi) {
            const auto& range = p.ranges[pi];
            const Matrix part = scaled.slice_rows(range.begin, range.size());
            const std::span<const int> part_codes(p.codes.data() + range.begin, range.size());
            auto& target = p.is_test[pi] ? ds.test : ds.train;
            const auto starts = window_starts(range.size(), cfg.window_length, cfg.step_size);
            auto windows = slide_windows(part, part_codes, cfg.window_length, cfg.step_size);
            for (std::size_t wi = 0; wi < windows.size(); ++wi) {
                target.push_back({std::move(windows[wi].features), window_label(windows[wi].labels),
                                  {recordings[ri].driver_id, pi, range.begin + starts[wi]}});
            }
        }
    }
    return ds;
}

// Removes every window of the dropped labels from both splits, undersamples
// the listed classes in the training split only, then refits the codec on
// the remaining labels (codec labels minus dropped ones) and remaps codes.
inline WindowedDataset remove_maneuvers(const WindowedDataset& ds, const std::set<std::string>& drop,
                                        const std::map<std::string, std::size_t>& undersample,
                                        std::uint64_t seed) {
    for (const auto& l : drop) {
        if (!ds.codec.contains(l)) throw DataError("unknown label '" + l + "' in drop set");
    }
    for (const auto& [l, n] : undersample) {
        if (!ds.codec.contains(l)) throw DataError("unknown label '" + l + "' in undersample map");
    }

    std::vector<std::string> kept_labels;
    for (const auto& l : ds.codec.labels()) {
        if (!drop.contains(l)) kept_labels.push_back(l);
    }
    const LabelCodec codec = LabelCodec::fit(kept_labels);
    std::vector<int> remap(ds.codec.size(), -1);
    for (std::size_t c = 0; c < ds.codec.size(); ++c) {
        const auto& l = ds.codec.decode(static_cast<int>(c));
        if (!drop.contains(l)) remap[c] = codec.encode(l);
    }

    auto filter = [&](const std::vector<WindowSample>& in) {
        std::vector<WindowSample> out;
        for (const auto& s : in) {
            const int code = remap.at(static_cast<std::size_t>(s.label_code));
            if (code < 0) continue;
            out.push_back(s);
            out.back().label_code = code;
        }
        return out;
    };

    WindowedDataset out;
    out.config = ds.config;
    out.scaler = ds.scaler;
    out.codec = codec;
    out.road_types = ds.road_types;
    out.test = filter(ds.test);
    std::vector<WindowSample> train = filter(ds.train);

    std::vector<bool> keep(train.size(), true);
    for (const auto& [label, max_count] : undersample) {
        if (drop.contains(label)) continue;
        const int code = codec.encode(label);
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (train[i].label_code == code) members.push_back(i);
        }
        if (members.size() <= max_count) continue;
        // One substream per label name.
        Rng label_rng(derive_seed(seed, fnv1a(label)));
        std::vector<bool> chosen(members.size(), false);
        for (auto k : label_rng.sample(members.size(), max_count)) chosen[k] = true;
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (!chosen[k]) keep[members[k]] = false;
        }
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (keep[i]) out.train.push_back(std::move(train[i]));
    }
    return out;
}

}  // namespace maneuver

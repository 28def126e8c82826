#pragma once

// Sensor-frame schema, labeled recordings and CSV ingestion.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "maneuver/error.hpp"
#include "maneuver/matrix.hpp"
#include "maneuver/text.hpp"

namespace maneuver {

inline constexpr std::size_t kFeatureCount = 8;

// Fixed feature column order used by scaling, windowing and the model.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z", "gps_speed", "road_type"};

inline constexpr std::int64_t kDefaultCapturePeriodMs = 500;

struct SensorFrame {
    std::int64_t timestamp_ms = 0;
    double acc_x = 0.0;  // m/s^2
    double acc_y = 0.0;
    double acc_z = 0.0;
    double gyro_x = 0.0;  // rad/s
    double gyro_y = 0.0;
    double gyro_z = 0.0;
    double gps_speed = 0.0;  // m/s
    int road_type = 0;

    friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

struct Recording {
    std::string driver_id;
    std::int64_t capture_period_ms = kDefaultCapturePeriodMs;
    std::vector<SensorFrame> frames;
    std::vector<std::string> labels;

    std::size_t size() const { return frames.size(); }

    friend bool operator==(const Recording&, const Recording&) = default;
};

// Maps road-type category strings to small integer codes in order of first
// appearance. One codec is shared by every file of a dataset.
class CategoryCodec {
public:
    CategoryCodec() = default;
    explicit CategoryCodec(std::vector<std::string> names) : names_(std::move(names)) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            index_.emplace(names_[i], static_cast<int>(i));
        }
    }

    int encode_or_add(const std::string& name) {
        if (auto it = index_.find(name); it != index_.end()) {
            return it->second;
        }
        const int code = static_cast<int>(names_.size());
        names_.push_back(name);
        index_.emplace(name, code);
        return code;
    }

    const std::string& decode(int code) const {
        if (code < 0 || static_cast<std::size_t>(code) >= names_.size()) {
            throw DataError("unknown road type code " + std::to_string(code));
        }
        return names_[static_cast<std::size_t>(code)];
    }

    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

// Column names of the CSV format; every entry may be renamed.
struct CsvSchema {
    std::string timestamp_ms = "timestamp_ms";
    std::string acc_x = "acc_x";
    std::string acc_y = "acc_y";
    std::string acc_z = "acc_z";
    std::string gyro_x = "gyro_x";
    std::string gyro_y = "gyro_y";
    std::string gyro_z = "gyro_z";
    std::string gps_speed = "gps_speed";
    std::string road_type = "road_type";
    std::string maneuver = "maneuver";
    std::string driver_id = "driver_id";
};

inline void validate(const Recording& r) {
    if (r.capture_period_ms <= 0) {
        throw DataError("capture period must be positive");
    }
    if (r.labels.size() != r.frames.size()) {
        throw DataError("recording '" + r.driver_id + "': label count differs from frame count");
    }
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        const auto& f = r.frames[i];
        if (i > 0 && f.timestamp_ms <= r.frames[i - 1].timestamp_ms) {
            throw DataError("recording '" + r.driver_id + "': timestamps not strictly increasing at frame " +
                            std::to_string(i));
        }
        for (double v : {f.acc_x, f.acc_y, f.acc_z, f.gyro_x, f.gyro_y, f.gyro_z, f.gps_speed}) {
            if (!std::isfinite(v)) {
                throw DataError("recording '" + r.driver_id + "': non-finite value at frame " + std::to_string(i));
            }
        }
        if (f.gps_speed < 0.0) {
            throw DataError("recording '" + r.driver_id + "': negative gps_speed at frame " + std::to_string(i));
        }
    }
}

namespace detail {

struct ColumnIndex {
    std::size_t timestamp, acc_x, acc_y, acc_z, gyro_x, gyro_y, gyro_z, gps_speed, road_type;
    std::optional<std::size_t> maneuver, driver_id;
};

inline ColumnIndex resolve_columns(const std::vector<std::string>& header, const CsvSchema& schema,
                                   bool labels_required) {
    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };
    auto need = [&](const std::string& name) {
        auto idx = find(name);
        if (!idx) throw DataError("schema error: missing column '" + name + "'");
        return *idx;
    };
    ColumnIndex c{need(schema.timestamp_ms), need(schema.acc_x),  need(schema.acc_y),
                  need(schema.acc_z),        need(schema.gyro_x), need(schema.gyro_y),
                  need(schema.gyro_z),       need(schema.gps_speed), need(schema.road_type),
                  find(schema.maneuver),     find(schema.driver_id)};
    if (labels_required) {
        c.maneuver = need(schema.maneuver);
        c.driver_id = need(schema.driver_id);
    }
    return c;
}

}  // namespace detail

struct IngestOptions {
    // When false the maneuver and driver_id columns may be absent (stream
    // prediction input); missing labels are stored as empty strings.
    bool labels_required = true;
    std::string default_driver_id;
};

// Parses a recording from CSV text. Row numbers in errors count data rows
// from 1 (the header is row 0).
inline Recording read_csv(std::istream& in, const CsvSchema& schema, CategoryCodec& road_types,
                          const IngestOptions& opts = {}) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("schema error: empty input, no header row");
    }
    const auto header = text::split_csv_line(line);
    const auto cols = detail::resolve_columns(header, schema, opts.labels_required);

    Recording rec;
    rec.driver_id = opts.default_driver_id;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        ++row;
        const auto fields = text::split_csv_line(line);
        auto cell = [&](std::size_t col) -> const std::string& {
            if (col >= fields.size()) {
                throw DataError("parse error at row " + std::to_string(row) + ", column '" + header[col] +
                                "': missing field");
            }
            return fields[col];
        };
        auto number = [&](std::size_t col) {
            auto v = text::parse_double(cell(col));
            if (!v || !std::isfinite(*v)) {
                throw DataError("parse error at row " + std::to_string(row) + ", column '" + header[col] +
                                "': invalid number '" + cell(col) + "'");
            }
            return *v;
        };

        SensorFrame f;
        auto ts = text::parse_int(cell(cols.timestamp));
        if (!ts) {
            throw DataError("parse error at row " + std::to_string(row) + ", column '" + header[cols.timestamp] +
                            "': invalid integer '" + cell(cols.timestamp) + "'");
        }
        f.timestamp_ms = *ts;
        f.acc_x = number(cols.acc_x);
        f.acc_y = number(cols.acc_y);
        f.acc_z = number(cols.acc_z);
        f.gyro_x = number(cols.gyro_x);
        f.gyro_y = number(cols.gyro_y);
        f.gyro_z = number(cols.gyro_z);
        f.gps_speed = number(cols.gps_speed);
        if (f.gps_speed < 0.0) {
            throw DataError("validity error at row " + std::to_string(row) + ": negative gps_speed");
        }
        f.road_type = road_types.encode_or_add(cell(cols.road_type));

        if (!rec.frames.empty() && f.timestamp_ms <= rec.frames.back().timestamp_ms) {
            throw DataError("ordering error at row " + std::to_string(row) + ": timestamp " +
                            std::to_string(f.timestamp_ms) + " does not increase");
        }
        if (cols.driver_id) {
            const auto& id = cell(*cols.driver_id);
            if (rec.frames.empty()) {
                rec.driver_id = id;
            } else if (id != rec.driver_id) {
                throw DataError("parse error at row " + std::to_string(row) + ": driver_id '" + id +
                                "' differs from '" + rec.driver_id + "' (one driver per file)");
            }
        }
        rec.labels.push_back(cols.maneuver ? cell(*cols.maneuver) : std::string{});
        rec.frames.push_back(f);
    }
    return rec;
}

inline Recording ingest_csv(const std::string& path, const CsvSchema& schema, CategoryCodec& road_types,
                            const IngestOptions& opts = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    try {
        return read_csv(in, schema, road_types, opts);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_csv(std::ostream& out, const Recording& r, const CategoryCodec& road_types,
                      const CsvSchema& schema = {}) {
    using text::format_double;
    out << schema.timestamp_ms << ',' << schema.acc_x << ',' << schema.acc_y << ',' << schema.acc_z << ','
        << schema.gyro_x << ',' << schema.gyro_y << ',' << schema.gyro_z << ',' << schema.gps_speed << ','
        << schema.road_type << ',' << schema.maneuver << ',' << schema.driver_id << '\n';
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        const auto& f = r.frames[i];
        out << f.timestamp_ms << ',' << format_double(f.acc_x) << ',' << format_double(f.acc_y) << ','
            << format_double(f.acc_z) << ',' << format_double(f.gyro_x) << ',' << format_double(f.gyro_y) << ','
            << format_double(f.gyro_z) << ',' << format_double(f.gps_speed) << ','
            << text::csv_field(road_types.decode(f.road_type)) << ',' << text::csv_field(r.labels[i]) << ','
            << text::csv_field(r.driver_id) << '\n';
    }
}

inline void write_csv(const std::string& path, const Recording& r, const CategoryCodec& road_types,
                      const CsvSchema& schema = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    write_csv(out, r, road_types, schema);
}

// [n_frames x 8] in kFeatureNames order.
inline Matrix feature_matrix(const Recording& r) {
    Matrix m(r.frames.size(), kFeatureCount);
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        const auto& f = r.frames[i];
        auto row = m.row(i);
        row[0] = f.acc_x;
        row[1] = f.acc_y;
        row[2] = f.acc_z;
        row[3] = f.gyro_x;
        row[4] = f.gyro_y;
        row[5] = f.gyro_z;
        row[6] = f.gps_speed;
        row[7] = static_cast<double>(f.road_type);
    }
    return m;
}

}  // namespace maneuver

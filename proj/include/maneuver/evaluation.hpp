#pragma once

// Confusion matrix, recall (row-normalized) and precision (column-normalized)
// heatmaps, per-class summaries and training-process curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maneuver/error.hpp"
#include "maneuver/matrix.hpp"
#include "maneuver/text.hpp"
#include "maneuver/training.hpp"

namespace maneuver {

// counts[i][j]: samples of actual class i predicted as class j.
struct ConfusionMatrix {
    std::vector<std::vector<std::uint64_t>> counts;
    std::vector<std::string> labels;

    std::size_t size() const { return counts.size(); }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& r : counts)
            for (auto c : r) n += c;
        return n;
    }
    std::uint64_t row_sum(std::size_t i) const {
        std::uint64_t n = 0;
        for (auto c : counts[i]) n += c;
        return n;
    }
    std::uint64_t col_sum(std::size_t j) const {
        std::uint64_t n = 0;
        for (const auto& r : counts) n += r[j];
        return n;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> actual, std::span<const int> predicted,
                                        std::size_t n_classes, std::vector<std::string> labels = {}) {
    if (actual.size() != predicted.size()) {
        throw DimensionError("actual and predicted sequences differ in length");
    }
    if (!labels.empty() && labels.size() != n_classes) {
        throw DimensionError("label count differs from class count");
    }
    ConfusionMatrix cm{std::vector<std::vector<std::uint64_t>>(n_classes, std::vector<std::uint64_t>(n_classes, 0)),
                       std::move(labels)};
    if (cm.labels.empty()) {
        for (std::size_t k = 0; k < n_classes; ++k) cm.labels.push_back(std::to_string(k));
    }
    for (std::size_t t = 0; t < actual.size(); ++t) {
        const int a = actual[t];
        const int p = predicted[t];
        if (a < 0 || p < 0 || static_cast<std::size_t>(a) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
            throw DataError("class code out of range at position " + std::to_string(t));
        }
        ++cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
    }
    return cm;
}

// Normalized K x K matrix; `undefined[i]` marks a zero-support row (recall)
// or a never-predicted column (precision), whose entries stay 0.
struct NormalizedMatrix {
    Matrix values;
    std::vector<bool> undefined;
};

inline NormalizedMatrix recall_matrix(const ConfusionMatrix& cm) {
    const std::size_t k = cm.size();
    NormalizedMatrix out{Matrix(k, k), std::vector<bool>(k, false)};
    for (std::size_t i = 0; i < k; ++i) {
        const auto sum = cm.row_sum(i);
        if (sum == 0) {
            out.undefined[i] = true;
            continue;
        }
        for (std::size_t j = 0; j < k; ++j) {
            out.values(i, j) = static_cast<double>(cm.counts[i][j]) / static_cast<double>(sum);
        }
    }
    return out;
}

inline NormalizedMatrix precision_matrix(const ConfusionMatrix& cm) {
    const std::size_t k = cm.size();
    NormalizedMatrix out{Matrix(k, k), std::vector<bool>(k, false)};
    for (std::size_t j = 0; j < k; ++j) {
        const auto sum = cm.col_sum(j);
        if (sum == 0) {
            out.undefined[j] = true;
            continue;
        }
        for (std::size_t i = 0; i < k; ++i) {
            out.values(i, j) = static_cast<double>(cm.counts[i][j]) / static_cast<double>(sum);
        }
    }
    return out;
}

struct ClassSummary {
    std::string label;
    double precision = 0.0;  // 0 when the class was never predicted
    double recall = 0.0;     // 0 when the class has no support
    std::uint64_t support = 0;
    bool precision_defined = false;
    bool recall_defined = false;
};

struct EvalReport {
    ConfusionMatrix confusion;
    NormalizedMatrix recall;
    NormalizedMatrix precision;
    std::vector<ClassSummary> per_class;

    // Mean recall over classes with support.
    double macro_recall() const {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : per_class) {
            if (c.recall_defined) {
                sum += c.recall;
                ++n;
            }
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
    }
};

inline EvalReport make_report(ConfusionMatrix cm) {
    EvalReport r{std::move(cm), {}, {}, {}};
    r.recall = recall_matrix(r.confusion);
    r.precision = precision_matrix(r.confusion);
    for (std::size_t k = 0; k < r.confusion.size(); ++k) {
        r.per_class.push_back({r.confusion.labels[k], r.precision.values(k, k), r.recall.values(k, k),
                               r.confusion.row_sum(k), !r.precision.undefined[k], !r.recall.undefined[k]});
    }
    return r;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
    out << "actual\\predicted";
    for (const auto& l : cm.labels) out << ',' << text::csv_field(l);
    out << '\n';
    for (std::size_t i = 0; i < cm.size(); ++i) {
        out << text::csv_field(cm.labels[i]);
        for (auto c : cm.counts[i]) out << ',' << c;
        out << '\n';
    }
}

enum class HeatmapKind { confusion, recall, precision };

inline const char* to_string(HeatmapKind k) {
    switch (k) {
        case HeatmapKind::confusion: return "confusion";
        case HeatmapKind::recall: return "recall";
        case HeatmapKind::precision: return "precision";
    }
    return "?";
}

namespace detail {

inline bool cell_undefined(const NormalizedMatrix& m, HeatmapKind kind, std::size_t i, std::size_t j) {
    if (kind == HeatmapKind::recall) return m.undefined[i];
    if (kind == HeatmapKind::precision) return m.undefined[j];
    return false;
}

}  // namespace detail

inline void write_normalized_csv(std::ostream& out, const NormalizedMatrix& m, HeatmapKind kind,
                                 const std::vector<std::string>& labels) {
    out << "actual\\predicted";
    for (const auto& l : labels) out << ',' << text::csv_field(l);
    out << '\n';
    for (std::size_t i = 0; i < m.values.rows(); ++i) {
        out << text::csv_field(labels[i]);
        for (std::size_t j = 0; j < m.values.cols(); ++j) {
            out << ',';
            if (detail::cell_undefined(m, kind, i, j)) {
                out << "n/a";
            } else {
                out << text::format_double(m.values(i, j));
            }
        }
        out << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const EvalReport& r) {
    out << "label,precision,recall,support\n";
    for (const auto& c : r.per_class) {
        out << text::csv_field(c.label) << ','
            << (c.precision_defined ? text::format_double(c.precision) : std::string("n/a")) << ','
            << (c.recall_defined ? text::format_double(c.recall) : std::string("n/a")) << ',' << c.support
            << '\n';
    }
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

// Sequential single-hue ramp from near-white to dark blue.
inline std::string ramp_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", lerp(247, 8), lerp(251, 48), lerp(255, 107));
    return buf;
}

inline std::string fmt2(double v) { return text::format_fixed(v, 2); }

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace detail

// Heatmap as standalone SVG text. Rows are actual classes, columns predicted
// classes. Recall and precision cells are colored on the fixed [0, 1] scale;
// confusion cells relative to the largest count. Undefined rows/columns are
// hatched and annotated "n/a".
inline std::string heatmap_svg(const Matrix& matrix, const std::vector<std::string>& labels, HeatmapKind kind,
                               const std::vector<bool>& undefined = {}) {
    const std::size_t k = matrix.rows();
    if (matrix.cols() != k || labels.size() != k) {
        throw DimensionError("heatmap needs a square matrix with one label per class");
    }
    NormalizedMatrix nm{matrix, undefined.empty() ? std::vector<bool>(k, false) : undefined};
    if (nm.undefined.size() != k) throw DimensionError("undefined-flag count differs from class count");

    double scale = 1.0;
    if (kind == HeatmapKind::confusion) {
        scale = 0.0;
        for (double v : matrix.values()) scale = std::max(scale, v);
        if (scale <= 0.0) scale = 1.0;
    }

    constexpr int cell = 64;
    constexpr int left = 170;
    constexpr int top = 60;
    const int bottom = 170;
    const int width = left + static_cast<int>(k) * cell + 20;
    const int height = top + static_cast<int>(k) * cell + bottom;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<defs><pattern id=\"hatch\" width=\"8\" height=\"8\" patternUnits=\"userSpaceOnUse\" "
         "patternTransform=\"rotate(45)\"><rect width=\"8\" height=\"8\" fill=\"#ffffff\"/>"
         "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"8\" stroke=\"#bbbbbb\" stroke-width=\"3\"/></pattern></defs>\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    s << "<text class=\"title\" x=\"" << left << "\" y=\"24\" font-size=\"16\">" << to_string(kind)
      << " heatmap</text>\n";

    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const int x = left + static_cast<int>(j) * cell;
            const int y = top + static_cast<int>(i) * cell;
            const bool na = detail::cell_undefined(nm, kind, i, j);
            const double v = matrix(i, j);
            const double t = v / scale;
            s << "<rect class=\"cell" << (na ? " na" : "") << "\" x=\"" << x << "\" y=\"" << y << "\" width=\""
              << cell << "\" height=\"" << cell << "\" fill=\"" << (na ? "url(#hatch)" : detail::ramp_color(t))
              << "\" stroke=\"#ffffff\"/>\n";
            std::string label;
            if (na) {
                label = "n/a";
            } else if (kind == HeatmapKind::confusion) {
                label = std::to_string(static_cast<std::uint64_t>(std::llround(v)));
            } else {
                label = detail::fmt2(v);
            }
            s << "<text class=\"value\" x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
              << "\" text-anchor=\"middle\" fill=\"" << (!na && t > 0.5 ? "#ffffff" : "#000000") << "\">" << label
              << "</text>\n";
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        s << "<text class=\"row-label\" x=\"" << left - 8 << "\" y=\"" << top + static_cast<int>(i) * cell + cell / 2 + 4
          << "\" text-anchor=\"end\">" << detail::xml_escape(labels[i]) << "</text>\n";
    }
    for (std::size_t j = 0; j < k; ++j) {
        const int x = left + static_cast<int>(j) * cell + cell / 2;
        const int y = top + static_cast<int>(k) * cell + 10;
        s << "<text class=\"col-label\" x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"end\" transform=\"rotate(-45 "
          << x << ' ' << y << ")\">" << detail::xml_escape(labels[j]) << "</text>\n";
    }
    s << "<text class=\"axis\" x=\"14\" y=\"" << top + static_cast<int>(k) * cell / 2
      << "\" transform=\"rotate(-90 14 " << top + static_cast<int>(k) * cell / 2
      << ")\" text-anchor=\"middle\">actual</text>\n";
    s << "<text class=\"axis\" x=\"" << left + static_cast<int>(k) * cell / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">predicted</text>\n";
    s << "</svg>\n";
    return s.str();
}

inline void render_heatmap(const Matrix& matrix, const std::vector<std::string>& labels, HeatmapKind kind,
                           const std::string& out_path, const std::vector<bool>& undefined = {}) {
    detail::write_file(out_path, heatmap_svg(matrix, labels, kind, undefined));
}

inline Matrix counts_as_matrix(const ConfusionMatrix& cm) {
    Matrix m(cm.size(), cm.size());
    for (std::size_t i = 0; i < cm.size(); ++i)
        for (std::size_t j = 0; j < cm.size(); ++j) m(i, j) = static_cast<double>(cm.counts[i][j]);
    return m;
}

// Plot geometry of the training-curve charts; exposed so tests can recompute
// the expected coordinates.
struct CurveLayout {
    double left = 60.0;
    double width = 480.0;
    double height = 180.0;
    double loss_top = 40.0;
    double acc_top = 280.0;
    double total_width = 580.0;
    double total_height = 500.0;

    double x(std::size_t i, std::size_t n) const {
        return n <= 1 ? left + width / 2.0 : left + width * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    // Value v on [lo, hi] mapped into a chart whose top edge is `top`.
    double y(double v, double lo, double hi, double top) const {
        const double span = hi > lo ? hi - lo : 1.0;
        return top + height * (1.0 - (v - lo) / span);
    }
};

inline double history_loss_max(const TrainingHistory& h) {
    double mx = 0.0;
    for (const auto& r : h) mx = std::max({mx, r.train_loss, r.val_loss});
    return mx > 0.0 ? mx : 1.0;
}

// Loss chart (train and validation loss, scaled to [0, max loss]) above an
// accuracy chart (validation accuracy on [0, 1]), both over epochs.
inline std::string training_curves_svg(const TrainingHistory& history) {
    if (history.empty()) {
        throw DataError("cannot plot an empty training history");
    }
    const CurveLayout lay;
    const std::size_t n = history.size();
    const double loss_max = history_loss_max(history);

    auto polyline = [&](const char* cls, const char* color, auto value, double lo, double hi, double top) {
        std::ostringstream s;
        s << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s << ' ';
            s << detail::fmt2(lay.x(i, n)) << ',' << detail::fmt2(lay.y(value(history[i]), lo, hi, top));
        }
        s << "\"/>\n";
        for (std::size_t i = 0; i < n; ++i) {
            s << "<circle class=\"" << cls << "-pt\" cx=\"" << detail::fmt2(lay.x(i, n)) << "\" cy=\""
              << detail::fmt2(lay.y(value(history[i]), lo, hi, top)) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        return s.str();
    };
    auto frame = [&](double top, const char* title, double lo, double hi) {
        std::ostringstream s;
        s << "<rect x=\"" << detail::fmt2(lay.left) << "\" y=\"" << detail::fmt2(top) << "\" width=\""
          << detail::fmt2(lay.width) << "\" height=\"" << detail::fmt2(lay.height)
          << "\" fill=\"none\" stroke=\"#444444\"/>\n";
        s << "<text x=\"" << detail::fmt2(lay.left) << "\" y=\"" << detail::fmt2(top - 8) << "\">" << title
          << "</text>\n";
        s << "<text x=\"" << detail::fmt2(lay.left - 6) << "\" y=\"" << detail::fmt2(top + 4)
          << "\" text-anchor=\"end\">" << detail::fmt2(hi) << "</text>\n";
        s << "<text x=\"" << detail::fmt2(lay.left - 6) << "\" y=\"" << detail::fmt2(top + lay.height + 4)
          << "\" text-anchor=\"end\">" << detail::fmt2(lo) << "</text>\n";
        s << "<text x=\"" << detail::fmt2(lay.left) << "\" y=\"" << detail::fmt2(top + lay.height + 16)
          << "\">1</text>\n";
        s << "<text x=\"" << detail::fmt2(lay.left + lay.width) << "\" y=\"" << detail::fmt2(top + lay.height + 16)
          << "\" text-anchor=\"end\">" << n << "</text>\n";
        return s.str();
    };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt2(lay.total_width) << "\" height=\""
      << detail::fmt2(lay.total_height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    s << frame(lay.loss_top, "loss (train: grey, validation: blue)", 0.0, loss_max);
    s << polyline("train-loss", "#999999", [](const EpochRecord& r) { return r.train_loss; }, 0.0, loss_max,
                  lay.loss_top);
    s << polyline("val-loss", "#1f4e9c", [](const EpochRecord& r) { return r.val_loss; }, 0.0, loss_max,
                  lay.loss_top);
    s << frame(lay.acc_top, "validation accuracy", 0.0, 1.0);
    s << polyline("val-accuracy", "#1f4e9c", [](const EpochRecord& r) { return r.val_accuracy; }, 0.0, 1.0,
                  lay.acc_top);
    s << "<text x=\"" << detail::fmt2(lay.left + lay.width / 2) << "\" y=\"" << detail::fmt2(lay.total_height - 8)
      << "\" text-anchor=\"middle\">epoch</text>\n";
    s << "</svg>\n";
    return s.str();
}

inline void render_training_curves(const TrainingHistory& history, const std::string& out_path) {
    detail::write_file(out_path, training_curves_svg(history));
}

}  // namespace maneuver

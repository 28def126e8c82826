#include <gtest/gtest.h>

#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "maneuver/evaluation.hpp"

using namespace maneuver;

namespace {

std::vector<std::string> matches(const std::string& text, const std::string& pattern) {
    std::vector<std::string> out;
    const std::regex re(pattern);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].str());
    }
    return out;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

// actual [8 x a0->p0, 2 x a0->p1, 4 x a1->p0, 6 x a1->p1]
ConfusionMatrix eight_two_four_six() {
    std::vector<int> a, p;
    auto add = [&](int x, int y, int n) {
        for (int i = 0; i < n; ++i) {
            a.push_back(x);
            p.push_back(y);
        }
    };
    add(0, 0, 8);
    add(0, 1, 2);
    add(1, 0, 4);
    add(1, 1, 6);
    return confusion_matrix(a, p, 2, {"left", "right"});
}

}  // namespace

TEST(ConfusionMatrix, SmallExample) {
    const std::vector<int> a{0, 0, 1, 1, 1}, p{0, 1, 0, 1, 1};
    const auto cm = confusion_matrix(a, p, 2);
    EXPECT_EQ(cm.counts, (std::vector<std::vector<std::uint64_t>>{{1, 1}, {1, 2}}));
    EXPECT_EQ(cm.total(), 5u);
    EXPECT_EQ(cm.labels, (std::vector<std::string>{"0", "1"}));
}

TEST(ConfusionMatrix, BadInputRejected) {
    const std::vector<int> a{0, 1}, p{0}, bad{0, 2};
    EXPECT_THROW(confusion_matrix(a, p, 2), DimensionError);
    EXPECT_THROW(confusion_matrix(a, bad, 2), DataError);
    EXPECT_THROW(confusion_matrix(a, a, 2, {"x"}), DimensionError);
}

TEST(RecallMatrix, RowsNormalized) {
    const auto r = recall_matrix(eight_two_four_six());
    EXPECT_DOUBLE_EQ(r.values(0, 0), 0.8);
    EXPECT_DOUBLE_EQ(r.values(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(r.values(1, 0), 0.4);
    EXPECT_DOUBLE_EQ(r.values(1, 1), 0.6);
    EXPECT_EQ(r.undefined, (std::vector<bool>{false, false}));
}

TEST(PrecisionMatrix, ColumnsNormalized) {
    const auto p = precision_matrix(eight_two_four_six());
    EXPECT_DOUBLE_EQ(p.values(0, 0), 8.0 / 12.0);
    EXPECT_DOUBLE_EQ(p.values(1, 0), 4.0 / 12.0);
    EXPECT_DOUBLE_EQ(p.values(1, 1), 0.75);
    EXPECT_DOUBLE_EQ(p.values(0, 1), 0.25);
}

TEST(NormalizedMatrices, ZeroSupportAndNeverPredictedAreFlagged) {
    // class 2 never occurs; class 1 is never predicted
    const std::vector<int> a{0, 0, 1}, p{0, 2, 0};
    const auto cm = confusion_matrix(a, p, 3);
    const auto r = recall_matrix(cm);
    const auto pr = precision_matrix(cm);
    EXPECT_EQ(r.undefined, (std::vector<bool>{false, false, true}));
    EXPECT_EQ(pr.undefined, (std::vector<bool>{false, true, false}));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.values(2, j), 0.0);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(pr.values(i, 1), 0.0);

    const auto report = make_report(cm);
    EXPECT_FALSE(report.per_class[2].recall_defined);
    EXPECT_FALSE(report.per_class[1].precision_defined);
    EXPECT_DOUBLE_EQ(report.macro_recall(), (0.5 + 0.0) / 2.0);
    std::ostringstream s;
    write_normalized_csv(s, r, HeatmapKind::recall, cm.labels);
    EXPECT_EQ(s.str(), "actual\\predicted,0,1,2\n0,0.5,0,0.5\n1,1,0,0\n2,n/a,n/a,n/a\n");
}

TEST(NormalizedMatrices, IdentitiesOnRandomPredictions) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng.below(8);
        const std::size_t n = rng.below(60);
        std::vector<int> a(n), p(n);
        for (std::size_t t = 0; t < n; ++t) {
            a[t] = static_cast<int>(rng.below(k));
            p[t] = rng.below(3) ? a[t] : static_cast<int>(rng.below(k));
        }
        const auto cm = confusion_matrix(a, p, k);
        ASSERT_EQ(cm.total(), n);
        const auto r = recall_matrix(cm);
        const auto pr = precision_matrix(cm);
        for (std::size_t i = 0; i < k; ++i) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                rs += r.values(i, j);
                cs += pr.values(j, i);
                ASSERT_GE(r.values(i, j), 0.0);
                ASSERT_LE(r.values(i, j), 1.0);
            }
            ASSERT_NEAR(rs, r.undefined[i] ? 0.0 : 1.0, 1e-12);
            ASSERT_NEAR(cs, pr.undefined[i] ? 0.0 : 1.0, 1e-12);
        }
    }
}

TEST(NormalizedMatrices, ClassRelabelingPermutesMatrices) {
    Rng rng(8);
    const std::size_t k = 5;
    std::vector<int> a(80), p(80);
    for (std::size_t t = 0; t < 80; ++t) {
        a[t] = static_cast<int>(rng.below(k));
        p[t] = static_cast<int>(rng.below(k));
    }
    const auto perm = rng.permutation(k);
    std::vector<int> pa(80), pp(80);
    for (std::size_t t = 0; t < 80; ++t) {
        pa[t] = static_cast<int>(perm[static_cast<std::size_t>(a[t])]);
        pp[t] = static_cast<int>(perm[static_cast<std::size_t>(p[t])]);
    }
    const auto r = recall_matrix(confusion_matrix(a, p, k));
    const auto rp = recall_matrix(confusion_matrix(pa, pp, k));
    const auto q = precision_matrix(confusion_matrix(a, p, k));
    const auto qp = precision_matrix(confusion_matrix(pa, pp, k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            EXPECT_EQ(rp.values(perm[i], perm[j]), r.values(i, j));
            EXPECT_EQ(qp.values(perm[i], perm[j]), q.values(i, j));
        }
}

TEST(SummaryCsv, Layout) {
    const auto report = make_report(eight_two_four_six());
    std::ostringstream s;
    write_summary_csv(s, report);
    EXPECT_EQ(s.str(), "label,precision,recall,support\nleft,0.6666666666666666,0.8,10\nright,0.75,0.6,10\n");
    std::ostringstream c;
    write_confusion_csv(c, report.confusion);
    EXPECT_EQ(c.str(), "actual\\predicted,left,right\nleft,8,2\nright,4,6\n");
}

TEST(HeatmapSvg, IdentityMatrixStructure) {
    Matrix m(2, 2, 0.0);
    m(0, 0) = 1.0;
    m(1, 1) = 1.0;
    const auto svg = heatmap_svg(m, {"a", "b"}, HeatmapKind::recall);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_EQ(count_of(svg, "<rect class=\"cell"), 4u);
    EXPECT_EQ(matches(svg, "<text class=\"value\"[^>]*>([^<]*)</text>"),
              (std::vector<std::string>{"1.00", "0.00", "0.00", "1.00"}));
    EXPECT_EQ(matches(svg, "<text class=\"row-label\"[^>]*>([^<]*)</text>"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(matches(svg, "<text class=\"col-label\"[^>]*>([^<]*)</text>"), (std::vector<std::string>{"a", "b"}));
    EXPECT_NE(svg.find(">actual</text>"), std::string::npos);
    EXPECT_NE(svg.find(">predicted</text>"), std::string::npos);
}

TEST(HeatmapSvg, LabelsAppearVerbatimAndEscaped) {
    const std::vector<std::string> labels{"turn left", "curve <r> & co", "lane change"};
    const auto svg = heatmap_svg(Matrix(3, 3, 0.25), labels, HeatmapKind::precision);
    EXPECT_EQ(matches(svg, "<text class=\"row-label\"[^>]*>([^<]*)</text>"),
              (std::vector<std::string>{"turn left", "curve &lt;r&gt; &amp; co", "lane change"}));
}

TEST(HeatmapSvg, UndefinedCellsHatched) {
    const std::vector<int> a{0, 0, 1}, p{0, 2, 0};
    const auto cm = confusion_matrix(a, p, 3);
    const auto r = recall_matrix(cm);
    const auto svg = heatmap_svg(r.values, cm.labels, HeatmapKind::recall, r.undefined);
    EXPECT_EQ(count_of(svg, "<rect class=\"cell na\""), 3u);
    const auto values = matches(svg, "<text class=\"value\"[^>]*>([^<]*)</text>");
    EXPECT_EQ(values[6], "n/a");
    EXPECT_EQ(values[0], "0.50");
}

TEST(HeatmapSvg, ConfusionShowsCounts) {
    const auto cm = eight_two_four_six();
    const auto svg = heatmap_svg(counts_as_matrix(cm), cm.labels, HeatmapKind::confusion);
    EXPECT_EQ(matches(svg, "<text class=\"value\"[^>]*>([^<]*)</text>"),
              (std::vector<std::string>{"8", "2", "4", "6"}));
}

TEST(HeatmapSvg, ByteStableAndDimensionChecked) {
    Matrix m(3, 3);
    Rng rng(1);
    for (double& v : m.values()) v = rng.uniform();
    const std::vector<std::string> l{"x", "y", "z"};
    EXPECT_EQ(heatmap_svg(m, l, HeatmapKind::recall), heatmap_svg(m, l, HeatmapKind::recall));
    EXPECT_THROW(heatmap_svg(m, {"x", "y"}, HeatmapKind::recall), DimensionError);
    EXPECT_THROW(heatmap_svg(Matrix(2, 3), {"x", "y"}, HeatmapKind::recall), DimensionError);
}

TEST(TrainingCurves, SinglePoint) {
    const TrainingHistory h{{1, 1.5, 1.2, 0.4}};
    const auto svg = training_curves_svg(h);
    const CurveLayout lay;
    const auto pts = matches(svg, "class=\"val-accuracy\"[^>]*points=\"([^\"]*)\"");
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0], text::format_fixed(lay.x(0, 1), 2) + "," +
                          text::format_fixed(lay.y(0.4, 0.0, 1.0, lay.acc_top), 2));
}

TEST(TrainingCurves, CoordinatesMatchLayout) {
    TrainingHistory h;
    for (std::size_t e = 1; e <= 6; ++e) {
        h.push_back({e, 2.0 / static_cast<double>(e), 2.5 / static_cast<double>(e), 0.1 * static_cast<double>(e)});
    }
    const auto svg = training_curves_svg(h);
    const CurveLayout lay;
    const double loss_max = 2.5;
    auto expect_line = [&](const char* cls, auto value, double hi, double top) {
        std::string want;
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (i) want += ' ';
            want += text::format_fixed(lay.x(i, h.size()), 2) + "," +
                    text::format_fixed(lay.y(value(h[i]), 0.0, hi, top), 2);
        }
        const auto got = matches(svg, std::string("class=\"") + cls + "\"[^>]*points=\"([^\"]*)\"");
        ASSERT_EQ(got.size(), 1u);
        EXPECT_EQ(got[0], want);
    };
    expect_line("train-loss", [](const EpochRecord& r) { return r.train_loss; }, loss_max, lay.loss_top);
    expect_line("val-loss", [](const EpochRecord& r) { return r.val_loss; }, loss_max, lay.loss_top);
    expect_line("val-accuracy", [](const EpochRecord& r) { return r.val_accuracy; }, 1.0, lay.acc_top);

    // decreasing loss draws a line that descends (y grows downwards)
    const auto pts = matches(svg, "<circle class=\"val-loss-pt\" cx=\"[^\"]*\" cy=\"([^\"]*)\"");
    ASSERT_EQ(pts.size(), 6u);
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GT(std::stod(pts[i]), std::stod(pts[i - 1]));
}

TEST(TrainingCurves, DeterministicAndRejectsEmpty) {
    const TrainingHistory h{{1, 1.0, 0.9, 0.5}, {2, 0.8, 0.7, 0.6}};
    EXPECT_EQ(training_curves_svg(h), training_curves_svg(h));
    EXPECT_THROW(training_curves_svg({}), DataError);
}

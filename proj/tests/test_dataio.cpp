#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "tsdet/dataio.hpp"
#include "tsdet/rng.hpp"

using namespace tsdet;
namespace fs = std::filesystem;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& content) {
    const std::string path = (fs::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

std::vector<Window> toy_windows(int count, int length, int channels, std::uint64_t seed = 3) {
    Rng rng = make_rng(seed);
    std::vector<Window> out;
    for (int i = 0; i < count; ++i) {
        Window w;
        w.values = Matrix(length, channels);
        for (double& x : w.values.v) x = uniform_real(rng, -3.0, 7.0);
        w.dataset_id = "toy";
        w.id = static_cast<std::uint64_t>(i);
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace

TEST_CASE("load_csv parses header and rows in order") {
    const auto path = write_temp_csv("tsdet_ok.csv", "a,b\n1,2\n3,4\n5,6\n");
    const auto series = load_csv(path);
    CHECK(series.channel_names == std::vector<std::string>{"a", "b"});
    CHECK(series.length() == 3);
    CHECK(series.channels() == 2);
    CHECK(series.values.at(0, 0) == 1.0);
    CHECK(series.values.at(2, 1) == 6.0);
}

TEST_CASE("load_csv rejects ragged and non-numeric rows with row numbers") {
    const auto ragged = write_temp_csv("tsdet_ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(ragged)),
                         doctest::Contains("row 3"), std::runtime_error);

    const auto bad = write_temp_csv("tsdet_bad.csv", "a,b\n1,2\n3,x\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(bad)),
                         doctest::Contains("row 3"), std::runtime_error);

    CHECK_THROWS_AS(static_cast<void>(load_csv("/nonexistent/nope.csv")), std::runtime_error);
}

TEST_CASE("load_csv round-trips a 966x7 series shape") {
    std::string content = "c0,c1,c2,c3,c4,c5,c6\n";
    for (int t = 0; t < 966; ++t) {
        for (int c = 0; c < 7; ++c) content += (c ? "," : "") + std::to_string(t * 7 + c);
        content += "\n";
    }
    const auto series = load_csv(write_temp_csv("tsdet_illness_shape.csv", content));
    CHECK(series.length() == 966);
    CHECK(series.channels() == 7);
}

TEST_CASE("slide_windows offsets and counts") {
    MultivariateSeries series;
    series.values = Matrix(12, 1);
    for (int t = 0; t < 12; ++t) series.values.at(t, 0) = t;
    series.channel_names = {"c0"};

    SUBCASE("exact fit gives one window") {
        MultivariateSeries s10;
        s10.values = Matrix(10, 1);
        s10.channel_names = {"c0"};
        CHECK(slide_windows(s10, 10, 1, "d").size() == 1);
    }
    SUBCASE("non-overlapping") {
        const auto ws = slide_windows(series, 4, 4, "d");
        REQUIRE(ws.size() == 3);
        CHECK(ws[0].values.at(0, 0) == 0.0);
        CHECK(ws[1].values.at(0, 0) == 4.0);
        CHECK(ws[2].values.at(3, 0) == 11.0);
    }
    SUBCASE("overlapping by half") {
        const auto ws = slide_windows(series, 4, 2, "d");
        REQUIRE(ws.size() == 5);
        for (std::size_t i = 0; i < ws.size(); ++i)
            CHECK(ws[i].values.at(0, 0) == static_cast<double>(2 * i));
        // adjacent windows share two steps
        CHECK(ws[0].values.at(2, 0) == ws[1].values.at(0, 0));
    }
    SUBCASE("window longer than series") {
        CHECK_THROWS_AS(slide_windows(series, 13, 1, "d"), std::invalid_argument);
    }
    SUBCASE("values are preserved bit-exactly") {
        const auto ws = slide_windows(series, 5, 3, "d");
        for (const auto& w : ws) {
            CHECK(w.source.is_real());
            for (int t = 0; t < 5; ++t)
                CHECK(w.values.at(t, 0) == series.values.at(static_cast<int>(w.id) * 3 + t, 0));
        }
    }
}

TEST_CASE("fit_normalizer minmax and zscore") {
    std::vector<Window> ws(1);
    ws[0].values = Matrix(3, 2);
    // channel 0 spans [0, 10]; channel 1 constant
    ws[0].values.at(0, 0) = 0.0;
    ws[0].values.at(1, 0) = 4.0;
    ws[0].values.at(2, 0) = 10.0;
    for (int t = 0; t < 3; ++t) ws[0].values.at(t, 1) = 2.5;

    const auto mm = fit_normalizer(ws, NormScheme::MinMax);
    CHECK(mm.location[0] == 0.0);
    CHECK(mm.scale[0] == 5.0);
    CHECK(mm.scale[1] == 1.0);  // degenerate channel

    std::vector<Window> zws(1);
    zws[0].values = Matrix(2, 1);
    zws[0].values.at(0, 0) = -1.0;
    zws[0].values.at(1, 0) = 1.0;
    const auto zs = fit_normalizer(zws, NormScheme::ZScore);
    CHECK(zs.location[0] == doctest::Approx(0.0));
    CHECK(zs.scale[0] == doctest::Approx(1.0));

    CHECK_THROWS_AS(fit_normalizer({}, NormScheme::MinMax), std::invalid_argument);
}

TEST_CASE("apply_normalizer round trip and boundary mapping") {
    auto ws = toy_windows(6, 8, 3);
    const auto stats = fit_normalizer(ws, NormScheme::MinMax);
    const auto fwd = apply_normalizer(ws, stats, NormDirection::Forward);
    const auto back = apply_normalizer(fwd, stats, NormDirection::Inverse);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        CHECK(max_abs_diff(ws[i].values, back[i].values) < 1e-9);
        CHECK(fwd[i].source == ws[i].source);
    }

    // the channel maximum maps to +1 exactly under minmax
    double hi = -1e300;
    for (const auto& w : ws)
        for (int t = 0; t < w.length(); ++t) hi = std::max(hi, w.values.at(t, 0));
    Window probe = ws[0];
    probe.values.at(0, 0) = hi;
    normalize_inplace(probe, stats, NormDirection::Forward);
    CHECK(probe.values.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // channel mismatch is rejected
    Window narrow;
    narrow.values = Matrix(4, 2);
    CHECK_THROWS_AS(normalize_inplace(narrow, stats, NormDirection::Forward),
                    std::invalid_argument);
}

TEST_CASE("norm stats json round trip") {
    auto ws = toy_windows(4, 6, 2);
    const auto stats = fit_normalizer(ws, NormScheme::MinMax);
    const std::string path = (fs::temp_directory_path() / "tsdet_norm.json").string();
    save_norm_stats(stats, path);
    const auto loaded = load_norm_stats(path);
    CHECK(loaded.scheme == stats.scheme);
    CHECK(loaded.location == stats.location);
    CHECK(loaded.scale == stats.scale);
}

TEST_CASE("split sizes, determinism and partition property") {
    auto ws = toy_windows(10, 4, 1);
    const auto a = split(ws, {0.8, 0.1, 0.1}, 7);
    CHECK(a.train.size() == 8);
    CHECK(a.val.size() == 1);
    CHECK(a.test.size() == 1);

    const auto b = split(ws, {0.8, 0.1, 0.1}, 7);
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.val[0].id == b.val[0].id);
    CHECK(a.test[0].id == b.test[0].id);

    // exhaustive and disjoint
    std::set<std::uint64_t> seen;
    for (const auto* part : {&a.train, &a.val, &a.test})
        for (const auto& w : *part) CHECK(seen.insert(w.id).second);
    CHECK(seen.size() == ws.size());

    SUBCASE("empty test split allowed") {
        const auto c = split(ws, {0.5, 0.5, 0.0}, 3);
        CHECK(c.test.empty());
        CHECK(c.train.size() + c.val.size() == 10);
    }
    SUBCASE("invalid ratios rejected") {
        CHECK_THROWS_AS(split(ws, {0.5, 0.2, 0.1}, 3), std::invalid_argument);
    }
    SUBCASE("different seeds usually permute differently") {
        int distinct = 0;
        auto many = toy_windows(40, 4, 1);
        const auto base = split(many, {0.8, 0.1, 0.1}, 1);
        for (std::uint64_t s = 2; s < 22; ++s) {
            const auto other = split(many, {0.8, 0.1, 0.1}, s);
            bool same = true;
            for (std::size_t i = 0; i < base.train.size() && same; ++i)
                same = base.train[i].id == other.train[i].id;
            if (!same) ++distinct;
        }
        CHECK(distinct >= 19);  // a collision over 20 trials is vanishingly unlikely
    }
}

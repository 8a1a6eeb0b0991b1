#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "dpsc/dataset.hpp"
#include "dpsc/errors.hpp"
#include "dpsc/model.hpp"
#include "dpsc/trainer.hpp"

using namespace dpsc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "dpsc_test_dataset";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("gaussian outlier: shape, labels and determinism") {
    const double mean[2] = {10.0, 0.0};
    for (std::uint64_t seed : {0ULL, 1ULL, 7ULL, 12345ULL}) {
        const auto d = gen_gaussian_outlier(1000, mean, seed);
        CHECK(d.size() == 1001);
        CHECK(d.dim == 2);
        CHECK(std::count(d.labels.begin(), d.labels.end(), 0) == 1);
        CHECK(d.labels.back() == 0);
    }
    const auto a = gen_gaussian_outlier(1000, mean, 3);
    const auto b = gen_gaussian_outlier(1000, mean, 3);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
}

TEST_CASE("gaussian outlier: majority sample mean near origin") {
    const double mean[2] = {10.0, 0.0};
    const auto d = gen_gaussian_outlier(1000, mean, 11);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
        sx += d.row(i)[0];
        sy += d.row(i)[1];
    }
    CHECK(std::abs(sx / 1000.0) < 0.15);
    CHECK(std::abs(sy / 1000.0) < 0.15);
}

TEST_CASE("gaussian outlier: degenerate overlap and invalid size") {
    const double origin[2] = {0.0, 0.0};
    const auto d = gen_gaussian_outlier(1, origin, 0);
    CHECK(d.size() == 2);
    CHECK_THROWS_AS(gen_gaussian_outlier(0, origin, 0), std::invalid_argument);
}

TEST_CASE("mixture: counts, labels, degenerate covariance") {
    MixtureSpec spec;
    spec.components.push_back({{-1.0, 0.0}, 1.0, {}, 5, 0});
    spec.components.push_back({{1.0, 0.0}, 1.0, {}, 5, 1});
    const auto d = gen_mixture(spec, 4);
    CHECK(d.size() == 10);
    CHECK(std::count(d.labels.begin(), d.labels.end(), 0) == 5);
    CHECK(std::count(d.labels.begin(), d.labels.end(), 1) == 5);

    MixtureSpec point;
    point.components.push_back({{2.5, -1.5}, 0.0, {}, 3, 0});
    point.num_classes = 2;
    const auto p = gen_mixture(point, 9);
    REQUIRE(p.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(p.row(i)[0] == 2.5);
        CHECK(p.row(i)[1] == -1.5);
    }
}

TEST_CASE("mixture: full covariance reproduces the requested second moments") {
    MixtureSpec spec;
    spec.components.push_back({{0.0, 0.0}, 1.0, {2.0, 0.6, 0.6, 0.5}, 40000, 0});
    spec.num_classes = 2;
    const auto d = gen_mixture(spec, 21);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto r = d.row(i);
        sxx += r[0] * r[0];
        sxy += r[0] * r[1];
        syy += r[1] * r[1];
    }
    const double n = static_cast<double>(d.size());
    CHECK(sxx / n == doctest::Approx(2.0).epsilon(0.05));
    CHECK(sxy / n == doctest::Approx(0.6).epsilon(0.05));
    CHECK(syy / n == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("mixture: well-separated classes are learnable by a linear model") {
    MixtureSpec spec;
    spec.components.push_back({{-10.0, 0.0}, 1.0, {}, 500, 0});
    spec.components.push_back({{10.0, 0.0}, 1.0, {}, 500, 1});
    const auto train_set = gen_mixture(spec, 1);
    const auto test_set = gen_mixture(spec, 2);
    ModelSpec m;
    m.input_dim = 2;
    m.num_classes = 2;
    TrainConfig tc;
    tc.learning_rate = 0.1;
    PrivacyConfig pc;
    pc.sampling_rate = 0.1;
    pc.steps = 200;
    const auto r = train(train_set, m, tc, pc, test_set);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i)
        hits += r.log.predictions.back()[i] == test_set.labels[i] ? 1 : 0;
    CHECK(static_cast<double>(hits) / static_cast<double>(test_set.size()) >= 0.99);
}

TEST_CASE("subsample_class") {
    MixtureSpec spec;
    spec.components.push_back({{0.0, 0.0}, 1.0, {}, 10000, 0});
    spec.components.push_back({{3.0, 0.0}, 1.0, {}, 300, 1});
    const auto d = gen_mixture(spec, 5);

    SUBCASE("p0 = 1 keeps everything") {
        const auto s = subsample_class(d, 0, 1.0, 1);
        CHECK(s.features == d.features);
        CHECK(s.labels == d.labels);
    }
    SUBCASE("p0 = 0 drops the class") {
        const auto s = subsample_class(d, 0, 0.0, 1);
        CHECK(std::count(s.labels.begin(), s.labels.end(), 0) == 0);
        CHECK(s.size() == 300);
    }
    SUBCASE("p0 = 0.5 concentrates around half") {
        const auto s = subsample_class(d, 0, 0.5, 1);
        const auto kept = std::count(s.labels.begin(), s.labels.end(), 0);
        CHECK(std::abs(static_cast<double>(kept) - 5000.0) <= 150.0);
        CHECK(std::count(s.labels.begin(), s.labels.end(), 1) == 300);
    }
    SUBCASE("retained rows are untouched and in order") {
        const auto s = subsample_class(d, 0, 0.3, 8);
        std::size_t j = 0;
        for (std::size_t i = 0; i < d.size() && j < s.size(); ++i) {
            const auto a = d.row(i);
            const auto b = s.row(j);
            if (a[0] == b[0] && a[1] == b[1] && d.labels[i] == s.labels[j]) ++j;
        }
        CHECK(j == s.size());
    }
    SUBCASE("deterministic") {
        CHECK(subsample_class(d, 0, 0.4, 3).features == subsample_class(d, 0, 0.4, 3).features);
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(subsample_class(d, 2, 0.5, 0), std::invalid_argument);
        CHECK_THROWS_AS(subsample_class(d, 0, 1.5, 0), std::invalid_argument);
    }
}

TEST_CASE("split") {
    LabeledDataset d;
    d.dim = 1;
    for (int i = 0; i < 10; ++i) {
        const double x = i;
        d.push_back(std::span<const double>(&x, 1), i % 2);
    }
    const auto [tr, te] = split(d, 0.8, 3);
    CHECK(tr.size() == 8);
    CHECK(te.size() == 2);

    const auto [tr2, te2] = split(d, 0.8, 3);
    CHECK(tr.features == tr2.features);
    CHECK(te.features == te2.features);

    std::vector<double> all(tr.features);
    all.insert(all.end(), te.features.begin(), te.features.end());
    std::sort(all.begin(), all.end());
    CHECK(all == d.features);

    CHECK_THROWS_AS(split(d, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split(d, 1.0, 1), std::invalid_argument);
}

TEST_CASE("standardize uses reference statistics") {
    LabeledDataset ref;
    ref.dim = 1;
    for (double x : {1.0, 3.0}) ref.push_back(std::span<const double>(&x, 1), 0);
    LabeledDataset other;
    other.dim = 1;
    const double five = 5.0;
    other.push_back(std::span<const double>(&five, 1), 1);
    const auto s = standardize(other, ref);
    CHECK(s.features[0] == doctest::Approx(3.0));
}

TEST_CASE("csv: labels re-indexed densely") {
    const auto p = scratch("abc.csv");
    write_file(p, "1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n");
    const auto c = load_csv(p);
    CHECK(c.data.size() == 3);
    CHECK(c.data.num_classes == 2);
    CHECK(c.label_names == std::vector<std::string>{"a", "b"});
    CHECK(c.data.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("csv: header and named label column") {
    const auto p = scratch("named.csv");
    write_file(p, "y,f1,f2\n2,0.5,1.5\n10,2.5,3.5\n");
    const auto c = load_csv(p, std::string("y"));
    CHECK(c.header.size() == 3);
    CHECK(c.data.dim == 2);
    // numeric labels sort numerically, so "2" < "10"
    CHECK(c.label_names == std::vector<std::string>{"2", "10"});
    CHECK(c.data.row(1)[1] == 3.5);
}

TEST_CASE("csv: distinct errors") {
    CHECK_THROWS_AS(load_csv(scratch("missing.csv")), IoError);
    const auto header_only = scratch("header.csv");
    write_file(header_only, "x0,x1,label\n");
    CHECK_THROWS_AS(load_csv(header_only), EmptyDataError);
    const auto empty = scratch("empty.csv");
    write_file(empty, "");
    CHECK_THROWS_AS(load_csv(empty), EmptyDataError);
    const auto bad = scratch("bad.csv");
    write_file(bad, "1.0,2.0,a\n3.0,oops,b\n");
    CHECK_THROWS_AS(load_csv(bad), ParseError);
}

TEST_CASE("csv: round trip") {
    MixtureSpec spec;
    spec.components.push_back({{0.1, -0.2, 0.3}, 1.7, {}, 50, 0});
    spec.components.push_back({{1.0, 2.0, 3.0}, 0.3, {}, 50, 2});
    const auto d = gen_mixture(spec, 17);
    const auto p = scratch("roundtrip.csv");
    write_csv(p, d);
    const auto c = load_csv(p);
    REQUIRE(c.data.features.size() == d.features.size());
    for (std::size_t i = 0; i < d.features.size(); ++i)
        CHECK(std::abs(c.data.features[i] - d.features[i]) <= 1e-12);
    // labels 0 and 2 map to dense indices 0 and 1
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(c.data.labels[i] == (d.labels[i] == 0 ? 0 : 1));
}

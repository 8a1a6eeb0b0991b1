#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpsc/dataset.hpp"
#include "dpsc/model.hpp"
#include "dpsc/rng.hpp"
#include "dpsc/selection.hpp"
#include "dpsc/trainer.hpp"

using namespace dpsc;

namespace {

ProbMatrix random_probs(std::size_t n, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    ProbMatrix out(n, std::vector<double>(c));
    for (auto& row : out) {
        std::vector<double> z(c);
        for (auto& v : z) v = rng.normal(0.0, 2.0);
        row = softmax(z);
    }
    return out;
}

// Log with one eval point per pattern: point i disagrees with the final
// label at checkpoint t (1-based, t < T) iff bit t-1 of i is set.
CheckpointLog pattern_log(std::size_t T) {
    const std::size_t n = std::size_t{1} << (T - 1);
    CheckpointLog log;
    for (std::size_t t = 0; t < T; ++t) {
        log.times.push_back((t + 1) * 50);
        std::vector<int> row(n, 0);
        if (t + 1 < T)
            for (std::size_t i = 0; i < n; ++i) row[i] = (i >> t) & 1U ? 1 : 0;
        log.predictions.push_back(row);
    }
    log.final_probs.assign(n, {0.5, 0.5});
    return log;
}

LabeledDataset gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset data;
    data.dim = d;
    data.num_classes = 3;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x) v = rng.normal();
        data.push_back(x, static_cast<int>(i % 3));
    }
    return data;
}

}  // namespace

TEST_CASE("method names round trip") {
    for (auto m : {Method::SR, Method::MCDO, Method::DE, Method::SAT, Method::SN, Method::SCTD})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("gamblers"), std::invalid_argument);
}

TEST_CASE("softmax response") {
    CHECK(score_sr({{0.0, 1.0, 0.0}}).scores[0] == 0.0);
    CHECK(std::abs(score_sr({std::vector<double>(10, 0.1)}).scores[0] - 0.9) <= 1e-15);

    const auto p = random_probs(1000, 4, 1);
    const auto s = score_sr(p).scores;
    std::vector<std::size_t> by_score(1000), by_conf(1000);
    std::iota(by_score.begin(), by_score.end(), 0);
    std::iota(by_conf.begin(), by_conf.end(), 0);
    std::stable_sort(by_score.begin(), by_score.end(), [&](auto a, auto b) { return s[a] < s[b]; });
    auto maxp = [&](std::size_t i) { return *std::max_element(p[i].begin(), p[i].end()); };
    std::stable_sort(by_conf.begin(), by_conf.end(), [&](auto a, auto b) { return maxp(a) > maxp(b); });
    CHECK(by_score == by_conf);
}

TEST_CASE("MC dropout") {
    ModelSpec spec;
    spec.architecture = Architecture::Mlp;
    spec.input_dim = 3;
    spec.num_classes = 3;
    spec.hidden_sizes = {32};
    const auto p = init_params(spec, 4);
    const auto eval = gaussian_rows(20, 3, 2);

    SUBCASE("rate zero is softmax response") {
        const auto a = score_mcdo(p, spec, eval, 7, 0.0, 1).scores;
        const auto b = score_sr(predict_probs(p, spec, eval)).scores;
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-15);
    }
    SUBCASE("one pass is a single stochastic softmax response") {
        auto s = spec;
        s.dropout_rate = 0.4;
        const auto a = score_mcdo(p, spec, eval, 1, 0.4, 9).scores;
        for (std::size_t i = 0; i < eval.size(); ++i) {
            const auto o = forward(p, s, eval.row(i), DropoutPass{derive_seed({9, 0, i})});
            const auto pr = softmax(o.logits);
            CHECK(std::abs(a[i] - (1.0 - *std::max_element(pr.begin(), pr.end()))) <= 1e-15);
        }
        CHECK(a != score_sr(predict_probs(p, spec, eval)).scores);
    }
    SUBCASE("deterministic given seed") {
        CHECK(score_mcdo(p, spec, eval, 5, 0.3, 2).scores == score_mcdo(p, spec, eval, 5, 0.3, 2).scores);
    }
    SUBCASE("Monte-Carlo concentration") {
        // Per point, the 1000-pass mean softmax stays within 3 standard
        // errors of the 10000-pass mean.
        auto s = spec;
        s.dropout_rate = 0.5;
        const std::size_t small = 1000, large = 10000;
        for (std::size_t i = 0; i < 5; ++i) {
            std::vector<double> m_small(3, 0.0), m_large(3, 0.0), sq(3, 0.0);
            for (std::size_t q = 0; q < large; ++q) {
                const auto pr = softmax(forward(p, s, eval.row(i), DropoutPass{derive_seed({77, q, i})}).logits);
                for (int k = 0; k < 3; ++k) {
                    m_large[k] += pr[k] / large;
                    sq[k] += pr[k] * pr[k] / large;
                    if (q < small) m_small[k] += pr[k] / small;
                }
            }
            for (int k = 0; k < 3; ++k) {
                const double sd = std::sqrt(std::max(0.0, sq[k] - m_large[k] * m_large[k]));
                CHECK(std::abs(m_small[k] - m_large[k]) <= 3.0 * sd / std::sqrt(double(small)) + 1e-12);
            }
        }
        const auto a = score_mcdo(p, spec, eval, small, 0.5, 77).scores;
        const auto b = score_mcdo(p, spec, eval, large, 0.5, 77).scores;
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a[i] - b[i]) <= 0.05);
    }
    SUBCASE("needs a pass") { CHECK_THROWS(score_mcdo(p, spec, eval, 0, 0.3, 1)); }
}

TEST_CASE("deep ensembles") {
    const auto a = random_probs(50, 3, 1);
    const auto b = random_probs(50, 3, 2);
    const std::vector<ProbMatrix> one{a};
    CHECK(score_de(one).scores == score_sr(a).scores);
    const std::vector<ProbMatrix> same{a, a, a};
    const auto s = score_de(same).scores;
    const auto r = score_sr(a).scores;
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::abs(s[i] - r[i]) <= 1e-15);
    const std::vector<ProbMatrix> two{a, b};
    for (double v : score_de(two).scores) {
        CHECK(1.0 - v >= 1.0 / 3.0 - 1e-15);
        CHECK(1.0 - v <= 1.0);
    }
    // probability averaging, not vote counting
    const std::vector<ProbMatrix> pair{{{0.9, 0.1}}, {{0.3, 0.7}}};
    CHECK(std::abs(score_de(pair).scores[0] - 0.4) <= 1e-15);
}

TEST_CASE("SCTD") {
    SUBCASE("golden value") {
        CheckpointLog log;
        log.times = {50, 100, 150, 200};
        log.predictions = {{1}, {1}, {0}, {0}};
        CHECK(score_sctd(log, 3.0).scores[0] == 0.140625);
    }
    SUBCASE("all agree scores zero") {
        CheckpointLog log;
        log.times = {1, 2, 3};
        log.predictions = {{2, 0}, {2, 0}, {2, 0}};
        for (double v : score_sctd(log).scores) CHECK(v == 0.0);
    }
    SUBCASE("closed form and strict monotonicity, every pattern") {
        for (std::size_t T : {4, 5}) {
            const auto log = pattern_log(T);
            const auto s = score_sctd(log, 3.0).scores;
            for (std::size_t i = 0; i < s.size(); ++i) {
                double expected = 0.0;
                for (std::size_t t = 1; t < T; ++t)
                    if ((i >> (t - 1)) & 1U) expected += std::pow(double(t) / double(T), 3.0);
                CHECK(std::abs(s[i] - expected) <= 1e-15);
                for (std::size_t bit = 0; bit + 1 < T; ++bit)
                    if (!((i >> bit) & 1U)) CHECK(s[i | (std::size_t{1} << bit)] > s[i]);
            }
        }
    }
    SUBCASE("depends only on checkpoint ranks") {
        auto log = pattern_log(4);
        const auto a = score_sctd(log).scores;
        log.times = {7, 700, 7000, 70000};
        CHECK(score_sctd(log).scores == a);
    }
    SUBCASE("errors") {
        CHECK_THROWS(score_sctd(CheckpointLog{}));
        CHECK_THROWS(score_sctd(pattern_log(3), -1.0));
    }
}

TEST_CASE("SAT and SelectiveNet scores") {
    CHECK(score_sat({{0.4, 0.6, 0.0}}).scores[0] == 0.0);
    CHECK(score_sat({{0.0, 0.0, 1.0}}).scores[0] == 1.0);
    const auto p = random_probs(200, 4, 5);
    const auto s = score_sat(p).scores;
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(s[i] == p[i][3]);

    const std::vector<double> zero{0.0};
    CHECK(score_sn(zero).scores[0] == 0.5);
    const std::vector<double> big{40.0};
    CHECK(score_sn(big).scores[0] < 1e-15);
    std::vector<double> sweep;
    for (double z = -10.0; z <= 10.0; z += 0.25) sweep.push_back(z);
    const auto sn = score_sn(sweep).scores;
    for (std::size_t i = 1; i < sn.size(); ++i) CHECK(sn[i] < sn[i - 1]);
}

TEST_CASE("softmax response of the classifier head") {
    const ProbMatrix sat{{0.2, 0.8, 0.0}, {0.5, 0.3, 0.2}};
    const ProbMatrix plain{{0.2, 0.8}, {0.5, 0.3}};
    CHECK(score_sr_of(sat, 2).scores[0] == score_sr(plain).scores[0]);
    // renormalized over the first C columns: 0.5 / 0.8
    CHECK(std::abs(score_sr_of(sat, 2).scores[1] - (1.0 - 0.625)) <= 1e-15);
    CHECK(score_sr_of(sat, 2, Method::SAT).method == Method::SAT);

    const auto p = random_probs(100, 3, 8);
    const auto a = score_sr_of(p, 3).scores;
    const auto b = score_sr(p).scores;
    for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-15);
}

TEST_CASE("orientation: less confidence never lowers the score") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(4);
        for (auto& v : z) v = rng.normal();
        const auto k = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        auto z2 = z;
        double second = -INFINITY;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != k) second = std::max(second, z[j]);
        z2[k] -= rng.uniform(0.0, 0.5) * (z[k] - second);
        const auto p1 = softmax(z);
        const auto p2 = softmax(z2);
        CHECK(score_sr({p2}).scores[0] >= score_sr({p1}).scores[0]);
        CHECK(score_de(std::vector<ProbMatrix>{{p2}, {p2}}).scores[0] >=
              score_de(std::vector<ProbMatrix>{{p1}, {p1}}).scores[0]);
        auto p3 = p1;
        p3[3] = std::min(1.0, p3[3] + 0.1);
        CHECK(score_sat({p3}).scores[0] >= score_sat({p1}).scores[0]);
    }
}

TEST_CASE("scores are pure functions of logged inputs") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.num_classes = 3;
    const auto data = gaussian_rows(60, 3, 1);
    TrainConfig tc;
    tc.checkpoint_interval = 5;
    PrivacyConfig pc;
    pc.sampling_rate = 0.2;
    pc.steps = 20;
    const auto r = train(data, spec, tc, pc, data);
    CHECK(score_sctd(r.log).scores == score_sctd(r.log).scores);
    CHECK(score_sr(r.log.final_probs).scores == score_sr(predict_probs(r.params, spec, data)).scores);
}

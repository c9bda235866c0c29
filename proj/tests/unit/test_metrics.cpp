#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tracegan/error.hpp"
#include "tracegan/metrics.hpp"

using namespace tracegan;

namespace {

FieldHistogram bins(std::vector<double> mass, double lo = 0.0, double hi = 1.0) {
    FieldHistogram h;
    h.discrete = false;
    h.mass = std::move(mass);
    h.lo = lo;
    h.hi = hi;
    return h;
}

TraceDataset uniform_trace(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    TraceDataset d;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = support::make_record("10.0.0." + std::to_string(gen() % 200), "172.16." + std::to_string(gen() % 4) + ".1",
                                      static_cast<std::uint16_t>(gen() % 65536), static_cast<std::uint16_t>(gen() % 65536),
                                      gen() % 2 ? "TCP" : "UDP", static_cast<std::uint8_t>(gen() % 256),
                                      std::string(1, static_cast<char>('A' + gen() % 6)),
                                      static_cast<std::uint8_t>(gen() % 256), static_cast<double>(gen() % 1000) / 100.0,
                                      static_cast<double>(40 + gen() % 1460));
        d.records.push_back(r);
    }
    return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("discrete histogram counts tokens") {
    const std::vector<std::string> v = {"A", "A", "B"}, s = {"A", "B", "C"};
    const auto h = discrete_histogram(v, s);
    CHECK(h.mass[0] == doctest::Approx(2.0 / 3.0));
    CHECK(h.mass[1] == doctest::Approx(1.0 / 3.0));
    CHECK(h.mass[2] == 0.0);
    const std::vector<std::string> bad = {"Z"};
    CHECK_THROWS_AS(discrete_histogram(bad, s), DataError);
}

TEST_CASE("continuous histogram handles edges and degenerate ranges") {
    const std::vector<double> v = {0.0, 0.5, 1.0, 1.0};
    const auto h = continuous_histogram(v, 0.0, 1.0, 2);
    CHECK(h.mass == std::vector<double>{0.25, 0.75});
    const std::vector<double> same = {3.0, 3.0};
    const auto d = continuous_histogram(same, 3.0, 3.0, 4);
    CHECK(d.mass[0] == 1.0);
}

TEST_CASE("JS divergence reference values") {
    const std::vector<double> p = {0.2, 0.3, 0.5};
    CHECK(js_divergence(p, p) == 0.0);
    const std::vector<double> a = {1, 0}, b = {0, 1};
    CHECK(js_divergence(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> c = {0.5, 0.5}, d = {1, 0};
    CHECK(std::abs(js_divergence(c, d) - 0.3112781244591328) < 1e-6);
    CHECK(std::abs(js_divergence(c, d) - support::js_oracle(c, d)) < 1e-12);
}

TEST_CASE("JS divergence agrees with the oracle, is symmetric and bounded") {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + gen() % 10;
        const auto p = support::random_distribution(n, gen);
        const auto q = support::random_distribution(n, gen);
        const double js = js_divergence(p, q);
        CHECK(std::abs(js - support::js_oracle(p, q)) < 1e-12);
        CHECK(js == doctest::Approx(js_divergence(q, p)).epsilon(1e-12));
        CHECK(js >= 0.0);
        CHECK(js <= 1.0 + 1e-12);
    }
}

TEST_CASE("disjoint token sets share a union support") {
    TraceDataset a, b;
    a.records.push_back(support::make_record("x", "y", 1, 2, "TCP", 0, "A", 64, 0, 40));
    b.records.push_back(support::make_record("x", "y", 1, 2, "UDP", 0, "A", 64, 0, 40));
    const auto rows = evaluate(a, b, "v");
    CHECK(rows[field_index(Field::protocol)].value == doctest::Approx(1.0));
    CHECK(rows[field_index(Field::src_ip)].value == 0.0);
}

TEST_CASE("normalized EMD extremes") {
    CHECK(emd_normalized(bins({0.2, 0.8}), bins({0.2, 0.8})) == 0.0);
    for (std::size_t B : {2u, 5u, 100u}) {
        std::vector<double> first(B, 0.0), last(B, 0.0);
        first.front() = 1.0;
        last.back() = 1.0;
        CHECK(emd_normalized(bins(first), bins(last)) ==
              doctest::Approx(1.0 - 1.0 / static_cast<double>(B)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(emd_normalized(bins({1.0}), bins({0.5, 0.5})), DataError);
}

TEST_CASE("normalized EMD matches a min-cost transport solver") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + gen() % 8;
        const auto p = support::random_distribution(n, gen);
        const auto q = support::random_distribution(n, gen);
        const double oracle = support::transport_oracle(p, q) / static_cast<double>(n);
        CHECK(std::abs(emd_normalized(bins(p), bins(q)) - oracle) < 1e-9);
    }
}

TEST_CASE("self comparison is all zeros") {
    const auto d = generate_reference(ReferenceSpec::correlated(500, 2));
    const auto rows = evaluate(d, d, "self");
    REQUIRE(rows.size() == 10);
    for (const auto& r : rows) CHECK(r.value == 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(rows[i].field == kAllFields[i]);
        CHECK(rows[i].metric == (i < 7 ? MetricKind::js : MetricKind::emd_norm));
    }
}

TEST_CASE("resampled halves are close, a uniform trace is far") {
    const auto d = generate_reference(ReferenceSpec::correlated(10000, 13));
    TraceDataset a, b;
    for (std::size_t i = 0; i < d.size(); ++i) (i % 2 ? b : a).records.push_back(d.records[i]);
    const auto halves = evaluate(a, b, "halves");
    for (const auto& r : halves) CHECK(r.value < 0.1);
    const auto far = evaluate(a, uniform_trace(5000, 1), "uniform");
    CHECK(mean_js(far) > mean_js(halves));
}

TEST_CASE("metrics csv and svg report") {
    support::TempDir dir;
    const auto d = generate_reference(ReferenceSpec::correlated(300, 3));
    const auto e = generate_reference(ReferenceSpec::correlated(300, 4));
    std::vector<FidelityRow> rows;
    for (const char* v : {"onehot-wgan", "word2vec-wgan", "word2vec-gnn-wgan"}) {
        const auto part = evaluate(d, e, v);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    emit_report(rows, dir / "out");
    const auto back = read_metrics_csv(dir / "out" / "metrics.csv");
    REQUIRE(back.size() == 30);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].variant == rows[i].variant);
        CHECK(back[i].field == rows[i].field);
        CHECK(back[i].metric == rows[i].metric);
        CHECK(back[i].value == rows[i].value);
    }
    const auto svg = support::read_text(dir / "out" / "report.svg");
    std::size_t bars = 0;
    for (std::size_t pos = 0; (pos = svg.find("class=\"bar\"", pos)) != std::string::npos; ++pos) ++bars;
    CHECK(bars == 30);
    CHECK(svg.rfind("<?xml", 0) == 0);
}

}  // TEST_SUITE

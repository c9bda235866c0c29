#include <algorithm>
#include <cmath>

#include "tracegan/error.hpp"
#include "tracegan/rng.hpp"
#include "tracegan/trace_io.hpp"

namespace tracegan {

namespace {

template <typename T>
const T& pick(const std::vector<Weighted<T>>& options, Rng& rng) {
    std::vector<double> w;
    w.reserve(options.size());
    for (const auto& o : options) w.push_back(o.weight);
    return options[rng.categorical(w)].value;
}

double sample_mixture(const std::vector<GaussianComponent>& mix, Rng& rng) {
    std::vector<double> w;
    w.reserve(mix.size());
    for (const auto& c : mix) w.push_back(c.weight);
    const auto& c = mix[rng.categorical(w)];
    return rng.normal(c.mean, c.stddev);
}

void check_spec(const ReferenceSpec& spec) {
    if (spec.n_records == 0) throw DataError("reference spec: n_records must be positive");
    if (spec.protocol.empty()) throw DataError("reference spec: no protocols");
    for (const auto& p : spec.protocol) {
        if (!spec.dst_port_by_protocol.contains(p.value) || !spec.flag_by_protocol.contains(p.value) ||
            !spec.pkt_len_by_protocol.contains(p.value))
            throw DataError("reference spec: protocol " + p.value + " needs dst_port, flag and pkt_len rules");
    }
    if (spec.tos.empty() || spec.ttl.empty()) throw DataError("reference spec: tos and ttl rules required");
    if (spec.client_count == 0 || spec.src_port_pool == 0) throw DataError("reference spec: empty address pools");
    if (spec.default_servers.empty()) throw DataError("reference spec: default_servers is empty");
    if (!(spec.arrival_rate > 0.0)) throw DataError("reference spec: arrival_rate must be positive");
}

}  // namespace

ReferenceSpec ReferenceSpec::correlated(std::size_t n_records, std::uint64_t seed) {
    ReferenceSpec s;
    s.n_records = n_records;
    s.seed = seed;
    s.protocol = {{"TCP", 0.7}, {"UDP", 0.3}};
    s.dst_port_by_protocol = {
        {"TCP", {{80, 0.45}, {443, 0.40}, {22, 0.15}}},
        {"UDP", {{53, 0.75}, {123, 0.25}}},
    };
    s.flag_by_protocol = {
        {"TCP", {{"A", 0.55}, {"PA", 0.25}, {"S", 0.08}, {"SA", 0.07}, {"FA", 0.05}}},
        {"UDP", {{"NONE", 1.0}}},
    };
    s.pkt_len_by_protocol = {
        {"TCP", {{0.40, 52.0, 4.0}, {0.35, 1500.0, 0.0}, {0.25, 600.0, 200.0}}},
        {"UDP", {{0.70, 80.0, 10.0}, {0.30, 200.0, 40.0}}},
    };
    s.servers_by_port = {
        {80, {"172.16.0.10", "172.16.0.11"}},
        {443, {"172.16.0.11", "172.16.0.12", "172.16.0.13"}},
        {22, {"172.16.1.5"}},
        {53, {"172.16.2.53", "172.16.2.54"}},
        {123, {"172.16.2.123"}},
    };
    s.default_servers = {"172.16.9.1"};
    s.tos = {{0, 0.85}, {8, 0.10}, {184, 0.05}};
    s.ttl = {{0.50, 64.0, 3.0}, {0.35, 128.0, 4.0}, {0.15, 250.0, 2.0}};
    return s;
}

TraceDataset generate_reference(const ReferenceSpec& spec) {
    check_spec(spec);
    Rng rng(spec.seed);

    std::vector<double> client_weights(spec.client_count);
    for (std::size_t i = 0; i < spec.client_count; ++i)
        client_weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.client_zipf);

    TraceDataset d;
    d.source_label = "synthetic";
    d.records.reserve(spec.n_records);
    std::int64_t clock_us = 0;
    for (std::size_t n = 0; n < spec.n_records; ++n) {
        HeaderRecord r;
        r.protocol = pick(spec.protocol, rng);
        r.dst_port = static_cast<std::uint16_t>(pick(spec.dst_port_by_protocol.at(r.protocol), rng));

        const auto servers = spec.servers_by_port.find(r.dst_port);
        const auto& pool = servers != spec.servers_by_port.end() ? servers->second : spec.default_servers;
        r.dst_ip = pool[rng.uniform_index(pool.size())];

        const std::size_t client = rng.categorical(client_weights);
        r.src_ip = "10.0." + std::to_string(client / 250) + "." + std::to_string(client % 250 + 1);
        r.src_port = static_cast<std::uint16_t>(49152 + (509 * rng.uniform_index(spec.src_port_pool)) % 16384);

        r.tos = static_cast<std::uint8_t>(pick(spec.tos, rng));
        r.flag = pick(spec.flag_by_protocol.at(r.protocol), rng);
        r.ttl = static_cast<std::uint8_t>(std::clamp(std::round(sample_mixture(spec.ttl, rng)), 1.0, 255.0));
        r.pkt_len = std::clamp(std::round(sample_mixture(spec.pkt_len_by_protocol.at(r.protocol), rng)), 20.0,
                               65535.0);

        if (n > 0) clock_us += std::max<std::int64_t>(1, std::llround(rng.exponential(spec.arrival_rate) * 1e6));
        r.time = static_cast<double>(clock_us) / 1e6;
        d.records.push_back(std::move(r));
    }
    return d;
}

}  // namespace tracegan

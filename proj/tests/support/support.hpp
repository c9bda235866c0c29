#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tracegan/diff.hpp"
#include "tracegan/trace_io.hpp"

namespace support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "tracegan") {
        std::random_device rd;
        path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- PCAP construction -----------------------------------------------------------

struct PacketSpec {
    enum Kind { tcp, udp, arp } kind = tcp;
    std::array<std::uint8_t, 4> src{10, 0, 0, 1};
    std::array<std::uint8_t, 4> dst{10, 0, 0, 2};
    std::uint16_t src_port = 1234;
    std::uint16_t dst_port = 80;
    std::uint8_t tos = 0;
    std::uint8_t ttl = 64;
    std::uint8_t tcp_flags = 0x02;
    std::uint16_t total_length = 40;
    std::uint32_t ts_sec = 1'700'000'000;
    std::uint32_t ts_usec = 0;
};

/// Writes a classic PCAP file byte by byte. `big_endian` selects the byte order
/// of the global and record headers (network headers are always big-endian).
class PcapBuilder {
public:
    explicit PcapBuilder(bool big_endian) : big_(big_endian) {
        u32(0xa1b2c3d4);
        u16(2);
        u16(4);
        u32(0);
        u32(0);
        u32(65535);
        u32(1);  // LINKTYPE_ETHERNET
    }

    PcapBuilder& add(const PacketSpec& p) {
        std::vector<std::uint8_t> frame = ethernet(p.kind == PacketSpec::arp ? 0x0806 : 0x0800);
        if (p.kind == PacketSpec::arp) {
            frame.resize(frame.size() + 28, 0);
        } else {
            const std::size_t ip_at = frame.size();
            frame.resize(ip_at + p.total_length, 0);
            std::uint8_t* ip = frame.data() + ip_at;
            ip[0] = 0x45;
            ip[1] = p.tos;
            be16(ip + 2, p.total_length);
            ip[8] = p.ttl;
            ip[9] = p.kind == PacketSpec::tcp ? 6 : 17;
            std::copy(p.src.begin(), p.src.end(), ip + 12);
            std::copy(p.dst.begin(), p.dst.end(), ip + 16);
            std::uint8_t* l4 = ip + 20;
            be16(l4, p.src_port);
            be16(l4 + 2, p.dst_port);
            if (p.kind == PacketSpec::tcp) {
                l4[12] = 0x50;
                l4[13] = p.tcp_flags;
            } else {
                be16(l4 + 4, static_cast<std::uint16_t>(p.total_length - 20));
            }
        }
        u32(p.ts_sec);
        u32(p.ts_usec);
        u32(static_cast<std::uint32_t>(frame.size()));
        u32(static_cast<std::uint32_t>(frame.size()));
        bytes_.insert(bytes_.end(), frame.begin(), frame.end());
        return *this;
    }

    void write(const fs::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    static std::vector<std::uint8_t> ethernet(std::uint16_t ether_type) {
        std::vector<std::uint8_t> f(14, 0);
        for (int i = 0; i < 6; ++i) f[static_cast<std::size_t>(i)] = 0x02;
        for (int i = 6; i < 12; ++i) f[static_cast<std::size_t>(i)] = 0x04;
        be16(f.data() + 12, ether_type);
        return f;
    }
    static void be16(std::uint8_t* p, std::uint16_t v) {
        p[0] = static_cast<std::uint8_t>(v >> 8);
        p[1] = static_cast<std::uint8_t>(v);
    }
    void u16(std::uint16_t v) {
        if (big_) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
            bytes_.push_back(static_cast<std::uint8_t>(v));
        } else {
            bytes_.push_back(static_cast<std::uint8_t>(v));
            bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
        }
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            const int shift = big_ ? 24 - 8 * i : 8 * i;
            bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
        }
    }

    bool big_;
    std::vector<std::uint8_t> bytes_;
};

inline std::string quad(const std::array<std::uint8_t, 4>& a) {
    return std::to_string(a[0]) + "." + std::to_string(a[1]) + "." + std::to_string(a[2]) + "." +
           std::to_string(a[3]);
}

// ---- numeric oracles ------------------------------------------------------------------

/// |a - b| relative to the larger magnitude, with an absolute floor for values near zero.
inline double relative_error(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of `f` with respect to every entry of `x`.
inline tracegan::diff::Matrix numeric_gradient(const std::function<double()>& f, tracegan::diff::Matrix& x,
                                               double eps = 1e-5) {
    tracegan::diff::Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + eps;
        const double up = f();
        x.data()[i] = keep - eps;
        const double down = f();
        x.data()[i] = keep;
        g.data()[i] = (up - down) / (2 * eps);
    }
    return g;
}

/// Worst relative error between an analytic and a numeric gradient.
inline double worst_relative_error(const tracegan::diff::Matrix& analytic, const tracegan::diff::Matrix& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic.data()[i], numeric.data()[i]));
    return worst;
}

/// JS divergence in bits straight from the two KL sums.
inline double js_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    double kl_p = 0.0, kl_q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0) kl_p += p[i] * std::log2(p[i] / m);
        if (q[i] > 0) kl_q += q[i] * std::log2(q[i] / m);
    }
    return 0.5 * kl_p + 0.5 * kl_q;
}

/// Minimum-cost transport between two histograms on bins 0..n-1 with ground
/// cost |i - j|, solved as min-cost flow by successive shortest paths
/// (Bellman-Ford on the residual graph). Returns the cost in bin units.
inline double transport_oracle(const std::vector<double>& supply, const std::vector<double>& demand) {
    const std::size_t n = supply.size();
    const std::size_t source = 2 * n, sink = 2 * n + 1, nodes = 2 * n + 2;
    struct Edge {
        std::size_t to;
        double cap;
        double cost;
        std::size_t rev;
    };
    std::vector<std::vector<Edge>> g(nodes);
    const double inf = std::numeric_limits<double>::infinity();
    auto link = [&](std::size_t a, std::size_t b, double cap, double cost) {
        g[a].push_back({b, cap, cost, g[b].size()});
        g[b].push_back({a, 0.0, -cost, g[a].size() - 1});
    };
    for (std::size_t i = 0; i < n; ++i) {
        link(source, i, supply[i], 0.0);
        link(n + i, sink, demand[i], 0.0);
        for (std::size_t j = 0; j < n; ++j)
            link(i, n + j, inf, std::abs(static_cast<double>(i) - static_cast<double>(j)));
    }
    double total = 0.0;
    constexpr double kTiny = 1e-15;
    for (;;) {
        std::vector<double> dist(nodes, inf);
        std::vector<std::pair<std::size_t, std::size_t>> prev(nodes, {nodes, 0});
        dist[source] = 0.0;
        for (std::size_t round = 0; round < nodes; ++round) {
            bool changed = false;
            for (std::size_t u = 0; u < nodes; ++u) {
                if (dist[u] == inf) continue;
                for (std::size_t k = 0; k < g[u].size(); ++k) {
                    const Edge& e = g[u][k];
                    if (e.cap > kTiny && dist[u] + e.cost < dist[e.to] - 1e-12) {
                        dist[e.to] = dist[u] + e.cost;
                        prev[e.to] = {u, k};
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (dist[sink] == inf) break;
        double push = inf;
        for (std::size_t v = sink; v != source; v = prev[v].first) push = std::min(push, g[prev[v].first][prev[v].second].cap);
        for (std::size_t v = sink; v != source; v = prev[v].first) {
            Edge& e = g[prev[v].first][prev[v].second];
            e.cap -= push;
            g[e.to][e.rev].cap += push;
        }
        total += push * dist[sink];
    }
    return total;
}

/// Random probability vector of length n; some entries may be exactly zero.
inline std::vector<double> random_distribution(std::size_t n, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& v : p) {
        v = u(gen) < 0.25 ? 0.0 : u(gen);
        s += v;
    }
    if (s == 0.0) {
        p[0] = 1.0;
        return p;
    }
    for (auto& v : p) v /= s;
    return p;
}

// ---- small traces -----------------------------------------------------------------------

inline tracegan::HeaderRecord make_record(std::string src, std::string dst, std::uint16_t sport,
                                          std::uint16_t dport, std::string proto, std::uint8_t tos,
                                          std::string flag, std::uint8_t ttl, double time, double len) {
    tracegan::HeaderRecord r;
    r.src_ip = std::move(src);
    r.dst_ip = std::move(dst);
    r.src_port = sport;
    r.dst_port = dport;
    r.protocol = std::move(proto);
    r.tos = tos;
    r.flag = std::move(flag);
    r.ttl = ttl;
    r.time = time;
    r.pkt_len = len;
    return r;
}

}  // namespace support

namespace support {

/// Fills `m` with multiples of 1/8 in [-1, 1]. Sums and products of such values stay
/// exactly representable, so reordered accumulations give bit-identical results.
inline void dyadic_fill(tracegan::diff::Matrix& m, std::mt19937_64& gen) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<int>(gen() % 17) - 8) / 8.0;
}

/// Row permutation inside every block of `block` rows: out row p[i] = in row i.
inline tracegan::diff::Matrix permute_blocks(const tracegan::diff::Matrix& in, const std::vector<std::size_t>& p) {
    tracegan::diff::Matrix out(in.rows(), in.cols());
    const auto block = static_cast<Eigen::Index>(p.size());
    for (Eigen::Index b = 0; b < in.rows(); b += block)
        for (Eigen::Index i = 0; i < block; ++i) out.row(b + static_cast<Eigen::Index>(p[static_cast<std::size_t>(i)])) = in.row(b + i);
    return out;
}

}  // namespace support

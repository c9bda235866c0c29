#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>

#include "tracegan/error.hpp"
#include "tracegan/trace_io.hpp"

namespace tracegan {

namespace {

constexpr std::uint32_t kMagicNative = 0xa1b2c3d4;
constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
constexpr std::size_t kGlobalHeaderSize = 24;
constexpr std::size_t kRecordHeaderSize = 16;
constexpr std::size_t kEthernetHeaderSize = 14;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint8_t kIpProtoTcp = 6;
constexpr std::uint8_t kIpProtoUdp = 17;

std::uint16_t load_be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t load_u32(const std::uint8_t* p, bool big_endian) {
    if (big_endian)
        return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) | p[0];
}

std::string dotted_quad(const std::uint8_t* p) {
    return std::to_string(p[0]) + '.' + std::to_string(p[1]) + '.' + std::to_string(p[2]) + '.' +
           std::to_string(p[3]);
}

std::string tcp_flag_token(std::uint8_t flags) {
    static constexpr std::pair<std::uint8_t, char> kOrder[] = {
        {0x01, 'F'}, {0x02, 'S'}, {0x04, 'R'}, {0x08, 'P'}, {0x10, 'A'}, {0x20, 'U'},
    };
    std::string out;
    for (auto [bit, letter] : kOrder)
        if (flags & bit) out.push_back(letter);
    return out.empty() ? "NONE" : out;
}

// Decodes one Ethernet frame; nullopt means "skip".
std::optional<HeaderRecord> decode_frame(std::span<const std::uint8_t> frame) {
    if (frame.size() < kEthernetHeaderSize + 20) return std::nullopt;
    if (load_be16(frame.data() + 12) != kEtherTypeIpv4) return std::nullopt;

    const auto ip = frame.subspan(kEthernetHeaderSize);
    if ((ip[0] >> 4) != 4) return std::nullopt;
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || ip.size() < ihl) return std::nullopt;
    const std::uint16_t frag = load_be16(ip.data() + 6);
    if ((frag & 0x2000) || (frag & 0x1fff)) return std::nullopt;  // MF set or non-zero offset

    const std::uint8_t proto = ip[9];
    const std::size_t l4_min = proto == kIpProtoTcp ? 20 : proto == kIpProtoUdp ? 8 : 0;
    if (l4_min == 0 || ip.size() < ihl + l4_min) return std::nullopt;
    const auto l4 = ip.subspan(ihl);

    HeaderRecord r;
    r.tos = ip[1];
    r.pkt_len = load_be16(ip.data() + 2);
    r.ttl = ip[8];
    r.src_ip = dotted_quad(ip.data() + 12);
    r.dst_ip = dotted_quad(ip.data() + 16);
    r.src_port = load_be16(l4.data());
    r.dst_port = load_be16(l4.data() + 2);
    if (proto == kIpProtoTcp) {
        r.protocol = "TCP";
        r.flag = tcp_flag_token(l4[13]);
    } else {
        r.protocol = "UDP";
        r.flag = "NONE";
    }
    if (!(r.pkt_len > 0.0)) return std::nullopt;
    return r;
}

}  // namespace

TraceDataset read_pcap(const std::filesystem::path& path, PcapStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < kGlobalHeaderSize) throw DataError(path.string() + ": truncated PCAP global header");
    bool big_endian;
    if (load_u32(bytes.data(), true) == kMagicNative)
        big_endian = true;
    else if (load_u32(bytes.data(), true) == kMagicSwapped)
        big_endian = false;
    else
        throw DataError(path.string() + ": bad PCAP magic");

    PcapStats local;
    TraceDataset d;
    d.source_label = path.filename().string();
    std::vector<std::int64_t> stamps_us;
    std::size_t offset = kGlobalHeaderSize;
    while (offset < bytes.size()) {
        if (bytes.size() - offset < kRecordHeaderSize)
            throw DataError(path.string() + ": truncated record header at byte " + std::to_string(offset));
        const std::uint8_t* h = bytes.data() + offset;
        const std::uint32_t ts_sec = load_u32(h, big_endian);
        const std::uint32_t ts_usec = load_u32(h + 4, big_endian);
        const std::uint32_t incl_len = load_u32(h + 8, big_endian);
        offset += kRecordHeaderSize;
        if (bytes.size() - offset < incl_len)
            throw DataError(path.string() + ": truncated packet data at byte " + std::to_string(offset));
        ++local.packets;

        auto rec = decode_frame(std::span(bytes.data() + offset, incl_len));
        offset += incl_len;
        if (!rec) {
            ++local.skipped;
            continue;
        }
        stamps_us.push_back(std::int64_t{ts_sec} * 1'000'000 + ts_usec);
        d.records.push_back(std::move(*rec));
        ++local.decoded;
    }
    // Rebase in integer microseconds so deltas convert to seconds with a single rounding.
    if (!stamps_us.empty()) {
        const std::int64_t t0 = *std::min_element(stamps_us.begin(), stamps_us.end());
        for (std::size_t i = 0; i < d.records.size(); ++i)
            d.records[i].time = static_cast<double>(stamps_us[i] - t0) / 1e6;
    }
    if (stats) *stats = local;
    return d;
}

}  // namespace tracegan

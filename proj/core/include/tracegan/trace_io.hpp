#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tracegan {

/// Header fields in canonical order: seven discrete fields then three continuous.
enum class Field : std::uint8_t {
    src_ip,
    dst_ip,
    src_port,
    dst_port,
    protocol,
    tos,
    flag,
    ttl,
    time,
    pkt_len,
};

inline constexpr std::size_t kFieldCount = 10;
inline constexpr std::size_t kDiscreteFieldCount = 7;
inline constexpr std::size_t kContinuousFieldCount = 3;

inline constexpr std::array<Field, kFieldCount> kAllFields = {
    Field::src_ip, Field::dst_ip,   Field::src_port, Field::dst_port, Field::protocol,
    Field::tos,    Field::flag,     Field::ttl,      Field::time,     Field::pkt_len,
};

constexpr std::size_t field_index(Field f) { return static_cast<std::size_t>(f); }
constexpr bool is_discrete(Field f) { return field_index(f) < kDiscreteFieldCount; }

std::string_view field_name(Field f);
std::optional<Field> field_from_name(std::string_view name);

/// One packet's header tuple.
struct HeaderRecord {
    std::string src_ip;
    std::string dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::string protocol;
    std::uint8_t tos = 0;
    std::string flag;
    std::uint8_t ttl = 0;
    double time = 0.0;     ///< seconds since trace start
    double pkt_len = 1.0;  ///< IPv4 total length in bytes

    bool operator==(const HeaderRecord&) const = default;
};

/// Text token of a discrete field (ports and tos rendered in decimal).
std::string discrete_token(const HeaderRecord& r, Field f);
/// Numeric value of a continuous field.
double continuous_value(const HeaderRecord& r, Field f);

/// Assigns a discrete field from its token. Throws DataError when the token
/// does not parse for an integer field.
void set_discrete(HeaderRecord& r, Field f, std::string_view token);
/// Assigns a continuous field, rounding and clamping ttl into [0, 255].
void set_continuous(HeaderRecord& r, Field f, double value);

/// Throws DataError if the record violates a range invariant.
void validate_record(const HeaderRecord& r);

struct TraceDataset {
    std::vector<HeaderRecord> records;
    std::string source_label;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }
};

/// Shifts every timestamp so the earliest becomes zero.
void rebase_time(TraceDataset& d);

TraceDataset read_csv(const std::filesystem::path& path);
void write_csv(const TraceDataset& dataset, const std::filesystem::path& path);

struct PcapStats {
    std::size_t packets = 0;
    std::size_t decoded = 0;
    std::size_t skipped = 0;  ///< non-IPv4, non-TCP/UDP, fragments, short captures
};

/// Reads a classic (non-ng) PCAP capture with an Ethernet II link layer.
TraceDataset read_pcap(const std::filesystem::path& path, PcapStats* stats = nullptr);

template <typename T>
struct Weighted {
    T value;
    double weight;
};

struct GaussianComponent {
    double weight;
    double mean;
    double stddev;
};

/// Correlation rules for the seeded synthetic reference trace.
struct ReferenceSpec {
    std::size_t n_records = 2000;
    std::uint64_t seed = 7;

    std::vector<Weighted<std::string>> protocol;
    std::map<std::string, std::vector<Weighted<int>>> dst_port_by_protocol;
    std::map<std::string, std::vector<Weighted<std::string>>> flag_by_protocol;
    std::map<std::string, std::vector<GaussianComponent>> pkt_len_by_protocol;
    /// Server addresses per destination port; ports without an entry use `default_servers`.
    std::map<int, std::vector<std::string>> servers_by_port;
    std::vector<std::string> default_servers;
    std::vector<Weighted<int>> tos;
    std::vector<GaussianComponent> ttl;

    std::size_t client_count = 16;   ///< Zipf-weighted client address pool
    double client_zipf = 1.1;
    std::size_t src_port_pool = 32;  ///< ephemeral ports drawn uniformly from this many
    double arrival_rate = 200.0;     ///< packets per second, Poisson arrivals

    /// Web/DNS/SSH/NTP mix with protocol-dependent ports, flags and lengths.
    static ReferenceSpec correlated(std::size_t n_records = 2000, std::uint64_t seed = 7);
};

/// Pure function of the spec: identical specs give identical traces.
TraceDataset generate_reference(const ReferenceSpec& spec);

}  // namespace tracegan

#include "tracegan/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "detail/text.hpp"
#include "tracegan/error.hpp"

namespace tracegan {

namespace {

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "src_ip", "dst_ip", "src_port", "dst_port", "protocol", "tos", "flag", "ttl", "time", "pkt_len",
};

template <typename Int>
Int parse_bounded(std::string_view token, Field f) {
    const auto v = detail::parse_number<long long>(token);
    if (!v || *v < 0 || *v > static_cast<long long>(std::numeric_limits<Int>::max()))
        throw DataError("field " + std::string(field_name(f)) + ": invalid value '" + std::string(token) + "'");
    return static_cast<Int>(*v);
}

}  // namespace

std::string_view field_name(Field f) { return kFieldNames[field_index(f)]; }

std::optional<Field> field_from_name(std::string_view name) {
    for (Field f : kAllFields)
        if (field_name(f) == name) return f;
    return std::nullopt;
}

std::string discrete_token(const HeaderRecord& r, Field f) {
    switch (f) {
        case Field::src_ip: return r.src_ip;
        case Field::dst_ip: return r.dst_ip;
        case Field::src_port: return std::to_string(r.src_port);
        case Field::dst_port: return std::to_string(r.dst_port);
        case Field::protocol: return r.protocol;
        case Field::tos: return std::to_string(r.tos);
        case Field::flag: return r.flag;
        default: break;
    }
    throw std::invalid_argument("discrete_token: " + std::string(field_name(f)) + " is continuous");
}

double continuous_value(const HeaderRecord& r, Field f) {
    switch (f) {
        case Field::ttl: return r.ttl;
        case Field::time: return r.time;
        case Field::pkt_len: return r.pkt_len;
        default: break;
    }
    throw std::invalid_argument("continuous_value: " + std::string(field_name(f)) + " is discrete");
}

void set_discrete(HeaderRecord& r, Field f, std::string_view token) {
    switch (f) {
        case Field::src_ip: r.src_ip = token; return;
        case Field::dst_ip: r.dst_ip = token; return;
        case Field::src_port: r.src_port = parse_bounded<std::uint16_t>(token, f); return;
        case Field::dst_port: r.dst_port = parse_bounded<std::uint16_t>(token, f); return;
        case Field::protocol: r.protocol = token; return;
        case Field::tos: r.tos = parse_bounded<std::uint8_t>(token, f); return;
        case Field::flag: r.flag = token; return;
        default: break;
    }
    throw std::invalid_argument("set_discrete: " + std::string(field_name(f)) + " is continuous");
}

void set_continuous(HeaderRecord& r, Field f, double value) {
    switch (f) {
        case Field::ttl: r.ttl = static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0)); return;
        case Field::time: r.time = value; return;
        case Field::pkt_len: r.pkt_len = value; return;
        default: break;
    }
    throw std::invalid_argument("set_continuous: " + std::string(field_name(f)) + " is discrete");
}

void validate_record(const HeaderRecord& r) {
    if (r.src_ip.empty() || r.dst_ip.empty() || r.protocol.empty() || r.flag.empty())
        throw DataError("record has an empty token field");
    if (!(r.time >= 0.0) || !std::isfinite(r.time)) throw DataError("record time must be finite and >= 0");
    if (!(r.pkt_len > 0.0) || !std::isfinite(r.pkt_len)) throw DataError("record pkt_len must be finite and > 0");
}

void rebase_time(TraceDataset& d) {
    if (d.records.empty()) return;
    double t0 = d.records.front().time;
    for (const auto& r : d.records) t0 = std::min(t0, r.time);
    for (auto& r : d.records) r.time -= t0;
}

TraceDataset read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) throw DataError(path.string() + ": empty file");

    // column position of each canonical field
    std::array<std::size_t, kFieldCount> column{};
    column.fill(std::numeric_limits<std::size_t>::max());
    const auto header = detail::split(detail::trim(line), ',');
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = detail::trim(header[i]);
        if (const auto f = field_from_name(name)) column[field_index(*f)] = i;
    }
    for (Field f : kAllFields)
        if (column[field_index(f)] == std::numeric_limits<std::size_t>::max())
            throw DataError(path.string() + ": missing column '" + std::string(field_name(f)) + "'");

    TraceDataset d;
    d.source_label = path.filename().string();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto cells = detail::split(trimmed, ',');
        const auto where = [&](Field f) {
            return path.string() + ": row " + std::to_string(row) + ", column '" + std::string(field_name(f)) + "'";
        };
        HeaderRecord r;
        for (Field f : kAllFields) {
            const std::size_t c = column[field_index(f)];
            if (c >= cells.size()) throw DataError(where(f) + ": missing cell");
            const auto cell = detail::trim(cells[c]);
            if (is_discrete(f)) {
                if (cell.empty()) throw DataError(where(f) + ": empty cell");
                try {
                    set_discrete(r, f, cell);
                } catch (const DataError&) {
                    throw DataError(where(f) + ": cannot parse '" + std::string(cell) + "'");
                }
            } else {
                const auto v = detail::parse_number<double>(cell);
                if (!v || !std::isfinite(*v) || (f == Field::ttl && (*v < 0.0 || *v > 255.0)))
                    throw DataError(where(f) + ": cannot parse '" + std::string(cell) + "'");
                set_continuous(r, f, *v);
            }
        }
        if (!(r.pkt_len > 0.0)) throw DataError(where(Field::pkt_len) + ": must be positive");
        d.records.push_back(std::move(r));
    }
    if (d.records.empty()) throw DataError(path.string() + ": no data rows");
    rebase_time(d);
    return d;
}

void write_csv(const TraceDataset& dataset, const std::filesystem::path& path) {
    if (dataset.empty()) throw DataError("write_csv: dataset is empty");
    std::ostringstream out;
    for (std::size_t i = 0; i < kFieldCount; ++i) out << (i ? "," : "") << field_name(kAllFields[i]);
    out << '\n';
    for (const auto& r : dataset.records) {
        out << r.src_ip << ',' << r.dst_ip << ',' << r.src_port << ',' << r.dst_port << ',' << r.protocol << ','
            << static_cast<int>(r.tos) << ',' << r.flag << ',' << static_cast<int>(r.ttl) << ','
            << detail::format_double(r.time) << ',' << detail::format_double(r.pkt_len) << '\n';
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write " + path.string());
    file << out.str();
    if (!file) throw IoError("write failed: " + path.string());
}

}  // namespace tracegan

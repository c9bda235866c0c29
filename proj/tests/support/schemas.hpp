#pragma once

// Random schemas and small corpora shared by the encoding tests and the acceptance run.

#include <random>
#include <string>
#include <vector>

#include "support.hpp"
#include "tracegan/encoding.hpp"

namespace support {

using tracegan::Field;
using tracegan::FieldSchema;
using tracegan::FieldSpec;
using tracegan::HeaderRecord;
using tracegan::is_discrete;
using tracegan::kAllFields;
using tracegan::TraceDataset;

/// Random schema plus the cardinalities it was built from.
struct RandomSchema {
    FieldSchema schema;
    std::vector<std::size_t> cards;
};

inline RandomSchema random_schema(std::mt19937_64& gen) {
    RandomSchema out;
    std::vector<FieldSpec> specs;
    for (Field f : kAllFields) {
        if (is_discrete(f)) {
            const std::size_t k = 1 + gen() % 6;
            std::vector<std::string> vocab;
            for (std::size_t i = 0; i < k; ++i) {
                // Integer fields need integer tokens to decode back into records.
                vocab.push_back(std::to_string(10 + i));
            }
            specs.push_back(FieldSpec::discrete(f, vocab, vocab.front()));
            out.cards.push_back(k + 1);
        } else {
            const std::size_t m = 1 + gen() % 5;
            const double step = 2.0 * static_cast<double>(1 + gen() % 8);
            std::vector<double> edges;
            for (std::size_t i = 0; i <= m; ++i) edges.push_back(2.0 + step * static_cast<double>(i));
            specs.push_back(FieldSpec::continuous(f, edges));
            out.cards.push_back(m);
        }
    }
    out.schema = FieldSchema(std::move(specs));
    return out;
}

/// Record whose every field sits on a random slot of `schema` (midpoints for continuous fields).
inline HeaderRecord random_slot_record(const FieldSchema& schema, std::mt19937_64& gen, bool allow_oov = false) {
    HeaderRecord r;
    for (const auto& spec : schema.fields()) {
        std::size_t slots = spec.cardinality();
        if (spec.is_discrete() && !allow_oov) slots -= 1;
        spec.assign(r, gen() % slots);
    }
    return r;
}

inline TraceDataset port_corpus(std::uint64_t seed) {
    // Ports 80 and 443 share every context token; 53 lives in a disjoint context.
    std::mt19937_64 gen(seed);
    TraceDataset d;
    for (int i = 0; i < 600; ++i) {
        const int kind = static_cast<int>(gen() % 3);
        HeaderRecord r;
        if (kind < 2) {
            r = make_record("10.0.0." + std::to_string(1 + gen() % 3), "172.16.0.10",
                            static_cast<std::uint16_t>(50000 + gen() % 4), kind == 0 ? 80 : 443, "TCP", 0,
                            gen() % 2 ? "A" : "PA", 64, 0.0, 1500);
        } else {
            r = make_record("10.9.9." + std::to_string(1 + gen() % 3), "172.16.2.53",
                            static_cast<std::uint16_t>(40000 + gen() % 4), 53, "UDP", 8, "NONE", 128, 0.0,
                            80);
        }
        r.time = i * 0.01;
        d.records.push_back(r);
    }
    return d;
}

}  // namespace support

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "voltscope/trace.hpp"

namespace voltscope {

// ITRC binary trace container, little-endian.
//
// header, 24 bytes:
//   magic "ITRC" (4) | version u16 = 1 | flags u16 | n_traces u32 |
//   n_samples u32 (0 if ragged) | n_islands u8 | dtype u8 = 0 (f32) |
//   batch_size u16 | reserved u32 = 0
// flags: bit0 key present, bit1 batch traces / ragged lengths.
//
// per trace:
//   plaintext 16 | key 16 iff bit0 | island_voltages n_islands x f32 |
//   [length u32 iff bit1] | samples length x f32
//
// Output is byte-for-byte deterministic for a given set.
void write_trace_file(const TraceSet &set, const std::string &path);

TraceSet read_trace_file(const std::string &path);

// Column layout for CSV capture imports. Indices are 0-based columns;
// every column not named here is parsed as a numeric sample.
struct CsvColumnMap {
    std::size_t plaintext_column = 0; // 32 hex chars
    std::optional<std::size_t> key_column;
    bool header_row = false;
};

// Imported sets carry a nominal single-island config (v = 1.0).
TraceSet import_csv(const std::string &path, const CsvColumnMap &map = {});

// Parses 32 hex characters into a 16-byte block. Used for plaintext and key
// columns in CSV imports and for --key style command-line arguments.
Block16 parse_hex_block(const std::string &s);

} // namespace voltscope

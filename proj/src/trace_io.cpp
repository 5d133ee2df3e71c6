#include "voltscope/trace_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace voltscope {

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagKey = 1u << 0;
constexpr std::uint16_t kFlagBatch = 1u << 1;

void put_u16(std::string &out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string &out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
  public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

    std::uint16_t u16() {
        const char *p = take(2);
        return static_cast<std::uint16_t>(
            static_cast<std::uint8_t>(p[0]) |
            (static_cast<std::uint8_t>(p[1]) << 8));
    }

    std::uint32_t u32() {
        const char *p = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(p[i]);
        return v;
    }

    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void bytes(std::uint8_t *dst, std::size_t n) {
        std::memcpy(dst, take(n), n);
    }

    bool done() const { return pos_ == data_.size(); }

  private:
    const char *take(std::size_t n) {
        if (pos_ + n > data_.size())
            throw std::runtime_error("truncated trace file");
        const char *p = data_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::string data_;
    std::size_t pos_ = 0;
};

int hex_nibble(char c) {
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ','))
        fields.push_back(field);
    if (!line.empty() && line.back() == ',')
        fields.emplace_back();
    return fields;
}

std::string trim(const std::string &s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

Block16 parse_hex_block(const std::string &s) {
    if (s.size() != 32)
        throw std::runtime_error("hex block must be exactly 32 characters");
    Block16 out{};
    for (std::size_t i = 0; i < 16; ++i) {
        const int hi = hex_nibble(s[2 * i]);
        const int lo = hex_nibble(s[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw std::runtime_error("invalid hex character in block");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

void write_trace_file(const TraceSet &set, const std::string &path) {
    if (set.empty())
        throw std::runtime_error("empty trace set");

    const bool has_key = set.trace(0).key.has_value();
    for (const Trace &t : set.traces())
        if (t.key.has_value() != has_key)
            throw std::runtime_error("mixed key presence in trace set");

    const bool ragged_flag = set.is_batch_capture();
    if (!ragged_flag && !set.uniform_length())
        throw std::runtime_error(
            "non-uniform trace lengths without batch provenance");

    std::uint16_t flags = 0;
    if (has_key)
        flags |= kFlagKey;
    if (ragged_flag)
        flags |= kFlagBatch;

    std::string out;
    out.reserve(24 + set.size() * (36 + 4 * set.min_length()));
    out += "ITRC";
    put_u16(out, kVersion);
    put_u16(out, flags);
    put_u32(out, static_cast<std::uint32_t>(set.size()));
    put_u32(out, ragged_flag ? 0
                             : static_cast<std::uint32_t>(set.n_samples()));
    out.push_back(static_cast<char>(set.config().n_islands));
    out.push_back(0); // dtype f32
    put_u16(out, set.batch_size());
    put_u32(out, 0); // reserved

    for (const Trace &t : set.traces()) {
        out.append(reinterpret_cast<const char *>(t.plaintext.data()), 16);
        if (has_key)
            out.append(reinterpret_cast<const char *>(t.key->data()), 16);
        for (float v : t.island_voltages)
            put_f32(out, v);
        if (ragged_flag)
            put_u32(out, static_cast<std::uint32_t>(t.samples.size()));
        for (float v : t.samples)
            put_f32(out, v);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open file for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f)
        throw std::runtime_error("write failure: " + path);
}

TraceSet read_trace_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    Reader r(buf.str());

    char magic[4];
    r.bytes(reinterpret_cast<std::uint8_t *>(magic), 4);
    if (std::memcmp(magic, "ITRC", 4) != 0)
        throw std::runtime_error("bad magic");
    if (r.u16() != kVersion)
        throw std::runtime_error("unsupported trace file version");
    const std::uint16_t flags = r.u16();
    const std::uint32_t n_traces = r.u32();
    const std::uint32_t n_samples = r.u32();
    const std::uint8_t n_islands = r.u8();
    if (r.u8() != 0)
        throw std::runtime_error("unsupported sample dtype");
    const std::uint16_t batch_size = r.u16();
    r.u32(); // reserved

    const bool has_key = flags & kFlagKey;
    const bool ragged = flags & kFlagBatch;
    if (n_traces == 0)
        throw std::runtime_error("empty trace set");
    if (n_islands == 0)
        throw std::runtime_error("malformed header: zero islands");
    if (!ragged && n_samples == 0)
        throw std::runtime_error("malformed header: zero samples");

    std::vector<Trace> traces;
    traces.reserve(n_traces);
    for (std::uint32_t i = 0; i < n_traces; ++i) {
        Trace t;
        t.batch_size = batch_size;
        r.bytes(t.plaintext.data(), 16);
        if (has_key) {
            Block16 k;
            r.bytes(k.data(), 16);
            t.key = k;
        }
        t.island_voltages.resize(n_islands);
        for (float &v : t.island_voltages)
            v = r.f32();
        const std::uint32_t len = ragged ? r.u32() : n_samples;
        t.samples.resize(len);
        for (float &v : t.samples) {
            v = r.f32();
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite sample in trace file");
        }
        traces.push_back(std::move(t));
    }
    if (!r.done())
        throw std::runtime_error("trailing bytes after trace payload");

    IslandConfig cfg = IslandConfig::make(n_islands, n_islands, {1.0});
    // The format does not persist the level set; adopt the observed
    // voltages so set invariants (v > V_T) keep holding for low-voltage
    // captures.
    double vmin = 1.0, vmax = 1.0;
    for (const Trace &t : traces)
        for (float v : t.island_voltages) {
            vmin = std::min(vmin, static_cast<double>(v));
            vmax = std::max(vmax, static_cast<double>(v));
        }
    cfg.v_threshold = vmin > 0.3 ? 0.3 : vmin / 2.0;
    cfg.voltage_levels = {vmax};
    return TraceSet(std::move(traces), std::move(cfg), "imported");
}

TraceSet import_csv(const std::string &path, const CsvColumnMap &map) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open file: " + path);

    std::vector<Trace> traces;
    std::string line;
    std::size_t expected_fields = 0;
    bool first = true;
    bool skipped_header = !map.header_row;
    while (std::getline(f, line)) {
        if (trim(line).empty())
            continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (first) {
            expected_fields = fields.size();
            first = false;
        } else if (fields.size() != expected_fields) {
            throw std::runtime_error("ragged rows");
        }
        if (map.plaintext_column >= fields.size())
            throw std::runtime_error("plaintext column out of range");
        if (map.key_column && *map.key_column >= fields.size())
            throw std::runtime_error("key column out of range");

        Trace t;
        t.plaintext = parse_hex_block(trim(fields[map.plaintext_column]));
        if (map.key_column)
            t.key = parse_hex_block(trim(fields[*map.key_column]));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (c == map.plaintext_column ||
                (map.key_column && c == *map.key_column))
                continue;
            const std::string s = trim(fields[c]);
            std::size_t used = 0;
            float v = 0.0f;
            try {
                v = std::stof(s, &used);
            } catch (const std::exception &) {
                throw std::runtime_error("non-numeric sample value: " + s);
            }
            if (used != s.size())
                throw std::runtime_error("non-numeric sample value: " + s);
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite sample value in CSV");
            t.samples.push_back(v);
        }
        if (t.samples.empty())
            throw std::runtime_error("CSV row has no sample columns");
        t.island_voltages = {1.0f};
        traces.push_back(std::move(t));
    }
    if (traces.empty())
        throw std::runtime_error("empty trace set");
    return TraceSet(std::move(traces), IslandConfig::make(1, 1, {1.0}),
                    "imported");
}

} // namespace voltscope

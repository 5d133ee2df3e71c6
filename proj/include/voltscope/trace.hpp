#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voltscope/matrix.hpp"

namespace voltscope {

using Block16 = std::array<std::uint8_t, 16>;

// Static island/supply layout shared by every trace of a set: n islands fed
// by m <= n independent supplies, each supply drawing from the same ordered
// set of g discrete voltage levels. alpha, v_threshold and c_load_over_k
// parameterize the Sakurai-Newton delay model used for time scaling.
struct IslandConfig {
    std::size_t n_islands = 1;
    std::size_t n_supplies = 1;
    std::vector<std::size_t> supply_of_island; // island index -> supply index
    std::vector<double> voltage_levels;        // strictly increasing, > v_threshold
    double alpha = 2.0;
    double v_threshold = 0.3;
    double c_load_over_k = 1.0;

    // Round-robin supply mapping, the common case.
    static IslandConfig make(std::size_t n, std::size_t m,
                             std::vector<double> levels, double alpha = 2.0,
                             double v_threshold = 0.3,
                             double c_load_over_k = 1.0);

    double v_max() const { return voltage_levels.back(); }
    double v_min() const { return voltage_levels.front(); }

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

struct Trace {
    std::vector<float> samples;
    Block16 plaintext = {};
    std::optional<Block16> key;
    std::vector<float> island_voltages; // one per island
    std::uint16_t batch_size = 1;       // encryptions represented by this trace
};

// Immutable after construction; construction validates all invariants.
// Traces of a set share the island count; lengths must be uniform unless the
// set is a raw batch capture (batch_size > 1).
class TraceSet {
  public:
    TraceSet() = default;
    TraceSet(std::vector<Trace> traces, IslandConfig config,
             std::string provenance = "synthetic",
             std::optional<double> sample_rate_hint = std::nullopt);

    const std::vector<Trace> &traces() const { return traces_; }
    const Trace &trace(std::size_t i) const { return traces_[i]; }
    std::size_t size() const { return traces_.size(); }
    bool empty() const { return traces_.empty(); }

    const IslandConfig &config() const { return config_; }
    const std::string &provenance() const { return provenance_; }
    std::optional<double> sample_rate_hint() const { return sample_rate_hint_; }

    bool uniform_length() const;
    std::size_t n_samples() const; // throws if ragged
    std::size_t min_length() const;
    bool is_batch_capture() const;
    std::uint16_t batch_size() const;

    // Sample values as a dense row-major matrix; requires uniform lengths.
    Matrix<float> sample_matrix() const;

    // Data-level equality: samples bitwise as f32, plaintexts, keys,
    // voltages, island count and batch size. Config parameters beyond the
    // island count are not persisted by the trace format, so they do not
    // participate.
    bool payload_equals(const TraceSet &other) const;

    TraceSet cropped(std::size_t start, std::size_t length) const;

  private:
    std::vector<Trace> traces_;
    IslandConfig config_;
    std::string provenance_ = "synthetic";
    std::optional<double> sample_rate_hint_;
};

} // namespace voltscope

#include "voltscope/trace.hpp"

#include <cmath>
#include <stdexcept>

namespace voltscope {

IslandConfig IslandConfig::make(std::size_t n, std::size_t m,
                                std::vector<double> levels, double alpha,
                                double v_threshold, double c_load_over_k) {
    IslandConfig cfg;
    cfg.n_islands = n;
    cfg.n_supplies = m;
    cfg.supply_of_island.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        cfg.supply_of_island[i] = m == 0 ? 0 : i % m;
    cfg.voltage_levels = std::move(levels);
    cfg.alpha = alpha;
    cfg.v_threshold = v_threshold;
    cfg.c_load_over_k = c_load_over_k;
    cfg.validate();
    return cfg;
}

void IslandConfig::validate() const {
    if (n_islands == 0)
        throw std::invalid_argument("island config: need at least one island");
    if (n_supplies == 0 || n_supplies > n_islands)
        throw std::invalid_argument("island config: require 1 <= m <= n");
    if (supply_of_island.size() != n_islands)
        throw std::invalid_argument("island config: supply map size mismatch");
    std::vector<bool> used(n_supplies, false);
    for (std::size_t s : supply_of_island) {
        if (s >= n_supplies)
            throw std::invalid_argument("island config: supply index out of range");
        used[s] = true;
    }
    for (std::size_t s = 0; s < n_supplies; ++s)
        if (!used[s])
            throw std::invalid_argument("island config: unused supply index");
    if (voltage_levels.empty())
        throw std::invalid_argument("island config: empty voltage level set");
    double prev = -1.0;
    for (double v : voltage_levels) {
        if (!(v > v_threshold) || !(v > 0.0))
            throw std::invalid_argument(
                "island config: voltage level at or below threshold");
        if (!(v > prev))
            throw std::invalid_argument(
                "island config: voltage levels must be strictly increasing");
        prev = v;
    }
    if (!(alpha >= 1.0))
        throw std::invalid_argument("island config: alpha must be >= 1");
    if (!(c_load_over_k > 0.0))
        throw std::invalid_argument("island config: C_L/k must be positive");
}

TraceSet::TraceSet(std::vector<Trace> traces, IslandConfig config,
                   std::string provenance,
                   std::optional<double> sample_rate_hint)
    : traces_(std::move(traces)), config_(std::move(config)),
      provenance_(std::move(provenance)), sample_rate_hint_(sample_rate_hint) {
    config_.validate();
    std::size_t len = traces_.empty() ? 0 : traces_.front().samples.size();
    bool ragged = false;
    std::uint16_t batch = traces_.empty() ? 1 : traces_.front().batch_size;
    for (const Trace &t : traces_) {
        if (t.samples.empty())
            throw std::invalid_argument("trace with no samples");
        for (float v : t.samples)
            if (!std::isfinite(v))
                throw std::invalid_argument("non-finite sample value");
        if (t.island_voltages.size() != config_.n_islands)
            throw std::invalid_argument(
                "trace island voltage count does not match island config");
        for (float v : t.island_voltages)
            if (!(v > 0.0f) || !(v > config_.v_threshold))
                throw std::invalid_argument(
                    "island voltage at or below threshold");
        if (t.batch_size == 0)
            throw std::invalid_argument("trace batch size must be positive");
        if (t.batch_size != batch)
            throw std::invalid_argument("mixed batch sizes in one set");
        if (t.samples.size() != len)
            ragged = true;
    }
    if (ragged && !is_batch_capture())
        throw std::invalid_argument(
            "non-uniform trace lengths without batch provenance");
}

bool TraceSet::uniform_length() const {
    if (traces_.empty())
        return true;
    const std::size_t len = traces_.front().samples.size();
    for (const Trace &t : traces_)
        if (t.samples.size() != len)
            return false;
    return true;
}

std::size_t TraceSet::n_samples() const {
    if (!uniform_length())
        throw std::logic_error("ragged trace set has no single sample count");
    return traces_.empty() ? 0 : traces_.front().samples.size();
}

std::size_t TraceSet::min_length() const {
    std::size_t m = traces_.empty() ? 0 : traces_.front().samples.size();
    for (const Trace &t : traces_)
        m = std::min(m, t.samples.size());
    return m;
}

bool TraceSet::is_batch_capture() const { return batch_size() > 1; }

std::uint16_t TraceSet::batch_size() const {
    return traces_.empty() ? 1 : traces_.front().batch_size;
}

Matrix<float> TraceSet::sample_matrix() const {
    const std::size_t cols = n_samples();
    Matrix<float> m(traces_.size(), cols);
    for (std::size_t i = 0; i < traces_.size(); ++i) {
        const auto &s = traces_[i].samples;
        std::copy(s.begin(), s.end(), m.row(i));
    }
    return m;
}

bool TraceSet::payload_equals(const TraceSet &other) const {
    if (traces_.size() != other.traces_.size())
        return false;
    if (config_.n_islands != other.config_.n_islands)
        return false;
    for (std::size_t i = 0; i < traces_.size(); ++i) {
        const Trace &a = traces_[i];
        const Trace &b = other.traces_[i];
        if (a.samples != b.samples || a.plaintext != b.plaintext ||
            a.key != b.key || a.island_voltages != b.island_voltages ||
            a.batch_size != b.batch_size)
            return false;
    }
    return true;
}

TraceSet TraceSet::cropped(std::size_t start, std::size_t length) const {
    std::vector<Trace> out;
    out.reserve(traces_.size());
    for (const Trace &t : traces_) {
        if (start + length > t.samples.size())
            throw std::out_of_range("crop window exceeds trace length");
        Trace c = t;
        c.samples.assign(t.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         t.samples.begin() +
                             static_cast<std::ptrdiff_t>(start + length));
        out.push_back(std::move(c));
    }
    return TraceSet(std::move(out), config_, provenance_, sample_rate_hint_);
}

} // namespace voltscope

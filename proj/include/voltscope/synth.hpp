#pragma once

// Synthetic trace generation for island-based random dynamic voltage
// scaling designs.  Base traces come from a simplified first-round AES
// power model: one pulse per encryption whose peak is the summed Hamming
// weight of the S-box outputs.  Supply voltage affects the trace two ways:
// amplitude scales as v^alpha and time dilates by the Sakurai-Newton gate
// delay ratio relative to the fastest level.

#include <cstdint>
#include <vector>

#include "voltscope/rng.hpp"
#include "voltscope/trace.hpp"

namespace voltscope {

enum class PulseShape { Rectangular, HalfSine };

struct PulseModel {
    // Samples the pulse occupies when running at the fastest voltage.
    int pulse_width = 32;
    PulseShape pulse_shape = PulseShape::HalfSine;
    double baseline = 0.0;
    // Std-dev of additive Gaussian electronic noise, applied per sample.
    double noise_sigma = 0.0;

    void validate() const;
};

enum class VoltagePolicy { PerEncryption, PerBatch };

struct SynthPlan {
    IslandConfig island_config;
    std::size_t n_traces = 0;
    std::uint64_t rng_seed = 0;
    Block16 signal_key{};
    VoltagePolicy voltage_policy = VoltagePolicy::PerEncryption;
    // Number of consecutive traces sharing one voltage draw when the
    // policy is PerBatch.
    std::size_t batch_len = 1;
    PulseModel pulse;
    // When false, supplies still randomize amplitude but no time dilation
    // is applied.  Aligned sets are what the analytic SNR formulas model.
    bool scale_time = true;
    // Per-supply pinned levels; empty means all supplies draw randomly.
    // A NaN entry leaves that one supply random.  Pinned values must be
    // members of the configured level set.
    std::vector<double> pinned_voltages;

    void validate() const;
};

// Optional decomposition of a composed set: for every output trace, the
// signal island's contribution and the summed noise islands' contribution,
// both at the final padded length.
struct ComposeParts {
    std::vector<std::vector<float>> signal;
    std::vector<std::vector<float>> noise;
};

// Sakurai-Newton alpha-power gate delay (C_L/k) * v / (v - V_T)^alpha.
// Throws std::domain_error when v is at or below the threshold voltage.
double sn_delay(double v, const IslandConfig &cfg);

// Delay of level v relative to the fastest configured level; >= 1 for any
// v in the level set, exactly 1 at v_max.
double time_scale_factor(double v, const IslandConfig &cfg);

// Resample to round(len * factor) samples by linear interpolation over the
// original support.  factor == 1 is a bitwise identity.
std::vector<float> time_scale(const std::vector<float> &samples,
                              double factor);

// Linear interpolation onto exactly n_out samples spanning the original
// support; endpoints map to endpoints.
std::vector<float> resample_to_length(const std::vector<float> &samples,
                                      std::size_t n_out);

// Multiply every sample by v^alpha.  v == 1 is a bitwise identity.
std::vector<float> amplitude_scale(std::vector<float> samples, double v,
                                   double alpha);

// One encryption at nominal voltage: a baseline trace of length
// 2 * pulse_width with a centered pulse peaking at
// first_round_model_power(pt, key), plus per-sample Gaussian noise when
// noise_sigma > 0 (the rng is untouched otherwise).
Trace generate_base_trace(const Block16 &plaintext, const Block16 &key,
                          const PulseModel &pulse, Rng &rng);

// Combine base traces into an n-island set.  For output trace t one
// voltage per supply is drawn from the plan's level set (seeded by the
// plan, independent of thread schedule); island 0 carries
// signal_traces[t mod |signal|] and islands 1..n-1 take noise traces in a
// fixed rotation.  Each island is time-scaled by its level's delay ratio
// (when plan.scale_time), amplitude-scaled by v^alpha, and the islands are
// summed after zero-padding to a common length.  Composition assumes the
// base pulse baseline is 0; remove a nonzero baseline first.
TraceSet compose_irdvs(const TraceSet &signal_traces,
                       const TraceSet &noise_traces, const SynthPlan &plan,
                       ComposeParts *parts = nullptr);

// Full pipeline: random plaintexts under the plan's signal key, a noise
// pool of independent encryptions under random keys, then compose_irdvs.
TraceSet synth_pipeline(const SynthPlan &plan, ComposeParts *parts = nullptr);

// Re-time the trace as if captured under an unstable clock: consecutive
// fixed-size segments are independently stretched or shrunk by factors in
// [1 - jitter_pct, 1 + jitter_pct].
std::vector<float> corrupt_unstable_clock(const std::vector<float> &samples,
                                          double jitter_pct, Rng &rng);

// Start of the length-`window` region maximizing mean per-sample variance
// across traces; earliest window wins ties.
std::size_t roi_start(const TraceSet &set, std::size_t window);

// Crop every trace to the maximum-variance window.
TraceSet extract_roi(const TraceSet &set, std::size_t window);

} // namespace voltscope

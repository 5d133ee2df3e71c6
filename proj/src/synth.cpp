#include "voltscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "voltscope/aes_model.hpp"
#include "voltscope/parallel.hpp"

namespace voltscope {

namespace {

bool level_in_set(double v, const std::vector<double> &levels) {
    for (double l : levels)
        if (l == v)
            return true;
    return false;
}

// Normalized pulse shape whose maximum sample is exactly 1, so the peak of
// a generated trace equals the modeled power value.
std::vector<float> pulse_shape_samples(const PulseModel &pulse) {
    const int w = pulse.pulse_width;
    std::vector<float> shape(w);
    if (pulse.pulse_shape == PulseShape::Rectangular) {
        std::fill(shape.begin(), shape.end(), 1.0f);
        return shape;
    }
    double peak = 0.0;
    std::vector<double> raw(w);
    for (int i = 0; i < w; ++i) {
        raw[i] = std::sin(std::numbers::pi * (i + 0.5) / w);
        peak = std::max(peak, raw[i]);
    }
    for (int i = 0; i < w; ++i)
        shape[i] = static_cast<float>(raw[i] / peak);
    return shape;
}

} // namespace

void PulseModel::validate() const {
    if (pulse_width < 2)
        throw std::invalid_argument("pulse width must be at least 2");
    if (!(noise_sigma >= 0.0))
        throw std::invalid_argument("noise sigma must be non-negative");
}

void SynthPlan::validate() const {
    island_config.validate();
    pulse.validate();
    if (n_traces == 0)
        throw std::invalid_argument("plan needs at least one trace");
    if (voltage_policy == VoltagePolicy::PerBatch && batch_len == 0)
        throw std::invalid_argument("batch length must be positive");
    if (!pinned_voltages.empty()) {
        if (pinned_voltages.size() != island_config.n_supplies)
            throw std::invalid_argument(
                "pinned voltages must cover every supply");
        for (double v : pinned_voltages)
            if (!std::isnan(v) &&
                !level_in_set(v, island_config.voltage_levels))
                throw std::invalid_argument(
                    "pinned voltage is not a configured level");
    }
}

double sn_delay(double v, const IslandConfig &cfg) {
    if (v <= cfg.v_threshold)
        throw std::domain_error("voltage at or below threshold");
    return cfg.c_load_over_k * v / std::pow(v - cfg.v_threshold, cfg.alpha);
}

double time_scale_factor(double v, const IslandConfig &cfg) {
    return sn_delay(v, cfg) / sn_delay(cfg.v_max(), cfg);
}

std::vector<float> resample_to_length(const std::vector<float> &samples,
                                      std::size_t n_out) {
    if (samples.empty())
        throw std::invalid_argument("cannot resample an empty trace");
    if (n_out == 0)
        throw std::invalid_argument("target length must be positive");
    const std::size_t n = samples.size();
    if (n_out == n)
        return samples;
    std::vector<float> out(n_out);
    if (n_out == 1 || n == 1) {
        std::fill(out.begin(), out.end(), samples[0]);
        return out;
    }
    const double span = static_cast<double>(n - 1);
    const double denom = static_cast<double>(n_out - 1);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double pos = span * static_cast<double>(j) / denom;
        std::size_t i0 = static_cast<std::size_t>(pos);
        if (i0 >= n - 1)
            i0 = n - 2;
        const double frac = pos - static_cast<double>(i0);
        out[j] = static_cast<float>(samples[i0] * (1.0 - frac) +
                                    samples[i0 + 1] * frac);
    }
    return out;
}

std::vector<float> time_scale(const std::vector<float> &samples,
                              double factor) {
    if (!(factor > 0.0))
        throw std::invalid_argument("time scale factor must be positive");
    if (samples.empty())
        throw std::invalid_argument("cannot time-scale an empty trace");
    if (factor == 1.0)
        return samples;
    const std::size_t m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               static_cast<double>(samples.size()) * factor)));
    return resample_to_length(samples, m);
}

std::vector<float> amplitude_scale(std::vector<float> samples, double v,
                                   double alpha) {
    if (!(v > 0.0))
        throw std::invalid_argument("voltage must be positive");
    const double gain = std::pow(v, alpha);
    if (gain == 1.0)
        return samples;
    for (float &s : samples)
        s = static_cast<float>(s * gain);
    return samples;
}

Trace generate_base_trace(const Block16 &plaintext, const Block16 &key,
                          const PulseModel &pulse, Rng &rng) {
    pulse.validate();
    const int w = pulse.pulse_width;
    const std::size_t len = static_cast<std::size_t>(2 * w);
    const std::size_t start = static_cast<std::size_t>(w / 2);
    const double peak = first_round_model_power(plaintext, key);
    const std::vector<float> shape = pulse_shape_samples(pulse);

    Trace t;
    t.samples.assign(len, static_cast<float>(pulse.baseline));
    for (int i = 0; i < w; ++i)
        t.samples[start + i] =
            static_cast<float>(pulse.baseline + peak * shape[i]);
    if (pulse.noise_sigma > 0.0)
        for (float &s : t.samples)
            s = static_cast<float>(s + rng.gaussian(pulse.noise_sigma));
    t.plaintext = plaintext;
    t.key = key;
    t.island_voltages = {1.0f};
    return t;
}

TraceSet compose_irdvs(const TraceSet &signal_traces,
                       const TraceSet &noise_traces, const SynthPlan &plan,
                       ComposeParts *parts) {
    plan.validate();
    const IslandConfig &cfg = plan.island_config;
    const std::size_t n_islands = cfg.n_islands;

    if (signal_traces.empty())
        throw std::invalid_argument("empty signal trace set");
    if (!signal_traces.uniform_length())
        throw std::invalid_argument("signal traces must share one length");
    const std::size_t base_len = signal_traces.n_samples();
    if (n_islands > 1) {
        if (noise_traces.empty())
            throw std::invalid_argument(
                "noise traces required for multi-island composition");
        if (!noise_traces.uniform_length() ||
            noise_traces.n_samples() != base_len)
            throw std::invalid_argument(
                "noise traces must match the signal trace length");
    }

    // Precompute the per-level scale factors once; the slowest (lowest)
    // level bounds the padded output length.
    const std::size_t g = cfg.voltage_levels.size();
    std::vector<double> factor(g), gain(g);
    for (std::size_t l = 0; l < g; ++l) {
        factor[l] = plan.scale_time
                        ? time_scale_factor(cfg.voltage_levels[l], cfg)
                        : 1.0;
        gain[l] = std::pow(cfg.voltage_levels[l], cfg.alpha);
    }
    const double max_factor =
        *std::max_element(factor.begin(), factor.end());
    const std::size_t out_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               static_cast<double>(base_len) * max_factor)));

    const std::size_t n_out = plan.n_traces;
    const std::size_t n_noise = noise_traces.size();
    std::vector<Trace> out(n_out);
    if (parts) {
        parts->signal.assign(n_out, {});
        parts->noise.assign(n_out, {});
    }

#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long long ti = 0; ti < static_cast<long long>(n_out); ++ti) {
        const std::size_t t = static_cast<std::size_t>(ti);
        const std::size_t draw_index =
            plan.voltage_policy == VoltagePolicy::PerBatch
                ? t / plan.batch_len
                : t;
        Rng vr(plan.rng_seed, Stream::Voltages, draw_index);
        std::vector<std::size_t> level_of_supply(cfg.n_supplies);
        for (std::size_t s = 0; s < cfg.n_supplies; ++s) {
            if (!plan.pinned_voltages.empty() &&
                !std::isnan(plan.pinned_voltages[s])) {
                const auto it = std::find(cfg.voltage_levels.begin(),
                                          cfg.voltage_levels.end(),
                                          plan.pinned_voltages[s]);
                level_of_supply[s] = static_cast<std::size_t>(
                    it - cfg.voltage_levels.begin());
            } else {
                level_of_supply[s] = vr.uniform_index(g);
            }
        }

        Trace &dst = out[t];
        const Trace &sig = signal_traces.trace(t % signal_traces.size());
        dst.samples.assign(out_len, 0.0f);
        dst.plaintext = sig.plaintext;
        dst.key = sig.key;
        dst.island_voltages.resize(n_islands);
        dst.batch_size = plan.voltage_policy == VoltagePolicy::PerBatch
                             ? static_cast<std::uint16_t>(std::min<
                                   std::size_t>(plan.batch_len, 65535))
                             : 1;

        std::vector<float> noise_sum;
        if (parts)
            noise_sum.assign(out_len, 0.0f);

        for (std::size_t isl = 0; isl < n_islands; ++isl) {
            const std::size_t lvl =
                level_of_supply[cfg.supply_of_island[isl]];
            const double v = cfg.voltage_levels[lvl];
            dst.island_voltages[isl] = static_cast<float>(v);

            const Trace &src =
                isl == 0 ? sig
                         : noise_traces.trace(
                               (t * (n_islands - 1) + (isl - 1)) % n_noise);
            std::vector<float> scaled =
                factor[lvl] == 1.0 ? src.samples
                                   : time_scale(src.samples, factor[lvl]);
            if (gain[lvl] != 1.0)
                for (float &s : scaled)
                    s = static_cast<float>(s * gain[lvl]);

            float *acc = dst.samples.data();
            for (std::size_t i = 0; i < scaled.size(); ++i)
                acc[i] += scaled[i];
            if (parts) {
                if (isl == 0) {
                    parts->signal[t].assign(out_len, 0.0f);
                    std::copy(scaled.begin(), scaled.end(),
                              parts->signal[t].begin());
                } else {
                    for (std::size_t i = 0; i < scaled.size(); ++i)
                        noise_sum[i] += scaled[i];
                }
            }
        }
        if (parts)
            parts->noise[t] = std::move(noise_sum);
    }

    return TraceSet(std::move(out), cfg, "synthetic");
}

TraceSet synth_pipeline(const SynthPlan &plan, ComposeParts *parts) {
    plan.validate();
    const std::size_t n_islands = plan.island_config.n_islands;
    const std::size_t n = plan.n_traces;

    std::vector<Trace> signal(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long long ti = 0; ti < static_cast<long long>(n); ++ti) {
        const std::size_t t = static_cast<std::size_t>(ti);
        Rng pr(plan.rng_seed, Stream::Plaintexts, t);
        Block16 pt;
        for (auto &b : pt)
            b = pr.byte();
        Rng nr(plan.rng_seed, Stream::Noise, t);
        signal[t] =
            generate_base_trace(pt, plan.signal_key, plan.pulse, nr);
    }
    const IslandConfig base_cfg = IslandConfig::make(1, 1, {1.0});
    TraceSet signal_set(std::move(signal), base_cfg, "synthetic");

    std::vector<Trace> noise;
    if (n_islands > 1) {
        noise.resize(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
        for (long long ti = 0; ti < static_cast<long long>(n); ++ti) {
            const std::size_t t = static_cast<std::size_t>(ti);
            Rng pr(plan.rng_seed, Stream::Plaintexts, n + t);
            Block16 pt, key;
            for (auto &b : pt)
                b = pr.byte();
            for (auto &b : key)
                b = pr.byte();
            Rng nr(plan.rng_seed, Stream::Noise, n + t);
            noise[t] = generate_base_trace(pt, key, plan.pulse, nr);
        }
    }
    TraceSet noise_set = noise.empty()
                             ? TraceSet()
                             : TraceSet(std::move(noise), base_cfg,
                                        "synthetic");
    return compose_irdvs(signal_set, noise_set, plan, parts);
}

std::vector<float> corrupt_unstable_clock(const std::vector<float> &samples,
                                          double jitter_pct, Rng &rng) {
    if (!(jitter_pct >= 0.0) || jitter_pct >= 1.0)
        throw std::invalid_argument("jitter must lie in [0, 1)");
    if (jitter_pct == 0.0)
        return samples;

    constexpr std::size_t kSegment = 32;
    std::vector<float> out;
    out.reserve(samples.size() + samples.size() / 8);
    // Cumulative rounding keeps the total length within the jitter bound
    // instead of letting per-segment rounding drift.
    double target = 0.0;
    std::size_t emitted = 0;
    for (std::size_t begin = 0; begin < samples.size(); begin += kSegment) {
        const std::size_t end = std::min(begin + kSegment, samples.size());
        const std::vector<float> seg(samples.begin() + begin,
                                     samples.begin() + end);
        const double f = 1.0 + jitter_pct * rng.uniform(-1.0, 1.0);
        target += static_cast<double>(seg.size()) * f;
        const std::size_t want = static_cast<std::size_t>(
            std::llround(target));
        const std::size_t seg_out = want > emitted ? want - emitted : 1;
        const std::vector<float> scaled = time_scale(
            seg, static_cast<double>(seg_out) /
                     static_cast<double>(seg.size()));
        // time_scale rounds its own length; force the exact budget.
        if (scaled.size() == seg_out)
            out.insert(out.end(), scaled.begin(), scaled.end());
        else
            out.insert(out.end(), scaled.begin(),
                       scaled.begin() +
                           std::min(scaled.size(), seg_out));
        emitted = out.size();
    }
    return out;
}

std::size_t roi_start(const TraceSet &set, std::size_t window) {
    if (window == 0)
        throw std::invalid_argument("window must be positive");
    const std::size_t len = set.min_length();
    if (window > len)
        throw std::invalid_argument("window exceeds shortest trace");

    std::vector<double> sum(len, 0.0), sumsq(len, 0.0);
    for (const Trace &t : set.traces())
        for (std::size_t s = 0; s < len; ++s) {
            const double x = t.samples[s];
            sum[s] += x;
            sumsq[s] += x * x;
        }
    const double inv_n = 1.0 / static_cast<double>(set.size());
    std::vector<double> var(len);
    for (std::size_t s = 0; s < len; ++s) {
        const double mean = sum[s] * inv_n;
        var[s] = std::max(0.0, sumsq[s] * inv_n - mean * mean);
    }

    double best = -1.0;
    std::size_t best_start = 0;
    double acc = 0.0;
    for (std::size_t s = 0; s < window; ++s)
        acc += var[s];
    best = acc;
    for (std::size_t start = 1; start + window <= len; ++start) {
        acc += var[start + window - 1] - var[start - 1];
        if (acc > best + 1e-12 * std::abs(best)) {
            best = acc;
            best_start = start;
        }
    }
    return best_start;
}

TraceSet extract_roi(const TraceSet &set, std::size_t window) {
    return set.cropped(roi_start(set, window), window);
}

} // namespace voltscope

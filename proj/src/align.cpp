#include "voltscope/align.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "voltscope/parallel.hpp"

namespace voltscope {

namespace {

std::atomic<std::size_t> g_cell_cap{100000000};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Column window per target row. DP never looks outside it.
struct Window {
    std::vector<std::size_t> lo, hi; // inclusive
};

Window full_window(std::size_t p, std::size_t q) {
    Window w;
    w.lo.assign(p, 0);
    w.hi.assign(p, q - 1);
    return w;
}

// DP over the windowed cost matrix with backpointers. Steps are encoded
// 0 = diagonal, 1 = vertical (previous target row), 2 = horizontal.
DtwResult dtw_windowed(const std::vector<float> &t,
                       const std::vector<float> &r, const Window &w) {
    const std::size_t p = t.size(), q = r.size();
    std::vector<std::size_t> offset(p + 1, 0);
    for (std::size_t i = 0; i < p; ++i)
        offset[i + 1] = offset[i] + (w.hi[i] - w.lo[i] + 1);
    std::vector<double> cost(offset[p], kInf);
    std::vector<std::uint8_t> back(offset[p], 0);

    auto at = [&](std::size_t i, std::size_t j) -> double {
        if (i >= p || j < w.lo[i] || j > w.hi[i])
            return kInf;
        return cost[offset[i] + (j - w.lo[i])];
    };

    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = w.lo[i]; j <= w.hi[i]; ++j) {
            const double d = (static_cast<double>(t[i]) - r[j]) *
                             (static_cast<double>(t[i]) - r[j]);
            const std::size_t slot = offset[i] + (j - w.lo[i]);
            if (i == 0 && j == 0) {
                cost[slot] = d;
                continue;
            }
            double best = kInf;
            std::uint8_t step = 0;
            if (i > 0 && j > 0) {
                const double c = at(i - 1, j - 1);
                if (c < best) {
                    best = c;
                    step = 0;
                }
            }
            if (i > 0) {
                const double c = at(i - 1, j);
                if (c < best) {
                    best = c;
                    step = 1;
                }
            }
            if (j > 0) {
                const double c = at(i, j - 1);
                if (c < best) {
                    best = c;
                    step = 2;
                }
            }
            cost[slot] = best + d;
            back[slot] = step;
        }
    }

    DtwResult res;
    res.cost = at(p - 1, q - 1);
    if (!std::isfinite(res.cost))
        throw std::logic_error("warp window disconnected the endpoints");

    std::size_t i = p - 1, j = q - 1;
    std::vector<std::pair<std::size_t, std::size_t>> rev;
    rev.emplace_back(i, j);
    while (i != 0 || j != 0) {
        switch (back[offset[i] + (j - w.lo[i])]) {
        case 0:
            --i;
            --j;
            break;
        case 1:
            --i;
            break;
        default:
            --j;
            break;
        }
        rev.emplace_back(i, j);
    }
    res.path.pairs.assign(rev.rbegin(), rev.rend());
    return res;
}

std::vector<float> halve(const std::vector<float> &x) {
    std::vector<float> out((x.size() + 1) / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t a = 2 * i, b = 2 * i + 1;
        out[i] = b < x.size() ? 0.5f * (x[a] + x[b]) : x[a];
    }
    return out;
}

// Project a coarse path onto the fine grid and inflate it by the radius,
// yielding a contiguous column range per fine row.
Window project_window(const std::vector<std::pair<std::size_t, std::size_t>>
                          &coarse_path,
                      std::size_t p, std::size_t q, int radius) {
    std::vector<std::size_t> lo(p, q), hi(p, 0);
    auto touch = [&](std::ptrdiff_t i, std::ptrdiff_t j) {
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(p))
            return;
        const std::size_t jc = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(j, 0,
                                       static_cast<std::ptrdiff_t>(q) - 1));
        lo[i] = std::min(lo[i], jc);
        hi[i] = std::max(hi[i], jc);
    };
    for (const auto &[ci, cj] : coarse_path)
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
                const std::ptrdiff_t fi = 2 * ci + di;
                const std::ptrdiff_t fj = 2 * cj + dj;
                touch(fi - radius, fj - radius);
                touch(fi - radius, fj + radius);
                touch(fi + radius, fj - radius);
                touch(fi + radius, fj + radius);
                for (int k = -radius; k <= radius; ++k) {
                    touch(fi + k, fj - radius);
                    touch(fi + k, fj + radius);
                }
            }
    // Rows beyond the projected path (odd-length tails) extend the last
    // covered range; then stitch rows so the DP stays connected.
    for (std::size_t i = 0; i < p; ++i)
        if (lo[i] > hi[i]) {
            lo[i] = i > 0 ? lo[i - 1] : 0;
            hi[i] = i > 0 ? hi[i - 1] : 0;
        }
    lo[0] = 0;
    hi[p - 1] = q - 1;
    for (std::size_t i = 1; i < p; ++i) {
        if (lo[i] > hi[i - 1] + 1)
            lo[i] = hi[i - 1] + 1;
        if (hi[i] < hi[i - 1])
            hi[i] = hi[i - 1];
    }
    Window w;
    w.lo = std::move(lo);
    w.hi = std::move(hi);
    return w;
}

DtwResult fast_dtw(const std::vector<float> &t, const std::vector<float> &r,
                   int radius) {
    const std::size_t min_len = static_cast<std::size_t>(radius) + 2;
    if (t.size() <= min_len || r.size() <= min_len)
        return dtw_windowed(t, r, full_window(t.size(), r.size()));
    const DtwResult coarse = fast_dtw(halve(t), halve(r), radius);
    const Window w =
        project_window(coarse.path.pairs, t.size(), r.size(), radius);
    return dtw_windowed(t, r, w);
}

} // namespace

void WarpPath::validate(std::size_t target_len,
                        std::size_t reference_len) const {
    if (pairs.empty())
        throw std::invalid_argument("empty warp path");
    if (pairs.front() != std::pair<std::size_t, std::size_t>{0, 0})
        throw std::invalid_argument("warp path must start at (0,0)");
    if (pairs.back().first != target_len - 1 ||
        pairs.back().second != reference_len - 1)
        throw std::invalid_argument("warp path must end at the last pair");
    for (std::size_t i = 1; i < pairs.size(); ++i) {
        const std::size_t dp = pairs[i].first - pairs[i - 1].first;
        const std::size_t dq = pairs[i].second - pairs[i - 1].second;
        if (pairs[i].first < pairs[i - 1].first ||
            pairs[i].second < pairs[i - 1].second || dp > 1 || dq > 1 ||
            (dp == 0 && dq == 0))
            throw std::invalid_argument("warp path steps must be unit moves");
    }
}

std::size_t dtw_cell_cap() { return g_cell_cap.load(); }

void set_dtw_cell_cap(std::size_t cells) {
    g_cell_cap.store(cells == 0 ? 1 : cells);
}

DtwResult dtw(const std::vector<float> &target,
              const std::vector<float> &reference,
              std::optional<int> radius) {
    if (target.empty() || reference.empty())
        throw std::invalid_argument("cannot warp an empty trace");
    if (radius) {
        if (*radius < 0)
            throw std::invalid_argument("radius must be non-negative");
        return fast_dtw(target, reference, *radius);
    }
    if (target.size() > dtw_cell_cap() / reference.size()) {
        std::cerr << "dtw: cost matrix over the cell cap, using the "
                     "radius-16 approximation\n";
        return fast_dtw(target, reference, 16);
    }
    return dtw_windowed(target, reference,
                        full_window(target.size(), reference.size()));
}

std::vector<float> elastic_align(const std::vector<float> &target,
                                 const std::vector<float> &reference,
                                 const WarpPath &path) {
    path.validate(target.size(), reference.size());
    std::vector<double> sum(reference.size(), 0.0);
    std::vector<std::uint32_t> hits(reference.size(), 0);
    for (const auto &[p, q] : path.pairs) {
        sum[q] += target[p];
        ++hits[q];
    }
    std::vector<float> out(reference.size());
    for (std::size_t q = 0; q < out.size(); ++q)
        out[q] = static_cast<float>(sum[q] / hits[q]);
    return out;
}

TraceSet align_set(const TraceSet &set, std::size_t reference_index,
                   std::optional<int> radius) {
    if (reference_index >= set.size())
        throw std::invalid_argument("reference index out of range");
    const std::vector<float> &ref = set.trace(reference_index).samples;

    std::vector<Trace> out(set.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (long long ti = 0; ti < static_cast<long long>(set.size()); ++ti) {
        const std::size_t i = static_cast<std::size_t>(ti);
        const Trace &src = set.trace(i);
        Trace dst = src;
        if (i == reference_index) {
            dst.samples = ref;
        } else {
            const DtwResult d = dtw(src.samples, ref, radius);
            dst.samples = elastic_align(src.samples, ref, d.path);
        }
        out[i] = std::move(dst);
    }
    return TraceSet(std::move(out), set.config(), set.provenance(),
                    set.sample_rate_hint());
}

} // namespace voltscope

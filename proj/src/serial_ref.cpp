#include "voltscope/serial_ref.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace voltscope::serial {

double pearson(const std::vector<double> &x, const std::vector<double> &y) {
    if (x.size() != y.size())
        throw std::invalid_argument("length mismatch");
    if (x.size() < 2)
        throw std::invalid_argument("need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0)
        return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> correlation_peaks(const TraceSet &set, int byte_index,
                                      LeakModel model) {
    if (set.size() < 2)
        throw std::invalid_argument("need at least two traces");
    const std::size_t n = set.size();
    const std::size_t len = set.n_samples();

    std::vector<double> peaks(256, 0.0);
    std::vector<double> hyp(n), col(n);
    for (int guess = 0; guess < 256; ++guess) {
        for (std::size_t i = 0; i < n; ++i)
            hyp[i] = leak_value(
                model, static_cast<std::uint8_t>(
                           set.trace(i).plaintext[byte_index] ^ guess));
        double best = 0.0;
        for (std::size_t s = 0; s < len; ++s) {
            for (std::size_t i = 0; i < n; ++i)
                col[i] = set.trace(i).samples[s];
            best = std::max(best, std::abs(pearson(hyp, col)));
        }
        peaks[guess] = best;
    }
    return peaks;
}

std::vector<double> welch_t(const Matrix<float> &group_a,
                            const Matrix<float> &group_b) {
    if (group_a.rows() < 2 || group_b.rows() < 2)
        throw std::invalid_argument("each group needs at least two traces");
    if (group_a.cols() != group_b.cols())
        throw std::invalid_argument("sample length mismatch");
    const std::size_t len = group_a.cols();
    const double na = static_cast<double>(group_a.rows());
    const double nb = static_cast<double>(group_b.rows());

    std::vector<double> t(len);
    for (std::size_t s = 0; s < len; ++s) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t r = 0; r < group_a.rows(); ++r)
            ma += group_a(r, s);
        for (std::size_t r = 0; r < group_b.rows(); ++r)
            mb += group_b(r, s);
        ma /= na;
        mb /= nb;
        double va = 0.0, vb = 0.0;
        for (std::size_t r = 0; r < group_a.rows(); ++r)
            va += (group_a(r, s) - ma) * (group_a(r, s) - ma);
        for (std::size_t r = 0; r < group_b.rows(); ++r)
            vb += (group_b(r, s) - mb) * (group_b(r, s) - mb);
        va /= na - 1.0;
        vb /= nb - 1.0;
        const double denom = std::sqrt(va / na + vb / nb);
        if (denom == 0.0)
            t[s] = ma == mb ? 0.0
                            : std::copysign(
                                  std::numeric_limits<double>::infinity(),
                                  ma - mb);
        else
            t[s] = (ma - mb) / denom;
    }
    return t;
}

std::vector<int> kmeans_assign(const Matrix<float> &data,
                               const Matrix<double> &centroids) {
    std::vector<int> assignment(data.rows(), 0);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            double d = 0.0;
            for (std::size_t s = 0; s < data.cols(); ++s) {
                const double diff = data(i, s) - centroids(c, s);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                assignment[i] = static_cast<int>(c);
            }
        }
    }
    return assignment;
}

} // namespace voltscope::serial

#pragma once

// First-round AES leakage model used to build CPA hypotheses.  The modeled
// intermediate is sbox(pt[byte] ^ k), i.e. the SubBytes output of round one,
// and its leakage is the Hamming weight of that value.

#include <cstdint>

#include "voltscope/matrix.hpp"
#include "voltscope/trace.hpp"

namespace voltscope {

// Forward AES S-box lookup.
std::uint8_t sbox(std::uint8_t x);

// Population count of an 8-bit value, 0..8.
int hamming_weight(std::uint8_t x);

// Hypothesis matrix for one key byte position: 256 rows (one per key guess)
// by n_traces columns, entry = HW(sbox(pt[byte_index] ^ guess)).
Matrix<float> build_hypothesis(const TraceSet &set, int byte_index);

// Modeled switching activity of a full first round for one plaintext/key
// pair: the sum of HW(sbox(pt[i] ^ key[i])) over all sixteen byte positions.
double first_round_model_power(const Block16 &plaintext, const Block16 &key);

// Mean and variance of first_round_model_power over uniform random
// plaintexts, independent of the key. These parameterize the analytic SNR
// formulas when no measured moments are supplied.
void model_power_moments(double &mu, double &var);

} // namespace voltscope

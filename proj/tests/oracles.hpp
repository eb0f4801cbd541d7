#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. These deliberately re-derive the expected behavior from the stated
// rules with different code paths than the library (brute force, enumeration,
// finite differences) so that a shared bug cannot hide.

#include <cstdint>
#include <functional>
#include <vector>

#include "stzoo/sampling.hpp"

namespace oracle {

// Frame sampling by direct rule application (double arithmetic, scan-based
// offset enumeration, explicit wraparound). Shares only the documented rng
// draw protocol with the library.
std::vector<std::vector<int64_t>> sample_plan(const stzoo::SamplerConfig& config, int64_t n_frames,
                                              uint64_t seed);

// Multiply-accumulate enumeration: literally counts one per multiply executed
// by a direct convolution (padded taps included).
int64_t conv2d_macs(int64_t n, int64_t ci, int64_t h, int64_t w, int64_t co, int64_t k, int64_t s,
                    int64_t p);
int64_t conv3d_macs(int64_t b, int64_t ci, int64_t t, int64_t h, int64_t w, int64_t co, int64_t kt,
                    int64_t k, int64_t s, int64_t p);
int64_t fc_macs(int64_t n, int64_t in, int64_t out);

// Eq. 1 arithmetic re-derivation.
struct Disentangled {
  double phi;
  double psi;
};
Disentangled disentangle_pair(double s_model, double s_tsn);

// Central-difference gradient of a scalar function of a parameter vector.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace oracle

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "oracles.hpp"
#include "stzoo/kernels.hpp"
#include "stzoo/rng.hpp"

using namespace stzoo;

namespace {

std::vector<double> randn(Rng& rng, int64_t n, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal() * scale;
  return v;
}

}  // namespace

TEST_CASE("conv2d matches a direct triple-checked reference on a small case") {
  // 1x1 input channel, 3x3 kernel, hand-computable
  std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9};  // 3x3
  std::vector<double> w = {0, 0, 0, 0, 1, 0, 0, 0, 0};  // identity tap
  std::vector<double> y(9), ws;
  kern::conv2d_forward(x.data(), w.data(), nullptr, y.data(), 1, 1, 3, 3, 1, 3, 1, 1, ws);
  for (int i = 0; i < 9; ++i) CHECK(y[static_cast<size_t>(i)] == doctest::Approx(x[static_cast<size_t>(i)]));
}

TEST_CASE("conv2d gradients match central differences in double") {
  Rng rng(42);
  const int64_t n = 2, ci = 3, h = 5, w = 5, co = 4, k = 3, s = 2, p = 1;
  const int64_t ho = kern::conv_out(h, k, s, p), wo = kern::conv_out(w, k, s, p);
  std::vector<double> x = randn(rng, n * ci * h * w);
  std::vector<double> wt = randn(rng, co * ci * k * k, 0.5);
  std::vector<double> b = randn(rng, co, 0.1);
  std::vector<double> r = randn(rng, n * co * ho * wo);  // random cotangent

  auto loss_of = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                     const std::vector<double>& bb) {
    std::vector<double> y(static_cast<size_t>(n * co * ho * wo)), ws;
    kern::conv2d_forward(xx.data(), ww.data(), bb.data(), y.data(), n, ci, h, w, co, k, s, p, ws);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };

  std::vector<double> gx(x.size()), gw(wt.size(), 0.0), gb(b.size(), 0.0), ws;
  kern::conv2d_backward(x.data(), wt.data(), r.data(), gx.data(), gw.data(), gb.data(), n, ci, h,
                        w, co, k, s, p, ws);

  auto fd_x = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(v, wt, b); }, x);
  auto fd_w = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, v, b); }, wt);
  auto fd_b = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, wt, v); }, b);
  CHECK(oracle::max_rel_error(gx, fd_x) < 1e-6);
  CHECK(oracle::max_rel_error(gw, fd_w) < 1e-6);
  CHECK(oracle::max_rel_error(gb, fd_b) < 1e-6);
}

TEST_CASE("conv3d gradients match central differences in double") {
  Rng rng(43);
  const int64_t bn = 1, ci = 2, tt = 4, h = 4, w = 4, co = 3, kt = 3, k = 3, s = 1, p = 1;
  std::vector<double> x = randn(rng, bn * ci * tt * h * w);
  std::vector<double> wt = randn(rng, co * ci * kt * k * k, 0.3);
  std::vector<double> b = randn(rng, co, 0.1);
  std::vector<double> r = randn(rng, bn * co * tt * h * w);

  auto loss_of = [&](const std::vector<double>& xx, const std::vector<double>& ww) {
    std::vector<double> y(static_cast<size_t>(bn * co * tt * h * w)), ws;
    kern::conv3d_forward(xx.data(), ww.data(), b.data(), y.data(), bn, ci, tt, h, w, co, kt, k, s,
                         p, ws);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };

  std::vector<double> gx(x.size()), gw(wt.size(), 0.0), gb(b.size(), 0.0), ws;
  kern::conv3d_backward(x.data(), wt.data(), r.data(), gx.data(), gw.data(), gb.data(), bn, ci,
                        tt, h, w, co, kt, k, s, p, ws);
  auto fd_x = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(v, wt); }, x);
  auto fd_w = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, v); }, wt);
  CHECK(oracle::max_rel_error(gx, fd_x) < 1e-6);
  CHECK(oracle::max_rel_error(gw, fd_w) < 1e-6);
}

TEST_CASE("batchnorm training-mode gradients match central differences") {
  Rng rng(44);
  const int64_t n = 4, c = 3, inner = 6;
  std::vector<double> x = randn(rng, n * c * inner);
  std::vector<double> gamma = randn(rng, c, 0.5);
  std::vector<double> beta = randn(rng, c, 0.5);
  for (auto& g : gamma) g += 1.0;
  std::vector<double> r = randn(rng, n * c * inner);

  auto loss_of = [&](const std::vector<double>& xx, const std::vector<double>& gg,
                     const std::vector<double>& bb) {
    std::vector<double> y(xx.size()), rm(static_cast<size_t>(c), 0.0), rv(static_cast<size_t>(c), 1.0);
    std::vector<double> sm(static_cast<size_t>(c)), si(static_cast<size_t>(c));
    kern::bn_forward(xx.data(), y.data(), gg.data(), bb.data(), rm.data(), rv.data(), sm.data(),
                     si.data(), n, c, inner, 0.1, 1e-9, true);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };

  std::vector<double> y(x.size()), rm(static_cast<size_t>(c), 0.0), rv(static_cast<size_t>(c), 1.0);
  std::vector<double> sm(static_cast<size_t>(c)), si(static_cast<size_t>(c));
  kern::bn_forward(x.data(), y.data(), gamma.data(), beta.data(), rm.data(), rv.data(), sm.data(),
                   si.data(), n, c, inner, 0.1, 1e-9, true);
  std::vector<double> gx(x.size()), gg(gamma.size(), 0.0), gb(beta.size(), 0.0);
  kern::bn_backward(x.data(), r.data(), gamma.data(), sm.data(), si.data(), gx.data(), gg.data(),
                    gb.data(), n, c, inner);

  auto fd_x = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(v, gamma, beta); }, x);
  auto fd_g = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, v, beta); }, gamma);
  auto fd_b = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, gamma, v); }, beta);
  CHECK(oracle::max_rel_error(gx, fd_x) < 1e-5);
  CHECK(oracle::max_rel_error(gg, fd_g) < 1e-6);
  CHECK(oracle::max_rel_error(gb, fd_b) < 1e-6);
}

TEST_CASE("temporal max pooling halves the length and routes gradients to the argmax") {
  const int64_t outer = 2, tin = 8, inner = 3;
  CHECK(kern::pool_out(8, 3, 2, 1, false) == 4);
  CHECK(kern::pool_out(4, 3, 2, 1, false) == 2);
  CHECK(kern::pool_out(2, 3, 2, 1, false) == 1);
  CHECK(kern::pool_out(1, 3, 2, 1, false) == 1);
  Rng rng(45);
  std::vector<double> x = randn(rng, outer * tin * inner);
  std::vector<double> y(static_cast<size_t>(outer * 4 * inner));
  std::vector<int64_t> am(y.size());
  kern::temporal_maxpool_forward(x.data(), y.data(), am.data(), outer, tin, inner, 3, 2, 1);
  std::vector<double> r = randn(rng, outer * 4 * inner);
  std::vector<double> gx(x.size());
  kern::temporal_maxpool_backward(r.data(), am.data(), gx.data(), outer, tin, inner, 4);
  auto loss_of = [&](const std::vector<double>& xx) {
    std::vector<double> yy(y.size());
    std::vector<int64_t> aa(y.size());
    kern::temporal_maxpool_forward(xx.data(), yy.data(), aa.data(), outer, tin, inner, 3, 2, 1);
    double acc = 0;
    for (size_t i = 0; i < yy.size(); ++i) acc += yy[i] * r[i];
    return acc;
  };
  auto fd = oracle::central_difference(loss_of, x, 1e-6);
  CHECK(oracle::max_rel_error(gx, fd) < 1e-5);
}

TEST_CASE("tam gradients match central differences (double)") {
  Rng rng(46);
  const int64_t b = 2, t = 8, c = 3, hw = 4;
  std::vector<double> x = randn(rng, b * t * c * hw);
  std::vector<double> w = randn(rng, c * 3, 0.7);
  std::vector<double> r = randn(rng, b * t * c * hw);
  auto loss_of = [&](const std::vector<double>& xx, const std::vector<double>& ww) {
    std::vector<double> y(xx.size());
    kern::tam_forward(xx.data(), ww.data(), y.data(), b, t, c, hw);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };
  std::vector<double> gx(x.size()), gw(w.size(), 0.0);
  kern::tam_backward(x.data(), w.data(), r.data(), gx.data(), gw.data(), b, t, c, hw);
  auto fd_x = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(v, w); }, x);
  auto fd_w = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, v); }, w);
  CHECK(oracle::max_rel_error(gx, fd_x) < 1e-4);
  CHECK(oracle::max_rel_error(gw, fd_w) < 1e-4);
}

TEST_CASE("temporal conv1d gradients match central differences (double)") {
  Rng rng(47);
  const int64_t b = 1, t = 8, c = 4, hw = 3;
  std::vector<double> x = randn(rng, b * t * c * hw);
  std::vector<double> w = randn(rng, c * c * 3, 0.4);
  std::vector<double> bias = randn(rng, c, 0.1);
  std::vector<double> r = randn(rng, b * t * c * hw);
  auto loss_of = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                     const std::vector<double>& bb) {
    std::vector<double> y(xx.size()), ws;
    kern::tconv1d_forward(xx.data(), ww.data(), bb.data(), y.data(), b, t, c, hw, ws);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };
  std::vector<double> gx(x.size()), gw(w.size(), 0.0), gb(bias.size(), 0.0), ws;
  kern::tconv1d_backward(x.data(), w.data(), r.data(), gx.data(), gw.data(), gb.data(), b, t, c,
                         hw, ws);
  auto fd_x = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(v, w, bias); }, x);
  auto fd_w = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, v, bias); }, w);
  auto fd_b = oracle::central_difference([&](const std::vector<double>& v) { return loss_of(x, w, v); }, bias);
  CHECK(oracle::max_rel_error(gx, fd_x) < 1e-4);
  CHECK(oracle::max_rel_error(gw, fd_w) < 1e-4);
  CHECK(oracle::max_rel_error(gb, fd_b) < 1e-4);
}

TEST_CASE("tsm backward is the transposed shift") {
  Rng rng(48);
  const int64_t b = 1, t = 6, c = 8, hw = 2, shift = 2;
  std::vector<double> x = randn(rng, b * t * c * hw);
  std::vector<double> r = randn(rng, b * t * c * hw);
  std::vector<double> gx(x.size());
  kern::tsm_backward(r.data(), gx.data(), b, t, c, hw, shift);
  auto loss_of = [&](const std::vector<double>& xx) {
    std::vector<double> y(xx.size());
    kern::tsm_forward(xx.data(), y.data(), b, t, c, hw, shift);
    double acc = 0;
    for (size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };
  auto fd = oracle::central_difference(loss_of, x, 1e-6);
  CHECK(oracle::max_rel_error(gx, fd) < 1e-6);
}

TEST_CASE("maxpool2d ceil mode matches the clamped window rule") {
  // 112 -> 56 with k3 s2 ceil (floor would give 55)
  CHECK(kern::pool_out(112, 3, 2, 0, true) == 56);
  CHECK(kern::pool_out(112, 3, 2, 0, false) == 55);
  // the last window must still start inside the input
  CHECK(kern::pool_out(4, 2, 2, 0, true) == 2);
}

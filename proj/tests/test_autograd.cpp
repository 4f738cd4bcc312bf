#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fd_oracle.hpp"
#include "scp/adam.hpp"
#include "scp/autograd.hpp"
#include "scp/error.hpp"
#include "scp/rng.hpp"

using namespace scp;
using scp::testing::max_grad_error;
using scp::testing::random_tensor;

TEST_CASE("matmul values") {
  ag::Tape tape;
  auto b = random_tensor(Shape{3, 4}, 11);
  auto eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = ag::matmul(tape.constant(eye), tape.constant(b));
  CHECK(out.value().vec() == b.vec());

  auto lhs = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto rhs = Tensor::matrix(2, 1, {1, 1});
  auto prod = ag::matmul(tape.constant(lhs), tape.constant(rhs));
  CHECK(prod.shape() == Shape{2, 1});
  CHECK(prod.value()[0] == 3.0);
  CHECK(prod.value()[1] == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  ag::Tape tape;
  auto a = tape.constant(Tensor(Shape{2, 3}));
  auto b = tape.constant(Tensor(Shape{2, 3}));
  try {
    ag::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("grad of sum(A B) w.r.t. A is ones * B^T") {
  auto a = random_tensor(Shape{3, 4}, 1);
  auto b = random_tensor(Shape{4, 2}, 2);
  ag::Tape tape;
  auto av = tape.input(a);
  tape.backward(ag::sum(ag::matmul(av, tape.constant(b))));
  auto ga = tape.grad_of(av);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(ga[i * 4 + k] == doctest::Approx(b.at(k, 0) + b.at(k, 1)));
  // and the finite-difference oracle agrees
  CHECK(max_grad_error({a, b}, [](ag::Tape&, const std::vector<ag::Var>& v) {
          return ag::sum(ag::matmul(v[0], v[1]));
        }) < 1e-4);
}

TEST_CASE("elementwise kinds") {
  ag::Tape tape;
  auto zero = tape.input(Tensor::scalar(0.0));
  auto s = ag::sigmoid(zero);
  CHECK(s.item() == 0.5);
  CHECK(ag::tanh(tape.constant(Tensor::scalar(0.0))).item() == 0.0);
  tape.backward(s);
  CHECK(tape.grad_of(zero)[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(max_grad_error({Tensor::scalar(0.0)}, [](ag::Tape&, const std::vector<ag::Var>& v) {
          return ag::sigmoid(v[0]);
        }) < 1e-6);

  ag::Tape t2;
  CHECK_THROWS_AS(ag::add(t2.constant(Tensor(Shape{2})), t2.constant(Tensor(Shape{3}))),
                  DimensionError);
}

TEST_CASE("softmax closed forms") {
  ag::Tape tape;
  auto uni = ag::softmax_rows(tape.constant(Tensor(Shape{1, 3}, {2.5, 2.5, 2.5})));
  for (double p : uni.value().data()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto two = ag::softmax_rows(tape.constant(Tensor(Shape{1, 2}, {std::log(1.0), std::log(3.0)})));
  CHECK(two.value()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(two.value()[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and is shift invariant on random rows") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto x = random_tensor(Shape{4, 9}, seed, -30.0, 30.0);
    auto shifted = x;
    for (auto& v : shifted.data()) v += 17.25;
    ag::Tape tape;
    auto a = ag::softmax_rows(tape.constant(x));
    auto b = ag::softmax_rows(tape.constant(shifted));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double p : a.value().row(r)) {
        CHECK(p > 0.0);
        s += p;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(std::abs(a.value()[i] - b.value()[i]) < 1e-12);
  }
}

TEST_CASE("cross entropy") {
  ag::Tape tape;
  const std::vector<double> onehot{0, 1, 0, 0};
  auto uniform = ag::cross_entropy(tape.constant(Tensor(Shape{1, 4})), onehot);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  auto confident = ag::cross_entropy(tape.constant(Tensor(Shape{1, 4}, {0, 60, 0, 0})), onehot);
  CHECK(confident.item() < 1e-20);

  const std::vector<double> bad{0.5, 0.6, 0, 0};
  CHECK_THROWS_AS(ag::cross_entropy(tape.constant(Tensor(Shape{1, 4})), bad), ContractError);

  // soft targets: logits gradient by finite differences (perturbing the
  // target would leave the simplex), target gradient is -w * log p exactly
  auto target = Tensor(Shape{2, 4}, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.0, 0.5});
  auto logits = random_tensor(Shape{2, 4}, 5);
  const std::vector<double> w{0.7, 1.3};
  CHECK(max_grad_error({logits}, [&](ag::Tape& t, const std::vector<ag::Var>& v) {
          return ag::cross_entropy_rows(v[0], t.constant(target), w);
        }) < 1e-4);
  ag::Tape t2;
  auto tv = t2.input(target);
  auto zv = t2.constant(logits);
  t2.backward(ag::cross_entropy_rows(zv, tv, w));
  auto logp = ag::log_softmax_rows(zv);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(t2.grad_of(tv)[i] == doctest::Approx(-w[i / 4] * logp.value()[i]).epsilon(1e-12));
}

TEST_CASE("backward basics") {
  auto x = random_tensor(Shape{5}, 9);
  {
    ag::Tape tape;
    auto xv = tape.input(x);
    tape.backward(ag::sum(xv));
    for (double g : tape.grad_of(xv)) CHECK(g == 1.0);
  }
  {
    ag::Tape tape;
    auto xv = tape.input(x);
    tape.backward(ag::sum(ag::mul(xv, xv)));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(tape.grad_of(xv)[i] == 2.0 * x[i]);
  }
  ag::Tape tape;
  auto xv = tape.input(x);
  CHECK_THROWS_AS(tape.backward(xv), ContractError);
}

TEST_CASE("non-finite values abort naming the operation") {
  ag::Tape tape;
  auto x = tape.constant(Tensor::scalar(10.0));
  try {
    ag::scale(x, 1e308);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }
}

TEST_CASE("every differentiable kernel matches central differences") {
  using V = std::vector<ag::Var>;
  const auto m = random_tensor(Shape{3, 4}, 21);
  const auto n = random_tensor(Shape{3, 4}, 22);
  const auto w = random_tensor(Shape{3, 4}, 23);  // random loss weights
  auto weighted = [w](ag::Tape& t, ag::Var y) { return ag::sum(ag::mul(y, t.constant(w))); };

  CHECK(max_grad_error({m, n}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::add(v[0], v[1])); }) < 1e-4);
  CHECK(max_grad_error({m, n}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::sub(v[0], v[1])); }) < 1e-4);
  CHECK(max_grad_error({m, n}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::mul(v[0], v[1])); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::scale(v[0], -1.7)); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::add_scalar(v[0], 0.3)); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::sigmoid(v[0])); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::tanh(v[0])); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::relu(v[0])); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::softmax_rows(v[0])); }) < 1e-4);
  CHECK(max_grad_error({m}, [&](ag::Tape& t, const V& v) { return weighted(t, ag::log_softmax_rows(v[0])); }) < 1e-4);
  CHECK(max_grad_error({m, random_tensor(Shape{4}, 24)}, [&](ag::Tape& t, const V& v) {
          return weighted(t, ag::add_bias(v[0], v[1]));
        }) < 1e-4);
  CHECK(max_grad_error({random_tensor(Shape{3, 2}, 25), random_tensor(Shape{3, 2}, 26)},
                       [&](ag::Tape& t, const V& v) {
                         auto c = ag::concat_cols({v[0], v[1]});
                         return weighted(t, c);
                       }) < 1e-4);
  CHECK(max_grad_error({random_tensor(Shape{3, 7}, 27)}, [&](ag::Tape& t, const V& v) {
          return weighted(t, ag::slice_cols(v[0], 2, 4));
        }) < 1e-4);
  CHECK(max_grad_error({random_tensor(Shape{1, 4}, 28), random_tensor(Shape{2, 4}, 29)},
                       [&](ag::Tape& t, const V& v) { return weighted(t, ag::concat_rows({v[0], v[1]})); }) < 1e-4);
  const std::vector<std::size_t> ids{4, 0, 4};
  CHECK(max_grad_error({random_tensor(Shape{5, 4}, 30)}, [&](ag::Tape& t, const V& v) {
          return weighted(t, ag::gather_rows(v[0], ids));
        }) < 1e-4);
  const std::vector<std::uint8_t> keep{1, 0, 1};
  CHECK(max_grad_error({m, n}, [&](ag::Tape& t, const V& v) {
          return weighted(t, ag::blend_rows(v[0], v[1], keep));
        }) < 1e-4);
}

TEST_CASE("attention and classifier kernels match central differences") {
  using V = std::vector<ag::Var>;
  const std::size_t b = 2, len = 3, a = 4, h = 5;
  const auto wts = random_tensor(Shape{b, len}, 40);
  auto score_loss = [&](ag::Tape& t, const V& v) {
    return ag::sum(ag::mul(ag::additive_scores(v[0], v[1], v[2], len), t.constant(wts)));
  };
  CHECK(max_grad_error({random_tensor(Shape{b * len, a}, 41), random_tensor(Shape{b, a}, 42),
                        random_tensor(Shape{a, 1}, 43)},
                       score_loss) < 1e-4);

  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};
  const auto w2 = random_tensor(Shape{b, h}, 44);
  CHECK(max_grad_error({random_tensor(Shape{b, len}, 45), random_tensor(Shape{b * len, h}, 46)},
                       [&](ag::Tape& t, const V& v) {
                         auto alpha = ag::masked_softmax_rows(v[0], mask);
                         return ag::sum(ag::mul(ag::attend(alpha, v[1]), t.constant(w2)));
                       }) < 1e-4);

  const auto w3 = random_tensor(Shape{b * len, h}, 47);
  CHECK(max_grad_error({random_tensor(Shape{b, h}, 48), random_tensor(Shape{b, h}, 49),
                        random_tensor(Shape{b, h}, 50)},
                       [&](ag::Tape& t, const V& v) {
                         return ag::sum(ag::mul(ag::stack_time({v[0], v[1], v[2]}), t.constant(w3)));
                       }) < 1e-4);

  // windows of width 2 over two sequences of length 4, then masked max
  const std::vector<std::uint8_t> valid{1, 1, 1, 1, 1, 0};
  const auto w4 = random_tensor(Shape{2, 6}, 51);
  CHECK(max_grad_error({random_tensor(Shape{8, 3}, 52)}, [&](ag::Tape& t, const V& v) {
          auto win = ag::unfold_windows(v[0], 2, 4, 2);
          return ag::sum(ag::mul(ag::masked_max_groups(win, valid, 3), t.constant(w4)));
        }) < 1e-4);

  std::vector<ag::CosineTerm> terms{{0, {1.0, 0.5, -0.2}, 1.5}, {2, {0.3, -1.0, 0.8}, 1.0},
                                    {0, {-0.4, 0.1, 0.9}, 0.5}};
  CHECK(max_grad_error({random_tensor(Shape{3, 3}, 53)}, [&](ag::Tape&, const V& v) {
          return ag::cosine_distance_sum(v[0], terms);
        }) < 1e-4);
}

TEST_CASE("fused GRU gates match central differences") {
  const auto w = random_tensor(Shape{3, 4}, 70);
  CHECK(max_grad_error({random_tensor(Shape{3, 12}, 71), random_tensor(Shape{3, 12}, 72),
                        random_tensor(Shape{3, 4}, 73)},
                       [&](ag::Tape& t, const std::vector<ag::Var>& v) {
                         return ag::sum(ag::mul(ag::gru_gates(v[0], v[1], v[2]), t.constant(w)));
                       }) < 1e-4);
  // and agree with the same cell spelled out in primitive ops
  ag::Tape tape;
  auto gx = tape.constant(random_tensor(Shape{2, 6}, 74));
  auto gh = tape.constant(random_tensor(Shape{2, 6}, 75));
  auto h = tape.constant(random_tensor(Shape{2, 2}, 76));
  auto r = ag::sigmoid(ag::add(ag::slice_cols(gx, 0, 2), ag::slice_cols(gh, 0, 2)));
  auto z = ag::sigmoid(ag::add(ag::slice_cols(gx, 2, 2), ag::slice_cols(gh, 2, 2)));
  auto n = ag::tanh(ag::add(ag::slice_cols(gx, 4, 2), ag::mul(r, ag::slice_cols(gh, 4, 2))));
  auto ref = ag::add(n, ag::mul(z, ag::sub(h, n)));
  auto fused = ag::gru_gates(gx, gh, h);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fused.value()[i] == doctest::Approx(ref.value()[i]).epsilon(1e-14));
}

TEST_CASE("backward is deterministic") {
  auto x = random_tensor(Shape{6, 5}, 60);
  auto w = random_tensor(Shape{5, 5}, 61);
  auto run = [&] {
    ag::Tape tape;
    auto xv = tape.input(x);
    auto y = ag::softmax_rows(ag::tanh(ag::matmul(xv, tape.constant(w))));
    tape.backward(ag::sum(ag::mul(y, y)));
    auto g = tape.grad_of(xv);
    return std::vector<double>(g.begin(), g.end());
  };
  CHECK(run() == run());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p(Shape{3}, {1.0, -2.0, 3.0});
    p.zero_grad();
    AdamState st;
    std::vector<ParamRef> refs{{"p", &p}};
    for (int i = 0; i < 5; ++i) adam_step(refs, st, 0.1);
    CHECK(p.vec() == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(st.step == 5);
  }
  SUBCASE("first step with unit gradient moves by lr") {
    Tensor p = Tensor::scalar(0.0);
    p.grad()[0] = 1.0;
    AdamState st;
    std::vector<ParamRef> refs{{"p", &p}};
    adam_step(refs, st, 0.1);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    const double after_one = p[0];
    adam_step(refs, st, 0.1);
    CHECK(p[0] < after_one);
  }
  SUBCASE("non-finite gradient names the parameter") {
    Tensor p = Tensor::scalar(0.0);
    p.grad()[0] = std::nan("");
    AdamState st;
    std::vector<ParamRef> refs{{"decoder.W", &p}};
    try {
      adam_step(refs, st, 0.1);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("decoder.W") != std::string::npos);
    }
  }
}

TEST_CASE("gumbel noise") {
  CHECK(gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(gumbel_from_uniform(1.0)));

  Rng rng(2024);
  auto g = gumbel_noise(rng, Shape{100000});
  double mean = 0.0;
  for (double v : g.data()) mean += v;
  mean /= static_cast<double>(g.size());
  CHECK(std::abs(mean - std::numbers::egamma) < 0.02);

  Rng a(7), b(7);
  CHECK(gumbel_noise(a, Shape{4, 9}).vec() == gumbel_noise(b, Shape{4, 9}).vec());
}

TEST_CASE("rng state round-trips") {
  Rng a(99);
  for (int i = 0; i < 10; ++i) a.normal();
  Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  CHECK(Rng(5).derive("x").next_u64() == Rng(5).derive("x").next_u64());
  CHECK(Rng(5).derive("x").next_u64() != Rng(5).derive("y").next_u64());
}

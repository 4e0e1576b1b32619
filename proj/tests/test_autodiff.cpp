#include <doctest.h>

#include <cmath>
#include <cstring>

#include "qdc/errors.hpp"
#include "qdc/optim.hpp"
#include "qdc/tensor.hpp"
#include "test_util.hpp"

using namespace qdc;
using namespace qdc::ad;
using qdc::test::random_tensor;

TEST_CASE("matmul forward basics") {
  Tape tape;
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  Tensor out = tape.matmul(eye, b);
  CHECK(out.at(0, 0) == 5);
  CHECK(out.at(0, 1) == 6);
  CHECK(out.at(1, 0) == 7);
  CHECK(out.at(1, 1) == 8);

  Tensor r = tape.matmul(Tensor::matrix(1, 2, {1, 2}),
                         Tensor::matrix(2, 1, {3, 4}));
  CHECK(r.item() == 11);

  CHECK_THROWS_AS(tape.matmul(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}),
                              Tensor::matrix(2, 2, {1, 2, 3, 4})),
                  DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto value = [&]() {
    Tape t;
    return t.sum(t.matmul(a, b)).item();
  };
  auto backward = [&]() {
    Tape t;
    t.backward(t.sum(t.matmul(a, b)));
  };
  CHECK(qdc::test::check_grads(value, backward, {a, b}));
}

TEST_CASE("causal conv basics") {
  Tape tape;
  SUBCASE("w=1 all-ones kernel is identity") {
    Rng rng(3);
    Tensor x = random_tensor({4, 3}, rng, false);
    Tensor k = Tensor::full({1, 3}, 1.0);
    Tensor b = Tensor::zeros({3});
    Tensor out = tape.causal_conv1d(x, k, b);
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 3; ++c) CHECK(out.at(i, c) == x.at(i, c));
  }
  SUBCASE("pairwise causal sums with zero pad") {
    Tensor x = Tensor::matrix(3, 1, {1, 2, 3});
    Tensor k = Tensor::matrix(2, 1, {1, 1});
    Tensor b = Tensor::zeros({1});
    Tensor out = tape.causal_conv1d(x, k, b);
    CHECK(out.at(0, 0) == 1);
    CHECK(out.at(1, 0) == 3);
    CHECK(out.at(2, 0) == 5);
  }
  SUBCASE("window larger than input is fine, zero window is not") {
    Tensor x = Tensor::matrix(2, 1, {1, 2});
    Tensor k = Tensor::matrix(5, 1, {1, 1, 1, 1, 1});
    Tensor out = tape.causal_conv1d(x, k, Tensor::zeros({1}));
    CHECK(out.at(0, 0) == 1);
    CHECK(out.at(1, 0) == 3);
    CHECK_THROWS_AS(
        tape.causal_conv1d(x, Tensor::zeros({0, 1}), Tensor::zeros({1})),
        ConfigError);
  }
}

TEST_CASE("causal conv causality: out[j] ignores x[i] for i > j") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int L = 2 + rng.uniform_int(6);
    const int d = 1 + rng.uniform_int(3);
    const int w = 1 + rng.uniform_int(4);
    Tensor x = random_tensor({L, d}, rng, false);
    Tensor k = random_tensor({w, d}, rng, false);
    Tensor b = random_tensor({d}, rng, false);
    Tape t1;
    Tensor base = t1.causal_conv1d(x, k, b);

    const int i = rng.uniform_int(L);
    Tensor x2 = x.detached();
    for (int c = 0; c < d; ++c) x2.at(i, c) += rng.uniform(0.5, 2.0);
    Tape t2;
    Tensor pert = t2.causal_conv1d(x2, k, b);
    for (int j = 0; j < i; ++j)
      for (int c = 0; c < d; ++c) CHECK(base.at(j, c) == pert.at(j, c));
  }
}

TEST_CASE("block conv never crosses block boundaries") {
  Rng rng(6);
  const int L = 4, B = 3, d = 2, w = 3;
  Tensor x = random_tensor({B * L, d}, rng, false);
  Tensor k = random_tensor({w, d}, rng, false);
  Tensor bias = random_tensor({d}, rng, false);
  Tape t;
  Tensor big = t.causal_conv1d_blocks(x, k, bias, L);
  for (int b = 0; b < B; ++b) {
    Tensor xb = Tensor::zeros({L, d});
    for (int i = 0; i < L; ++i)
      for (int c = 0; c < d; ++c) xb.at(i, c) = x.at(b * L + i, c);
    Tensor small = t.causal_conv1d(xb, k, bias);
    for (int i = 0; i < L; ++i)
      for (int c = 0; c < d; ++c) CHECK(big.at(b * L + i, c) == small.at(i, c));
  }
}

TEST_CASE("layer norm") {
  Tape tape;
  SUBCASE("constant row maps to shift") {
    Tensor x = Tensor::matrix(1, 4, {3, 3, 3, 3});
    Tensor out =
        tape.layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
    for (int c = 0; c < 4; ++c) CHECK(out.at(0, c) == doctest::Approx(0.0));
  }
  SUBCASE("already normalized row is nearly unchanged") {
    Tensor x = Tensor::matrix(1, 2, {1, -1});
    Tensor out =
        tape.layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-10);
    CHECK(out.at(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(out.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-4));
  }
  SUBCASE("gradient vs finite differences") {
    Rng rng(7);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor g = random_tensor({5}, rng);
    Tensor s = random_tensor({5}, rng);
    Tensor target = random_tensor({3, 5}, rng, false);
    auto value = [&]() {
      Tape t;
      return t.mse(t.layer_norm(x, g, s, 1e-5), target).item();
    };
    auto backward = [&]() {
      Tape t;
      t.backward(t.mse(t.layer_norm(x, g, s, 1e-5), target));
    };
    CHECK(qdc::test::check_grads(value, backward, {x, g, s}));
  }
}

TEST_CASE("elementwise ops and reductions") {
  Tape tape;
  SUBCASE("relu values") {
    Tensor out = tape.relu(Tensor::row({-1, 2}));
    CHECK(out.at(0) == 0);
    CHECK(out.at(1) == 2);
  }
  SUBCASE("mse values") {
    Tensor x = Tensor::row({1, 2});
    CHECK(tape.mse(x, x).item() == 0.0);
    CHECK(tape.mse(Tensor::row({1, 2}), Tensor::row({0, 0})).item() ==
          doctest::Approx(2.5));
  }
  SUBCASE("min_elementwise is a lower bound of both") {
    Rng rng(9);
    Tensor a = random_tensor({4, 3}, rng, false);
    Tensor b = random_tensor({4, 3}, rng, false);
    Tensor m = tape.min_elementwise(a, b);
    for (long i = 0; i < m.size(); ++i) {
      CHECK(m.value()[static_cast<size_t>(i)] <=
            a.value()[static_cast<size_t>(i)]);
      CHECK(m.value()[static_cast<size_t>(i)] <=
            b.value()[static_cast<size_t>(i)]);
    }
  }
  SUBCASE("shape mismatch raises") {
    CHECK_THROWS_AS(tape.add(Tensor::row({1, 2}), Tensor::row({1, 2, 3})),
                    DimensionError);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("grad of sum is ones") {
    Tensor x = Tensor::row({1, 2, 3}, true);
    Tape t;
    t.backward(t.sum(x));
    CHECK(x.grad() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("repeated backward accumulates") {
    Tensor x = Tensor::row({1, 2, 3}, true);
    Tape t;
    Tensor loss = t.sum(x);
    t.backward(loss);
    t.backward(loss);
    CHECK(x.grad() == std::vector<double>{2, 2, 2});
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor x = Tensor::row({1, 2}, true);
    Tape t;
    Tensor y = t.relu(x);
    CHECK_THROWS_AS(t.backward(y), UsageError);
  }
  SUBCASE("mse(Wx, y) matches finite differences on a 5x5 instance") {
    Rng rng(13);
    Tensor w = random_tensor({5, 5}, rng);
    Tensor x = random_tensor({5, 5}, rng, false);
    Tensor y = random_tensor({5, 5}, rng, false);
    auto value = [&]() {
      Tape t;
      return t.mse(t.matmul(w, x), y).item();
    };
    auto backward = [&]() {
      Tape t;
      t.backward(t.mse(t.matmul(w, x), y));
    };
    CHECK(qdc::test::check_grads(value, backward, {w}));
  }
}

TEST_CASE("every primitive matches finite differences on random instances") {
  Rng rng(101);
  int checked = 0;
  for (int rep = 0; rep < 120; ++rep) {
    const int which = rep % 12;
    const int L = 1 + rng.uniform_int(4);
    const int d = 1 + rng.uniform_int(5);
    Tensor x = random_tensor({L, d}, rng);
    Tensor y = random_tensor({L, d}, rng);
    std::function<Tensor(Tape&)> build;
    switch (which) {
      case 0: {
        Tensor b = random_tensor({d, 1 + rng.uniform_int(4)}, rng);
        build = [=](Tape& t) { return t.sum(t.matmul(x, b)); };
        break;
      }
      case 1: {
        Tensor k = random_tensor({1 + rng.uniform_int(4), d}, rng);
        Tensor b = random_tensor({d}, rng);
        build = [=](Tape& t) { return t.sum(t.causal_conv1d(x, k, b)); };
        break;
      }
      case 2: {
        Tensor g = random_tensor({d}, rng);
        Tensor s = random_tensor({d}, rng);
        build = [=](Tape& t) { return t.sum(t.layer_norm(x, g, s, 1e-5)); };
        break;
      }
      case 3:
        build = [=](Tape& t) { return t.sum(t.gelu(x)); };
        break;
      case 4:
        build = [=](Tape& t) { return t.sum(t.tanh(x)); };
        break;
      case 5:
        build = [=](Tape& t) { return t.mse(x, y); };
        break;
      case 6:
        build = [=](Tape& t) { return t.sum(t.mul(x, y)); };
        break;
      case 7:
        build = [=](Tape& t) { return t.sum(t.min_elementwise(x, y)); };
        break;
      case 8: {
        Tensor b = random_tensor({d}, rng);
        build = [=](Tape& t) { return t.sum(t.add_rowwise(x, b)); };
        break;
      }
      case 9:
        build = [=](Tape& t) { return t.mean(t.concat_cols(x, y)); };
        break;
      case 10: {
        std::vector<int> idx;
        for (int i = 0; i < 3; ++i) idx.push_back(rng.uniform_int(L));
        build = [=](Tape& t) { return t.sum(t.select_rows(x, idx)); };
        break;
      }
      default: {
        const int index = rng.uniform_int(L);
        build = [=](Tape& t) { return t.mean(t.embedding_lookup(x, index)); };
        break;
      }
    }
    auto value = [&]() {
      Tape t;
      return build(t).item();
    };
    auto backward = [&]() {
      Tape t;
      t.backward(build(t));
    };
    CHECK(qdc::test::check_grads(value, backward, {x, y}));
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(55);
  for (int rep = 0; rep < 30; ++rep) {
    Tensor x = random_tensor({2, 3}, rng);
    for (double& v : x.value())
      if (std::fabs(v) < 0.05) v += 0.1;
    auto value = [&]() {
      Tape t;
      return t.sum(t.relu(x)).item();
    };
    auto backward = [&]() {
      Tape t;
      t.backward(t.sum(t.relu(x)));
    };
    CHECK(qdc::test::check_grads(value, backward, {x}));
  }
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(77);
  Tensor x = random_tensor({6, 4}, rng, false);
  Tensor k = random_tensor({3, 4}, rng, false);
  Tensor b = random_tensor({4}, rng, false);
  Tape t;
  Tensor o1 = t.causal_conv1d(x, k, b);
  Tensor o2 = t.causal_conv1d(x, k, b);
  CHECK(std::memcmp(o1.value().data(), o2.value().data(),
                    sizeof(double) * static_cast<size_t>(o1.size())) == 0);
  CHECK(o1.all_finite());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::row({1.5, -2.0}, true);
    Adam opt({{"p", p}}, 0.1);
    opt.step();
    CHECK(p.at(0) == 1.5);
    CHECK(p.at(1) == -2.0);
  }
  SUBCASE("first bias-corrected step moves by about lr") {
    Tensor p = Tensor::scalar(1.0, true);
    Adam opt({{"p", p}}, 0.05);
    p.grad()[0] = 1.0;
    opt.step();
    CHECK(p.item() == doctest::Approx(1.0 - 0.05).epsilon(1e-6));
  }
  SUBCASE("minimizes a 1-D quadratic to 1e-6 within 2000 steps") {
    // f(x) = (x - 3)^2 / 2, minimum at 3
    Tensor p = Tensor::scalar(0.0, true);
    Adam opt({{"p", p}}, 1e-2);
    int steps = 0;
    for (; steps < 2000; ++steps) {
      p.zero_grad();
      p.grad()[0] = p.item() - 3.0;
      opt.step();
      if (std::fabs(p.item() - 3.0) < 1e-6) break;
    }
    CHECK(std::fabs(p.item() - 3.0) < 1e-6);
    CHECK(steps < 2000);
  }
}

TEST_CASE("global norm clipping") {
  Tensor a = Tensor::row({3.0}, true);
  Tensor b = Tensor::row({4.0}, true);
  a.grad()[0] = 3.0;
  b.grad()[0] = 4.0;
  ParamList params{{"a", a}, {"b", b}};
  const double norm = clip_global_norm(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));

  a.grad()[0] = 0.1;
  b.grad()[0] = 0.1;
  clip_global_norm(params, 1.0);
  CHECK(a.grad()[0] == 0.1);
}

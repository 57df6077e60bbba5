#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/metrics/si_sdr.hpp"
#include "lgtse/nets/gru.hpp"
#include "lgtse/nets/params.hpp"

using namespace lgtse;
using ad::Var;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                             double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences against one backward pass; the loss graph is
// rebuilt per probe. Returns the relative L2 error over all leaf coords.
double fd_check(std::vector<Var<double>> leaves, const std::function<Var<double>()>& loss_fn,
                double h = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  Var<double> loss = loss_fn();
  REQUIRE(loss.val().size() == 1);
  ad::backward(loss);

  double num = 0.0, den = 0.0;
  for (auto& l : leaves) {
    for (std::size_t i = 0; i < l.val().size(); ++i) {
      const double orig = l.mutable_val()[i];
      l.mutable_val()[i] = orig + h;
      const double fp = loss_fn().val()[0];
      l.mutable_val()[i] = orig - h;
      const double fm = loss_fn().val()[0];
      l.mutable_val()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = l.grad()[i];
      num += (an - fd) * (an - fd);
      den += fd * fd;
    }
  }
  return std::sqrt(num / std::max(den, 1e-30));
}

// Reduce any tensor to a scalar with fixed random weights so gradients are
// position-dependent.
Var<double> weigh(const Var<double>& x, std::uint64_t seed) {
  return ad::dot(x, Var<double>::constant(random_tensor(x.val().shape(), seed)));
}

}  // namespace

TEST_CASE("elementwise and scalar op gradients") {
  auto a = Var<double>::leaf(random_tensor({3, 4}, 1), true);
  auto b = Var<double>::leaf(random_tensor({3, 4}, 2, 0.5, 1.5), true);
  auto s = Var<double>::leaf(random_tensor({1}, 3, 0.5, 1.0), true);

  CHECK(fd_check({a, b}, [&] { return weigh(ad::add(a, b), 10); }) < 1e-7);
  CHECK(fd_check({a, b}, [&] { return weigh(ad::sub(a, b), 11); }) < 1e-7);
  CHECK(fd_check({a, b}, [&] { return weigh(ad::mul(a, b), 12); }) < 1e-7);
  CHECK(fd_check({a, b}, [&] { return weigh(ad::div(a, b), 13); }) < 1e-7);
  CHECK(fd_check({a}, [&] { return weigh(ad::scale(a, -2.5), 14); }) < 1e-7);
  CHECK(fd_check({a}, [&] { return weigh(ad::add_const(a, 0.7), 15); }) < 1e-7);
  CHECK(fd_check({s, a}, [&] { return weigh(ad::scalar_mul(s, a), 16); }) < 1e-7);
  CHECK(fd_check({a}, [&] { return weigh(ad::tanh_op(a), 17); }) < 1e-6);
  CHECK(fd_check({a}, [&] { return weigh(ad::sigmoid(a), 18); }) < 1e-6);
  CHECK(fd_check({b}, [&] { return weigh(ad::sqrt_eps(b, 1e-3), 19); }) < 1e-7);
  CHECK(fd_check({b}, [&] { return weigh(ad::log_op(b), 20); }) < 1e-7);
  CHECK(fd_check({b}, [&] { return weigh(ad::powc(b, 1.7), 21); }) < 1e-7);
  CHECK(fd_check({a}, [&] { return ad::mean_all(ad::mul(a, a)); }) < 1e-7);
}

TEST_CASE("relu and prelu gradients away from the kink") {
  // Keep probes off |x| < 2h so finite differences stay valid.
  Tensor<double> av = random_tensor({4, 4}, 30);
  for (std::size_t i = 0; i < av.size(); ++i)
    if (std::abs(av[i]) < 1e-2) av[i] = 0.1;
  auto a = Var<double>::leaf(av, true);
  auto slope = Var<double>::leaf(random_tensor({1}, 31, 0.1, 0.4), true);
  CHECK(fd_check({a}, [&] { return weigh(ad::relu(a), 32); }) < 1e-6);
  CHECK(fd_check({a, slope}, [&] { return weigh(ad::prelu(a, slope), 33); }) < 1e-6);
}

TEST_CASE("bias, matmul, transpose, softmax gradients") {
  auto x = Var<double>::leaf(random_tensor({4, 6}, 40), true);
  auto b = Var<double>::leaf(random_tensor({4}, 41), true);
  auto m = Var<double>::leaf(random_tensor({5, 4}, 42), true);

  CHECK(fd_check({x, b}, [&] { return weigh(ad::add_col_bias(x, b), 43); }) < 1e-7);
  CHECK(fd_check({m, x}, [&] { return weigh(ad::matmul(m, x), 44); }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::transpose(x), 45); }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::softmax_axis0(x), 46); }) < 1e-6);
}

TEST_CASE("slice / concat / stack / reshape gradients") {
  auto x = Var<double>::leaf(random_tensor({3, 4, 5}, 50), true);
  auto y = Var<double>::leaf(random_tensor({2, 4, 5}, 51), true);

  CHECK(fd_check({x}, [&] { return weigh(ad::slice_axis0(x, 1, 3), 52); }) < 1e-7);
  CHECK(fd_check({x, y}, [&] {
          return weigh(ad::concat_axis0<double>({x, y}), 53);
        }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::slice_dim1(x, 2), 54); }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::slice_dim2(x, 4), 55); }) < 1e-7);
  CHECK(fd_check({x}, [&] {
          std::vector<Var<double>> parts;
          for (std::size_t b = 0; b < 4; ++b) parts.push_back(ad::slice_dim1(x, b));
          return weigh(ad::stack_dim1(parts), 56);
        }) < 1e-7);
  CHECK(fd_check({x}, [&] {
          std::vector<Var<double>> parts;
          for (std::size_t c = 0; c < 5; ++c) parts.push_back(ad::slice_dim2(x, c));
          return weigh(ad::stack_dim2(parts), 57);
        }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::reshape(x, {12, 5}), 58); }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::mode1_matmul(random_tensor({7, 4}, 59), x), 60); }) <
        1e-7);
}

TEST_CASE("conv2d gradients across stride, dilation, and groups") {
  auto x = Var<double>::leaf(random_tensor({4, 9, 11}, 70), true);

  {
    auto w = Var<double>::leaf(random_tensor({6, 4, 3, 3}, 71), true);
    auto b = Var<double>::leaf(random_tensor({6}, 72), true);
    ad::ConvSpec cs;
    cs.pad_h = 1;
    cs.pad_w = 1;
    CHECK(fd_check({x, w, b}, [&] { return weigh(ad::conv2d(x, w, b, cs), 73); }) < 1e-6);
  }
  {
    auto w = Var<double>::leaf(random_tensor({6, 4, 3, 3}, 74), true);
    auto b = Var<double>::leaf(random_tensor({6}, 75), true);
    ad::ConvSpec cs;
    cs.stride_h = 2;
    cs.pad_h = 1;
    cs.pad_w = 2;
    cs.dil_w = 2;
    CHECK(fd_check({x, w, b}, [&] { return weigh(ad::conv2d(x, w, b, cs), 76); }) < 1e-6);
  }
  {
    auto w = Var<double>::leaf(random_tensor({8, 2, 1, 3}, 77), true);
    auto b = Var<double>::leaf(random_tensor({8}, 78), true);
    ad::ConvSpec cs;
    cs.pad_w = 1;
    cs.groups = 2;
    CHECK(fd_check({x, w, b}, [&] { return weigh(ad::conv2d(x, w, b, cs), 79); }) < 1e-6);
  }
}

TEST_CASE("conv_transpose2d gradients with stride and output padding") {
  auto x = Var<double>::leaf(random_tensor({3, 6, 7}, 80), true);
  auto w = Var<double>::leaf(random_tensor({3, 5, 3, 3}, 81), true);
  auto b = Var<double>::leaf(random_tensor({5}, 82), true);
  for (std::size_t outpad : {std::size_t(0), std::size_t(1)}) {
    CHECK(fd_check({x, w, b}, [&] {
            return weigh(ad::conv_transpose2d(x, w, b, 2, 1, 1, outpad), 83 + outpad);
          }) < 1e-6);
  }
}

TEST_CASE("pooling and upsampling gradients") {
  auto x = Var<double>::leaf(random_tensor({2, 3, 10}, 90), true);
  CHECK(fd_check({x}, [&] { return weigh(ad::avg_pool_w(x, 4), 91); }) < 1e-7);
  CHECK(fd_check({x}, [&] { return weigh(ad::upsample_w(x, 3, 30), 92); }) < 1e-7);
  CHECK(fd_check({x}, [&] {
          return weigh(ad::upsample_w(ad::avg_pool_w(x, 4), 4, 10), 93);
        }) < 1e-7);
}

TEST_CASE("complex_mul and drc_expand gradients") {
  auto m = Var<double>::leaf(random_tensor({6, 5}, 100), true);
  auto y = Var<double>::leaf(random_tensor({6, 5}, 101), true);
  CHECK(fd_check({m, y}, [&] { return weigh(ad::complex_mul(m, y), 102); }) < 1e-7);

  // Keep magnitudes off zero so the power law is smooth at the probe scale.
  Tensor<double> sv = random_tensor({6, 5}, 103);
  for (std::size_t i = 0; i < sv.size(); ++i) sv[i] += sv[i] >= 0 ? 0.3 : -0.3;
  auto s = Var<double>::leaf(sv, true);
  CHECK(fd_check({s}, [&] { return weigh(ad::drc_expand_graph(s, 0.5), 104); }) < 1e-6);
  CHECK(fd_check({s}, [&] { return weigh(ad::drc_expand_graph(s, 0.75), 105); }) < 1e-6);
}

TEST_CASE("istft gradient equals the adjoint") {
  const std::size_t fft = 16, hop = 4, frames = 6, bins = fft / 2 + 1;
  const std::size_t length = (frames - 1) * hop;
  auto spec = Var<double>::leaf(random_tensor({2 * bins, frames}, 110), true);
  CHECK(fd_check({spec}, [&] {
          return weigh(ad::istft_graph(spec, fft, hop, length), 111);
        }) < 1e-7);
}

TEST_CASE("si_sdr graph gradient and value") {
  Tensor<double> ref = random_tensor({64}, 120);
  Tensor<double> est0 = random_tensor({64}, 121);
  auto est = Var<double>::leaf(est0, true);
  CHECK(fd_check({est}, [&] { return ad_loss::si_sdr_graph(est, ref); }, 1e-7) < 1e-6);

  // Graph value agrees with the reporting metric away from the clamps.
  Waveform we, wr;
  we.samples.assign(est0.vec().begin(), est0.vec().end());
  wr.samples.assign(ref.vec().begin(), ref.vec().end());
  const double graph_db = ad_loss::si_sdr_graph(est, ref).val()[0];
  CHECK(graph_db == doctest::Approx(si_sdr(we, wr)).epsilon(1e-6));
}

TEST_CASE("gru step gradients") {
  ParamStore<double> ps;
  GruLayer<double> gru = GruLayer<double>::create(ps, "gru", 3, 4, 7);
  auto x0 = Var<double>::leaf(random_tensor({3, 5}, 130), true);
  auto x1 = Var<double>::leaf(random_tensor({3, 5}, 131), true);

  std::vector<Var<double>> leaves = {x0, x1};
  for (auto& e : ps.entries()) leaves.push_back(e.var);
  CHECK(fd_check(leaves, [&] {
          Var<double> h = gru.initial_state(5);
          h = gru.step(x0, h);
          h = gru.step(x1, h);
          return weigh(h, 132);
        }) < 1e-6);
}

TEST_CASE("gradient accumulation over repeated backward matches sum") {
  auto a = Var<double>::leaf(random_tensor({4}, 140), true);
  a.zero_grad();
  auto loss1 = ad::sum_all(ad::mul(a, a));
  ad::backward(loss1, 0.5);
  auto loss2 = ad::sum_all(ad::mul(a, a));
  ad::backward(loss2, 0.5);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(a.grad()[i] == doctest::Approx(2.0 * a.val()[i]).epsilon(1e-12));
}

TEST_CASE("inference mode graphs carry no backward state") {
  auto a = Var<double>::constant(random_tensor({8, 8}, 150));
  auto b = Var<double>::constant(random_tensor({8, 8}, 151));
  auto c = ad::matmul(a, b);
  CHECK(!c.requires_grad());
  CHECK(c.node()->parents.empty());
  CHECK(!c.node()->backward_fn);
}

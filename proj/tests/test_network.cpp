#include <catch2/catch_amalgamated.hpp>

#include "ildkit/nn/losses.hpp"
#include "ildkit/nn/network.hpp"
#include "ildkit/rng.hpp"
#include "oracles.hpp"

using namespace ildkit;
using namespace ildkit::nn;

namespace {

// small net touching every layer type
NetworkSpec tiny_net() {
  return NetworkSpec{{2, 8, 8},
                     {LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::fc(6), LayerSpec::relu(), LayerSpec::fc(4)}};
}

Tensor random_batch(Rng& rng, int n, const Shape3& s, double sd = 1.0) {
  Tensor t(n, s.c, s.h, s.w);
  for (double& v : t.data) v = rng.normal(0, sd);
  return t;
}

}  // namespace

TEST_CASE("forward shape arithmetic on the desk net") {
  Network net(desk_net(64));
  REQUIRE(net.output_shape().count() == 4);
  net.init_params(1);
  Rng rng(10);
  Tensor batch = random_batch(rng, 3, {3, 64, 64});
  Tensor out = net.forward(batch);
  REQUIRE(out.n == 3);
  REQUIRE(out.c == 4);
}

TEST_CASE("zero-initialized final layer gives all-zero outputs") {
  Network net(tiny_net());
  net.init_params(2);
  auto& last = net.params().back();
  last.W.fill(0.0);
  last.b.fill(0.0);
  Rng rng(3);
  Tensor batch = random_batch(rng, 2, {2, 8, 8});
  Tensor out = net.forward(batch);
  for (double v : out.data) REQUIRE(v == 0.0);
}

TEST_CASE("forward is pure: identical rows give identical outputs") {
  Network net(tiny_net());
  net.init_params(4);
  Rng rng(5);
  Tensor one = random_batch(rng, 1, {2, 8, 8});
  Tensor batch(5, 2, 8, 8);
  for (int i = 0; i < 5; ++i)
    std::copy(one.data.begin(), one.data.end(), batch.ptr(i));
  Tensor out = net.forward(batch);
  // rows agree to numerical noise; the GEMM tail kernel may order the
  // K-reduction differently for different row positions
  for (int i = 1; i < 5; ++i)
    for (int k = 0; k < 4; ++k)
      REQUIRE(out(i, k) == Catch::Approx(out(0, k)).epsilon(1e-12));

  // and repeated forward calls agree bit-exactly
  Tensor again = net.forward(batch);
  REQUIRE(again.data == out.data);
}

TEST_CASE("forward rejects a batch that does not match the input layer") {
  Network net(tiny_net());
  net.init_params(1);
  Tensor bad(1, 3, 8, 8);
  REQUIRE_THROWS_AS(net.forward(bad), usage_error);
}

TEST_CASE("network spec composition errors name the offending layer") {
  NetworkSpec bad{{1, 4, 4},
                  {LayerSpec::conv(2, 3), LayerSpec::maxpool(2), LayerSpec::maxpool(2),
                   LayerSpec::maxpool(2)}};
  try {
    Network net(bad);
    FAIL("expected composition error");
  } catch (const usage_error& e) {
    REQUIRE(std::string(e.what()).find("pool") != std::string::npos);
  }
}

TEST_CASE("backward with zero upstream gradient gives zero parameter gradients") {
  Network net(tiny_net());
  net.init_params(6);
  Rng rng(7);
  Tensor batch = random_batch(rng, 2, {2, 8, 8});
  ForwardCache cache;
  net.forward(batch, &cache);
  Tensor zero = Tensor::mat(2, 4);
  auto grads = net.backward(cache, zero);
  for (const auto& g : grads) {
    for (double v : g.W.data) REQUIRE(v == 0.0);
    for (double v : g.b.data) REQUIRE(v == 0.0);
  }
}

TEST_CASE("backward is linear: doubling grad_out doubles parameter gradients") {
  Network net(tiny_net());
  net.init_params(8);
  Rng rng(9);
  Tensor batch = random_batch(rng, 2, {2, 8, 8});
  ForwardCache cache;
  net.forward(batch, &cache);
  Tensor g1 = Tensor::mat(2, 4);
  for (double& v : g1.data) v = rng.normal(0, 1);
  Tensor g2 = g1;
  for (double& v : g2.data) v *= 2.0;
  auto grads1 = net.backward(cache, g1);
  auto grads2 = net.backward(cache, g2);
  for (std::size_t li = 0; li < grads1.size(); ++li)
    for (std::size_t j = 0; j < grads1[li].W.data.size(); ++j)
      REQUIRE(grads2[li].W.data[j] ==
              Catch::Approx(2.0 * grads1[li].W.data[j]).margin(1e-12));
}

TEST_CASE("backward without a forward cache is a state error") {
  Network net(tiny_net());
  net.init_params(1);
  ForwardCache cache;  // never filled
  Tensor g = Tensor::mat(1, 4);
  REQUIRE_THROWS_AS(net.backward(cache, g), data_error);
}

// The central gradient check: every layer type, all three loss heads, every
// parameter of a tiny net against central finite differences.
TEST_CASE("parameter gradients match central finite differences for all heads") {
  Rng rng(11);
  Tensor batch = random_batch(rng, 2, {2, 8, 8});
  Tensor y_cls = Tensor::mat(2, 4);
  Tensor y_reg = Tensor::mat(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) {
      y_cls(i, k) = rng.bernoulli(0.5) ? 1.0 : -1.0;
      y_reg(i, k) = rng.normal(0.0, 2.0);
    }
  std::vector<double> beta = {0.16, 0.21, 0.21, 0.17};

  struct HeadCase {
    const char* name;
    std::function<double(const Tensor&, Tensor&)> loss;
  };
  std::vector<HeadCase> heads = {
      {"logistic",
       [&](const Tensor& f, Tensor& g) {
         return loss_multilabel_logistic(f, y_cls, beta, g);
       }},
      {"l2",
       [&](const Tensor& f, Tensor& g) {
         return loss_regression(f, y_reg, RegressionKind::l2, beta, g);
       }},
      {"smooth_l1",
       [&](const Tensor& f, Tensor& g) {
         return loss_regression(f, y_reg, RegressionKind::smooth_l1, beta, g);
       }},
  };

  for (const auto& head : heads) {
    DYNAMIC_SECTION("head " << head.name) {
      Network net(tiny_net());
      net.init_params(13);

      auto loss_at = [&]() {
        Tensor out = net.forward(batch);
        Tensor g;
        return head.loss(out, g);
      };

      ForwardCache cache;
      Tensor out = net.forward(batch, &cache);
      Tensor grad_out;
      head.loss(out, grad_out);
      auto grads = net.backward(cache, grad_out);

      double worst = 0.0;
      for (std::size_t li = 0; li < net.params().size(); ++li) {
        auto check_block = [&](Tensor& param, const Tensor& grad) {
          // probe a strided subset; full FD over every weight is O(n^2)
          std::size_t stride = std::max<std::size_t>(1, param.data.size() / 40);
          for (std::size_t j = 0; j < param.data.size(); j += stride) {
            double saved = param.data[j];
            double h = 1e-5 * std::max(1.0, std::abs(saved));
            param.data[j] = saved + h;
            double up = loss_at();
            param.data[j] = saved - h;
            double dn = loss_at();
            param.data[j] = saved;
            double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, oracles::rel_err(grad.data[j], fd));
          }
        };
        check_block(net.params()[li].W, grads[li].W);
        check_block(net.params()[li].b, grads[li].b);
      }
      REQUIRE(worst < 1e-4);
    }
  }
}

TEST_CASE("maxpool keeps the first maximum on ties") {
  NetworkSpec spec{{1, 2, 2}, {LayerSpec::maxpool(2)}};
  Network net(spec);
  Tensor in(1, 1, 2, 2);
  in.data = {3.0, 3.0, 3.0, 3.0};
  ForwardCache cache;
  Tensor out = net.forward(in, &cache);
  REQUIRE(out.data[0] == 3.0);
  Tensor g = Tensor(1, 1, 1, 1);
  g.data[0] = 1.0;
  auto grads = net.backward(cache, g);
  (void)grads;
  REQUIRE(cache.pool_argmax[0][0] == 0);  // first element in scan order
}

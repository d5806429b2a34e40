#include <catch2/catch_amalgamated.hpp>

#include "ildkit/experiment.hpp"
#include "ildkit/nn/train.hpp"
#include "ildkit/synthdata.hpp"

using namespace ildkit;
using namespace ildkit::nn;

namespace {

NetworkSpec overfit_net() {
  return NetworkSpec{{3, 16, 16},
                     {LayerSpec::conv(8, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                      LayerSpec::fc(16), LayerSpec::relu(), LayerSpec::fc(4)}};
}

// 20 synthetic slices prepared as standardized network inputs + step labels
struct TinySet {
  Tensor inputs;
  Tensor targets;  // +-1
};

TinySet tiny_set() {
  GeneratorSpec spec;
  spec.num_patients = 10;
  spec.slices_per_patient = 2;
  spec.grid_size = 32;
  spec.prevalence = {0.5, 0.5, 0.5, 0.5};
  auto slices = generate_dataset(spec, 77);
  TinySet set;
  set.inputs = Tensor(static_cast<int>(slices.size()), 3, 16, 16);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    Tensor one = make_input(slices[i], 16);
    std::copy(one.data.begin(), one.data.end(), set.inputs.ptr(static_cast<int>(i)));
  }
  std::vector<int> rows(slices.size());
  std::iota(rows.begin(), rows.end(), 0);
  standardize_inputs(set.inputs, channel_stats_over(set.inputs, rows));
  set.targets = Tensor::mat(set.inputs.n, kNumClasses);
  auto mapping = LabelMapping::step(30);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    auto y = map_counts_to_labels(mask_to_counts(slices[i]), mapping);
    for (int k = 0; k < kNumClasses; ++k)
      set.targets(static_cast<int>(i), k) = y[k] > 0.5 ? 1.0 : -1.0;
  }
  return set;
}

}  // namespace

TEST_CASE("training is deterministic for a fixed seed") {
  auto set = tiny_set();
  LossSpec spec = LossSpec::make(LossHead::multilabel_logistic, 4);
  TrainOptions opt;
  opt.epochs = 3;
  opt.seed = 5;
  auto r1 = train(set.inputs, overfit_net(), make_batch_loss(spec, set.targets), opt);
  auto r2 = train(set.inputs, overfit_net(), make_batch_loss(spec, set.targets), opt);
  REQUIRE(r1.epoch_loss == r2.epoch_loss);
  for (std::size_t li = 0; li < r1.net.params().size(); ++li) {
    REQUIRE(r1.net.params()[li].W.data == r2.net.params()[li].W.data);
    REQUIRE(r1.net.params()[li].b.data == r2.net.params()[li].b.data);
  }
}

TEST_CASE("learning rate zero leaves parameters at their initialization") {
  auto set = tiny_set();
  LossSpec spec = LossSpec::make(LossHead::multilabel_logistic, 4);
  TrainOptions opt;
  opt.learning_rate = 0.0;
  opt.epochs = 3;
  opt.seed = 9;
  auto r = train(set.inputs, overfit_net(), make_batch_loss(spec, set.targets), opt);
  Network init(overfit_net());
  init.init_params(opt.seed);
  for (std::size_t li = 0; li < r.net.params().size(); ++li)
    REQUIRE(r.net.params()[li].W.data == init.params()[li].W.data);
  // flat loss history
  for (double l : r.epoch_loss)
    REQUIRE(l == Catch::Approx(r.epoch_loss.front()).margin(0));
}

TEST_CASE("a tiny net overfits 20 samples to near-zero training loss") {
  auto set = tiny_set();
  LossSpec spec = LossSpec::make(LossHead::multilabel_logistic, 4);
  TrainOptions opt;
  opt.learning_rate = 0.01;
  opt.epochs = 200;
  opt.batch_size = 10;
  opt.seed = 1;
  auto r = train(set.inputs, overfit_net(), make_batch_loss(spec, set.targets), opt);
  REQUIRE(r.epoch_loss.back() < 0.05);
}

TEST_CASE("divergence raises a numeric error naming the epoch") {
  auto set = tiny_set();
  Tensor big = set.targets;
  for (double& v : big.data) v *= 1e8;
  LossSpec spec = LossSpec::make(LossHead::regression_l2, 4);
  TrainOptions opt;
  opt.learning_rate = 1e6;
  opt.clip_norm = 0;  // clipping off so the blow-up is observable
  opt.epochs = 5;
  opt.seed = 2;
  try {
    train(set.inputs, overfit_net(), make_batch_loss(spec, big), opt);
    FAIL("expected divergence");
  } catch (const numeric_error& e) {
    REQUIRE(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("train validates its options") {
  auto set = tiny_set();
  LossSpec spec = LossSpec::make(LossHead::multilabel_logistic, 4);
  TrainOptions opt;
  opt.batch_size = 0;
  REQUIRE_THROWS_AS(
      train(set.inputs, overfit_net(), make_batch_loss(spec, set.targets), opt),
      usage_error);
}

#include "cardiac/harness.hpp"

namespace cardiac {

namespace {

using D = double;

Tensor<D> randn(std::vector<int> dims, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<D> t(std::move(dims));
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = scale * gaussian(rng);
  return t;
}

}  // namespace

std::vector<GradCheckReport> gradcheck_all(int seeds_per_op) {
  std::vector<GradCheckReport> reports;
  for (int s = 0; s < seeds_per_op; ++s) {
    std::mt19937_64 rng(splitmix64(0x6adc4ecULL + static_cast<uint64_t>(s)));
    const std::string tag = "#" + std::to_string(s);

    reports.push_back(gradcheck(
        "matmul" + tag,
        [](std::vector<Tensor<D>>& in) { return sum(matmul(in[0], in[1])); },
        {randn({3, 4}, rng), randn({4, 2}, rng)}));

    reports.push_back(gradcheck(
        "conv2d" + tag,
        [](std::vector<Tensor<D>>& in) { return sum(conv2d(in[0], in[1], 1, 1)); },
        {randn({2, 8, 8}, rng), randn({3, 2, 3, 3}, rng)}));

    reports.push_back(gradcheck(
        "conv2d_s2p0" + tag,
        [](std::vector<Tensor<D>>& in) { return sum(conv2d(in[0], in[1], 2, 0)); },
        {randn({2, 7, 7}, rng), randn({2, 2, 3, 3}, rng)}));

    reports.push_back(gradcheck(
        "tanh" + tag, [](std::vector<Tensor<D>>& in) { return sum(tanh(in[0])); },
        {randn({6}, rng)}));

    reports.push_back(gradcheck(
        "sigmoid" + tag, [](std::vector<Tensor<D>>& in) { return sum(sigmoid(in[0])); },
        {randn({6}, rng)}));

    // weighted sum so softmax gradients are not structurally zero
    {
      Tensor<D> w = randn({8}, rng);
      reports.push_back(gradcheck(
          "softmax" + tag,
          [w](std::vector<Tensor<D>>& in) { return sum(mul(softmax(in[0]), w)); },
          {randn({8}, rng)}));
    }

    reports.push_back(gradcheck(
        "avg_pool2d" + tag,
        [&](std::vector<Tensor<D>>& in) {
          Tensor<D> w = Tensor<D>::full({2, 2, 2}, 0.0);
          for (size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.1 * (1.0 + static_cast<double>(i));
          return sum(mul(avg_pool2d(in[0], 2), w));
        },
        {randn({2, 4, 4}, rng)}));

    reports.push_back(gradcheck(
        "global_avg_pool" + tag,
        [](std::vector<Tensor<D>>& in) {
          Tensor<D> w = Tensor<D>::from({3}, {0.3, -0.7, 1.1});
          return sum(mul(global_avg_pool(in[0]), w));
        },
        {randn({3, 4, 4}, rng)}));

    reports.push_back(gradcheck(
        "add_mul_scale" + tag,
        [](std::vector<Tensor<D>>& in) {
          return sum(scale(mul(add(in[0], in[1]), in[1]), 0.7));
        },
        {randn({5}, rng), randn({5}, rng)}));

    reports.push_back(gradcheck(
        "cross_entropy" + tag,
        [](std::vector<Tensor<D>>& in) { return cross_entropy_from_logits(in[0], 3); },
        {randn({10}, rng)}));

    for (LossKind kind :
         {LossKind::mae, LossKind::mse, LossKind::smooth_l1, LossKind::huber}) {
      Tensor<D> pred = Tensor<D>::scalar(50.0 + 5.0 * gaussian(rng));
      reports.push_back(gradcheck(
          "regression_" + loss_kind_name(kind) + tag,
          [kind](std::vector<Tensor<D>>& in) {
            return regression_loss(in[0], 55.0, kind, 1.0);
          },
          {pred}));
    }

    {
      Tensor<D> w = randn({1, 8, 8}, rng);
      reports.push_back(gradcheck(
          "upsample_bilinear" + tag,
          [w](std::vector<Tensor<D>>& in) { return sum(mul(upsample_bilinear2x(in[0]), w)); },
          {randn({1, 4, 4}, rng)}));
    }

    // composite: mfl_forward for every differentiable variant
    {
      std::mt19937_64 prng(splitmix64(0xa66ULL + s));
      const int c = 8;
      for (AggregatorKind kind :
           {AggregatorKind::mfl, AggregatorKind::mfl_no_proj, AggregatorKind::mfl_nonlinear_proj,
            AggregatorKind::mfl_gru, AggregatorKind::mean_pool, AggregatorKind::multi_head}) {
        AggregatorVariant<D> v(kind, c, 6, 4, prng);
        std::vector<Tensor<D>> inputs = {randn({4, c}, rng)};
        for (Tensor<D>* p : v.param_list()) inputs.push_back(p->clone_leaf(false));
        Tensor<D> w = randn({1, c}, rng);
        reports.push_back(gradcheck(
            "mfl_forward_" + aggregator_name(kind) + tag,
            [kind, c, w](std::vector<Tensor<D>>& in) {
              std::mt19937_64 dummy(0);
              AggregatorVariant<D> vv(kind, c, 6, 4, dummy);
              auto slots = vv.param_list();
              for (size_t i = 0; i < slots.size(); ++i) *slots[i] = in[i + 1];
              return sum(mul(mfl_forward(in[0], vv), w));
            },
            inputs));
      }
    }

    // composite: loss_or through classification, shifts and decoding
    {
      std::mt19937_64 mrng(splitmix64(0x10557ULL + s));
      const int c = 8, k = 5;
      BinSpec bins = BinSpec::uniform(k);
      RegressorParams<D> reg(c, 6, k, mrng);
      Tensor<D> protos = randn({k, c}, rng);
      reports.push_back(gradcheck(
          "loss_or" + tag,
          [bins, c, k](std::vector<Tensor<D>>& in) {
            RegressorParams<D> r2;
            r2.w1 = in[2];
            r2.b1 = in[3];
            r2.w2 = in[4];
            r2.b2 = in[5];
            Tensor<D> logits = class_logits(in[0], in[1], 0.5);
            Tensor<D> p = softmax(logits);
            Tensor<D> delta = predict_shifts(in[0], r2);
            Tensor<D> y = expected_value(p, delta, bins);
            return loss_or(logits, y, 47.3, bins, LossKind::mae);
          },
          {randn({c}, rng), protos, reg.w1.clone_leaf(false), reg.b1.clone_leaf(false),
           reg.w2.clone_leaf(false), reg.b2.clone_leaf(false)}));
    }

    // composite: echozoom_forward with a reduced-depth encoder
    {
      EncoderConfig ec;
      ec.stage_channels = {2, 3};
      ec.allowed_inputs = {8};
      std::mt19937_64 erng(splitmix64(0xec0ULL + s));
      Encoder<D> enc(ec, erng);
      ZoomConfig zc;
      zc.base_res = 8;
      zc.hi_res = 16;
      std::vector<Tensor<D>> inputs = {randn({1, 8, 8}, rng, 0.5)};
      for (Tensor<D>* p : enc.param_list()) inputs.push_back(p->clone_leaf(false));
      Tensor<D> w = randn({3, 2, 2}, rng);
      reports.push_back(gradcheck(
          "echozoom_forward" + tag,
          [ec, zc, w](std::vector<Tensor<D>>& in) {
            std::mt19937_64 dummy(0);
            Encoder<D> e2(ec, dummy);
            auto slots = e2.param_list();
            for (size_t i = 0; i < slots.size(); ++i) *slots[i] = in[i + 1];
            return sum(mul(echozoom_forward(in[0], e2, zc), w));
          },
          inputs));
    }
  }
  return reports;
}

}  // namespace cardiac

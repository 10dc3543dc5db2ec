#include <set>

#include "doctest.h"
#include "efgan/errors.hpp"
#include "efgan/generator.hpp"
#include "efgan/layers.hpp"
#include "support.hpp"

using namespace efgan;

namespace {

GeneratorConfig small_generator(int size = 64) {
  auto m = testing::toy_config(testing::centered_layout(size));
  return m.generator;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("attention blend") {
    auto input = torch::rand({2, 3, 4, 5});
    BranchOutput out{torch::rand({2, 3, 4, 5}), torch::zeros({2, 1, 4, 5})};
    CHECK(torch::equal(attention_blend(out, input), input));
    out.attention = torch::ones({2, 1, 4, 5});
    CHECK(torch::equal(attention_blend(out, input), out.color));
    BranchOutput scalar{torch::full({1, 3, 1, 1}, 0.8), torch::full({1, 1, 1, 1}, 0.25)};
    CHECK(attention_blend(scalar, torch::zeros({1, 3, 1, 1}))[0][0][0][0].item<double>() == doctest::Approx(0.2));
    out.attention = torch::ones({2, 1, 4, 4});
    CHECK_THROWS_AS(attention_blend(out, input), ShapeError);
  }

  TEST_CASE("branch shapes on an odd-sized patch") {
    torch::manual_seed(1);
    auto cfg = small_generator();
    BranchNet eyes(cfg, cfg.local_blocks, 20, 46);
    auto out = eyes->forward(torch::rand({2, 3, 20, 46}) * 2 - 1, torch::rand({2, 4}));
    CHECK(out.color.sizes() == torch::IntArrayRef({2, 3, 20, 46}));
    CHECK(out.attention.sizes() == torch::IntArrayRef({2, 1, 20, 46}));
    CHECK(out.attention.min().item<float>() >= 0.0f);
    CHECK(out.attention.max().item<float>() <= 1.0f);
    CHECK(out.color.abs().max().item<float>() <= 1.0f);
    CHECK_THROWS_AS(eyes->forward(torch::rand({2, 3, 20, 48}), torch::rand({2, 4})), ShapeError);
    CHECK_THROWS_AS(eyes->forward(torch::rand({2, 3, 20, 46}), torch::rand({2, 3})), ShapeError);
  }

  TEST_CASE("paper-size branch shapes") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.global_blocks = cfg.local_blocks = cfg.refiner_blocks = 1;
    RegionCenters c{{64, 51}, {64, 72}, {64, 95}};
    EfGan g(cfg, layout_from_centers(128, c));
    g->eval();
    torch::NoGradGuard no_grad;
    auto out = g->forward(torch::rand({1, 3, 128, 128}) * 2 - 1, torch::rand({1, 17}));
    CHECK(out.init.eyes.sizes() == torch::IntArrayRef({1, 3, 40, 92}));
    CHECK(out.init.nose.sizes() == torch::IntArrayRef({1, 3, 40, 48}));
    CHECK(out.init.mouth.sizes() == torch::IntArrayRef({1, 3, 40, 60}));
    CHECK(out.branch_raw.eyes.attention.sizes() == torch::IntArrayRef({1, 1, 40, 92}));
    CHECK(out.refined.sizes() == torch::IntArrayRef({1, 3, 128, 128}));
  }

  TEST_CASE("forward is deterministic in evaluation mode and bounded") {
    torch::manual_seed(2);
    auto cfg = small_generator();
    EfGan g(cfg, testing::centered_layout(64));
    g->eval();
    torch::NoGradGuard no_grad;
    auto x = testing::random_faces(2, 64);
    auto y = torch::rand({2, 4});
    auto a = g->forward(x, y), b = g->forward(x, y);
    CHECK(torch::equal(a.refined, b.refined));
    CHECK(a.refined.abs().max().item<float>() <= 1.0f);
    auto other = g->forward(x, torch::rand({2, 4}));
    CHECK_FALSE(torch::equal(a.refined, other.refined));
  }

  TEST_CASE("forced attention makes every branch the identity") {
    auto cfg = small_generator();
    EfGan g(cfg, testing::centered_layout(64));
    g->force_attention(0.0);
    auto x = testing::random_faces(1, 64);
    auto out = g->forward(x, torch::rand({1, 4}));
    auto crops = split_focuses(x, g->layout());
    for (Branch b : kBranches) CHECK(torch::equal(out.init[b], crops[b]));
  }

  TEST_CASE("refiner takes six channels") {
    auto cfg = small_generator();
    EfGan g(cfg, testing::centered_layout(64));
    bool found = false;
    for (auto* layer : weight_layers(*g->refiner())) {
      if (layer->spec().in == RefinerImpl::kInputChannels) found = true;
    }
    CHECK(found);
    CHECK(RefinerImpl::kInputChannels == 6);
  }

  TEST_CASE("branches do not share parameters") {
    auto cfg = small_generator();
    EfGan g(cfg, testing::centered_layout(64));
    std::set<const void*> seen;
    size_t total = 0;
    for (Branch b : kBranches) {
      for (const auto& p : g->branch(b)->parameters()) {
        seen.insert(p.data_ptr());
        ++total;
      }
    }
    CHECK(seen.size() == total);
    auto names = g->named_parameters();
    CHECK(names.contains("eyes.body.0.weight"));
    CHECK(names.contains("refiner.body.0.weight"));
  }

  TEST_CASE("gradients of the refined output are finite and match differences") {
    torch::manual_seed(3);
    auto cfg = testing::tiny_config(2, 32);
    EfGan g(cfg.generator, cfg.layout);
    g->to(torch::kDouble);
    g->eval();
    auto x = testing::random_faces(1, 32, torch::kDouble);
    auto y = torch::rand({1, 2}, torch::kDouble);
    auto params = g->parameters();
    int64_t n = 0;
    for (auto& p : params) n += p.numel();
    CHECK(n <= 1000);
    auto r = testing::grad_check([&] { return g->forward(x, y).refined.pow(2).sum(); }, params);
    CHECK(r.relative_error < 1e-3);
    CHECK(std::isfinite(r.analytic_norm));
  }

  TEST_CASE("config validation") {
    GeneratorConfig cfg;
    cfg.au_dim = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = GeneratorConfig{};
    cfg.base_channels = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    CHECK_NOTHROW(validate(GeneratorConfig{}));
  }
}

TEST_SUITE("layers") {
  TEST_CASE("orthogonal init, spectral norm and output layers") {
    torch::manual_seed(4);
    for (auto kind : {LayerKind::conv, LayerKind::conv_transpose, LayerKind::dense}) {
      for (auto [in, out] : {std::pair{4, 16}, std::pair{32, 8}}) {
        LayerSpec spec{kind, in, out, 3, 1, 1, false};
        WeightLayer layer(spec);
        CHECK(orthogonality_defect(layer->weight_matrix()) < 1e-4);
        CHECK(power_iteration_norm(layer->effective_weight_matrix()) <= 1.01);
        CHECK(layer->spectral());
      }
      LayerSpec out_spec{kind, 8, 3, 3, 1, 1, true};
      WeightLayer out_layer(out_spec);
      CHECK_FALSE(out_layer->spectral());
    }
  }

  TEST_CASE("spectral norm tracks weight updates in training mode") {
    torch::manual_seed(5);
    WeightLayer layer(LayerSpec{LayerKind::dense, 6, 6, 1, 1, 0, false});
    {
      torch::NoGradGuard no_grad;
      layer->weight.mul_(torch::rand({6, 1}) * 3 + 0.5);
    }
    layer->train();
    for (int i = 0; i < 60; ++i) layer->forward(torch::rand({1, 6}));
    CHECK(power_iteration_norm(layer->effective_weight_matrix()) == doctest::Approx(1.0).epsilon(1e-3));
    layer->eval();
    auto x = torch::rand({2, 6});
    CHECK(torch::equal(layer->forward(x), layer->forward(x)));
  }

  TEST_CASE("same seed, same parameters") {
    torch::manual_seed(9);
    WeightLayer a(LayerSpec{LayerKind::conv, 3, 8, 3, 1, 1, false});
    torch::manual_seed(9);
    WeightLayer b(LayerSpec{LayerKind::conv, 3, 8, 3, 1, 1, false});
    CHECK(torch::equal(a->weight, b->weight));
    CHECK(torch::equal(a->u, b->u));
  }
}

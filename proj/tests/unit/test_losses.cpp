#include <cmath>

#include "doctest.h"
#include "efgan/errors.hpp"
#include "efgan/losses.hpp"
#include "efgan/model.hpp"
#include "efgan/trainer.hpp"
#include "support.hpp"

using namespace efgan;
using torch::Tensor;

namespace {

ScoreFn linear(std::vector<double> a) {
  auto t = torch::tensor(a, torch::kDouble);
  return [t](const Tensor& x) { return x.matmul(t); };
}

Focuses<BranchOutput> constant_attention(double v) {
  Focuses<BranchOutput> f;
  for (Branch b : kBranches) f[b] = BranchOutput{torch::zeros({2, 3, 4, 4}), torch::full({2, 1, 4, 4}, v)};
  return f;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("gradient penalty on linear critics") {
    auto real = torch::randn({8, 2}, torch::kDouble), fake = torch::randn({8, 2}, torch::kDouble);
    CHECK(gradient_penalty(linear({3, 4}), real, fake, 10.0).item<double>() == doctest::Approx(160.0).epsilon(1e-12));
    CHECK(std::abs(gradient_penalty(linear({0.6, 0.8}), real, fake, 10.0).item<double>()) < 1e-12);
    for (double e : {0.0, 0.3, 1.0}) {
      auto eps = torch::full({8}, e, torch::kDouble);
      CHECK(gradient_penalty(linear({3, 4}), real, fake, 10.0, eps).item<double>() == doctest::Approx(160.0));
    }
    CHECK_THROWS_AS(gradient_penalty(linear({3, 4}), real, torch::randn({7, 2}, torch::kDouble), 10.0), ShapeError);
    ScoreFn constant = [](const Tensor& x) { return torch::zeros({x.size(0)}, x.options()); };
    CHECK_THROWS_AS(gradient_penalty(constant, real, fake, 10.0), ValidationError);
  }

  TEST_CASE("gradient penalty matches a per-sample oracle") {
    auto real = torch::randn({4, 3}, torch::kDouble), fake = torch::randn({4, 3}, torch::kDouble);
    auto eps = torch::rand({4}, torch::kDouble);
    ScoreFn quad = [](const Tensor& x) { return x.pow(2).sum(1); };
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) {
      auto xi = eps[i] * real[i] + (1 - eps[i]) * fake[i];
      const double g = (2 * xi).norm().item<double>();
      expect += 10.0 * (g - 1) * (g - 1) / 4;
    }
    CHECK(gradient_penalty(quad, real, fake, 10.0, eps).item<double>() == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("critic loss conventions") {
    ScoreFn zero = [](const Tensor& x) { return (x * 0).sum({1, 2, 3}); };
    std::vector<CriticTerm> terms{{"a", zero, torch::rand({2, 3, 4, 4}), torch::rand({2, 3, 4, 4})}};
    CHECK(critic_loss(terms, 0.0).total.item<double>() == 0.0);

    auto make = [](double real_score) {
      ScoreFn f = [real_score](const Tensor& x) {
        return torch::where(x.flatten(1).mean(1) > 0, torch::full({x.size(0)}, real_score), torch::zeros({x.size(0)}));
      };
      return f;
    };
    auto real = torch::ones({2, 1, 2, 2}), fake = -torch::ones({2, 1, 2, 2});
    double prev = -1e9;
    for (double s : {3.0, 2.0, 1.0}) {
      std::vector<CriticTerm> t{{"a", make(s), real, fake}};
      const double l = critic_loss(t, 0.0).total.item<double>();
      CHECK(l > prev);
      prev = l;
    }
  }

  TEST_CASE("critic and generator losses equal the per-critic sums") {
    torch::manual_seed(1);
    auto cfg = testing::toy_config(testing::centered_layout(64));
    auto model = make_model(cfg, 1);
    model->eval();
    auto critics = model->critics(0);
    auto x = testing::random_faces(2, 64);
    auto out = model->stage(0)->forward(x, torch::rand({2, 4}));
    auto reals = split_focuses(x, cfg.layout);
    auto terms = critic_terms(critics, reals, out);
    REQUIRE(terms.size() == 5);
    torch::manual_seed(5);
    auto loss = critic_loss(terms, 10.0);
    torch::manual_seed(5);
    double sum = 0;
    for (const auto& t : terms) {
      std::vector<CriticTerm> one{t};
      sum += critic_loss(one, 10.0).total.item<double>();
    }
    CHECK(loss.total.item<double>() == doctest::Approx(sum).epsilon(1e-5));

    std::map<std::string, Tensor> per;
    const double adv = generator_adv_loss(critics, out, &per).item<double>();
    double oracle = 0;
    for (const auto& t : terms) oracle -= t.critic(t.fake).mean().item<double>();
    CHECK(adv == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(per.size() == 5);
  }

  TEST_CASE("conditional expression loss") {
    auto y = torch::rand({3, 5});
    auto perfect = conditional_expression_loss(y, y, y, y);
    CHECK(perfect.d_term.item<double>() == 0.0);
    CHECK(perfect.g_term.item<double>() == 0.0);
    auto off = conditional_expression_loss(y + 1, y, y - 1, y);
    CHECK(off.d_term.item<double>() == doctest::Approx(1.0));
    CHECK(off.g_term.item<double>() == doctest::Approx(1.0));
    auto a = torch::rand({4, 3}, torch::kDouble), b = torch::rand({4, 3}, torch::kDouble);
    double loop = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) loop += std::pow(a[i][j].item<double>() - b[i][j].item<double>(), 2);
    CHECK(conditional_expression_loss(a, b, a, b).d_term.item<double>() == doctest::Approx(loop / 12).epsilon(1e-12));
    CHECK_THROWS_AS(conditional_expression_loss(torch::rand({3, 4}), y, y, y), ShapeError);
  }

  TEST_CASE("content loss") {
    auto x = torch::rand({2, 3, 8, 8}, torch::kDouble);
    CHECK(content_loss(x, x).item<double>() == 0.0);
    CHECK(content_loss(x + 0.1, x).item<double>() == doctest::Approx(0.1));
    auto y = torch::rand({2, 3, 8, 8}, torch::kDouble);
    auto xa = x.accessor<double, 4>(), ya = y.accessor<double, 4>();
    double loop = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) loop += std::abs(xa[n][c][i][j] - ya[n][c][i][j]);
    CHECK(content_loss(x, y).item<double>() == doctest::Approx(loop / x.numel()).epsilon(1e-12));
    CHECK_THROWS_AS(content_loss(x, torch::rand({2, 3, 8, 7})), ShapeError);
  }

  TEST_CASE("attention sparsity loss") {
    CHECK(attention_sparsity_loss(constant_attention(0.0)).item<double>() == 0.0);
    CHECK(attention_sparsity_loss(constant_attention(1.0)).item<double>() == doctest::Approx(4.0));
    auto f = constant_attention(0.0);
    double oracle = 0;
    for (Branch b : kBranches) {
      f[b].attention = torch::rand({2, 1, 4, 4}, torch::kDouble);
      double s = 0;
      auto acc = f[b].attention.accessor<double, 4>();
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) s += acc[n][0][i][j] * acc[n][0][i][j];
      oracle += s / 32;
    }
    CHECK(attention_sparsity_loss(f).item<double>() == doctest::Approx(oracle).epsilon(1e-12));
  }

  TEST_CASE("interpolation loss") {
    ScoreFn zero = [](const Tensor& a) { return a.sum(1) * 0; };
    auto y = torch::rand({3, 4}, torch::kDouble);
    CHECK(interpolation_loss(y, y, zero, 0.1).item<double>() == 0.0);
    auto p = torch::rand({3, 4}, torch::kDouble);
    double norm = 0;
    for (int i = 0; i < 3; ++i) norm += (y[i] - p[i]).norm().item<double>();
    ScoreFn one = [](const Tensor& a) { return a.sum(1) * 0 + 1; };
    CHECK(interpolation_loss(y, p, one, 0.0).item<double>() == doctest::Approx(norm / 3).epsilon(1e-12));
    CHECK(interpolation_loss(y, p, one, 0.1).item<double>() == doctest::Approx(norm / 3 - 0.1).epsilon(1e-12));
    CHECK_THROWS_AS(interpolation_loss(y, torch::rand({3, 5}), one, 0.1), ShapeError);
  }

  TEST_CASE("total loss and weights") {
    LossWeights w;
    CHECK(w.cond == 3000.0);
    CHECK(w.cont == 10.0);
    CHECK(w.attn == 0.1);
    CHECK(w.interp == 1.0);
    CHECK(w.gp == 10.0);
    CHECK(w.interp_adv == 0.1);
    LossReport zero;
    CHECK(total_loss(zero, w).total == 0.0);
    LossReport unit;
    unit.adv = unit.cond = unit.cont = unit.attn = unit.interp = 1.0;
    CHECK(total_loss(unit, w).total == 3012.1);
    LossReport r;
    r.adv = 0.5, r.cond = 0.25, r.cont = 2.0, r.attn = 3.0, r.interp = 4.0;
    auto t = total_loss(r, w);
    CHECK(t.total == doctest::Approx(r.adv + w.cond * r.cond + w.cont * r.cont + w.attn * r.attn + w.interp * r.interp));
    auto bumped = r;
    bumped.cont += 1.0;
    CHECK(total_loss(bumped, w).total - t.total == doctest::Approx(w.cont));
    r.attn = NAN;
    try {
      total_loss(r, w);
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("attn") != std::string::npos);
    }
    LossWeights bad;
    bad.gp = -1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
  }

  TEST_CASE("cascade total") {
    LossReport a;
    a.total = 2.5;
    std::vector<LossReport> one{a};
    CHECK(cascade_total_loss(one) == 2.5);
    std::vector<LossReport> three{a, a, a};
    CHECK(cascade_total_loss(three) == 7.5);
  }

  TEST_CASE("losses are invariant to batch order") {
    auto x = torch::rand({4, 3, 8, 8}, torch::kDouble), y = torch::rand({4, 3, 8, 8}, torch::kDouble);
    auto perm = torch::tensor({2, 0, 3, 1}, torch::kLong);
    CHECK(content_loss(x, y).item<double>() ==
          doctest::Approx(content_loss(x.index_select(0, perm), y.index_select(0, perm)).item<double>()));
    auto a = torch::rand({4, 3}, torch::kDouble), b = torch::rand({4, 3}, torch::kDouble);
    auto c1 = conditional_expression_loss(a, b, a, b).g_term.item<double>();
    auto c2 = conditional_expression_loss(a.index_select(0, perm), b.index_select(0, perm), a, b).d_term.item<double>();
    CHECK(c1 == doctest::Approx(c2));
  }

  TEST_CASE("trainer loss terms match their definitions") {
    torch::manual_seed(2);
    auto cfg = testing::tiny_config(2, 32);
    auto model = make_model(cfg, 2);
    model->eval();
    Batch batch;
    batch.source = testing::random_faces(2, 32);
    batch.source_aus = torch::rand({2, 2});
    batch.target_aus = torch::rand({2, 2});
    LossWeights w;
    torch::NoGradGuard no_grad;
    auto terms = generator_loss_terms(model, batch, w, 3);
    REQUIRE(terms.size() == 1);
    auto stage = model->stage(0);
    auto out = stage->forward(batch.source, batch.target_aus);
    auto critics = model->critics(0);
    const double adv = generator_adv_loss(critics, out).item<double>();
    CHECK(terms[0].adv.item<double>() == doctest::Approx(adv));
    auto rec = stage->forward(out.refined, batch.source_aus).refined;
    CHECK(terms[0].cont.item<double>() == doctest::Approx(content_loss(rec, batch.source).item<double>()));
    CHECK(terms[0].attn.item<double>() == doctest::Approx(attention_sparsity_loss(out.branch_raw).item<double>()));
    CHECK(terms[0].interp.item<double>() > 0.0);
  }
}

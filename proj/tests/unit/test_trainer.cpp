#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "efgan/errors.hpp"
#include "efgan/model.hpp"
#include "efgan/synth.hpp"
#include "efgan/trainer.hpp"
#include "support.hpp"

using namespace efgan;

namespace {

Dataset small_dataset(const std::filesystem::path& dir, int ids = 2, int settings = 3) {
  return load_dataset(synth_dataset_generate(ids, settings, 4, dir, 5, 32));
}

TrainConfig quick_train() {
  TrainConfig t;
  t.n_stages = 3;
  t.epochs = 2;
  t.lr_decay_start_epoch = 1;
  t.finetune_epochs = 1;
  t.steps_per_epoch = 1;
  t.seed = 4;
  return t;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("learning rate schedules") {
    TrainConfig c;
    CHECK(lr_at(0, c) == 1e-4);
    CHECK(lr_at(50, c) == 1e-4);
    CHECK(lr_at(75, c) == 5e-5);
    CHECK(lr_at(100, c) == 0.0);
    CHECK(lr_at(60, c) > lr_at(70, c));
    CHECK_THROWS_AS(lr_at(-1, c), ConfigError);
    CHECK_THROWS_AS(lr_at(100.5, c), ConfigError);
    CHECK(finetune_lr_at(0, c) == 1e-5);
    CHECK(finetune_lr_at(5, c) == doctest::Approx(5e-6));
    CHECK(finetune_lr_at(10, c) == 0.0);
    CHECK_THROWS_AS(finetune_lr_at(11, c), ConfigError);
  }

  TEST_CASE("run config round trip") {
    testing::TempDir dir("cfg");
    RunConfig rc;
    rc.model = testing::tiny_config(4, 32, 2);
    rc.train = quick_train();
    rc.train.weights.cond = 123.0;
    rc.has_layout = true;
    save_run_config(rc, dir.path() / "run.json");
    auto back = load_run_config(dir.path() / "run.json");
    CHECK(back.model == rc.model);
    CHECK(back.train == rc.train);
    CHECK(back.has_layout);
    CHECK(model_config_from_json_string(to_json_string(rc.model)) == rc.model);
  }

  TEST_CASE("pair sampler keeps identity and changes AUs") {
    testing::TempDir dir("pairs");
    auto data = small_dataset(dir.path(), 3, 3);
    PairSampler a(data, 9), b(data, 9);
    for (int i = 0; i < 5; ++i) {
      auto x = a.next(4), y = b.next(4);
      CHECK(x.source_index == y.source_index);
      CHECK(x.target_index == y.target_index);
      for (size_t j = 0; j < x.source_index.size(); ++j) {
        CHECK(data.identity[x.source_index[j]] == data.identity[x.target_index[j]]);
        CHECK(x.source_index[j] != x.target_index[j]);
      }
      CHECK(torch::equal(x.target_aus, data.aus.index_select(0, torch::tensor(x.target_index))));
    }
    CHECK_THROWS_AS(a.next(0), ConfigError);
  }

  TEST_CASE("checkpoint round trip preserves behaviour") {
    testing::TempDir dir("ckpt");
    torch::manual_seed(1);
    auto model = make_model(testing::tiny_config(4, 32, 2), 1);
    save_checkpoint(model, dir.path() / "ck", R"({"note":"x"})");
    auto back = load_checkpoint(dir.path() / "ck");
    CHECK(back->config() == model->config());
    auto s1 = model->state(), s2 = back->state();
    REQUIRE(s1.size() == s2.size());
    for (auto& [k, v] : s1) CHECK(torch::equal(v, s2.at(k)));
    model->eval();
    back->eval();
    auto x = testing::random_faces(1, 32);
    auto src = torch::rand({1, 4}), tgt = torch::rand({1, 4});
    CHECK(torch::equal(edit(model, x, src, tgt).final, edit(back, x, src, tgt).final));
    CHECK(checkpoint_metadata(dir.path() / "ck").find("note") != std::string::npos);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), IoError);
  }

  TEST_CASE("cascade initialization copies stage one") {
    torch::manual_seed(2);
    auto single = make_model(testing::tiny_config(4, 32, 1), 2);
    auto cascade = init_cascade_from_pretrained(single, 3);
    CHECK(cascade->n_stages() == 3);
    auto src = single->state(), dst = cascade->state();
    for (int k = 0; k < 3; ++k) {
      const std::string stage = "stage" + std::to_string(k + 1) + ".";
      for (auto& [name, v] : src) {
        if (name.rfind("stage1.", 0) != 0) continue;
        CHECK(torch::equal(v, dst.at(stage + name.substr(7))));
      }
    }
    {
      torch::NoGradGuard g;
      cascade->stage(1)->parameters()[0].add_(1.0);
    }
    CHECK_FALSE(torch::equal(cascade->stage(0)->parameters()[0], cascade->stage(1)->parameters()[0]));
    CHECK_FALSE(torch::equal(single->stage(0)->parameters()[0], cascade->stage(1)->parameters()[0]));
    CHECK_THROWS_AS(init_cascade_from_pretrained(single, 0), ConfigError);
  }

  TEST_CASE("edits return intermediates and bounded images") {
    torch::manual_seed(3);
    auto cascade = make_model(testing::tiny_config(4, 32, 3), 3);
    cascade->eval();
    auto x = testing::random_faces(2, 32);
    auto r = edit(cascade, x, torch::zeros({2, 4}), torch::ones({2, 4}));
    CHECK(r.intermediates.size() == 2);
    CHECK(r.targets.size() == 3);
    CHECK(r.final.sizes() == x.sizes());
    CHECK(r.final.abs().max().item<double>() <= 1.0);
    CHECK(torch::equal(r.targets.back(), torch::ones({2, 4})));
    CHECK_THROWS_AS(edit(cascade, x, torch::zeros({2, 3}), torch::ones({2, 3})), ShapeError);

    auto face = x[0];
    auto frames = continuous_edit(cascade, face, torch::zeros({4}), torch::ones({4}), 4);
    CHECK(frames.size() == 4);
    CHECK(torch::allclose(frames.back(), edit(cascade, face, torch::zeros({4}), torch::ones({4})).final));
    CHECK_THROWS_AS(continuous_edit(cascade, face, torch::zeros({4}), torch::ones({4}), 1), ConfigError);
  }

  TEST_CASE("one cascade step reports every stage") {
    testing::TempDir dir("step");
    auto data = small_dataset(dir.path());
    torch::manual_seed(6);
    auto model = make_model(testing::tiny_config(4, 32, 3), 6);
    std::vector<torch::Tensor> natural;
    for (int64_t i = 0; i < data.size(); ++i) natural.push_back(data.aus[i]);
    Trainer trainer(model, quick_train(), natural);
    PairSampler sampler(data, 1);
    auto report = trainer.step(sampler.next(2));
    CHECK(report.stages.size() == 3);
    double sum = 0;
    for (const auto& s : report.stages) sum += s.total;
    CHECK(report.cascade_total == doctest::Approx(sum));
    CHECK(report.critic.per_critic.size() == 15);
    CHECK(trainer.steps_done() == 1);
    CHECK(to_json_line(report).find('\n') == std::string::npos);
  }

  TEST_CASE("non-finite parameters raise divergence") {
    testing::TempDir dir("div");
    auto data = small_dataset(dir.path());
    torch::manual_seed(7);
    auto model = make_model(testing::tiny_config(4, 32, 1), 7);
    {
      torch::NoGradGuard g;
      model->stage(0)->parameters()[0].fill_(NAN);
    }
    Trainer trainer(model, quick_train(), {data.aus[0]});
    PairSampler sampler(data, 1);
    CHECK_THROWS_AS(trainer.step(sampler.next(2)), DivergenceError);
  }

  TEST_CASE("training writes artifacts and rejects bad data") {
    testing::TempDir dir("train");
    auto data = small_dataset(dir.path() / "data");
    TrainOptions opts;
    opts.out_dir = dir.path() / "run";
    opts.max_steps = 2;
    int calls = 0;
    opts.on_step = [&](const StepReport&, CascadeModel&) { ++calls; };
    auto result = train_single_efgan(data, testing::tiny_config(4, 32, 3), quick_train(), opts);
    CHECK(result.model->n_stages() == 1);
    CHECK(result.steps == 2);
    CHECK(calls == 2);
    CHECK(std::filesystem::exists(opts.out_dir / "checkpoint" / "model.json"));
    CHECK(std::filesystem::exists(opts.out_dir / "config.json"));
    std::ifstream log(opts.out_dir / "train_log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == 2);

    auto cascade = init_cascade_from_pretrained(result.model, 3);
    TrainOptions ft;
    ft.max_steps = 1;
    auto tuned = train_cascade(cascade, data, quick_train(), ft);
    CHECK(tuned.log.size() == 1);
    CHECK(tuned.log[0].stages.size() == 3);

    CHECK_THROWS_AS(check_compatible(testing::tiny_config(2, 32), data), ConfigError);
    CHECK_THROWS_AS(check_compatible(testing::tiny_config(4, 64), data), ConfigError);
    auto one_id = subset(data, {0, 1, 2});
    CHECK_THROWS(train_single_efgan(one_id, testing::tiny_config(4, 32), quick_train(), {}));
  }
}

// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "regioncap/errors.hpp"
#include "regioncap/training.hpp"

namespace regioncap::training {
namespace {

struct Env {
  testing::CompositionFixture fx = testing::make_composition_fixture(8, 3);
  dataset::StageSources names = testing::toy_stage_sources();

  std::unique_ptr<CaptionModel> model(std::uint64_t seed = 7) const {
    return std::make_unique<CaptionModel>(testing::toy_model_config(seed), testing::fixture_vocabulary(fx));
  }
  StageConfig stage(int k, int steps, std::uint64_t seed = 1) const {
    OptimizerConfig o;
    o.steps = steps;
    o.batch_size = 2;
    o.learning_rate = 1e-2;
    o.seed = seed;
    return make_stage_config(k, dataset::stage_mixture(k, fx.registry, names), o);
  }
};

std::map<Component, std::uint64_t> checksums(const ParamStore& store) {
  std::map<Component, std::uint64_t> out;
  for (Component c : kAllComponents) out[c] = store.checksum(c);
  return out;
}

TEST(FreezePlan, PerStage) {
  for (Component c : kAllComponents) {
    EXPECT_EQ(freeze_plan(1).at(c), c == Component::adapter);
    EXPECT_EQ(freeze_plan(2).at(c), c == Component::alpha_conv || c == Component::lr_encoder_trunk);
    EXPECT_TRUE(freeze_plan(3).at(c));
  }
  EXPECT_THROW(freeze_plan(0), ConfigError);
}

TEST(StageConfig, ValidateRejectsDeviations) {
  Env env;
  auto cfg = env.stage(1, 1);
  EXPECT_NO_THROW(validate(cfg));
  cfg.trainable[Component::decoder] = true;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = env.stage(2, 1);
  cfg.optimizer.batch_size = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = env.stage(2, 1);
  cfg.optimizer.learning_rate = -1;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(OptimizerConfigJson, RoundTrip) {
  OptimizerConfig o;
  o.steps = 12;
  o.seed = 99;
  o.weight_decay = 0.01;
  const nlohmann::json j = o;
  const auto back = j.get<OptimizerConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j.at("steps"), 12);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParamStore store;
  auto& p = store.add(Component::decoder, "w", Matrix(1, 3, {1.0, -1.0, 0.5}));
  p.grad = Matrix(1, 3, {2.0, -0.5, 0.0});
  OptimizerConfig o;
  o.learning_rate = 0.1;
  AdamW opt(o);
  opt.step(store);
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p.value(0, 1), -0.9, 1e-6);
  EXPECT_EQ(p.value(0, 2), 0.5);
  EXPECT_EQ(opt.steps_taken(), 1);
  store.set_trainable(Component::decoder, false);
  p.grad = Matrix(1, 3, 1.0);
  opt.step(store);
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-6);
}

TEST(RunStage, ZeroStepsLeavesParameters) {
  Env env;
  auto m = env.model();
  const auto before = m->params().checksum();
  const auto r = run_stage(*m, env.stage(3, 0), env.fx.registry, env.fx.images);
  EXPECT_TRUE(r.losses.empty());
  EXPECT_EQ(r.checksum, before);
  EXPECT_EQ(m->params().checksum(), before);
}

TEST(RunStage, OnlyTrainableComponentsChange) {
  Env env;
  auto m = env.model();
  for (int stage = 1; stage <= 3; ++stage) {
    const auto before = checksums(m->params());
    std::vector<int> steps_seen;
    RunOptions opts;
    opts.on_step = [&](int step, double loss) {
      steps_seen.push_back(step);
      EXPECT_TRUE(std::isfinite(loss));
    };
    const auto r = run_stage(*m, env.stage(stage, 2), env.fx.registry, env.fx.images, opts);
    EXPECT_EQ(r.losses.size(), 2u);
    EXPECT_EQ(steps_seen.size(), 2u);
    const auto after = checksums(m->params());
    for (Component c : kAllComponents) {
      if (freeze_plan(stage).at(c))
        EXPECT_NE(after.at(c), before.at(c)) << "stage " << stage << " " << to_string(c);
      else
        EXPECT_EQ(after.at(c), before.at(c)) << "stage " << stage << " " << to_string(c);
    }
  }
}

TEST(RunStage, DeterministicForSeed) {
  Env env;
  auto a = env.model(), b = env.model();
  const auto ra = run_stage(*a, env.stage(3, 3, 42), env.fx.registry, env.fx.images);
  const auto rb = run_stage(*b, env.stage(3, 3, 42), env.fx.registry, env.fx.images);
  EXPECT_EQ(report_to_json(ra), report_to_json(rb));
  EXPECT_FALSE(report_to_json(ra).contains("wall_seconds"));
  auto c = env.model();
  EXPECT_NE(run_stage(*c, env.stage(3, 3, 43), env.fx.registry, env.fx.images).losses, ra.losses);
}

TEST(RunStage, LossDecreasesOnSmallCorpus) {
  Env env;
  auto m = env.model();
  auto cfg = env.stage(3, 40);
  cfg.optimizer.batch_size = 8;
  const auto r = run_stage(*m, cfg, env.fx.registry, env.fx.images);
  EXPECT_LT(r.losses.back(), 0.5 * r.losses.front());
}

TEST(RunStage, NonFiniteLossRaises) {
  Env env;
  auto m = env.model();
  m->params().get("dec.lm_head.bias").value(0, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(run_stage(*m, env.stage(3, 2), env.fx.registry, env.fx.images), TrainingError);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-6);
}

TEST(GradCheck, QuadraticStore) {
  ParamStore store;
  store.add(Component::decoder, "w", Matrix(2, 2, {0.3, -0.7, 1.1, 0.2}));
  const auto res = grad_check(store, [&](ad::Graph& g) {
    ad::Var w = g.parameter(store.get("w"));
    return ad::sum(ad::row_dot(ad::matmul(w, w), w));
  });
  EXPECT_EQ(res.entries.size(), 4u);
  EXPECT_LT(res.max_relative_error, 1e-6);
}

class ModelGradCheck : public ::testing::Test {
 protected:
  void SetUp() override {
    model = env.model(5);
    const auto& s = env.fx.region_samples.front();
    input = model->prepare(env.fx.pixels.at(s.image_path), dataset::effective_mask(s, 32));
    instruction = model->vocab().encode(dataset::instruction_for(s));
    caption = model->vocab().encode(s.caption);
  }
  Env env;
  std::unique_ptr<CaptionModel> model;
  PreparedInput input;
  std::vector<int> instruction, caption;
};

TEST_F(ModelGradCheck, AllComponentsAgree) {
  GradCheckOptions o;
  o.seed = 3;
  const auto res = grad_check(*model, input, instruction, caption, o);
  ASSERT_EQ(res.per_component.size(), kAllComponents.size());
  std::map<std::string, Component> owner;
  for (std::size_t i = 0; i < model->params().size(); ++i)
    owner[model->params().at(i).name] = model->params().component_of(i);
  std::map<Component, std::size_t> checked;
  for (const auto& e : res.entries) ++checked[owner.at(e.parameter)];
  for (Component c : kAllComponents) EXPECT_GE(checked[c], 10u) << to_string(c);
  EXPECT_LT(res.max_relative_error, 1e-3);
}

TEST_F(ModelGradCheck, CorruptedGradientsAreCaught) {
  GradCheckOptions o;
  o.seed = 3;
  o.gradient_hook = [](ParamStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i)
      for (double& g : store.at(i).grad.values()) g *= 1.05;
  };
  EXPECT_GT(grad_check(*model, input, instruction, caption, o).max_relative_error, 1e-2);
}

TEST(Checkpoint, RoundTripKeepsWeightsAndCaptions) {
  Env env;
  auto m = env.model();
  run_stage(*m, env.stage(3, 2), env.fx.registry, env.fx.images);
  testing::TempDir dir("ckpt");
  const auto file = dir.path() / "model.bin";
  save_checkpoint(file, *m, {{"stage", 3}});
  const auto loaded = load_checkpoint(file);
  EXPECT_EQ(loaded.metadata.at("stage"), 3);
  EXPECT_EQ(loaded.model->params().checksum(), m->params().checksum());
  EXPECT_EQ(loaded.model->vocab(), m->vocab());
  EXPECT_EQ(nlohmann::json(loaded.model->config()), nlohmann::json(m->config()));
  const auto& s = env.fx.region_samples.front();
  const auto in = m->prepare(env.fx.pixels.at(s.image_path), dataset::effective_mask(s, 32));
  EXPECT_EQ(loaded.model->caption(in, dataset::instruction_for(s), {}), m->caption(in, dataset::instruction_for(s), {}));
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  Env env;
  auto m = env.model();
  testing::TempDir dir("ckpt");
  std::ofstream(dir.path() / "foreign.bin") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir.path() / "foreign.bin"), Error);
  save_checkpoint(dir.path() / "full.bin", *m);
  std::ifstream in(dir.path() / "full.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir.path() / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 16);
  EXPECT_THROW(load_checkpoint(dir.path() / "cut.bin"), Error);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.bin"), Error);
}

}  // namespace
}  // namespace regioncap::training

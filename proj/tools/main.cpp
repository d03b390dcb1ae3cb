// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <CLI11.hpp>

#include "cli.hpp"

namespace cli = regioncap::cli;

int main(int argc, char** argv) {
  CLI::App app{"Mask-referring region captioning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "regioncap 0.1.0");

  cli::TrainArgs train;
  auto* t = app.add_subcommand("train", "Run one training stage");
  t->add_option("--config", train.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  t->add_option("--stage", train.stage, "Stage 1, 2 or 3")->required()->check(CLI::Range(1, 3));
  t->add_option("--checkpoint", train.checkpoint, "Prior-stage checkpoint");
  t->add_option("--out", train.out, "Run directory root");
  t->add_option("--seed", train.seed, "Override the optimizer seed");

  cli::CaptionArgs caption;
  auto* c = app.add_subcommand("caption", "Caption one region");
  c->add_option("--checkpoint", caption.checkpoint)->required();
  c->add_option("--image", caption.image)->required();
  c->add_option("--mask", caption.mask, "Binary mask PNG");
  c->add_option("--task", caption.task, "AARC, RDC or CGIC")->required();
  c->add_option("--attribute", caption.attribute, "Attribute id or name");
  c->add_option("--seed", caption.seed);
  c->add_option("--max-length", caption.max_length)->check(CLI::PositiveNumber);
  c->add_option("--out", caption.out, "Write caption.txt and a manifest here");

  cli::EvaluateArgs eval;
  auto* e = app.add_subcommand("evaluate", "Score captions against references");
  e->add_option("predictions", eval.predictions)->required();
  e->add_option("references", eval.references)->required();
  e->add_option("--metrics", eval.metrics, "Comma separated metric names");
  e->add_option("--out", eval.out);

  cli::StatsArgs stats;
  auto* s = app.add_subcommand("stats", "Dataset statistics and plots");
  s->add_option("dataset", stats.dataset)->required();
  s->add_option("--out", stats.out)->required();

  cli::JudgeArgs judge;
  auto* j = app.add_subcommand("judge", "Attribute judge over AARC predictions");
  j->add_option("predictions", judge.predictions)->required();
  j->add_option("dataset", judge.dataset)->required();
  j->add_option("--endpoint", judge.endpoint, "Endpoint JSON")->required();
  j->add_option("--out", judge.out);
  j->add_option("--image-root", judge.image_root);
  j->add_option("--concurrency", judge.concurrency)->check(CLI::PositiveNumber);
  j->add_option("--retries", judge.retries);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  if (*t) return cli::cmd_train(train, std::cout, std::cerr);
  if (*c) return cli::cmd_caption(caption, std::cout, std::cerr);
  if (*e) return cli::cmd_evaluate(eval, std::cout, std::cerr);
  if (*s) return cli::cmd_stats(stats, std::cout, std::cerr);
  return cli::cmd_judge(judge, std::cout, std::cerr);
}

// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Library tour: synthetic colored data, ERM and DecAug on it, the SEM closed
// forms against Monte Carlo, and a short architecture search.
//
//   build/samples/quickstart [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "oodkit/data/synth.hpp"
#include "oodkit/decaug/decaug.hpp"
#include "oodkit/harness/run.hpp"
#include "oodkit/nas/nasood.hpp"
#include "oodkit/sem/semverify.hpp"

using namespace oodkit;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;

  // Two training environments where color agrees with the label 80% / 90% of
  // the time, and a test environment where it agrees 10% of the time.
  data::Splits splits;
  auto train = data::gen_colored(data::default_colored_train(1000), seed);
  std::tie(splits.train, splits.val) = data::split_train_val(train, 0.1, seed);
  splits.test = data::gen_colored(data::default_colored_test(1000), seed);

  nn::BackboneSpec spec;
  spec.sample_shape = splits.train.front().x.shape();
  nn::SgdOptions opt;
  opt.epochs = 20;
  const auto erm = harness::erm_train(spec, splits, opt, seed);
  std::printf("ERM     test accuracy %.3f\n", nn::accuracy(erm.model, splits.test));

  decaug::DecAugHyper hp;
  hp.epochs = 20;
  auto net = decaug::make_net(spec, 2, 2, seed);
  const auto history = decaug::train(net, splits, hp, seed);
  std::printf("DecAug  test accuracy %.3f  final Lorth %.4f\n", decaug::evaluate(net, splits.test),
              history.back().Lorth);

  // Linear-Gaussian SEM: closed-form expected losses against 1e6 samples.
  const sem::SemConfig cfg{1.0, 0.8, 0.3, -0.2, 0.9};
  const auto mc = sem::mc_estimate(cfg, 1000000, seed);
  std::printf("SEM     E[L2] closed %.4f  MC %.4f | E[Lorth] closed %.4f  MC %.4f\n", sem::expected_L2_closed(cfg),
              mc.L2, sem::expected_Lorth_closed(cfg), mc.Lorth);

  // Two search epochs on a small rotated task, then the discrete cells.
  data::Splits rot;
  auto rtrain = data::gen_rotated(data::default_rotated_train(100), seed);
  std::tie(rot.train, rot.val) = data::split_train_val(rtrain, 0.1, seed);
  rot.test = data::gen_rotated(data::default_rotated_test(100), seed);
  nas::SearchOptions so;
  so.epochs = 2;
  so.pretrain_epochs = 2;
  const auto found = nas::search(rot, so, seed);
  std::printf("search  %s\n", nas::to_json(found.arch).dump().c_str());
  return 0;
}

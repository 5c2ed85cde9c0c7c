#include "mti/training.hpp"
#include "mti/metrics.hpp"

#include "synthetic_items.hpp"
#include "toy_model.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace mti;
using testing::small_model;
using testing::synthetic_items;

namespace {

const std::vector<TrainItem>& corpus50() {
  static const std::vector<TrainItem> items =
      synthetic_items(50, 21, small_model(TargetSet{Target::I}).features);
  return items;
}

LossConfig loss_for(const ModelConfig& m) {
  LossConfig l;
  l.targets = m.targets;
  return l;
}

OptimConfig quick_optim(int epochs) {
  OptimConfig o;
  o.learning_rate = 1e-3;
  o.epochs = epochs;
  o.patience = epochs + 1;
  o.seed = 5;
  o.val_fraction = 0.2;
  return o;
}

}  // namespace

TEST_CASE("training objective mostly decreases over five epochs") {
  const ModelConfig m = small_model(TargetSet{Target::I, Target::W, Target::S});
  const TrainResult r = train(corpus50(), m, loss_for(m), quick_optim(5));
  REQUIRE(r.log.size() == 5);
  int non_increasing = 0;
  for (size_t e = 1; e < r.log.size(); ++e)
    non_increasing += r.log[e].objective <= r.log[e - 1].objective;
  CHECK(non_increasing >= 3);
  CHECK_FALSE(r.diverged);
  for (const auto& e : r.log) {
    CHECK(e.objective == doctest::Approx(e.task_loss.at(Target::I) + e.task_loss.at(Target::W) +
                                         e.task_loss.at(Target::S)));
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const ModelConfig m = small_model(TargetSet{Target::I});
  OptimConfig o = quick_optim(2);
  o.learning_rate = 0.0;
  const TrainResult r = train(corpus50(), m, loss_for(m), o);
  CHECK(r.best.params == init_params(m));
}

TEST_CASE("training is deterministic for a fixed seed and thread-count independent") {
  const ModelConfig m = small_model(TargetSet{Target::I, Target::S});
  OptimConfig o = quick_optim(2);
  const TrainResult a = train(corpus50(), m, loss_for(m), o);
  o.threads = 3;
  const TrainResult b = train(corpus50(), m, loss_for(m), o);
  CHECK(a.best.params == b.best.params);
  CHECK(encode_checkpoint(a.best) == encode_checkpoint(b.best));
}

TEST_CASE("validation split is disjoint, complete and seed-stable") {
  const ModelConfig m = small_model(TargetSet{Target::I});
  const TrainResult r = train(corpus50(), m, loss_for(m), quick_optim(0));
  CHECK(r.train_ids.size() + r.val_ids.size() == 50);
  CHECK(r.val_ids.size() == 10);
  for (const auto& v : r.val_ids)
    CHECK(std::find(r.train_ids.begin(), r.train_ids.end(), v) == r.train_ids.end());
  const TrainResult again = train(corpus50(), m, loss_for(m), quick_optim(0));
  CHECK(again.val_ids == r.val_ids);
  CHECK(r.best_epoch == 0);
  CHECK(r.best.params == init_params(m));
}

TEST_CASE("early stopping keeps the best validation epoch") {
  const ModelConfig m = small_model(TargetSet{Target::I, Target::W});
  OptimConfig o = quick_optim(6);
  o.patience = 2;
  const TrainResult r = train(corpus50(), m, loss_for(m), o);
  REQUIRE(!r.log.empty());
  double best = -1e300;
  int best_epoch = 0;
  for (const auto& e : r.log) {
    const double v = e.val_lcc.at(Target::I).value_or(-1e300);
    if (v > best) {
      best = v;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.best_epoch == best_epoch);
  CHECK(r.best.info.get("train.best_epoch", "") == std::to_string(best_epoch));
  CHECK(static_cast<int>(r.log.size()) <= std::min(6, best_epoch + 2));
  // The stored checkpoint reproduces that epoch's validation LCC.
  std::vector<double> truth, pred;
  for (const auto& item : corpus50())
    if (std::find(r.val_ids.begin(), r.val_ids.end(), item.utt_id) != r.val_ids.end()) {
      truth.push_back(*item.labels.intelligibility);
      pred.push_back(predict(item.input, r.best).at(Target::I).utt_score);
    }
  CHECK(lcc(truth, pred) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("selection target falls back to the first active target") {
  CHECK(selection_target(TargetSet{Target::I, Target::S}) == Target::I);
  CHECK(selection_target(TargetSet{Target::W, Target::S}) == Target::W);
  CHECK(selection_target(TargetSet{Target::S}) == Target::S);
}

TEST_CASE("epoch log JSON has the documented keys") {
  EpochLog e;
  e.epoch = 3;
  e.objective = 0.5;
  e.task_loss[Target::I] = 0.5;
  e.val_lcc[Target::I] = 0.75;
  e.val_lcc[Target::W] = std::nullopt;
  const auto j = nlohmann::json::parse(e.to_json());
  CHECK(j["epoch"] == 3);
  CHECK(j["O"] == 0.5);
  CHECK(j["L_I"] == 0.5);
  CHECK(j["L_W"] == 0.0);
  CHECK(j["L_S"] == 0.0);
  CHECK(j["val_lcc_I"] == 0.75);
  CHECK(j["val_lcc_W"].is_null());
  CHECK(j["val_lcc_S"].is_null());
  CHECK(j.size() == 8);
}

TEST_CASE("transfer: identical config copies everything") {
  const ModelConfig m = testing::toy_config();
  Checkpoint src;
  src.model = m;
  src.params = init_params(testing::toy_config({Target::I, Target::W, Target::S}, 99));
  TransferReport rep;
  const ParamStore p = transfer_init(src, m, &rep);
  CHECK(rep.fresh.empty());
  CHECK(rep.copied.size() == p.size());
  CHECK(p == src.params);
}

TEST_CASE("transfer: single-target source seeds a three-target model") {
  Checkpoint src;
  src.model = testing::toy_config({Target::S}, 99);
  src.params = init_params(src.model);
  const ModelConfig target = testing::toy_config({Target::I, Target::W, Target::S}, 1);
  TransferReport rep;
  const ParamStore p = transfer_init(src, target, &rep);
  const ParamStore fresh = init_params(target);
  for (const auto& name : rep.copied) CHECK(p.at(name) == src.params.at(name));
  for (const auto& name : rep.fresh) {
    CHECK(p.at(name) == fresh.at(name));
    CHECK((name.starts_with("head.I.") || name.starts_with("head.W.")));
  }
  CHECK(std::find(rep.copied.begin(), rep.copied.end(), "head.S.out.weight") != rep.copied.end());
  CHECK(std::find(rep.copied.begin(), rep.copied.end(), "blstm.fwd.wx") != rep.copied.end());
  CHECK(rep.fresh.size() == 10);
}

TEST_CASE("transfer: incompatible recurrent width lists the offending tensors") {
  Checkpoint src;
  src.model = testing::toy_config({Target::S});
  src.params = init_params(src.model);
  ModelConfig target = testing::toy_config({Target::I});
  target.blstm_hidden = 5;
  CHECK_THROWS_WITH_AS(transfer_init(src, target), doctest::Contains("blstm.fwd.wh"), Error);
}

TEST_CASE("warm start: trunk equals the source at step zero and new heads are fresh") {
  const ModelConfig src_cfg = small_model(TargetSet{Target::S}, 77);
  const OptimConfig o = quick_optim(1);
  const TrainResult pre = train(corpus50(), src_cfg, loss_for(src_cfg), o);
  const ModelConfig tgt = small_model(TargetSet{Target::I, Target::W, Target::S}, 3);
  const TrainResult warm = train(corpus50(), tgt, loss_for(tgt), quick_optim(0), &pre.best);
  for (const auto& [name, m] : pre.best.params) CHECK(warm.best.params.at(name) == m);
  const ParamStore fresh = init_params(tgt);
  CHECK(warm.best.params.at("head.I.attn.wq") == fresh.at("head.I.attn.wq"));
  CHECK(warm.best.norm == pre.best.norm);
  CHECK(warm.transfer.fresh.size() == 10);
}

TEST_CASE("divergence stops training with the last good checkpoint") {
  const ModelConfig m = small_model(TargetSet{Target::I});
  OptimConfig o = quick_optim(3);
  o.learning_rate = 1e300;
  o.grad_clip = 0.0;
  o.algorithm = Algorithm::sgd;
  const TrainResult r = train(corpus50(), m, loss_for(m), o);
  CHECK(r.diverged);
  CHECK(r.message.find("non-finite") != std::string::npos);
  CHECK(r.best.params.first_non_finite().empty());
}

TEST_CASE("optimizer steps") {
  ParamStore p;
  p.add("w", Matrix::Constant(1, 2, 1.0));
  ParamStore g;
  g.add("w", (Matrix(1, 2) << 2.0, -4.0).finished());
  OptimConfig sgd;
  sgd.algorithm = Algorithm::sgd;
  sgd.learning_rate = 0.1;
  sgd.momentum = 0.5;
  Optimizer s(sgd);
  s.step(p, g);
  CHECK(p.at("w")(0, 0) == doctest::Approx(0.8));
  s.step(p, g);  // velocity 0.5*2 + 2 = 3
  CHECK(p.at("w")(0, 0) == doctest::Approx(0.5));

  ParamStore q;
  q.add("w", Matrix::Constant(1, 2, 1.0));
  OptimConfig adam;
  adam.learning_rate = 0.01;
  Optimizer a(adam);
  a.step(q, g);  // first bias-corrected step moves each entry by ~lr against the sign
  CHECK(q.at("w")(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(q.at("w")(0, 1) == doctest::Approx(1.01).epsilon(1e-6));

  ParamStore big;
  big.add("a", Matrix::Constant(1, 1, 3.0));
  big.add("b", Matrix::Constant(1, 1, 4.0));
  CHECK(clip_gradients(big, 1.0) == doctest::Approx(5.0));
  CHECK(big.global_norm() == doctest::Approx(1.0));
}

TEST_CASE("optim config parsing and validation") {
  const OptimConfig o = OptimConfig::from_config(
      Config::parse("optim.algorithm = sgd\noptim.lr = 0.5\noptim.batch_size = 2\n"));
  CHECK(o.algorithm == Algorithm::sgd);
  CHECK(o.learning_rate == 0.5);
  CHECK(o.batch_size == 2);
  const OptimConfig d = OptimConfig::from_config(Config{});
  CHECK(d.learning_rate == 1e-4);
  CHECK(d.batch_size == 4);
  CHECK(d.grad_clip == 5.0);
  CHECK(d.patience == 10);
  CHECK(d.val_fraction == 0.1);
  CHECK_THROWS_AS(OptimConfig::from_config(Config::parse("optim.algorithm = lbfgs\n")), Error);
  CHECK_THROWS_AS(OptimConfig::from_config(Config::parse("optim.batch_size = 0\n")), Error);
}

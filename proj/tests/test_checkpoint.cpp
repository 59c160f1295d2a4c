#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "stob/checkpoint.hpp"
#include "stob/datasets.hpp"
#include "stob/learning.hpp"
#include "stob/observer.hpp"
#include "stob/random.hpp"

using stob::Adam;
using stob::ExperimentConfig;
using stob::ObserverModel;
using stob::Parameter;
using stob::Rng;
using stob::Tensor;
using i64 = std::int64_t;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("stob_checkpoint_test_" + name + ".stob") {}
  ~TempFile() { std::remove(path.c_str()); }
};

ExperimentConfig micro_experiment() {
  ExperimentConfig cfg;
  cfg.name = "checkpoint-test";
  cfg.seed = 11;
  cfg.data.channels = 1;
  cfg.data.height = 16;
  cfg.data.width = 16;
  cfg.data.t_in = 4;
  cfg.data.t_out = 4;
  cfg.model.delta = 2;
  cfg.model.n_s = 2;
  cfg.model.c_s = 4;
  cfg.model.n_h = 1;
  cfg.model.c_h = 8;
  cfg.model.n_t = 1;
  cfg.model.c_t = 8;
  cfg.model.b_variant = stob::BVariant::kConv1x1;
  cfg.optimizer.lr = 0.005;
  cfg.training.batch_size = 2;
  cfg.training.epochs = 2;
  return cfg;
}

std::pair<Tensor<double>, Tensor<double>> micro_data(i64 n) {
  stob::MotionSpec spec;
  spec.objects = 1;
  spec.sprite = 8;
  spec.seed = 21;
  stob::SequenceData<double> data =
      stob::gen_bouncing_blobs<double>(spec, n, 8, 16, 16);
  return stob::split_time(data.frames, 4, 4);
}

std::vector<double> flatten_params(const ObserverModel<double>& model) {
  std::vector<double> out;
  for (const Parameter<double>* p : model.parameters()) {
    auto v = p->value.data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("save, load, save again is byte-identical") {
  ExperimentConfig cfg = micro_experiment();
  ObserverModel<double> model(cfg.observer_config(), cfg.seed);
  Adam<double> opt(model.parameters(), cfg.optimizer);

  // Take a couple of real steps so the moment buffers are non-trivial.
  auto [inputs, targets] = micro_data(4);
  Rng rng(31);
  stob::train_epoch(model, inputs, targets, cfg.loss, opt,
                    cfg.training.batch_size, rng);

  TempFile first("first");
  stob::save_checkpoint(first.path, cfg, model, &opt, 1, rng.state());

  // A differently seeded model converges to the same bytes after loading.
  ObserverModel<double> other(cfg.observer_config(), cfg.seed + 99);
  Adam<double> other_opt(other.parameters(), cfg.optimizer);
  stob::CheckpointInfo info = stob::load_checkpoint(first.path, other, &other_opt);
  CHECK(info.epoch == 1);
  CHECK(info.rng_state == rng.state());
  CHECK(info.config.to_canonical_json() == cfg.to_canonical_json());
  CHECK(flatten_params(other) == flatten_params(model));
  CHECK(other_opt.step_count() == opt.step_count());
  CHECK(other_opt.first_moments() == opt.first_moments());
  CHECK(other_opt.second_moments() == opt.second_moments());

  TempFile second("second");
  stob::save_checkpoint(second.path, info.config, other, &other_opt, info.epoch,
                        info.rng_state);
  CHECK(file_bytes(first.path) == file_bytes(second.path));
}

TEST_CASE("resuming mid-run reproduces the uninterrupted trajectory exactly") {
  ExperimentConfig cfg = micro_experiment();
  auto [inputs, targets] = micro_data(5);

  // Reference: two consecutive epochs without interruption.
  ObserverModel<double> straight(cfg.observer_config(), cfg.seed);
  Adam<double> straight_opt(straight.parameters(), cfg.optimizer);
  Rng straight_rng(41);
  stob::train_epoch(straight, inputs, targets, cfg.loss, straight_opt,
                    cfg.training.batch_size, straight_rng);
  stob::train_epoch(straight, inputs, targets, cfg.loss, straight_opt,
                    cfg.training.batch_size, straight_rng);

  // Interrupted: one epoch, checkpoint, fresh process state, second epoch.
  ObserverModel<double> part_one(cfg.observer_config(), cfg.seed);
  Adam<double> part_one_opt(part_one.parameters(), cfg.optimizer);
  Rng part_one_rng(41);
  stob::train_epoch(part_one, inputs, targets, cfg.loss, part_one_opt,
                    cfg.training.batch_size, part_one_rng);
  TempFile snapshot("resume");
  stob::save_checkpoint(snapshot.path, cfg, part_one, &part_one_opt, 1,
                        part_one_rng.state());

  ExperimentConfig reread = stob::read_checkpoint_config(snapshot.path);
  ObserverModel<double> part_two(reread.observer_config(), reread.seed);
  Adam<double> part_two_opt(part_two.parameters(), reread.optimizer);
  stob::CheckpointInfo info =
      stob::load_checkpoint(snapshot.path, part_two, &part_two_opt);
  Rng part_two_rng(0);
  part_two_rng.set_state(info.rng_state);
  stob::train_epoch(part_two, inputs, targets, reread.loss, part_two_opt,
                    reread.training.batch_size, part_two_rng);

  CHECK(flatten_params(part_two) == flatten_params(straight));
  CHECK(part_two_opt.first_moments() == straight_opt.first_moments());
  CHECK(part_two_opt.second_moments() == straight_opt.second_moments());
  CHECK(part_two_rng.state() == straight_rng.state());
}

TEST_CASE("architecture mismatches are rejected with a parameter summary") {
  ExperimentConfig cfg = micro_experiment();
  ObserverModel<double> model(cfg.observer_config(), cfg.seed);
  TempFile file("mismatch");
  stob::save_checkpoint<double>(file.path, cfg, model, nullptr, 0, "");

  ExperimentConfig wider = cfg;
  wider.model.c_s = 8;
  ObserverModel<double> wrong(wider.observer_config(), cfg.seed);
  try {
    stob::load_checkpoint<double>(file.path, wrong, nullptr);
    FAIL("expected ContractError");
  } catch (const stob::ContractError& e) {
    // The summary must point at the offending parameters and the nature of
    // the disagreement.
    const std::string what = e.what();
    CHECK(what.find("does not match the model") != std::string::npos);
    CHECK(what.find("parameter") != std::string::npos);
    CHECK(what.find("shape") != std::string::npos);
  }
}

TEST_CASE("optimizer state is optional but must match the request") {
  ExperimentConfig cfg = micro_experiment();
  ObserverModel<double> model(cfg.observer_config(), cfg.seed);
  TempFile file("optimizer");

  SUBCASE("a model-only checkpoint refuses to hydrate an optimizer") {
    stob::save_checkpoint<double>(file.path, cfg, model, nullptr, 3, "state");
    ObserverModel<double> target(cfg.observer_config(), cfg.seed);

    stob::CheckpointInfo info =
        stob::load_checkpoint<double>(file.path, target, nullptr);
    CHECK(info.epoch == 3);
    CHECK(info.rng_state == "state");

    Adam<double> opt(target.parameters(), cfg.optimizer);
    CHECK_THROWS_AS(stob::load_checkpoint(file.path, target, &opt),
                    stob::ContractError);
  }

  SUBCASE("a full checkpoint can be loaded without touching the optimizer") {
    Adam<double> opt(model.parameters(), cfg.optimizer);
    stob::save_checkpoint(file.path, cfg, model, &opt, 0, "");
    ObserverModel<double> target(cfg.observer_config(), cfg.seed + 1);
    stob::CheckpointInfo info =
        stob::load_checkpoint<double>(file.path, target, nullptr);
    CHECK(flatten_params(target) == flatten_params(model));
    CHECK(info.epoch == 0);
  }

  SUBCASE("hyperparameter drift is a contract violation") {
    Adam<double> opt(model.parameters(), cfg.optimizer);
    stob::save_checkpoint(file.path, cfg, model, &opt, 0, "");
    ObserverModel<double> target(cfg.observer_config(), cfg.seed);
    stob::AdamConfig different = cfg.optimizer;
    different.lr = 0.1;
    Adam<double> other(target.parameters(), different);
    CHECK_THROWS_AS(stob::load_checkpoint(file.path, target, &other),
                    stob::ContractError);
  }
}

TEST_CASE("corrupt checkpoints fail loudly") {
  ExperimentConfig cfg = micro_experiment();
  ObserverModel<double> model(cfg.observer_config(), cfg.seed);
  TempFile file("corrupt");
  stob::save_checkpoint<double>(file.path, cfg, model, nullptr, 0, "rng");

  auto rewrite = [&](const std::string& bytes) {
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };

  SUBCASE("bad magic") {
    std::string bytes = file_bytes(file.path);
    bytes[1] = 'X';
    rewrite(bytes);
    CHECK_THROWS_AS(stob::read_checkpoint_config(file.path), stob::FormatError);
    ObserverModel<double> target(cfg.observer_config(), cfg.seed);
    CHECK_THROWS_AS(stob::load_checkpoint<double>(file.path, target, nullptr),
                    stob::FormatError);
  }

  SUBCASE("truncation reports the failing byte offset") {
    rewrite(file_bytes(file.path).substr(0, 100));
    ObserverModel<double> target(cfg.observer_config(), cfg.seed);
    try {
      stob::load_checkpoint<double>(file.path, target, nullptr);
      FAIL("expected FormatError");
    } catch (const stob::FormatError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }

  SUBCASE("missing file") {
    ObserverModel<double> target(cfg.observer_config(), cfg.seed);
    CHECK_THROWS_AS(
        stob::load_checkpoint<double>("no_such_checkpoint.stob", target, nullptr),
        stob::IoError);
    CHECK_THROWS_AS(stob::read_checkpoint_config("no_such_checkpoint.stob"),
                    stob::IoError);
  }

  SUBCASE("negative epochs never reach the file") {
    CHECK_THROWS_AS(
        stob::save_checkpoint<double>(file.path, cfg, model, nullptr, -1, ""),
        stob::ContractError);
  }
}

TEST_CASE("the embedded rng state round-trips through a live generator") {
  ExperimentConfig cfg = micro_experiment();
  ObserverModel<double> model(cfg.observer_config(), cfg.seed);
  TempFile file("rng");

  Rng rng(123);
  rng.uniform();
  rng.normal();
  const std::string state = rng.state();
  stob::save_checkpoint<double>(file.path, cfg, model, nullptr, 5, state);

  ObserverModel<double> target(cfg.observer_config(), cfg.seed);
  stob::CheckpointInfo info =
      stob::load_checkpoint<double>(file.path, target, nullptr);
  Rng revived(0);
  revived.set_state(info.rng_state);
  for (int i = 0; i < 16; ++i) {
    CHECK(revived.next_u64() == rng.next_u64());
  }
}

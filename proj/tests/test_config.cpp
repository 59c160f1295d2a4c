#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <string>

#include "stob/config.hpp"
#include "stob/errors.hpp"

using stob::ExperimentConfig;

namespace {

/// Writes `text` to a throwaway path and removes it on scope exit.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& text)
      : path("stob_config_test_" + std::to_string(counter++) + ".json") {
    std::ofstream out(path, std::ios::binary);
    out << text;
  }
  ~TempFile() { std::remove(path.c_str()); }
  static int counter;
};
int TempFile::counter = 0;

}  // namespace

TEST_CASE("an empty object yields the default experiment") {
  ExperimentConfig parsed = ExperimentConfig::from_json_text("{}");
  ExperimentConfig defaults;

  CHECK(parsed.name == "experiment");
  CHECK(parsed.seed == 0);
  CHECK(parsed.data.channels == 1);
  CHECK(parsed.data.height == 64);
  CHECK(parsed.data.t_in == 10);
  CHECK(parsed.model.delta == 10);
  CHECK(parsed.model.c_s == 64);
  CHECK(parsed.model.b_variant == stob::BVariant::kInception);
  CHECK(parsed.model.a_constraint == stob::AConstraint::kSigmoid);
  CHECK(parsed.model.xi_handoff == stob::XiHandoff::kCarry);
  CHECK(parsed.model.skip_connections);
  CHECK(parsed.loss.lambda0 == 1.0);
  CHECK(parsed.loss.lambda1 == 0.0);
  CHECK(parsed.optimizer.lr == 1e-3);
  CHECK(parsed.optimizer.beta2 == 0.999);
  CHECK(parsed.training.batch_size == 16);
  CHECK(parsed.training.epochs == 10);
  CHECK(parsed.to_canonical_json() == defaults.to_canonical_json());
}

TEST_CASE("parse, serialize, parse is a fixed point") {
  // Scrambled key order, stray whitespace, and a partial model section.
  const std::string text = R"({
    "training": {"epochs": 3, "batch_size": 4},
    "seed": 99,
    "model": {"xi_handoff": "recompute", "delta": 5, "c_s": 8,
              "b_variant": "conv3x3", "a_constraint": "clamp",
              "a_init": "normal", "skip_connections": false,
              "activation_slope": 0.1},
    "name": "fixed-point",
    "data": {"t_in": 5, "t_out": 10, "height": 32, "width": 48,
             "path": "frames.stds"},
    "loss": {"lambda1": 0.25, "lambda3": 1.5}
  })";

  ExperimentConfig first = ExperimentConfig::from_json_text(text);
  const std::string canon = first.to_canonical_json();
  ExperimentConfig second = ExperimentConfig::from_json_text(canon);
  CHECK(second.to_canonical_json() == canon);

  CHECK(first.name == "fixed-point");
  CHECK(first.seed == 99);
  CHECK(first.data.width == 48);
  CHECK(first.data.path == "frames.stds");
  CHECK(first.model.delta == 5);
  CHECK(first.model.b_variant == stob::BVariant::kConv3x3);
  CHECK(first.model.a_constraint == stob::AConstraint::kClamp);
  CHECK(first.model.a_init == stob::InitKind::kNormal);
  CHECK(first.model.xi_handoff == stob::XiHandoff::kRecompute);
  CHECK_FALSE(first.model.skip_connections);
  CHECK(first.model.activation_slope == 0.1);
  CHECK(first.model.c_h == 512);  // untouched fields keep their defaults
  CHECK(first.loss.lambda1 == 0.25);
  CHECK(first.loss.lambda3 == 1.5);
  CHECK(first.training.epochs == 3);

  // Canonical form sorts keys, so the sections appear alphabetically.
  const auto pos = [&](const char* key) { return canon.find(key); };
  CHECK(pos("\"data\"") < pos("\"loss\""));
  CHECK(pos("\"loss\"") < pos("\"model\""));
  CHECK(pos("\"model\"") < pos("\"name\""));
  CHECK(pos("\"name\"") < pos("\"optimizer\""));
  CHECK(pos("\"optimizer\"") < pos("\"seed\""));
  CHECK(pos("\"seed\"") < pos("\"training\""));
}

TEST_CASE("unknown keys are rejected at every level") {
  const char* bad[] = {
      R"({"nome": "typo"})",
      R"({"data": {"depth": 3}})",
      R"({"model": {"layers": 9}})",
      R"({"loss": {"lambda9": 1.0}})",
      R"({"optimizer": {"momentum": 0.9}})",
      R"({"training": {"steps": 5}})",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(text),
                         doctest::Contains("unknown key"), stob::ConfigError);
  }
}

TEST_CASE("enum fields accept their spellings and reject the rest") {
  const auto with_model = [](const std::string& body) {
    return ExperimentConfig::from_json_text(
        R"({"data": {"t_in": 4, "t_out": 4}, "model": {"delta": 4, )" + body +
        "}}");
  };

  CHECK(with_model(R"("b_variant": "none")").model.b_variant ==
        stob::BVariant::kNone);
  CHECK(with_model(R"("b_variant": "conv1x1")").model.b_variant ==
        stob::BVariant::kConv1x1);
  CHECK(with_model(R"("b_variant": "conv3x3")").model.b_variant ==
        stob::BVariant::kConv3x3);
  CHECK(with_model(R"("b_variant": "inception")").model.b_variant ==
        stob::BVariant::kInception);
  CHECK(with_model(R"("a_constraint": "none")").model.a_constraint ==
        stob::AConstraint::kNone);
  CHECK(with_model(R"("a_init": "kaiming-uniform")").model.a_init ==
        stob::InitKind::kKaimingUniform);
  CHECK(with_model(R"("a_init": "uniform")").model.a_init ==
        stob::InitKind::kUniform);
  CHECK(with_model(R"("xi_handoff": "carry")").model.xi_handoff ==
        stob::XiHandoff::kCarry);

  CHECK_THROWS_WITH_AS(with_model(R"("b_variant": "fancy")"),
                       doctest::Contains("unknown B variant"),
                       stob::ConfigError);
  CHECK_THROWS_WITH_AS(with_model(R"("a_constraint": "relu")"),
                       doctest::Contains("unknown A constraint"),
                       stob::ConfigError);
  CHECK_THROWS_WITH_AS(with_model(R"("xi_handoff": "hold")"),
                       doctest::Contains("unknown xi hand-off mode"),
                       stob::ConfigError);
  CHECK_THROWS_WITH_AS(with_model(R"("a_init": "xavier")"),
                       doctest::Contains("unknown init kind"),
                       stob::ConfigError);
}

TEST_CASE("malformed documents name the offending field") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text("{"),
                       doctest::Contains("not valid JSON"), stob::ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text("[]"),
                       doctest::Contains("config must be a JSON object"),
                       stob::ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(R"({"data": 3})"),
                       doctest::Contains("data must be a JSON object"),
                       stob::ConfigError);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json_text(R"({"data": {"height": "tall"}})"),
      doctest::Contains("data.height"), stob::ConfigError);
}

TEST_CASE("validation rejects inconsistent experiments") {
  // Input length must split into whole frame groups (default delta is 10).
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"data": {"t_in": 3}})"),
                  stob::ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"loss": {"lambda0": -1.0}})"),
      stob::ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"optimizer": {"lr": 0.0}})"),
      stob::ConfigError);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json_text(R"({"training": {"batch_size": 0}})"),
      doctest::Contains("training.batch_size"), stob::ConfigError);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json_text(R"({"training": {"epochs": 0}})"),
      doctest::Contains("training.epochs"), stob::ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(R"({"name": ""})"),
                       doctest::Contains("name"), stob::ConfigError);
}

TEST_CASE("observer_config mirrors the data and model sections") {
  ExperimentConfig cfg = ExperimentConfig::from_json_text(R"({
    "data": {"channels": 2, "height": 32, "width": 48, "t_in": 4, "t_out": 8},
    "model": {"delta": 4, "n_s": 3, "c_s": 16, "n_h": 1, "c_h": 32,
              "n_t": 2, "c_t": 24, "b_variant": "conv1x1",
              "a_constraint": "clamp", "a_init": "uniform",
              "xi_handoff": "recompute", "skip_connections": false,
              "activation_slope": 0.15, "group_norm_eps": 1e-4}
  })");
  stob::ObserverConfig oc = cfg.observer_config();
  CHECK(oc.channels == 2);
  CHECK(oc.height == 32);
  CHECK(oc.width == 48);
  CHECK(oc.t_in == 4);
  CHECK(oc.t_out == 8);
  CHECK(oc.delta == 4);
  CHECK(oc.n_s == 3);
  CHECK(oc.c_s == 16);
  CHECK(oc.n_h == 1);
  CHECK(oc.c_h == 32);
  CHECK(oc.n_t == 2);
  CHECK(oc.c_t == 24);
  CHECK(oc.b_variant == stob::BVariant::kConv1x1);
  CHECK(oc.a_constraint == stob::AConstraint::kClamp);
  CHECK(oc.a_init == stob::InitKind::kUniform);
  CHECK(oc.xi_handoff == stob::XiHandoff::kRecompute);
  CHECK_FALSE(oc.skip_connections);
  CHECK(oc.activation_slope == 0.15);
  CHECK(oc.group_norm_eps == 1e-4);
}

TEST_CASE("config_hash fingerprints the canonical text") {
  // Published FNV-1a 64 test vectors.
  CHECK(stob::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(stob::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(stob::fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);

  ExperimentConfig cfg = ExperimentConfig::from_json_text(R"({"seed": 7})");
  const std::string canon = cfg.to_canonical_json();
  CHECK(cfg.config_hash() == stob::fnv1a64(canon.data(), canon.size()));

  const std::string hex = cfg.config_hash_hex();
  REQUIRE(hex.size() == 16);
  for (char c : hex) {
    CHECK((std::isdigit(static_cast<unsigned char>(c)) ||
           (c >= 'a' && c <= 'f')));
  }
  CHECK(std::stoull(hex, nullptr, 16) == cfg.config_hash());

  ExperimentConfig other = ExperimentConfig::from_json_text(R"({"seed": 8})");
  CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("load reads a file and reports missing ones") {
  ExperimentConfig want =
      ExperimentConfig::from_json_text(R"({"name": "from-disk", "seed": 3})");
  TempFile file(want.to_canonical_json());
  ExperimentConfig got = ExperimentConfig::load(file.path);
  CHECK(got.to_canonical_json() == want.to_canonical_json());
  CHECK(got.name == "from-disk");

  CHECK_THROWS_WITH_AS(ExperimentConfig::load("no/such/config.json"),
                       doctest::Contains("cannot open config"), stob::IoError);
}

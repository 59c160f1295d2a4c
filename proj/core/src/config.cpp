#include "stob/config.hpp"

#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stob/errors.hpp"

namespace stob {

namespace {

using nlohmann::json;

void require_object(const json& j, const char* where) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + " must be a JSON object");
  }
}

void reject_unknown_keys(const json& j, const char* where,
                         std::initializer_list<std::string_view> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (std::string_view k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

void read_enum_field(const json& j, const char* where, const char* key,
                     BVariant& out) {
  std::string s;
  if (!j.contains(key)) return;
  read_field(j, where, key, s);
  out = b_variant_from_string(s);
}
void read_enum_field(const json& j, const char* where, const char* key,
                     AConstraint& out) {
  std::string s;
  if (!j.contains(key)) return;
  read_field(j, where, key, s);
  out = a_constraint_from_string(s);
}
void read_enum_field(const json& j, const char* where, const char* key,
                     InitKind& out) {
  std::string s;
  if (!j.contains(key)) return;
  read_field(j, where, key, s);
  out = init_kind_from_string(s);
}
void read_enum_field(const json& j, const char* where, const char* key,
                     XiHandoff& out) {
  std::string s;
  if (!j.contains(key)) return;
  read_field(j, where, key, s);
  out = xi_handoff_from_string(s);
}

}  // namespace

ObserverConfig ExperimentConfig::observer_config() const {
  ObserverConfig oc;
  oc.channels = data.channels;
  oc.height = data.height;
  oc.width = data.width;
  oc.t_in = data.t_in;
  oc.t_out = data.t_out;
  oc.delta = model.delta;
  oc.n_s = model.n_s;
  oc.c_s = model.c_s;
  oc.n_h = model.n_h;
  oc.c_h = model.c_h;
  oc.n_t = model.n_t;
  oc.c_t = model.c_t;
  oc.b_variant = model.b_variant;
  oc.a_constraint = model.a_constraint;
  oc.a_init = model.a_init;
  oc.xi_handoff = model.xi_handoff;
  oc.skip_connections = model.skip_connections;
  oc.activation_slope = model.activation_slope;
  oc.group_norm_eps = model.group_norm_eps;
  return oc;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("config name must not be empty");
  observer_config().validate();
  loss.validate();
  optimizer.validate();
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be positive");
  if (training.epochs < 1) throw ConfigError("training.epochs must be positive");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(j, "config");
  reject_unknown_keys(j, "config",
                      {"name", "seed", "data", "model", "loss", "optimizer",
                       "training"});

  ExperimentConfig cfg;
  read_field(j, "config", "name", cfg.name);
  read_field(j, "config", "seed", cfg.seed);

  if (j.contains("data")) {
    const json& d = j.at("data");
    require_object(d, "data");
    reject_unknown_keys(d, "data",
                        {"channels", "height", "width", "t_in", "t_out", "path"});
    read_field(d, "data", "channels", cfg.data.channels);
    read_field(d, "data", "height", cfg.data.height);
    read_field(d, "data", "width", cfg.data.width);
    read_field(d, "data", "t_in", cfg.data.t_in);
    read_field(d, "data", "t_out", cfg.data.t_out);
    read_field(d, "data", "path", cfg.data.path);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    require_object(m, "model");
    reject_unknown_keys(
        m, "model",
        {"delta", "n_s", "c_s", "n_h", "c_h", "n_t", "c_t", "b_variant",
         "a_constraint", "a_init", "xi_handoff", "skip_connections",
         "activation_slope", "group_norm_eps"});
    read_field(m, "model", "delta", cfg.model.delta);
    read_field(m, "model", "n_s", cfg.model.n_s);
    read_field(m, "model", "c_s", cfg.model.c_s);
    read_field(m, "model", "n_h", cfg.model.n_h);
    read_field(m, "model", "c_h", cfg.model.c_h);
    read_field(m, "model", "n_t", cfg.model.n_t);
    read_field(m, "model", "c_t", cfg.model.c_t);
    read_enum_field(m, "model", "b_variant", cfg.model.b_variant);
    read_enum_field(m, "model", "a_constraint", cfg.model.a_constraint);
    read_enum_field(m, "model", "a_init", cfg.model.a_init);
    read_enum_field(m, "model", "xi_handoff", cfg.model.xi_handoff);
    read_field(m, "model", "skip_connections", cfg.model.skip_connections);
    read_field(m, "model", "activation_slope", cfg.model.activation_slope);
    read_field(m, "model", "group_norm_eps", cfg.model.group_norm_eps);
  }

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    require_object(l, "loss");
    reject_unknown_keys(l, "loss", {"lambda0", "lambda1", "lambda2", "lambda3"});
    read_field(l, "loss", "lambda0", cfg.loss.lambda0);
    read_field(l, "loss", "lambda1", cfg.loss.lambda1);
    read_field(l, "loss", "lambda2", cfg.loss.lambda2);
    read_field(l, "loss", "lambda3", cfg.loss.lambda3);
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    require_object(o, "optimizer");
    reject_unknown_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps"});
    read_field(o, "optimizer", "lr", cfg.optimizer.lr);
    read_field(o, "optimizer", "beta1", cfg.optimizer.beta1);
    read_field(o, "optimizer", "beta2", cfg.optimizer.beta2);
    read_field(o, "optimizer", "eps", cfg.optimizer.eps);
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    require_object(t, "training");
    reject_unknown_keys(t, "training", {"batch_size", "epochs"});
    read_field(t, "training", "batch_size", cfg.training.batch_size);
    read_field(t, "training", "epochs", cfg.training.epochs);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config \"" + path + "\"");
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string ExperimentConfig::to_canonical_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["data"] = {{"channels", data.channels}, {"height", data.height},
               {"width", data.width},       {"t_in", data.t_in},
               {"t_out", data.t_out},       {"path", data.path}};
  j["model"] = {{"delta", model.delta},
                {"n_s", model.n_s},
                {"c_s", model.c_s},
                {"n_h", model.n_h},
                {"c_h", model.c_h},
                {"n_t", model.n_t},
                {"c_t", model.c_t},
                {"b_variant", to_string(model.b_variant)},
                {"a_constraint", to_string(model.a_constraint)},
                {"a_init", to_string(model.a_init)},
                {"xi_handoff", to_string(model.xi_handoff)},
                {"skip_connections", model.skip_connections},
                {"activation_slope", model.activation_slope},
                {"group_norm_eps", model.group_norm_eps}};
  j["loss"] = {{"lambda0", loss.lambda0},
               {"lambda1", loss.lambda1},
               {"lambda2", loss.lambda2},
               {"lambda3", loss.lambda3}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["training"] = {{"batch_size", training.batch_size},
                   {"epochs", training.epochs}};
  return j.dump(2);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t ExperimentConfig::config_hash() const {
  const std::string text = to_canonical_json();
  return fnv1a64(text.data(), text.size());
}

std::string ExperimentConfig::config_hash_hex() const {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << config_hash();
  return out.str();
}

}  // namespace stob

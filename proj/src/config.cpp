// SPDX-License-Identifier: Apache-2.0
#include "ibpo/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <stdexcept>

#include "ibpo/io.hpp"

namespace ibpo {

namespace {

using nlohmann::json;

std::string env_key_for(const std::vector<std::string>& path) {
  std::string key = "IBPO";
  for (const std::string& part : path) {
    key += '_';
    for (char c : part) key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return key;
}

// Replaces scalar leaves with values from IBPO_* environment variables.
void apply_env_overrides(json& node, std::vector<std::string>& path) {
  if (node.is_object()) {
    for (auto& [key, value] : node.items()) {
      path.push_back(key);
      apply_env_overrides(value, path);
      path.pop_back();
    }
    return;
  }
  if (node.is_array()) return;  // only scalar keys are overridable
  const char* raw = std::getenv(env_key_for(path).c_str());
  if (raw == nullptr) return;
  const std::string text(raw);
  try {
    if (node.is_boolean()) {
      node = (text == "true" || text == "1");
    } else if (node.is_number_integer() || node.is_number_unsigned()) {
      node = std::stoll(text);
    } else if (node.is_number_float()) {
      node = std::stod(text);
    } else {
      node = text;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad override value for " + env_key_for(path));
  }
}

json load_json(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw std::invalid_argument("config: " + path + ": " + err.what());
  }
  std::vector<std::string> key_path;
  apply_env_overrides(doc, key_path);
  return doc;
}

template <typename T>
void maybe_get(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_env(const json& obj, EnvConfig& env) {
  maybe_get(obj, "V", env.vocab);
  maybe_get(obj, "L", env.chain_length);
  maybe_get(obj, "task_seed_base", env.task_seed_base);
  maybe_get(obj, "num_tasks", env.num_tasks);
}

void parse_policy(const json& obj, PolicyConfig& policy) {
  maybe_get(obj, "lr", policy.lr);
  maybe_get(obj, "max_len", policy.max_len);
}

void parse_objective(const json& obj, ObjectiveConfig& objective) {
  maybe_get(obj, "lambda", objective.lambda);
  maybe_get(obj, "epsilon", objective.epsilon);
  maybe_get(obj, "eta", objective.eta);
  maybe_get(obj, "group_size", objective.group_size);
  maybe_get(obj, "correction_group_size", objective.correction_group_size);
  maybe_get(obj, "std_floor", objective.std_floor);
}

void parse_compare(const json& obj, CompareConfig& compare) {
  maybe_get(obj, "rho", compare.rho);
  maybe_get(obj, "alpha", compare.alpha);
  maybe_get(obj, "kappa", compare.kappa);
  if (obj.contains("alpha_mode")) {
    const std::string mode = obj.at("alpha_mode").get<std::string>();
    if (mode == "fixed") {
      compare.adaptive_alpha = false;
    } else if (mode == "adaptive") {
      compare.adaptive_alpha = true;
    } else {
      throw std::invalid_argument("config: compare.alpha_mode must be fixed|adaptive");
    }
  }
}

void parse_corrector(const json& obj, CorrectorConfig& corrector) {
  if (obj.contains("kind")) {
    const std::string kind = obj.at("kind").get<std::string>();
    if (kind == "ORACLE") {
      corrector.kind = CorrectorKind::Oracle;
    } else if (kind == "POLICY") {
      corrector.kind = CorrectorKind::Policy;
    } else {
      throw std::invalid_argument("config: corrector.kind must be ORACLE|POLICY");
    }
  }
  maybe_get(obj, "repair_prob", corrector.repair_prob);
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig cfg;
  if (doc.contains("env")) parse_env(doc.at("env"), cfg.env);
  if (doc.contains("policy")) parse_policy(doc.at("policy"), cfg.policy);
  if (doc.contains("objective")) parse_objective(doc.at("objective"), cfg.objective);
  if (doc.contains("compare")) parse_compare(doc.at("compare"), cfg.compare);
  if (doc.contains("method")) cfg.method = method_from_name(doc.at("method").get<std::string>());
  if (doc.contains("corrector")) parse_corrector(doc.at("corrector"), cfg.corrector);
  maybe_get(doc, "iterations", cfg.iterations);
  maybe_get(doc, "batch_size", cfg.batch_size);
  maybe_get(doc, "seed", cfg.seed);
  maybe_get(doc, "compute_budget", cfg.compute_budget);
  maybe_get(doc, "best_of_n", cfg.best_of_n);
  maybe_get(doc, "checkpoint_every", cfg.checkpoint_every);
  maybe_get(doc, "joint_training", cfg.joint_training);
  maybe_get(doc, "corrections_enabled", cfg.corrections_enabled);
  maybe_get(doc, "log_trajectories", cfg.log_trajectories);
  maybe_get(doc, "eval_samples", cfg.eval_samples);
  validate_run_config(cfg);
  return cfg;
}

ExchangeableModel model_from_json(const json& obj) {
  ExchangeableModel model;
  maybe_get(obj, "p", model.p);
  maybe_get(obj, "m", model.m);
  if (obj.contains("phi_family")) {
    const std::string fam = obj.at("phi_family").get<std::string>();
    if (fam == "CONSTANT") {
      model.family = PhiFamily::Constant;
    } else if (fam == "BERNOULLI") {
      model.family = PhiFamily::Bernoulli;
    } else if (fam == "UNIFORM") {
      model.family = PhiFamily::Uniform;
    } else {
      throw std::invalid_argument("config: phi_family must be CONSTANT|BERNOULLI|UNIFORM");
    }
  }
  if (obj.contains("coupling")) {
    const std::string coupling = obj.at("coupling").get<std::string>();
    if (coupling == "INDEPENDENT") {
      model.coupling = Coupling::Independent;
    } else if (coupling == "SHARED_REFERENCE") {
      model.coupling = Coupling::SharedReference;
    } else {
      throw std::invalid_argument("config: coupling must be INDEPENDENT|SHARED_REFERENCE");
    }
  }
  maybe_get(obj, "coupling_strength", model.coupling_strength);
  validate_model(model);
  return model;
}

VarianceConfig variance_config_from_json(const json& doc) {
  VarianceConfig cfg;
  if (doc.contains("model")) cfg.model = model_from_json(doc.at("model"));
  maybe_get(doc, "group_size", cfg.group_size);
  maybe_get(doc, "num_groups", cfg.num_groups);
  maybe_get(doc, "lemma_p", cfg.lemma_p);
  maybe_get(doc, "lemma_m", cfg.lemma_m);
  maybe_get(doc, "identity_group_sizes", cfg.identity_group_sizes);
  maybe_get(doc, "identity_lambda_fracs", cfg.identity_lambda_fracs);
  maybe_get(doc, "lambda_grid", cfg.lambda_grid);
  maybe_get(doc, "seed", cfg.seed);
  if (cfg.group_size < 2) throw std::invalid_argument("config: group_size must be >= 2");
  if (cfg.num_groups < 100) throw std::invalid_argument("config: num_groups must be >= 100");
  if (cfg.lemma_p.empty() || cfg.lemma_m.empty()) {
    throw std::invalid_argument("config: lemma grid must be non-empty");
  }
  for (double p : cfg.lemma_p) {
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("config: lemma_p values must be in (0,1)");
  }
  for (double m : cfg.lemma_m) {
    if (m <= 0.0 || m > 1.0) throw std::invalid_argument("config: lemma_m values must be in (0,1]");
  }
  for (int g : cfg.identity_group_sizes) {
    if (g < 2) throw std::invalid_argument("config: identity group sizes must be >= 2");
  }
  for (double f : cfg.identity_lambda_fracs) {
    if (f <= 0.0) throw std::invalid_argument("config: identity lambda fractions must be > 0");
  }
  for (double l : cfg.lambda_grid) {
    if (l < 0.0) throw std::invalid_argument("config: lambda grid values must be >= 0");
  }
  return cfg;
}

AblateConfig ablate_config_from_json(const json& doc) {
  AblateConfig cfg;
  cfg.base = run_config_from_json(doc);
  maybe_get(doc, "variants", cfg.variants);
  maybe_get(doc, "lambda_sweep", cfg.lambda_sweep);
  maybe_get(doc, "threshold", cfg.threshold);
  for (const std::string& name : cfg.variants) method_from_name(name);  // validate
  for (double l : cfg.lambda_sweep) {
    if (l < 0.0 || l * cfg.base.compare.rho >= 1.0) {
      throw std::invalid_argument("config: lambda_sweep value out of range");
    }
  }
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(load_json(path));
}

AblateConfig load_ablate_config(const std::string& path) {
  return ablate_config_from_json(load_json(path));
}

VarianceConfig load_variance_config(const std::string& path) {
  return variance_config_from_json(load_json(path));
}

RunConfig parse_run_config(const std::string& json_text) {
  return run_config_from_json(json::parse(json_text));
}

AblateConfig parse_ablate_config(const std::string& json_text) {
  return ablate_config_from_json(json::parse(json_text));
}

VarianceConfig parse_variance_config(const std::string& json_text) {
  return variance_config_from_json(json::parse(json_text));
}

}  // namespace ibpo

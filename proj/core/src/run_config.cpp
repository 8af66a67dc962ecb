#include "graftcert/run_config.hpp"

#include <cstdio>
#include <initializer_list>
#include <set>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "graftcert/random.hpp"
#include "json_util.hpp"

namespace graftcert {

using nlohmann::json;

std::string DataSource::describe() const {
  if (kind == "csv" || kind == "idx") return kind + ":" + path;
  return kind + "(n=" + std::to_string(n) + ", noise=" + format_real(noise) + ")";
}

void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (data.kind != "moons" && data.kind != "blobs" && data.kind != "csv" && data.kind != "idx") {
    throw ConfigError("data.kind must be one of moons, blobs, csv, idx (got '" + data.kind + "')");
  }
  if ((data.kind == "csv" || data.kind == "idx") && data.path.empty()) throw ConfigError("data.path is required");
  if (data.n < 2) throw ConfigError("data.n must be >= 2");
  if (arch.size() < 2) throw ConfigError("arch needs at least input and output widths");
  for (int w : arch) {
    if (w < 1) throw ConfigError("arch widths must be positive");
  }
  if (!(eps >= 0.0)) throw ConfigError("eps must be non-negative");
  if (lip_pairs < 1) throw ConfigError("lip_pairs must be >= 1");
  selection.validate();
  train.validate();
  finetune.validate();
  budget.validate();
}

namespace {

// Rejects keys outside `allowed` so that typos surface as errors.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError((field.empty() ? "" : field + ".") + key + ": unknown key");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& field) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  const std::string where = (field.empty() ? "" : field + ".") + key;
  try {
    if constexpr (std::is_same_v<T, double>) {
      out = detail::real_value(v, where);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError(where + ": must be non-negative");
      }
      out = v.get<T>();
    } else {
      out = v.get<T>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

void read_pgd(const json& j, PgdConfig& p, const std::string& field) {
  check_keys(j, {"steps", "step_size", "restarts"}, field);
  read(j, "steps", p.steps, field);
  read(j, "step_size", p.step_size, field);
  read(j, "restarts", p.restarts, field);
}

json pgd_json(const PgdConfig& p) { return {{"steps", p.steps}, {"step_size", p.step_size}, {"restarts", p.restarts}}; }

LowerSlope parse_lower_slope(const std::string& s) {
  if (s == "adaptive") return LowerSlope::Adaptive;
  if (s == "zero") return LowerSlope::Zero;
  if (s == "one") return LowerSlope::One;
  throw ConfigError("budget.lower_slope must be adaptive, zero or one");
}

const char* lower_slope_name(LowerSlope s) {
  switch (s) {
    case LowerSlope::Adaptive: return "adaptive";
    case LowerSlope::Zero: return "zero";
    case LowerSlope::One: return "one";
  }
  return "adaptive";
}

void read_train(const json& t, TrainConfig& tc, const std::string& field) {
  check_keys(t,
             {"epochs", "batch_size", "lr", "lr_decay_epochs", "lr_factor", "lr_graft", "momentum", "weight_decay",
              "lambda_slope", "lambda_l1", "slope_k", "slope_loss", "pgd", "prune_ratio", "eps_train", "slope_cap",
              "monitor_size", "seed"},
             field);
  read(t, "epochs", tc.epochs, field);
  read(t, "batch_size", tc.batch_size, field);
  read(t, "lr", tc.lr.base, field);
  read(t, "lr_decay_epochs", tc.lr.decay_epochs, field);
  read(t, "lr_factor", tc.lr.factor, field);
  read(t, "lr_graft", tc.lr_graft, field);
  read(t, "momentum", tc.momentum, field);
  read(t, "weight_decay", tc.weight_decay, field);
  read(t, "lambda_slope", tc.lambda_slope, field);
  read(t, "lambda_l1", tc.lambda_l1, field);
  read(t, "slope_k", tc.slope_k, field);
  read(t, "prune_ratio", tc.prune_ratio, field);
  read(t, "eps_train", tc.eps_train, field);
  read(t, "slope_cap", tc.slope_cap, field);
  read(t, "monitor_size", tc.monitor_size, field);
  read(t, "seed", tc.seed, field);
  if (t.contains("slope_loss")) {
    std::string k;
    read(t, "slope_loss", k, field);
    tc.slope_kind = parse_slope_loss_kind(k);
  }
  if (t.contains("pgd")) read_pgd(t["pgd"], tc.pgd, field + ".pgd");
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr.base},
          {"lr_decay_epochs", t.lr.decay_epochs},
          {"lr_factor", t.lr.factor},
          {"lr_graft", t.lr_graft},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"lambda_slope", t.lambda_slope},
          {"lambda_l1", t.lambda_l1},
          {"slope_k", t.slope_k},
          {"slope_loss", to_string(t.slope_kind)},
          {"pgd", pgd_json(t.pgd)},
          {"prune_ratio", t.prune_ratio},
          {"eps_train", t.eps_train},
          {"slope_cap", t.slope_cap},
          {"monitor_size", t.monitor_size},
          {"seed", t.seed}};
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  check_keys(j,
             {"name", "model", "data", "arch", "test_count", "calibration_count", "eps", "selection", "init_slope",
              "init_intercept", "train", "finetune", "budget", "attack", "lip_width", "lip_pairs", "seed", "output_dir"},
             "");
  read(j, "name", c.name, "");
  read(j, "model", c.model, "");
  read(j, "arch", c.arch, "");
  read(j, "test_count", c.test_count, "");
  read(j, "calibration_count", c.calibration_count, "");
  read(j, "eps", c.eps, "");
  read(j, "init_slope", c.init_slope, "");
  read(j, "init_intercept", c.init_intercept, "");
  read(j, "lip_pairs", c.lip_pairs, "");
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  c.train.seed = c.seed;
  c.budget.seed = c.seed;
  if (j.contains("lip_width")) {
    const std::string w = j["lip_width"].is_string() ? j["lip_width"].get<std::string>() : "";
    if (w == "pre") c.lip_width = LipWidth::Pre;
    else if (w == "post") c.lip_width = LipWidth::Post;
    else throw ConfigError("lip_width must be \"pre\" or \"post\"");
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"kind", "path", "n", "noise", "limit"}, "data");
    read(d, "kind", c.data.kind, "data");
    read(d, "path", c.data.path, "data");
    read(d, "n", c.data.n, "data");
    read(d, "noise", c.data.noise, "data");
    read(d, "limit", c.data.limit, "data");
  }
  if (j.contains("selection")) {
    const json& s = j["selection"];
    check_keys(s, {"pool", "influential", "last_retain", "graft_ratio", "always_retain", "bounds"}, "selection");
    read(s, "pool", c.selection.pool, "selection");
    read(s, "influential", c.selection.influential, "selection");
    read(s, "last_retain", c.selection.last_retain, "selection");
    read(s, "graft_ratio", c.selection.graft_ratio, "selection");
    read(s, "always_retain", c.selection.always_retain, "selection");
    if (s.contains("bounds")) {
      std::string b;
      read(s, "bounds", b, "selection");
      if (b == "ibp") c.selection.bounds = ScoreBounds::Ibp;
      else if (b == "crown") c.selection.bounds = ScoreBounds::Crown;
      else throw ConfigError("selection.bounds must be \"ibp\" or \"crown\"");
    }
  }
  if (j.contains("train")) read_train(j["train"], c.train, "train");
  // Fine-tuning starts from the training settings and overrides what it names.
  c.finetune = c.train;
  if (j.contains("finetune")) read_train(j["finetune"], c.finetune, "finetune");
  if (j.contains("budget")) {
    const json& b = j["budget"];
    check_keys(b, {"branches", "seconds", "attack", "lower_slope", "refine_intermediate", "seed"}, "budget");
    read(b, "branches", c.budget.max_branches, "budget");
    read(b, "seconds", c.budget.max_seconds, "budget");
    read(b, "refine_intermediate", c.budget.crown.refine_intermediate, "budget");
    read(b, "seed", c.budget.seed, "budget");
    if (b.contains("lower_slope")) {
      std::string s;
      read(b, "lower_slope", s, "budget");
      c.budget.crown.lower_slope = parse_lower_slope(s);
    }
    if (b.contains("attack")) read_pgd(b["attack"], c.budget.attack, "budget.attack");
  }
  if (j.contains("attack")) read_pgd(j["attack"], c.attack, "attack");
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["model"] = c.model;
  j["data"] = {{"kind", c.data.kind}, {"path", c.data.path}, {"n", c.data.n}, {"noise", c.data.noise},
               {"limit", c.data.limit}};
  j["arch"] = c.arch;
  j["test_count"] = c.test_count;
  j["calibration_count"] = c.calibration_count;
  j["eps"] = c.eps;
  j["selection"] = {{"pool", c.selection.pool},
                    {"influential", c.selection.influential},
                    {"last_retain", c.selection.last_retain},
                    {"graft_ratio", c.selection.graft_ratio},
                    {"always_retain", c.selection.always_retain},
                    {"bounds", c.selection.bounds == ScoreBounds::Ibp ? "ibp" : "crown"}};
  j["init_slope"] = c.init_slope;
  j["init_intercept"] = c.init_intercept;
  j["train"] = train_json(c.train);
  j["finetune"] = train_json(c.finetune);
  j["budget"] = {{"branches", c.budget.max_branches},
                 {"seconds", c.budget.max_seconds},
                 {"attack", pgd_json(c.budget.attack)},
                 {"lower_slope", lower_slope_name(c.budget.crown.lower_slope)},
                 {"refine_intermediate", c.budget.crown.refine_intermediate},
                 {"seed", c.budget.seed}};
  j["attack"] = pgd_json(c.attack);
  j["lip_width"] = c.lip_width == LipWidth::Pre ? "pre" : "post";
  j["lip_pairs"] = c.lip_pairs;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

std::string run_config_hash(const RunConfig& cfg) {
  // Where artifacts land does not change them, so output_dir is left out.
  json j = json::parse(run_config_to_json(cfg));
  j.erase("output_dir");
  const std::string canonical = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

}  // namespace graftcert

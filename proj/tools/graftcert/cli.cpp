#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "graftcert/dataset.hpp"
#include "graftcert/error.hpp"
#include "graftcert/graft_select.hpp"
#include "graftcert/lipschitz.hpp"
#include "graftcert/model_io.hpp"
#include "graftcert/random.hpp"
#include "graftcert/report.hpp"
#include "graftcert/robust_train.hpp"
#include "graftcert/run_config.hpp"
#include "graftcert/verifier.hpp"

namespace graftcert::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Artifact file names inside the output directory, with the stage that
// writes each one.
struct Artifact {
  const char* file;
  const char* stage;
};
constexpr Artifact kBaseModel{"model.json", "train"};
constexpr Artifact kScores{"scores.json", "score"};
constexpr Artifact kGraftSet{"graft_set.json", "select"};
constexpr Artifact kGrafted{"grafted.json", "graft"};
constexpr Artifact kFinetuned{"finetuned.json", "finetune"};

struct Flags {
  std::string config;
  std::optional<double> eps;
  std::optional<std::uint64_t> seed;
  std::string mask_in;
  std::string mask_out;
  std::optional<int> budget_branches;
  std::optional<double> budget_seconds;
  std::string slope_loss;
  std::string lip_width;
  std::string model;
  std::string out;
  std::string name;
  std::optional<int> epochs;
  std::vector<std::string> inputs;
};

struct Context {
  RunConfig cfg;
  fs::path config_dir = ".";
  fs::path out_dir = ".";
  Flags flags;
  std::ostream& out;
};

RunConfig load_config(const Flags& f, fs::path& config_dir) {
  RunConfig cfg;
  if (!f.config.empty()) {
    cfg = run_config_from_json(read_text_file(f.config));
    config_dir = fs::path(f.config).parent_path();
  }
  if (f.eps) cfg.eps = *f.eps;
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.train.seed = *f.seed;
    cfg.finetune.seed = *f.seed;
    cfg.budget.seed = *f.seed;
  }
  if (f.budget_branches) cfg.budget.max_branches = *f.budget_branches;
  if (f.budget_seconds) cfg.budget.max_seconds = *f.budget_seconds;
  if (!f.slope_loss.empty()) cfg.train.slope_kind = cfg.finetune.slope_kind = parse_slope_loss_kind(f.slope_loss);
  if (!f.lip_width.empty()) {
    if (f.lip_width == "pre") cfg.lip_width = LipWidth::Pre;
    else if (f.lip_width == "post") cfg.lip_width = LipWidth::Post;
    else throw ConfigError("--lip-width must be pre or post");
  }
  if (f.epochs) cfg.train.epochs = cfg.finetune.epochs = *f.epochs;
  if (!f.name.empty()) cfg.name = f.name;
  if (!f.out.empty()) cfg.output_dir = f.out;
  cfg.validate();
  return cfg;
}

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  return ctx.config_dir / path;
}

// Path of an input artifact: the explicit flag when given, otherwise the
// stage's default file in the output directory.
fs::path input_artifact(const Context& ctx, const std::string& flag, const Artifact& a, const char* consumer) {
  const fs::path p = flag.empty() ? ctx.out_dir / a.file : fs::path(flag);
  if (!fs::exists(p)) {
    throw IoError(std::string(consumer) + ": missing " + p.string() + "; run `graftcert " + a.stage +
                  "` first or pass the file explicitly");
  }
  return p;
}

fs::path output_artifact(const Context& ctx, const std::string& flag, const Artifact& a) {
  return flag.empty() ? ctx.out_dir / a.file : fs::path(flag);
}

Dataset load_data(const Context& ctx) {
  const DataSource& src = ctx.cfg.data;
  Dataset d;
  if (src.kind == "moons") d = make_synthetic(SyntheticKind::Moons, src.n, src.noise, substream_seed(ctx.cfg.seed, "data"));
  else if (src.kind == "blobs") d = make_synthetic(SyntheticKind::Blobs, src.n, src.noise, substream_seed(ctx.cfg.seed, "data"));
  else if (src.kind == "csv") d = load_csv(resolve(ctx, src.path).string());
  else {
    const auto comma = src.path.find(',');
    if (comma == std::string::npos) throw ConfigError("data.path for idx must be 'images,labels'");
    d = load_idx(resolve(ctx, src.path.substr(0, comma)).string(), resolve(ctx, src.path.substr(comma + 1)).string());
  }
  if (src.limit > 0 && src.limit < d.size()) {
    auto idx = subset_indices(d.size(), src.limit, substream_seed(ctx.cfg.seed, "limit"));
    std::sort(idx.begin(), idx.end());
    d = take(d, idx, "limit");
  }
  return d;
}

Split3 load_split(const Context& ctx) {
  return split_dataset(load_data(ctx), ctx.cfg.test_count, ctx.cfg.calibration_count, ctx.cfg.seed);
}

TrainData train_data(const Dataset& d) { return TrainData{d.columns(), d.labels}; }

void write(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_text_file(p.string(), text);
}

int cmd_train(Context& ctx) {
  const Split3 s = load_split(ctx);
  const Network init = make_mlp(ctx.cfg.arch, ctx.cfg.seed);
  if (init.input_dim() != s.train.dim()) {
    throw ConfigError("arch input width " + std::to_string(init.input_dim()) + " does not match data dimension " +
                      std::to_string(s.train.dim()));
  }
  const TrainResult r = adversarial_train(init, train_data(s.train), ctx.cfg.train);
  const fs::path p = output_artifact(ctx, ctx.flags.model, kBaseModel);
  write(p, model_to_json(r.net, nullptr));
  write(ctx.out_dir / "train_log.csv", training_log_csv(r.log));
  if (r.diverged) ctx.out << "warning: " << r.message << "\n";
  ctx.out << "train: wrote " << p.string() << " (" << r.log.size() << " epochs)\n";
  return kOk;
}

ScoreAccumulator accumulate_scores(const Context& ctx, const Network& net, const Dataset& cal) {
  ScoreAccumulator acc(net);
  for (const BoundsCache& b : calibration_bounds(net, cal.columns(), ctx.cfg.eps, ctx.cfg.selection.bounds)) acc.add(b);
  return acc;
}

int cmd_score(Context& ctx) {
  const Network net = load_model(input_artifact(ctx, ctx.flags.model, kBaseModel, "score").string());
  const Split3 s = load_split(ctx);
  const ScoreAccumulator acc = accumulate_scores(ctx, net, s.calibration);
  json j;
  j["calibration_size"] = acc.calibration_size();
  j["eps"] = ctx.cfg.eps;
  j["layers"] = json::array();
  for (std::size_t l = 0; l < acc.instability().size(); ++l) {
    j["layers"].push_back({{"instability", acc.instability()[l]}, {"max_width", acc.max_width()[l]}});
  }
  const fs::path p = ctx.out_dir / kScores.file;
  write(p, j.dump(2));
  ctx.out << "score: wrote " << p.string() << "\n";
  return kOk;
}

int cmd_select(Context& ctx) {
  const Network net = load_model(input_artifact(ctx, ctx.flags.model, kBaseModel, "select").string());
  const Split3 s = load_split(ctx);
  if (ctx.cfg.eps <= 0.0) throw ConfigError("select needs eps > 0");
  GraftSet set = backward_select(net, accumulate_scores(ctx, net, s.calibration), ctx.cfg.selection);
  for (auto& [l, e] : set.layers) {
    e.slopes.assign(e.indices.size(), ctx.cfg.init_slope);
    e.intercepts.assign(e.indices.size(), ctx.cfg.init_intercept);
  }
  const fs::path p = output_artifact(ctx, ctx.flags.mask_out, kGraftSet);
  write(p, graft_set_to_json(set));
  ctx.out << "select: " << set.size() << " neurons -> " << p.string() << "\n";
  return kOk;
}

int cmd_graft(Context& ctx) {
  const Network net = load_model(input_artifact(ctx, ctx.flags.model, kBaseModel, "graft").string());
  const GraftSet set = load_graft_set(input_artifact(ctx, ctx.flags.mask_in, kGraftSet, "graft").string());
  const Network grafted = apply_graft_parameters(net, set);
  const GraftSet recorded = grafted_neurons(grafted);
  const fs::path p = ctx.out_dir / kGrafted.file;
  write(p, model_to_json(grafted, &recorded));
  ctx.out << "graft: " << set.size() << " neurons grafted -> " << p.string() << "\n";
  return kOk;
}

int cmd_finetune(Context& ctx) {
  Network net = load_model(input_artifact(ctx, ctx.flags.model, kGrafted, "finetune").string());
  const Split3 s = load_split(ctx);
  if (ctx.cfg.finetune.prune_ratio > 0.0) net = small_weight_prune(net, ctx.cfg.finetune.prune_ratio);
  const TrainResult r = finetune(net, train_data(s.train), ctx.cfg.finetune);
  const GraftSet recorded = grafted_neurons(r.net);
  const fs::path p = ctx.out_dir / kFinetuned.file;
  write(p, model_to_json(r.net, &recorded));
  write(ctx.out_dir / "finetune_log.csv", training_log_csv(r.log));
  if (r.diverged) ctx.out << "warning: " << r.message << "\n";
  ctx.out << "finetune: wrote " << p.string() << " (" << r.log.size() << " epochs)\n";
  return kOk;
}

Network evaluated_model(const Context& ctx, const char* consumer) {
  return load_model(input_artifact(ctx, ctx.flags.model, kFinetuned, consumer).string());
}

int cmd_attack(Context& ctx) {
  const Network net = evaluated_model(ctx, "attack");
  const Split3 s = load_split(ctx);
  const Matrix X = s.test.columns();
  int correct = 0, robust = 0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const int y = s.test.labels[static_cast<std::size_t>(i)];
    if (predict(net, X.col(i)) != y) continue;
    ++correct;
    const Vector adv = pgd_attack(net, X.col(i), y, ctx.cfg.eps, ctx.cfg.attack.steps, ctx.cfg.attack.step_size,
                                  ctx.cfg.attack.restarts, substream_seed(ctx.cfg.seed, "suite." + std::to_string(i)));
    if (predict(net, adv) == y) ++robust;
  }
  const double n = std::max<double>(1.0, static_cast<double>(X.cols()));
  const json j = {{"run", ctx.cfg.name}, {"samples", X.cols()}, {"sa", 100.0 * correct / n}, {"ra", 100.0 * robust / n}};
  const fs::path p = ctx.out_dir / "attack.json";
  write(p, j.dump(2));
  ctx.out << "attack: SA " << format_real(100.0 * correct / n) << " RA " << format_real(100.0 * robust / n) << "\n";
  return kOk;
}

int cmd_certify(Context& ctx) {
  const Network net = evaluated_model(ctx, "certify");
  const Split3 s = load_split(ctx);
  SuiteConfig sc;
  sc.attack = ctx.cfg.attack;
  sc.budget = ctx.cfg.budget;
  sc.seed = ctx.cfg.seed;
  const SuiteResult r = evaluate_suite(net, s.test.columns(), s.test.labels, ctx.cfg.eps, sc);
  ReportRow row{ctx.cfg.name, r.metrics, run_config_hash(ctx.cfg)};
  const fs::path p = ctx.out_dir / "metrics.json";
  write(p, report_row_to_json(row));
  json certs = json::array();
  for (const Certificate& c : r.certificates) certs.push_back(json::parse(certificate_to_json(c)));
  write(ctx.out_dir / "certificates.json", certs.dump(2));
  const SuiteMetrics& m = r.metrics;
  ctx.out << "certify: SA " << format_real(m.sa) << " RA " << format_real(m.ra) << " VA " << format_real(m.va)
          << " UNR " << format_real(m.unr) << " unknown " << m.unknown << "\n";
  int attempted = 0;
  for (const Certificate& c : r.certificates) attempted += c.counterexample ? 0 : 1;
  return 2 * m.unknown > attempted && m.unknown > 0 ? kUnknownDominated : kOk;
}

int cmd_lipschitz(Context& ctx) {
  const Network net = evaluated_model(ctx, "lipschitz");
  const Split3 s = load_split(ctx);
  if (ctx.cfg.eps <= 0.0) throw ConfigError("lipschitz needs eps > 0");
  const Matrix X = s.test.columns();
  double upper = 0.0, lower = 0.0, max_upper = 0.0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const LipschitzEstimate e = estimate_lipschitz(net, X.col(i), ctx.cfg.eps, ctx.cfg.lip_pairs,
                                                   substream_seed(ctx.cfg.seed, "lip." + std::to_string(i)),
                                                   ctx.cfg.lip_width);
    upper += e.upper;
    lower += e.lower;
    max_upper = std::max(max_upper, e.upper);
  }
  const double n = std::max<double>(1.0, static_cast<double>(X.cols()));
  const json j = {{"run", ctx.cfg.name},
                  {"eps", ctx.cfg.eps},
                  {"mode", ctx.cfg.lip_width == LipWidth::Pre ? "pre" : "post"},
                  {"samples", X.cols()},
                  {"mean_upper", upper / n},
                  {"max_upper", max_upper},
                  {"mean_sampled_lower", lower / n}};
  const fs::path p = ctx.out_dir / "lipschitz.json";
  write(p, j.dump(2));
  ctx.out << "lipschitz: mean upper " << format_real(upper / n) << " mean sampled lower " << format_real(lower / n)
          << "\n";
  return kOk;
}

int cmd_report(Context& ctx) {
  if (ctx.flags.inputs.empty()) throw ConfigError("report needs at least one metrics.json (written by `certify`)");
  std::vector<ReportRow> rows;
  for (const std::string& in : ctx.flags.inputs) {
    if (!fs::exists(in)) throw IoError("report: missing " + in + "; run `graftcert certify` first");
    rows.push_back(report_row_from_json(read_text_file(in)));
  }
  const std::string csv = report_csv(rows);
  write(ctx.out_dir / "report.csv", csv);
  write(ctx.out_dir / "report.json", report_json(rows));
  ctx.out << csv;
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"graftcert: linearity grafting, bounds and certification for small ReLU networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "Run configuration JSON");
  app.add_option("--eps", f.eps, "Perturbation radius (l_inf)");
  app.add_option("--seed", f.seed, "Run seed");
  app.add_option("--mask-in", f.mask_in, "Graft set read by `graft`");
  app.add_option("--mask-out", f.mask_out, "Graft set written by `select`");
  app.add_option("--budget-branches", f.budget_branches, "Branch-and-bound branch budget");
  app.add_option("--budget-seconds", f.budget_seconds, "Branch-and-bound time budget per sample");
  app.add_option("--slope-loss", f.slope_loss, "verbatim|symmetric|off")
      ->check(CLI::IsMember({"verbatim", "symmetric", "off"}));
  app.add_option("--lip-width", f.lip_width, "pre|post")->check(CLI::IsMember({"pre", "post"}));
  app.add_option("--model", f.model, "Model file (input, or output for `train`)");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--name", f.name, "Run name used in reports");
  app.add_option("--epochs", f.epochs, "Override train.epochs and finetune.epochs");

  using Handler = int (*)(Context&);
  std::vector<std::pair<CLI::App*, Handler>> subs = {
      {app.add_subcommand("train", "Adversarially train the baseline model"), cmd_train},
      {app.add_subcommand("score", "Instability and interval scores on the calibration set"), cmd_score},
      {app.add_subcommand("select", "Backward neuron selection"), cmd_select},
      {app.add_subcommand("graft", "Replace selected neurons by linear functions"), cmd_graft},
      {app.add_subcommand("finetune", "Prune and fine-tune the grafted model"), cmd_finetune},
      {app.add_subcommand("attack", "PGD robust accuracy on the test split"), cmd_attack},
      {app.add_subcommand("certify", "SA/RA/VA/UNR with branch and bound"), cmd_certify},
      {app.add_subcommand("lipschitz", "Interval Lipschitz bounds on the test split"), cmd_lipschitz},
      {app.add_subcommand("report", "Merge metrics files into one table"), cmd_report},
  };
  subs.back().first->add_option("inputs", f.inputs, "metrics.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    fs::path config_dir = ".";
    RunConfig cfg = load_config(f, config_dir);
    Context ctx{cfg, config_dir, fs::path(cfg.output_dir), f, out};
    fs::create_directories(ctx.out_dir);
    for (const auto& [sub, handler] : subs) {
      if (sub->parsed()) return handler(ctx);
    }
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const SizeError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const ParseError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const ValidationError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace graftcert::cli

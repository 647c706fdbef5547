#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/error.hpp"
#include "swl/harness.hpp"
#include "swl/random.hpp"

namespace {

using nlohmann::json;

// exit codes
constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailed = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw swl::ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw swl::ValidationError(path + ": " + e.what());
  }
}

void write_json(const json& doc, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw swl::Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

// --set a.b.c=value; value is parsed as JSON and falls back to a string
void apply_overrides(json& doc, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw swl::ValidationError("--set expects path=value, got '" + s + "'");
    std::string path = "/" + s.substr(0, eq);
    for (char& ch : path) {
      if (ch == '.') ch = '/';
    }
    const std::string raw = s.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[json::json_pointer(path)] = value;
  }
}

// Options present on the command line replace the matching config field.
struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> items;

  template <typename T>
  void add(CLI::App* app, const std::string& names, const std::string& field, T& storage,
           const std::string& help) {
    CLI::Option* opt = app->add_option(names, storage, help);
    items.emplace_back(opt, [field, &storage](json& doc) { doc[json::json_pointer(field)] = storage; });
  }

  void apply(json& doc) const {
    for (const auto& [opt, fn] : items) {
      if (opt->count() > 0) fn(doc);
    }
  }
};

struct SimArgs {
  std::string config;
  std::vector<std::string> sets;
  Overrides over;
  int n = 0, T = 0, p = 0, important = 0;
  std::string rule_kind, rule_sharing;
  double match_prob = 0.0;
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "SimConfig JSON file");
    over.add(app, "--n", "/n", n, "subjects");
    over.add(app, "--T", "/T", T, "stages");
    over.add(app, "--p", "/p", p, "covariates per stage");
    over.add(app, "--rule_kind,--rule-kind", "/rule_kind", rule_kind, "linear or nonlinear");
    over.add(app, "--rule_sharing,--rule-sharing", "/rule_sharing", rule_sharing, "heterogeneous or homogeneous");
    over.add(app, "--match_prob,--match-prob,--q", "/match_prob", match_prob, "behavior matching probability");
    over.add(app, "--n_important_stages,--important-stages", "/n_important_stages", important,
             "number of important stages (0 = all equal)");
    over.add(app, "--seed", "/seed", seed, "environment seed");
    app->add_option("--set", sets, "override any field: path.to.field=value");
  }

  [[nodiscard]] swl::SimConfig resolve() const {
    json doc = config.empty() ? json(swl::SimConfig{}) : read_json(config);
    over.apply(doc);
    apply_overrides(doc, sets);
    auto c = doc.get<swl::SimConfig>();
    c.validate();
    return c;
  }
};

// Learner options for importance/train: the policy and importance sections of
// an experiment config.
struct LearnerArgs {
  std::string config;
  std::vector<std::string> sets;
  Overrides over;
  double lr = 0.0, tol = 0.0, lambda = 0.0, sigma = 0.0;
  int iters = 0, width = 0, depth = 0, batch = 0;
  std::string kind, reward_transform, swl_encoder;
  bool q_immediate = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "experiment-style JSON with policy/importance sections");
    over.add(app, "--learning_rate,--lr", "/policy/train/learning_rate", lr, "policy step size");
    over.add(app, "--max_iterations,--iters", "/policy/train/max_iterations", iters, "policy iterations");
    over.add(app, "--tolerance", "/policy/train/tolerance", tol, "policy stopping tolerance");
    over.add(app, "--batch_size", "/policy/train/batch_size", batch, "minibatch size (0 = full batch)");
    over.add(app, "--lambda", "/policy/lambda", lambda, "logistic sharpness");
    over.add(app, "--sigma", "/policy/sigma", sigma, "KIPWL kernel width");
    over.add(app, "--kind", "/policy/kind", kind, "linear or nonlinear policy");
    over.add(app, "--width", "/policy/width", width, "hidden width");
    over.add(app, "--depth", "/policy/depth", depth, "hidden layers");
    over.add(app, "--reward_transform,--reward-transform", "/policy/reward_transform", reward_transform,
             "center, shift or none");
    over.add(app, "--swl_encoder,--swl-encoder", "/swl_encoder", swl_encoder, "lstm or concat");
    over.add(app, "--q_use_immediate_rewards", "/q_use_immediate_rewards", q_immediate,
             "Q-learning regresses immediate rewards");
    app->add_option("--set", sets, "override any field: path.to.field=value");
  }

  [[nodiscard]] swl::ExperimentSpec resolve() const {
    json doc = config.empty() ? json::object() : read_json(config);
    over.apply(doc);
    apply_overrides(doc, sets);
    swl::ExperimentSpec spec;
    from_json(doc, spec);
    spec.policy.validate();
    spec.importance.train.validate();
    spec.importance.penalty.validate();
    return spec;
  }
};

swl::Matrix observed_propensities(const swl::Dataset& ds, const std::string& source) {
  if (source == "known") return ds.propensities();
  if (source != "fitted") throw swl::ValidationError("--propensity must be known or fitted");
  const swl::ConcatEncoder enc(ds.T(), ds.p(), 1);
  return swl::fit_propensity(ds, enc).observed(ds, enc);
}

double or_nan(const std::function<double()>& f) {
  try {
    return f();
  } catch (const swl::NoOverlapError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

json number(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stage-aware learning of dynamic treatment regimes"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a dataset");
  SimArgs sim_args;
  sim_args.attach(sim);
  std::string sim_out, sim_csv;
  sim->add_option("--out,-o", sim_out, "dataset JSON")->required();
  sim->add_option("--csv", sim_csv, "also export one row per subject-stage");

  // importance
  auto* imp = app.add_subcommand("importance", "estimate stage importance scores");
  std::string imp_data, imp_config, imp_out;
  std::vector<std::string> imp_sets;
  Overrides imp_over;
  int imp_hidden = 0, imp_iters = 0;
  double imp_lr = 0.0, imp_tol = 0.0, imp_head = 0.0, imp_lstm = 0.0;
  std::uint64_t imp_seed = 0;
  bool imp_check = false;
  imp->add_option("--data,-d", imp_data, "dataset JSON")->required();
  imp->add_option("--config", imp_config, "importance options JSON");
  imp_over.add(imp, "--hidden", "/hidden", imp_hidden, "LSTM width");
  imp_over.add(imp, "--learning_rate,--lr", "/train/learning_rate", imp_lr, "step size");
  imp_over.add(imp, "--max_iterations,--iters", "/train/max_iterations", imp_iters, "iterations");
  imp_over.add(imp, "--tolerance", "/train/tolerance", imp_tol, "stopping tolerance");
  imp_over.add(imp, "--seed", "/train/seed", imp_seed, "initialization seed");
  imp_over.add(imp, "--penalty_head", "/penalty/head", imp_head, "L2 on attention scalars and heads");
  imp_over.add(imp, "--penalty_lstm", "/penalty/lstm", imp_lstm, "L2 on LSTM parameters");
  imp_over.add(imp, "--gradient_check", "/gradient_check", imp_check, "finite-difference probe first");
  imp->add_option("--set", imp_sets, "override any field: path.to.field=value");
  imp->add_option("--out,-o", imp_out, "output JSON (default stdout)");

  // train
  auto* train = app.add_subcommand("train", "fit one method");
  LearnerArgs train_args;
  train_args.attach(train);
  std::string train_data, train_method = "SAL", train_prop = "known", train_out;
  std::uint64_t train_seed = 0;
  train->add_option("--data,-d", train_data, "dataset JSON")->required();
  train->add_option("--method,-m", train_method, "SAL, SWL, KIPWL, Q or FullMatchIPWE");
  train->add_option("--propensity", train_prop, "known or fitted");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--out,-o", train_out, "model JSON")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "per-subject decisions as CSV");
  std::string pred_model, pred_data, pred_out;
  pred->add_option("--model", pred_model, "model JSON")->required();
  pred->add_option("--data,-d", pred_data, "dataset JSON")->required();
  pred->add_option("--out,-o", pred_out, "CSV (default stdout)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "value estimates and oracle metrics of a model");
  std::string eval_model, eval_data, eval_prop = "known", eval_out;
  int eval_n = 10000;
  std::uint64_t eval_seed = 0;
  SimArgs eval_sim;
  eval->add_option("--model", eval_model, "model JSON")->required();
  eval->add_option("--data,-d", eval_data, "dataset JSON for the IPW estimates");
  eval->add_option("--propensity", eval_prop, "known or fitted");
  eval->add_option("--sim", eval_sim.config, "SimConfig JSON for oracle rollout");
  eval->add_option("--n_eval,--n-eval", eval_n, "rollout subjects");
  eval->add_option("--eval_seed,--eval-seed", eval_seed, "rollout seed");
  eval->add_option("--out,-o", eval_out, "output JSON (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a Monte Carlo sweep");
  std::string exp_config;
  std::vector<std::string> exp_sets, exp_methods;
  Overrides exp_over;
  int exp_reps = 0, exp_neval = 0, exp_workers = 0;
  double exp_frac = 0.0;
  std::string exp_outdir, exp_prop, exp_swl_enc;
  std::uint64_t exp_seed = 0;
  bool exp_qimm = false;
  exp->add_option("--config", exp_config, "ExperimentSpec JSON")->required();
  exp_over.add(exp, "--replications,--reps", "/replications", exp_reps, "replications per grid point");
  exp_over.add(exp, "--train_fraction", "/train_fraction", exp_frac, "training share");
  exp_over.add(exp, "--n_eval", "/n_eval", exp_neval, "rollout subjects");
  exp_over.add(exp, "--output_dir,--out,-o", "/output_dir", exp_outdir, "output directory");
  exp_over.add(exp, "--master_seed,--seed", "/master_seed", exp_seed, "master seed");
  exp_over.add(exp, "--workers,-j", "/workers", exp_workers, "parallel replications");
  exp_over.add(exp, "--methods", "/methods", exp_methods, "methods to run");
  exp_over.add(exp, "--propensity", "/propensity", exp_prop, "known or fitted");
  exp_over.add(exp, "--swl_encoder", "/swl_encoder", exp_swl_enc, "lstm or concat");
  exp_over.add(exp, "--q_use_immediate_rewards", "/q_use_immediate_rewards", exp_qimm,
               "Q-learning regresses immediate rewards");
  exp->add_option("--set", exp_sets, "override any field: path.to.field=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  // Configuration problems exit 1; failures after the inputs were accepted exit 2.
  bool configured = false;
  try {
    if (*sim) {
      const swl::SimConfig c = sim_args.resolve();
      configured = true;
      const swl::Simulation s = swl::generate(c);
      swl::save_dataset(s.data, sim_out);
      if (!sim_csv.empty()) swl::export_csv(s.data, sim_csv);
      std::cerr << "wrote " << s.data.n() << " subjects, T=" << s.data.T() << ", important stages:";
      for (int j : s.env.reward.important_stages) std::cerr << ' ' << j + 1;
      std::cerr << '\n';
      return kOk;
    }

    if (*imp) {
      json doc = imp_config.empty() ? json(swl::ImportanceOptions{}) : read_json(imp_config);
      imp_over.apply(doc);
      apply_overrides(doc, imp_sets);
      auto options = doc.get<swl::ImportanceOptions>();
      options.train.validate();
      options.penalty.validate();
      const swl::Dataset ds = swl::load_dataset(imp_data);
      configured = true;
      const swl::ImportanceFit fit = swl::train_importance(ds, options);
      write_json({{"stage_weights", swl::normalize_weights(fit.net).values()},
                  {"raw_weights", fit.net.raw_weights()},
                  {"mse", fit.mse},
                  {"iterations", fit.iterations},
                  {"reached_tolerance", fit.reached_tolerance},
                  {"net", fit.net.to_json()}},
                 imp_out);
      return kOk;
    }

    if (*train) {
      const swl::ExperimentSpec spec = train_args.resolve();
      const swl::Method method = swl::parse_method(train_method);
      const swl::Dataset ds = swl::load_dataset(train_data);
      const swl::Matrix props = observed_propensities(ds, train_prop);
      configured = true;
      const swl::FittedMethod fit = swl::fit_method(method, ds, props, swl::method_settings(spec), train_seed);
      write_json(fit.document, train_out);
      return kOk;
    }

    if (*pred) {
      const auto regime = swl::regime_from_json(read_json(pred_model));
      const swl::Dataset ds = swl::load_dataset(pred_data);
      configured = true;
      const swl::Matrix d = swl::predict(*regime, ds);
      std::ofstream file;
      if (!pred_out.empty()) {
        file.open(pred_out);
        if (!file) throw swl::Error("cannot write " + pred_out);
      }
      std::ostream& out = pred_out.empty() ? std::cout : file;
      out << "subject";
      for (int j = 0; j < d.cols(); ++j) out << ",stage" << j + 1;
      out << '\n';
      for (int i = 0; i < d.rows(); ++i) {
        out << i;
        for (int j = 0; j < d.cols(); ++j) out << ',' << static_cast<int>(d(i, j));
        out << '\n';
      }
      return kOk;
    }

    if (*eval) {
      const auto regime = swl::regime_from_json(read_json(eval_model));
      if (eval_data.empty() && eval_sim.config.empty()) {
        throw swl::ValidationError("evaluate needs --data, --sim or both");
      }
      if (eval_n < 1) throw swl::ValidationError("--n_eval must be positive");
      std::optional<swl::Dataset> ds;
      std::optional<swl::SimConfig> sc;
      if (!eval_data.empty()) ds = swl::load_dataset(eval_data);
      if (!eval_sim.config.empty()) sc = eval_sim.resolve();
      configured = true;
      json result = json::object();
      if (ds) {
        const swl::Matrix props = observed_propensities(*ds, eval_prop);
        const swl::WeightedMatches wm = swl::weighted_matches(*ds, *regime, props);
        result["ipwe"] = swl::ipwe_value(wm);
        result["sal"] = swl::sal_value(wm);
        result["empirical_value"] = number(or_nan([&] { return swl::empirical_value(wm); }));
        result["full_match_rate"] = (wm.matches.rowwise().minCoeff().array() > 0.5).cast<double>().mean();
      }
      if (sc) {
        const swl::Environment env = swl::make_environment(*sc);
        const swl::RolloutResult rr = swl::rollout(*regime, env, eval_n, eval_seed);
        result["oracle_value"] = rr.mean_reward;
        result["oracle_sd"] = rr.reward_sd;
        result["matching_accuracy"] = rr.matching_accuracy;
      }
      write_json(result, eval_out);
      return kOk;
    }

    if (*exp) {
      json doc = read_json(exp_config);
      exp_over.apply(doc);
      apply_overrides(doc, exp_sets);
      swl::ExperimentSpec spec;
      from_json(doc, spec);
      spec.validate();
      configured = true;
      const auto rows = swl::run_and_write(spec);
      int failed = 0;
      for (const auto& r : rows) failed += r.converged ? 0 : 1;
      std::cerr << rows.size() << " rows written to " << spec.output_dir;
      if (failed > 0) std::cerr << ", " << failed << " failed";
      std::cerr << '\n';
      return failed > 0 ? kRunFailed : kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return configured ? kRunFailed : kConfigError;
  }
  return kConfigError;
}

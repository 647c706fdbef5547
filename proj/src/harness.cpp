#include "swl/harness.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace swl {

namespace {

const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> names{
      {Method::SAL, "SAL"}, {Method::SWL, "SWL"}, {Method::KIPWL, "KIPWL"},
      {Method::Q, "Q"},     {Method::FullMatchIPWE, "FullMatchIPWE"}};
  return names;
}

}  // namespace

std::string to_string(Method m) {
  for (const auto& [k, name] : method_names()) {
    if (k == m) return name;
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (const auto& [k, name] : method_names()) {
    if (name == s) return k;
  }
  throw ValidationError("unknown method '" + s + "' (expected SAL, SWL, KIPWL, Q or FullMatchIPWE)");
}

void ExperimentSpec::validate() const {
  if (grid.empty()) throw ValidationError("experiment grid is empty");
  if (methods.empty()) throw ValidationError("experiment needs at least one method");
  if (replications < 1) throw ValidationError("replications must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  if (n_eval < 1) throw ValidationError("n_eval must be positive");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  if (output_dir.empty()) throw ValidationError("output_dir is empty");
  for (const SimConfig& c : grid) {
    c.validate();
    const auto train = static_cast<int>(std::lround(c.n * train_fraction));
    if (train < 2 || c.n - train < 1) {
      throw ValidationError("n=" + std::to_string(c.n) + " leaves an empty train or test split");
    }
    const bool swl = std::find(methods.begin(), methods.end(), Method::SWL) != methods.end();
    if (swl && c.T < 2) throw ValidationError("SWL needs T >= 2");
  }
  policy.validate();
  importance.train.validate();
  importance.penalty.validate();
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  std::vector<std::string> methods;
  for (Method m : s.methods) methods.push_back(to_string(m));
  j = {{"grid", s.grid},
       {"methods", methods},
       {"replications", s.replications},
       {"train_fraction", s.train_fraction},
       {"n_eval", s.n_eval},
       {"output_dir", s.output_dir},
       {"master_seed", s.master_seed},
       {"workers", s.workers},
       {"policy", s.policy},
       {"importance", s.importance},
       {"swl_encoder", s.swl_encoder == EncoderChoice::Lstm ? "lstm" : "concat"},
       {"propensity", s.propensity == PropensitySource::Known ? "known" : "fitted"},
       {"q_use_immediate_rewards", s.q_use_immediate_rewards}};
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  if (j.contains("grid")) s.grid = j.at("grid").get<std::vector<SimConfig>>();
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : j.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
  }
  s.replications = j.value("replications", s.replications);
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.n_eval = j.value("n_eval", s.n_eval);
  s.output_dir = j.value("output_dir", s.output_dir);
  s.master_seed = j.value("master_seed", s.master_seed);
  s.workers = j.value("workers", s.workers);
  if (j.contains("policy")) j.at("policy").get_to(s.policy);
  if (j.contains("importance")) j.at("importance").get_to(s.importance);
  if (j.contains("swl_encoder")) {
    const auto e = j.at("swl_encoder").get<std::string>();
    if (e == "lstm") {
      s.swl_encoder = EncoderChoice::Lstm;
    } else if (e == "concat") {
      s.swl_encoder = EncoderChoice::Concat;
    } else {
      throw ValidationError("swl_encoder must be lstm or concat, got '" + e + "'");
    }
  }
  if (j.contains("propensity")) {
    const auto p = j.at("propensity").get<std::string>();
    if (p == "known") {
      s.propensity = PropensitySource::Known;
    } else if (p == "fitted") {
      s.propensity = PropensitySource::Fitted;
    } else {
      throw ValidationError("propensity must be known or fitted, got '" + p + "'");
    }
  }
  s.q_use_immediate_rewards = j.value("q_use_immediate_rewards", s.q_use_immediate_rewards);
}

std::uint64_t replication_seed(std::uint64_t master, int grid, int rep) {
  return derive_seed(master, static_cast<std::uint64_t>(grid), static_cast<std::uint64_t>(rep));
}

namespace {

std::size_t method_index(Method m) {
  const auto& names = method_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k].first == m) return k;
  }
  return 0;
}

}  // namespace

MethodSettings method_settings(const ExperimentSpec& spec) {
  return {spec.policy, spec.importance, spec.swl_encoder, spec.q_use_immediate_rewards};
}

FittedMethod fit_method(Method method, const Dataset& train, const Matrix& props,
                        const MethodSettings& settings, std::uint64_t seed) {
  auto concat = std::make_shared<const ConcatEncoder>(train.T(), train.p(), 1);
  PolicyTrainOptions options = settings.policy;
  options.train.seed = derive_seed(seed, 100 + method_index(method));
  FittedMethod out;
  out.method = method;
  auto policy_result = [&](const PolicyFit& fit, std::shared_ptr<const HistoryEncoder> enc) {
    out.document = {{"method", to_string(method)},
                    {"encoder", enc->to_json()},
                    {"policy", fit.net.to_json()},
                    {"iterations", fit.iterations},
                    {"reached_tolerance", fit.reached_tolerance}};
    out.regime = std::make_shared<PolicyRegime>(fit.net, std::move(enc));
  };
  switch (method) {
    case Method::SAL:
      policy_result(train_policy(train, *concat, props, PolicyObjective::sal(), options), concat);
      break;
    case Method::SWL: {
      ImportanceOptions imp = settings.importance;
      imp.train.seed = derive_seed(seed, 200);
      auto net = std::make_shared<const ImportanceNet>(train_importance(train, imp).net);
      std::shared_ptr<const HistoryEncoder> enc = concat;
      if (settings.swl_encoder == EncoderChoice::Lstm) enc = std::make_shared<const LstmEncoder>(net);
      const StageWeights w = normalize_weights(*net);
      policy_result(train_policy(train, *enc, props, PolicyObjective::swl(w), options), enc);
      out.document["stage_weights"] = w.values();
      out.weights = w;
      break;
    }
    case Method::KIPWL: {
      // phi from the matching counts of a Q-learning pilot regime
      const QRegime pilot(fit_q_learning(train, *concat, {settings.q_use_immediate_rewards}), concat);
      const MatchScale scale = MatchScale::empirical(matching_counts(train, pilot), train.T());
      policy_result(train_policy(train, *concat, props, PolicyObjective::kipwl(scale), options), concat);
      out.document["phi"] = scale.weights();
      break;
    }
    case Method::Q: {
      QModel model = fit_q_learning(train, *concat, {settings.q_use_immediate_rewards});
      out.document = {{"method", to_string(method)}, {"encoder", concat->to_json()}, {"q", model.to_json()}};
      out.regime = std::make_shared<QRegime>(std::move(model), concat);
      break;
    }
    case Method::FullMatchIPWE:
      policy_result(fit_full_matching_ipwe(train, *concat, props, options), concat);
      break;
  }
  return out;
}

std::shared_ptr<const Regime> regime_from_json(const nlohmann::json& doc) {
  try {
    auto enc = encoder_from_json(doc.at("encoder"));
    if (doc.contains("q")) return std::make_shared<QRegime>(QModel::from_json(doc.at("q")), enc);
    return std::make_shared<PolicyRegime>(PolicyNet::from_json(doc.at("policy")), enc);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

std::vector<ResultRow> run_replication(const ExperimentSpec& spec, int grid, int rep) {
  SimConfig config = spec.grid.at(static_cast<std::size_t>(grid));
  const std::uint64_t seed = replication_seed(spec.master_seed, grid, rep);
  config.seed = seed;
  const Environment env = make_environment(config);
  const Dataset all = sample_dataset(env, config.n, derive_seed(seed, 1));
  const auto [train, test] = train_test_split(all, spec.train_fraction, derive_seed(seed, 2));
  const std::uint64_t eval_seed = derive_seed(seed, 3);

  auto concat = std::make_shared<const ConcatEncoder>(config.T, config.p, 1);
  Matrix train_props;
  Matrix test_props;
  if (spec.propensity == PropensitySource::Known) {
    train_props = train.propensities();
    test_props = test.propensities();
  } else {
    const PropensityModel model = fit_propensity(train, *concat);
    train_props = model.observed(train, *concat);
    test_props = model.observed(test, *concat);
  }

  const MethodSettings settings = method_settings(spec);
  std::vector<ResultRow> rows;
  for (Method method : spec.methods) {
    ResultRow row;
    row.grid = grid;
    row.method = method;
    row.replication = rep;
    row.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::shared_ptr<const Regime> regime = fit_method(method, train, train_props, settings, seed).regime;
      const RolloutResult rr = rollout(*regime, env, spec.n_eval, eval_seed);
      row.value = rr.mean_reward;
      row.matching_accuracy = rr.matching_accuracy;
      try {
        row.empirical_value = empirical_value(test, *regime, test_props);
      } catch (const NoOverlapError&) {
        row.empirical_value = std::numeric_limits<double>::quiet_NaN();
      }
      row.converged = true;
    } catch (const std::exception& e) {
      row.converged = false;
      row.error = e.what();
      row.value = std::numeric_limits<double>::quiet_NaN();
      row.matching_accuracy = std::numeric_limits<double>::quiet_NaN();
      row.empirical_value = std::numeric_limits<double>::quiet_NaN();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<std::pair<int, int>> tasks;
  for (int g = 0; g < static_cast<int>(spec.grid.size()); ++g) {
    for (int r = 0; r < spec.replications; ++r) tasks.emplace_back(g, r);
  }
  std::vector<ResultRow> rows;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      auto out = run_replication(spec, tasks[k].first, tasks[k].second);
      const std::lock_guard<std::mutex> lock(mu);
      for (auto& row : out) rows.push_back(std::move(row));
    }
  };
  const int n_workers = std::min<int>(spec.workers, static_cast<int>(tasks.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::map<Method, std::size_t> order;
  for (std::size_t k = 0; k < spec.methods.size(); ++k) order.emplace(spec.methods[k], k);
  std::sort(rows.begin(), rows.end(), [&](const ResultRow& a, const ResultRow& b) {
    return std::tuple(a.grid, order.at(a.method), a.replication) <
           std::tuple(b.grid, order.at(b.method), b.replication);
  });
  return rows;
}

Summary summarize(const std::vector<ResultRow>& rows, const std::vector<Method>& methods) {
  Summary out;
  int grids = 0;
  for (const ResultRow& r : rows) grids = std::max(grids, r.grid + 1);
  for (int g = 0; g < grids; ++g) {
    for (Method m : methods) {
      std::vector<const ResultRow*> cell;
      for (const ResultRow& r : rows) {
        if (r.grid == g && r.method == m && r.converged) cell.push_back(&r);
      }
      if (cell.empty()) {
        out.warnings.push_back("grid " + std::to_string(g) + " method " + to_string(m) +
                               ": no converged rows, cell omitted");
        continue;
      }
      SummaryCell c;
      c.grid = g;
      c.method = m;
      c.count = static_cast<int>(cell.size());
      double acc = 0.0;
      for (const ResultRow* r : cell) {
        c.mean += r->value;
        acc += r->matching_accuracy;
      }
      c.mean /= c.count;
      c.accuracy_mean = acc / c.count;
      if (c.count > 1) {
        double ss = 0.0;
        for (const ResultRow* r : cell) ss += (r->value - c.mean) * (r->value - c.mean);
        c.sd = std::sqrt(ss / (c.count - 1));
        c.se = c.sd / std::sqrt(static_cast<double>(c.count));
      } else {
        c.degenerate = true;
      }
      out.cells.push_back(c);
    }
  }
  for (int g = 0; g < grids; ++g) {
    const SummaryCell* proposed = nullptr;
    const SummaryCell* competitor = nullptr;
    for (const SummaryCell& c : out.cells) {
      if (c.grid != g) continue;
      if (c.method == Method::SAL || c.method == Method::SWL) {
        if (!proposed || c.mean > proposed->mean) proposed = &c;
      } else if (c.method == Method::Q || c.method == Method::FullMatchIPWE) {
        if (!competitor || c.mean > competitor->mean) competitor = &c;
      }
    }
    if (!proposed || !competitor) continue;
    if (competitor->mean == 0.0) {
      out.warnings.push_back("grid " + std::to_string(g) + ": best competitor mean is 0, improvement rate omitted");
      continue;
    }
    Improvement imp;
    imp.grid = g;
    imp.best_proposed = proposed->method;
    imp.proposed_mean = proposed->mean;
    imp.best_competitor = competitor->method;
    imp.competitor_mean = competitor->mean;
    imp.rate = (proposed->mean - competitor->mean) / std::abs(competitor->mean);
    out.improvements.push_back(imp);
  }
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_rows_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "grid,method,replication,seed,value,matching_accuracy,empirical_value,converged,error\n";
  for (const ResultRow& r : rows) {
    out << r.grid << ',' << to_string(r.method) << ',' << r.replication << ',' << r.seed << ','
        << num(r.value) << ',' << num(r.matching_accuracy) << ',' << num(r.empirical_value) << ','
        << (r.converged ? "true" : "false") << ',' << csv_field(r.error) << '\n';
  }
}

void write_timings_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "grid,method,replication,wall_seconds\n";
  for (const ResultRow& r : rows) {
    out << r.grid << ',' << to_string(r.method) << ',' << r.replication << ',' << num(r.wall_seconds) << '\n';
  }
}

void write_summary_csv(const Summary& summary, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "grid,method,count,mean,sd,se,accuracy_mean,degenerate\n";
  for (const SummaryCell& c : summary.cells) {
    out << c.grid << ',' << to_string(c.method) << ',' << c.count << ',' << num(c.mean) << ',' << num(c.sd)
        << ',' << num(c.se) << ',' << num(c.accuracy_mean) << ',' << (c.degenerate ? "true" : "false") << '\n';
  }
}

void write_improvement_csv(const Summary& summary, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "grid,best_proposed,proposed_mean,best_competitor,competitor_mean,improvement_rate\n";
  for (const Improvement& i : summary.improvements) {
    out << i.grid << ',' << to_string(i.best_proposed) << ',' << num(i.proposed_mean) << ','
        << to_string(i.best_competitor) << ',' << num(i.competitor_mean) << ',' << num(i.rate) << '\n';
  }
}

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<ResultRow> run_and_write(const ExperimentSpec& spec) {
  spec.validate();
  const std::filesystem::path dir(spec.output_dir);
  std::filesystem::create_directories(dir);
  {
    auto echo = open_out(dir / "config.echo.json");
    echo << nlohmann::json(spec).dump(2) << '\n';
  }
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ResultRow> rows = run_experiment(spec);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Summary summary = summarize(rows, spec.methods);
  write_rows_csv(rows, dir / "rows.csv");
  write_timings_csv(rows, dir / "timings.csv");
  write_summary_csv(summary, dir / "summary.csv");
  write_improvement_csv(summary, dir / "improvement.csv");
  int failed = 0;
  for (const ResultRow& r : rows) failed += r.converged ? 0 : 1;
  const nlohmann::json meta{
      {"started", started},
      {"finished", utc_now()},
      {"wall_seconds", seconds},
      {"rows", rows.size()},
      {"failed", failed},
      {"warnings", summary.warnings},
      {"versions",
       {{"swl", "1.0.0"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                      "." + std::to_string(BOOST_VERSION % 100)},
        {"compiler", __VERSION__}}}};
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  return rows;
}

}  // namespace swl

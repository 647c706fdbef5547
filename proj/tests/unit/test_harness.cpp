#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "swl/harness.hpp"
#include "testing.hpp"

using namespace swl;

namespace {

ExperimentSpec tiny(std::vector<Method> methods, const std::string& out) {
  SimConfig c;
  c.n = 80;
  c.T = 2;
  c.p = 5;
  ExperimentSpec s;
  s.grid = {c};
  s.methods = std::move(methods);
  s.replications = 3;
  s.n_eval = 300;
  s.master_seed = 11;
  s.output_dir = (std::filesystem::temp_directory_path() / out).string();
  s.policy.width = 4;
  s.policy.depth = 1;
  s.policy.train.max_iterations = 30;
  s.importance.arch.hidden = 4;
  s.importance.train.max_iterations = 20;
  return s;
}

ResultRow row(int grid, Method m, int rep, double value, double acc = 0.5) {
  ResultRow r;
  r.grid = grid;
  r.method = m;
  r.replication = rep;
  r.value = value;
  r.matching_accuracy = acc;
  r.converged = true;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same(const ResultRow& a, const ResultRow& b) {
  auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.grid == b.grid && a.method == b.method && a.replication == b.replication && a.seed == b.seed &&
         eq(a.value, b.value) && eq(a.matching_accuracy, b.matching_accuracy) &&
         eq(a.empirical_value, b.empirical_value) && a.converged == b.converged && a.error == b.error;
}

}  // namespace

TEST(Harness, RowCountAndOrder) {
  const ExperimentSpec spec = tiny({Method::SAL, Method::Q}, "swl_h_rows");
  const auto rows = run_experiment(spec);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(rows[k].method, k < 3 ? Method::SAL : Method::Q);
    EXPECT_EQ(rows[k].replication, static_cast<int>(k % 3));
    EXPECT_EQ(rows[k].seed, replication_seed(11, 0, rows[k].replication));
    EXPECT_TRUE(rows[k].converged) << rows[k].error;
    EXPECT_GE(rows[k].matching_accuracy, 0.0);
    EXPECT_LE(rows[k].matching_accuracy, 1.0);
  }
}

TEST(Harness, RerunIsIdenticalAcrossWorkers) {
  ExperimentSpec spec = tiny({Method::SAL, Method::FullMatchIPWE}, "swl_h_rerun");
  const auto a = run_experiment(spec);
  spec.workers = 2;
  const auto b = run_experiment(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE(same(a[k], b[k])) << "row " << k;
}

TEST(Harness, ReplicationSeedsDiffer) {
  EXPECT_EQ(replication_seed(3, 1, 2), replication_seed(3, 1, 2));
  EXPECT_NE(replication_seed(3, 1, 2), replication_seed(3, 2, 1));
  EXPECT_NE(replication_seed(3, 0, 0), replication_seed(4, 0, 0));
}

TEST(Harness, SingleRowIsDegenerate) {
  const Summary s = summarize({row(0, Method::SAL, 0, 0.4)}, {Method::SAL});
  ASSERT_EQ(s.cells.size(), 1u);
  EXPECT_TRUE(s.cells[0].degenerate);
  EXPECT_EQ(s.cells[0].se, 0.0);
  EXPECT_EQ(s.cells[0].sd, 0.0);
  EXPECT_EQ(s.cells[0].mean, 0.4);
}

TEST(Harness, SummaryMatchesRecomputation) {
  const std::vector<double> v{0.1, 0.5, 0.3, 0.9};
  std::vector<ResultRow> rows;
  for (int k = 0; k < 4; ++k) rows.push_back(row(0, Method::SWL, k, v[static_cast<std::size_t>(k)], 0.25 * k));
  const Summary s = summarize(rows, {Method::SWL});
  ASSERT_EQ(s.cells.size(), 1u);
  const double mean = 0.45;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / 3);
  EXPECT_NEAR(s.cells[0].mean, mean, 1e-15);
  EXPECT_NEAR(s.cells[0].sd, sd, 1e-15);
  EXPECT_NEAR(s.cells[0].se, sd / 2, 1e-15);
  EXPECT_NEAR(s.cells[0].accuracy_mean, 0.375, 1e-15);
  EXPECT_EQ(s.cells[0].count, 4);
  EXPECT_FALSE(s.cells[0].degenerate);
}

TEST(Harness, ImprovementRateByHand) {
  std::vector<ResultRow> rows{row(0, Method::SAL, 0, 0.4),  row(0, Method::SAL, 1, 0.6),
                              row(0, Method::SWL, 0, 0.3),  row(0, Method::Q, 0, 0.2),
                              row(0, Method::FullMatchIPWE, 0, -0.1)};
  const Summary s = summarize(rows, {Method::SAL, Method::SWL, Method::Q, Method::FullMatchIPWE});
  ASSERT_EQ(s.improvements.size(), 1u);
  const Improvement& imp = s.improvements[0];
  EXPECT_EQ(imp.best_proposed, Method::SAL);
  EXPECT_EQ(imp.best_competitor, Method::Q);
  EXPECT_NEAR(imp.rate, (0.5 - 0.2) / 0.2, 1e-12);
  // negative competitor: relative to its magnitude
  const Summary neg = summarize({row(0, Method::SWL, 0, 0.1), row(0, Method::Q, 0, -0.4)},
                                {Method::SWL, Method::Q});
  EXPECT_NEAR(neg.improvements.at(0).rate, 1.25, 1e-12);
}

TEST(Harness, IdenticalMethodsGiveZeroRate) {
  std::vector<ResultRow> rows;
  for (int k = 0; k < 3; ++k) {
    rows.push_back(row(0, Method::SAL, k, 0.1 * (k + 1)));
    rows.push_back(row(0, Method::Q, k, 0.1 * (k + 1)));
  }
  const Summary s = summarize(rows, {Method::SAL, Method::Q});
  ASSERT_EQ(s.improvements.size(), 1u);
  EXPECT_EQ(s.improvements[0].rate, 0.0);
}

TEST(Harness, FailedRowsAreExcluded) {
  ResultRow bad = row(0, Method::Q, 0, 100.0);
  bad.converged = false;
  bad.error = "diverged";
  const Summary s = summarize({row(0, Method::SAL, 0, 0.2), bad}, {Method::SAL, Method::Q});
  ASSERT_EQ(s.cells.size(), 1u);
  EXPECT_EQ(s.cells[0].method, Method::SAL);
  EXPECT_TRUE(s.improvements.empty());
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("Q"), std::string::npos);
}

TEST(Harness, SpecValidationAndJson) {
  ExperimentSpec s = tiny({Method::SAL, Method::SWL}, "swl_h_json");
  s.replications = 7;
  s.train_fraction = 0.75;
  s.swl_encoder = EncoderChoice::Concat;
  const ExperimentSpec back = nlohmann::json(s).get<ExperimentSpec>();
  EXPECT_EQ(back.replications, 7);
  EXPECT_EQ(back.train_fraction, 0.75);
  EXPECT_EQ(back.methods, s.methods);
  EXPECT_EQ(back.swl_encoder, EncoderChoice::Concat);
  EXPECT_EQ(nlohmann::json(back).dump(), nlohmann::json(s).dump());
  s.grid[0].T = 1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = tiny({}, "x");
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW((void)parse_method("BOWL"), ValidationError);
}

TEST(Harness, FittedDocumentsRebuildTheRegime) {
  SimConfig c;
  c.n = 60;
  c.T = 3;
  c.p = 4;
  c.seed = 5;
  const Simulation sim = generate(c);
  const ExperimentSpec spec = tiny({Method::SAL}, "swl_h_doc");
  const MethodSettings settings = method_settings(spec);
  for (Method m : {Method::SAL, Method::SWL, Method::KIPWL, Method::Q, Method::FullMatchIPWE}) {
    const FittedMethod fit = fit_method(m, sim.data, sim.data.propensities(), settings, 9);
    EXPECT_EQ(fit.weights.has_value(), m == Method::SWL);
    const auto back = regime_from_json(nlohmann::json::parse(fit.document.dump()));
    EXPECT_EQ(predict(*back, sim.data), predict(*fit.regime, sim.data)) << to_string(m);
  }
  EXPECT_THROW((void)regime_from_json(nlohmann::json{{"method", "SAL"}}), ValidationError);
}

TEST(Harness, OutputFilesAreReproducible) {
  ExperimentSpec spec = tiny({Method::SAL, Method::Q}, "swl_h_files_a");
  (void)run_and_write(spec);
  const std::filesystem::path a(spec.output_dir);
  for (const char* f : {"rows.csv", "timings.csv", "summary.csv", "improvement.csv", "config.echo.json", "meta.json"}) {
    EXPECT_TRUE(std::filesystem::exists(a / f)) << f;
  }
  spec.output_dir = (std::filesystem::temp_directory_path() / "swl_h_files_b").string();
  (void)run_and_write(spec);
  const std::filesystem::path b(spec.output_dir);
  EXPECT_EQ(slurp(a / "rows.csv"), slurp(b / "rows.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

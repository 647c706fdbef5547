#include "swl/trajectories.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "swl/random.hpp"

namespace swl {

Panel Panel::zeros(int n, int T, int p) {
  Panel panel;
  panel.n = n;
  panel.T = T;
  panel.p = p;
  panel.covariates.assign(static_cast<std::size_t>(T), Matrix::Zero(n, p));
  panel.actions = Matrix::Zero(n, T);
  return panel;
}

void validate_trajectory(const Trajectory& traj, std::size_t index) {
  const std::string who = "subject " + std::to_string(index) + ": ";
  const std::size_t T = traj.actions.size();
  if (T == 0) throw ValidationError(who + "trajectory has no stages");
  if (traj.covariates.size() != T || traj.propensities.size() != T) {
    throw ValidationError(who + "covariates, actions and propensities must all have " +
                          std::to_string(T) + " stages");
  }
  const auto p = traj.covariates.front().size();
  for (std::size_t t = 0; t < T; ++t) {
    if (traj.covariates[t].size() != p) {
      throw ValidationError(who + "covariate dimension differs at stage " + std::to_string(t + 1));
    }
    if (!traj.covariates[t].allFinite()) {
      throw ValidationError(who + "non-finite covariate at stage " + std::to_string(t + 1));
    }
    if (traj.actions[t] != 1 && traj.actions[t] != -1) {
      throw ValidationError(who + "action at stage " + std::to_string(t + 1) +
                            " must be -1 or +1");
    }
    const double pi = traj.propensities[t];
    if (!(pi > 0.0 && pi < 1.0)) {
      std::ostringstream os;
      os << who << "propensity " << pi << " at stage " << t + 1
         << " violates positivity: every observed action needs probability strictly in (0, 1)";
      throw ValidationError(os.str());
    }
  }
  if (!std::isfinite(traj.total_reward)) throw ValidationError(who + "non-finite total reward");
  if (traj.immediate_rewards) {
    const auto& r = *traj.immediate_rewards;
    if (r.size() != T) {
      throw ValidationError(who + "immediate rewards must have " + std::to_string(T) + " stages");
    }
    const double s = std::accumulate(r.begin(), r.end(), 0.0);
    if (std::abs(s - traj.total_reward) > 1e-9 * std::max(1.0, std::abs(traj.total_reward))) {
      throw ValidationError(who + "immediate rewards do not sum to the total reward");
    }
  }
}

Dataset::Dataset(std::vector<Trajectory> trajectories, std::optional<std::uint64_t> seed)
    : trajectories_(std::move(trajectories)), seed_(seed) {
  if (trajectories_.empty()) throw ValidationError("dataset must contain at least one subject");
  T_ = trajectories_.front().stages();
  p_ = trajectories_.front().covariates.empty()
           ? 0
           : static_cast<int>(trajectories_.front().covariates.front().size());
  has_immediate_ = trajectories_.front().immediate_rewards.has_value();
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    const Trajectory& tr = trajectories_[i];
    validate_trajectory(tr, i);
    if (tr.stages() != T_) {
      throw ValidationError("subject " + std::to_string(i) + ": has " +
                            std::to_string(tr.stages()) + " stages, expected " +
                            std::to_string(T_) + " (balanced design required)");
    }
    if (static_cast<int>(tr.covariates.front().size()) != p_) {
      throw ValidationError("subject " + std::to_string(i) + ": covariate dimension " +
                            std::to_string(tr.covariates.front().size()) + ", expected " +
                            std::to_string(p_));
    }
    if (tr.immediate_rewards.has_value() != has_immediate_) {
      throw ValidationError("subject " + std::to_string(i) +
                            ": immediate rewards must be present for all subjects or none");
    }
  }
}

Panel Dataset::panel() const {
  Panel out = Panel::zeros(n(), T_, p_);
  for (int i = 0; i < n(); ++i) {
    const Trajectory& tr = trajectories_[static_cast<std::size_t>(i)];
    for (int t = 0; t < T_; ++t) {
      out.covariates[static_cast<std::size_t>(t)].row(i) =
          tr.covariates[static_cast<std::size_t>(t)].transpose();
      out.actions(i, t) = tr.actions[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

Vector Dataset::rewards() const {
  Vector r(n());
  for (int i = 0; i < n(); ++i) r(i) = trajectories_[static_cast<std::size_t>(i)].total_reward;
  return r;
}

Matrix Dataset::propensities() const {
  Matrix m(n(), T_);
  for (int i = 0; i < n(); ++i) {
    for (int t = 0; t < T_; ++t) {
      m(i, t) = trajectories_[static_cast<std::size_t>(i)].propensities[static_cast<std::size_t>(t)];
    }
  }
  return m;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Trajectory> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(trajectories_.at(i));
  return Dataset(std::move(out), seed_);
}

ConcatEncoder::ConcatEncoder(int T, int p, int window)
    : T_(T), p_(p), window_(window <= 0 || window > T ? T : window) {
  if (T <= 0 || p <= 0) throw ValidationError("concat encoder needs positive T and p");
}

int ConcatEncoder::dim() const { return p_ * window_ + (window_ - 1); }

Matrix ConcatEncoder::encode(const Panel& panel, int stage) const {
  if (panel.p != p_) {
    throw ShapeError("concat encoder built for p=" + std::to_string(p_) + ", panel has p=" +
                     std::to_string(panel.p));
  }
  if (stage < 0 || stage >= panel.T) throw ShapeError("stage out of range in concat encoder");
  Matrix h = Matrix::Zero(panel.n, dim());
  for (int lag = 0; lag < window_ && stage - lag >= 0; ++lag) {
    h.middleCols(lag * p_, p_) = panel.covariates[static_cast<std::size_t>(stage - lag)];
  }
  for (int lag = 1; lag < window_ && stage - lag >= 0; ++lag) {
    h.col(p_ * window_ + lag - 1) = panel.actions.col(stage - lag);
  }
  return h;
}

nlohmann::json ConcatEncoder::to_json() const {
  return {{"kind", "concat"}, {"T", T_}, {"p", p_}, {"window", window_}};
}

std::vector<int> TableRegime::decide(const Panel& panel, int stage) const {
  if (panel.n != decisions_.rows()) {
    throw ShapeError("table regime has " + std::to_string(decisions_.rows()) +
                     " rows, panel has " + std::to_string(panel.n));
  }
  std::vector<int> out(static_cast<std::size_t>(panel.n));
  for (int i = 0; i < panel.n; ++i) out[static_cast<std::size_t>(i)] = sign_decision(decisions_(i, stage));
  return out;
}

Matrix match_indicators(const Panel& panel, const Regime& regime) {
  if (regime.stages() != panel.T) {
    throw ValidationError("regime has " + std::to_string(regime.stages()) +
                          " stages but trajectories have " + std::to_string(panel.T));
  }
  Matrix m = Matrix::Zero(panel.n, panel.T);
  for (int t = 0; t < panel.T; ++t) {
    const std::vector<int> d = regime.decide(panel, t);
    for (int i = 0; i < panel.n; ++i) {
      m(i, t) = (d[static_cast<std::size_t>(i)] == static_cast<int>(panel.actions(i, t))) ? 1.0 : 0.0;
    }
  }
  return m;
}

Matrix match_indicators(const Dataset& ds, const Regime& regime) {
  return match_indicators(ds.panel(), regime);
}

int matching_count(const Trajectory& traj, const Regime& regime) {
  Dataset single({traj});
  return static_cast<int>(match_indicators(single, regime).sum());
}

std::vector<int> matching_counts(const Dataset& ds, const Regime& regime) {
  const Matrix m = match_indicators(ds, regime);
  std::vector<int> k(static_cast<std::size_t>(ds.n()));
  for (int i = 0; i < ds.n(); ++i) k[static_cast<std::size_t>(i)] = static_cast<int>(m.row(i).sum());
  return k;
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json header = {{"n", ds.n()},
                           {"T", ds.T()},
                           {"p", ds.p()},
                           {"has_immediate_rewards", ds.has_immediate_rewards()}};
  if (ds.seed()) header["seed"] = *ds.seed();
  nlohmann::json records = nlohmann::json::array();
  for (const Trajectory& tr : ds) {
    nlohmann::json cov = nlohmann::json::array();
    for (const Vector& x : tr.covariates) cov.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    nlohmann::json rec = {{"covariates", std::move(cov)},
                          {"actions", tr.actions},
                          {"propensities", tr.propensities},
                          {"reward", tr.total_reward}};
    if (tr.immediate_rewards) rec["immediate_rewards"] = *tr.immediate_rewards;
    records.push_back(std::move(rec));
  }
  return {{"header", std::move(header)}, {"records", std::move(records)}};
}

Dataset dataset_from_json(const nlohmann::json& doc) {
  try {
    const auto& header = doc.at("header");
    const int n = header.at("n").get<int>();
    const int T = header.at("T").get<int>();
    const int p = header.at("p").get<int>();
    const bool has_imm = header.at("has_immediate_rewards").get<bool>();
    std::optional<std::uint64_t> seed;
    if (header.contains("seed")) seed = header.at("seed").get<std::uint64_t>();
    const auto& records = doc.at("records");
    if (static_cast<int>(records.size()) != n) {
      throw ValidationError("header declares n=" + std::to_string(n) + " but " +
                            std::to_string(records.size()) + " records are present");
    }
    std::vector<Trajectory> trajs;
    trajs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      Trajectory tr;
      const auto& cov = rec.at("covariates");
      if (static_cast<int>(cov.size()) != T) {
        throw ValidationError("subject " + std::to_string(i) + ": expected " +
                              std::to_string(T) + " covariate rows, found " +
                              std::to_string(cov.size()));
      }
      for (const auto& row : cov) {
        const auto vals = row.get<std::vector<double>>();
        if (static_cast<int>(vals.size()) != p) {
          throw ValidationError("subject " + std::to_string(i) + ": covariate row of length " +
                                std::to_string(vals.size()) + ", expected " + std::to_string(p));
        }
        tr.covariates.emplace_back(Eigen::Map<const Vector>(vals.data(), p));
      }
      tr.actions = rec.at("actions").get<std::vector<int>>();
      tr.propensities = rec.at("propensities").get<std::vector<double>>();
      tr.total_reward = rec.at("reward").get<double>();
      if (rec.contains("immediate_rewards")) {
        tr.immediate_rewards = rec.at("immediate_rewards").get<std::vector<double>>();
      }
      if (tr.immediate_rewards.has_value() != has_imm) {
        throw ValidationError("subject " + std::to_string(i) +
                              ": immediate_rewards presence disagrees with header");
      }
      trajs.push_back(std::move(tr));
    }
    Dataset ds(std::move(trajs), seed);
    if (ds.T() != T || ds.p() != p) throw ValidationError("header T/p disagree with records");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset schema error: ") + e.what());
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << dataset_to_json(ds).dump(1) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte is 1-based and points just past the offending character.
    throw ParseError(path.string() + ": " + e.what(), line_of(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  return dataset_from_json(doc);
}

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "subject,stage";
  for (int k = 0; k < ds.p(); ++k) out << ",x" << k + 1;
  out << ",action,propensity";
  if (ds.has_immediate_rewards()) out << ",immediate_reward";
  out << ",reward\n";
  out << std::setprecision(17);
  for (int i = 0; i < ds.n(); ++i) {
    const Trajectory& tr = ds[static_cast<std::size_t>(i)];
    for (int t = 0; t < ds.T(); ++t) {
      const auto st = static_cast<std::size_t>(t);
      out << i << ',' << t + 1;
      for (int k = 0; k < ds.p(); ++k) out << ',' << tr.covariates[st](k);
      out << ',' << tr.actions[st] << ',' << tr.propensities[st];
      if (tr.immediate_rewards) out << ',' << (*tr.immediate_rewards)[st];
      out << ',';
      if (t + 1 == ds.T()) out << tr.total_reward;
      out << '\n';
    }
  }
}

Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train >= n) {
    throw ValidationError("split of " + std::to_string(n) + " subjects at fraction " +
                          std::to_string(train_fraction) + " leaves one side empty");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  shuffle(idx, rng);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_fraction,
                                             std::uint64_t seed) {
  const Split s = split_indices(static_cast<std::size_t>(ds.n()), train_fraction, seed);
  return {ds.subset(s.train), ds.subset(s.test)};
}

}  // namespace swl

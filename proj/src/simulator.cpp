#include "swl/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace swl {

std::string to_string(RuleKind k) { return k == RuleKind::Linear ? "linear" : "nonlinear"; }

std::string to_string(RuleSharing s) {
  return s == RuleSharing::Heterogeneous ? "heterogeneous" : "homogeneous";
}

RuleKind parse_rule_kind(const std::string& s) {
  if (s == "linear") return RuleKind::Linear;
  if (s == "nonlinear") return RuleKind::Nonlinear;
  throw ValidationError("unknown rule_kind '" + s + "' (expected linear|nonlinear)");
}

RuleSharing parse_rule_sharing(const std::string& s) {
  if (s == "heterogeneous") return RuleSharing::Heterogeneous;
  if (s == "homogeneous") return RuleSharing::Homogeneous;
  throw ValidationError("unknown rule_sharing '" + s + "' (expected heterogeneous|homogeneous)");
}

void SimConfig::validate() const {
  if (n < 1) throw ValidationError("sim config: n must be >= 1");
  if (T < 1) throw ValidationError("sim config: T must be >= 1");
  if (p < 1) throw ValidationError("sim config: p must be >= 1");
  if (!(match_prob > 0.0 && match_prob < 1.0)) {
    throw ValidationError("sim config: match_prob must lie strictly between 0 and 1");
  }
  if (n_important_stages < 0 || n_important_stages > T) {
    throw ValidationError("sim config: n_important_stages must lie in [0, T]");
  }
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"n", c.n},
       {"T", c.T},
       {"p", c.p},
       {"rule_kind", to_string(c.rule_kind)},
       {"rule_sharing", to_string(c.rule_sharing)},
       {"match_prob", c.match_prob},
       {"n_important_stages", c.n_important_stages},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  SimConfig d;
  c.n = j.value("n", d.n);
  c.T = j.value("T", d.T);
  c.p = j.value("p", d.p);
  c.rule_kind = parse_rule_kind(j.value("rule_kind", to_string(d.rule_kind)));
  c.rule_sharing = parse_rule_sharing(j.value("rule_sharing", to_string(d.rule_sharing)));
  c.match_prob = j.value("match_prob", d.match_prob);
  c.n_important_stages = j.value("n_important_stages", d.n_important_stages);
  c.seed = j.value("seed", d.seed);
}

double apply_basis(Basis b, double x) {
  switch (b) {
    case Basis::Identity: return x;
    case Basis::Square: return x * x;
    case Basis::Cube: return x * x * x;
    case Basis::Arctan: return std::atan(x);
    case Basis::Sign: return x >= 0.0 ? 1.0 : -1.0;
  }
  return x;
}

double StageRule::evaluate(const Eigen::Ref<const Vector>& x, RuleKind kind) const {
  double f = 0.0;
  for (const RuleTerm& term : terms) {
    if (kind == RuleKind::Linear) {
      f += term.beta * x(term.index);
    } else {
      double prod = 1.0;
      for (int s : term.interaction) prod *= apply_basis(basis[static_cast<std::size_t>(s)], x(s));
      f += term.beta * prod;
    }
  }
  return f;
}

OptimalRegime::OptimalRegime(RuleKind kind, std::vector<StageRule> stages)
    : kind_(kind), stages_(std::move(stages)) {}

double OptimalRegime::score(int stage, const Eigen::Ref<const Vector>& x) const {
  return stages_.at(static_cast<std::size_t>(stage)).evaluate(x, kind_);
}

int OptimalRegime::decision(int stage, const Eigen::Ref<const Vector>& x) const {
  return sign_decision(score(stage, x));
}

std::vector<int> OptimalRegime::decide(const Panel& panel, int stage) const {
  std::vector<int> out(static_cast<std::size_t>(panel.n));
  const Matrix& X = panel.covariates[static_cast<std::size_t>(stage)];
  for (int i = 0; i < panel.n; ++i) {
    out[static_cast<std::size_t>(i)] = decision(stage, X.row(i).transpose());
  }
  return out;
}

double RewardSpec::mean_reward(int stage, const Eigen::Ref<const Vector>& x, int action,
                               int optimal) const {
  double base = 0.0;
  for (const auto& [idx, beta] : base_terms[static_cast<std::size_t>(stage)]) base += beta * x(idx);
  return omega[static_cast<std::size_t>(stage)] * (base + action * optimal);
}

namespace {

int draw_support_size(Rng& rng, int p) {
  const int hi = std::min(20, p);
  const int lo = std::min(5, hi);
  return uniform_int(rng, lo, hi);
}

StageRule draw_rule(Rng& rng, const SimConfig& c) {
  StageRule rule;
  const int size = draw_support_size(rng, c.p);
  const std::vector<int> support = sample_without_replacement(rng, c.p, size);
  for (int idx : support) {
    RuleTerm term;
    term.index = idx;
    term.beta = normal(rng);
    term.interaction = {idx};
    if (c.rule_kind == RuleKind::Nonlinear && c.p > 1) {
      const int width = std::min(uniform_int(rng, 1, 3), c.p);
      // Partners are drawn without replacement from the other covariates.
      std::vector<int> partners = sample_without_replacement(rng, c.p - 1, width - 1);
      for (int q : partners) term.interaction.push_back(q >= idx ? q + 1 : q);
    }
    rule.terms.push_back(std::move(term));
  }
  if (c.rule_kind == RuleKind::Nonlinear) {
    rule.basis.resize(static_cast<std::size_t>(c.p));
    for (Basis& b : rule.basis) b = static_cast<Basis>(uniform_int(rng, 0, 4));
  }
  return rule;
}

}  // namespace

Environment make_environment(const SimConfig& config) {
  config.validate();
  Environment env;
  env.config = config;

  Rng regime_rng(derive_seed(config.seed, 1));
  std::vector<StageRule> rules;
  for (int t = 0; t < config.T; ++t) {
    if (config.rule_sharing == RuleSharing::Homogeneous && t > 0) {
      rules.push_back(rules.front());
    } else {
      rules.push_back(draw_rule(regime_rng, config));
    }
  }
  env.regime = OptimalRegime(config.rule_kind, std::move(rules));

  Rng reward_rng(derive_seed(config.seed, 2));
  RewardSpec& rs = env.reward;
  for (int t = 0; t < config.T; ++t) {
    const int size = draw_support_size(reward_rng, config.p);
    std::vector<std::pair<int, double>> terms;
    for (int idx : sample_without_replacement(reward_rng, config.p, size)) {
      terms.emplace_back(idx, normal(reward_rng));
    }
    rs.base_terms.push_back(std::move(terms));
  }
  rs.important_stages = sample_without_replacement(reward_rng, config.T, config.n_important_stages);
  std::sort(rs.important_stages.begin(), rs.important_stages.end());
  rs.omega.assign(static_cast<std::size_t>(config.T), 1.0 / config.T);
  if (config.n_important_stages > 0) {
    std::vector<double> alpha(static_cast<std::size_t>(config.T));
    for (int t = 0; t < config.T; ++t) {
      const bool important = std::binary_search(rs.important_stages.begin(),
                                                rs.important_stages.end(), t);
      alpha[static_cast<std::size_t>(t)] =
          important ? uniform(reward_rng, 0.8, 1.0) : uniform(reward_rng, 0.0, 0.2);
    }
    double total = 0.0;
    for (double a : alpha) total += a;
    for (int t = 0; t < config.T; ++t) {
      rs.omega[static_cast<std::size_t>(t)] = alpha[static_cast<std::size_t>(t)] / total;
    }
  }
  return env;
}

namespace {

void progress(Rng& rng, Vector& x, int action) {
  const double keep = action == 1 ? 0.8 : 0.6;
  const double noise = action == 1 ? 0.6 : 0.8;
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = keep * x(k) + noise * normal(rng);
}

}  // namespace

Dataset sample_dataset(const Environment& env, int n, std::uint64_t seed) {
  const SimConfig& c = env.config;
  const double q = c.match_prob;
  Rng rng(seed);
  std::vector<Trajectory> trajs;
  trajs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    std::vector<double> r(static_cast<std::size_t>(c.T));
    Vector x(c.p);
    for (int k = 0; k < c.p; ++k) x(k) = normal(rng);
    double total = 0.0;
    for (int t = 0; t < c.T; ++t) {
      const int optimal = env.regime.decision(t, x);
      const bool follow = bernoulli(rng, q);
      const int action = follow ? optimal : -optimal;
      const double reward = env.reward.mean_reward(t, x, action, optimal) +
                            env.reward.noise_sd * normal(rng);
      tr.covariates.push_back(x);
      tr.actions.push_back(action);
      tr.propensities.push_back(follow ? q : 1.0 - q);
      r[static_cast<std::size_t>(t)] = reward;
      total += reward;
      if (t + 1 < c.T) progress(rng, x, action);
    }
    tr.total_reward = total;
    tr.immediate_rewards = std::move(r);
    trajs.push_back(std::move(tr));
  }
  return Dataset(std::move(trajs), seed);
}

Simulation generate(const SimConfig& config) {
  Environment env = make_environment(config);
  Dataset data = sample_dataset(env, config.n, derive_seed(config.seed, 3));
  return {std::move(data), std::move(env)};
}

std::vector<std::uint64_t> behavior_matching_histogram(const Environment& env, std::int64_t n,
                                                       std::uint64_t seed) {
  const SimConfig& c = env.config;
  Rng rng(seed);
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(c.T) + 1, 0);
  Vector x(c.p);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < c.p; ++k) x(k) = normal(rng);
    int matches = 0;
    for (int t = 0; t < c.T; ++t) {
      const int optimal = env.regime.decision(t, x);
      const bool follow = bernoulli(rng, c.match_prob);
      const int action = follow ? optimal : -optimal;
      matches += follow ? 1 : 0;
      // Same draw order as sample_dataset: the reward noise precedes progression.
      (void)normal(rng);
      if (t + 1 < c.T) progress(rng, x, action);
    }
    ++hist[static_cast<std::size_t>(matches)];
  }
  return hist;
}

RolloutResult rollout(const Regime& regime, const Environment& env, int n_eval,
                      std::uint64_t seed) {
  const SimConfig& c = env.config;
  if (regime.stages() != c.T) {
    throw ValidationError("regime has " + std::to_string(regime.stages()) +
                          " stages, environment has " + std::to_string(c.T));
  }
  Rng rng(seed);
  Panel panel = Panel::zeros(n_eval, c.T, c.p);
  Matrix& x0 = panel.covariates[0];
  for (int i = 0; i < n_eval; ++i) {
    for (int k = 0; k < c.p; ++k) x0(i, k) = normal(rng);
  }
  Vector total = Vector::Zero(n_eval);
  long agree = 0;
  for (int t = 0; t < c.T; ++t) {
    const std::vector<int> d = regime.decide(panel, t);
    const Matrix& X = panel.covariates[static_cast<std::size_t>(t)];
    for (int i = 0; i < n_eval; ++i) {
      const int action = d[static_cast<std::size_t>(i)];
      const int optimal = env.regime.decision(t, X.row(i).transpose());
      agree += action == optimal ? 1 : 0;
      panel.actions(i, t) = action;
      total(i) += env.reward.mean_reward(t, X.row(i).transpose(), action, optimal);
    }
    if (t + 1 < c.T) {
      Matrix& next = panel.covariates[static_cast<std::size_t>(t + 1)];
      for (int i = 0; i < n_eval; ++i) {
        const bool treated = panel.actions(i, t) == 1;
        const double keep = treated ? 0.8 : 0.6;
        const double noise = treated ? 0.6 : 0.8;
        for (int k = 0; k < c.p; ++k) next(i, k) = keep * X(i, k) + noise * normal(rng);
      }
    }
  }
  RolloutResult res;
  res.mean_reward = total.mean();
  res.reward_sd = n_eval > 1 ? std::sqrt((total.array() - res.mean_reward).square().sum() /
                                         (n_eval - 1))
                             : 0.0;
  res.matching_accuracy = static_cast<double>(agree) / (static_cast<double>(n_eval) * c.T);
  return res;
}

double oracle_rollout(const Regime& regime, const Environment& env, int n_eval,
                      std::uint64_t seed) {
  return rollout(regime, env, n_eval, seed).mean_reward;
}

double matching_accuracy(const Regime& regime, const Environment& env, int n_eval,
                         std::uint64_t seed) {
  return rollout(regime, env, n_eval, seed).matching_accuracy;
}

std::vector<int> RandomRegime::decide(const Panel& panel, int stage) const {
  std::vector<int> out(static_cast<std::size_t>(panel.n));
  const std::uint64_t base = derive_seed(seed_, static_cast<std::uint64_t>(stage));
  for (int i = 0; i < panel.n; ++i) {
    out[static_cast<std::size_t>(i)] =
        (splitmix64(base ^ static_cast<std::uint64_t>(i)) >> 63) != 0 ? 1 : -1;
  }
  return out;
}

std::vector<int> ComplementRegime::decide(const Panel& panel, int stage) const {
  std::vector<int> d = base_.decide(panel, stage);
  for (int& v : d) v = -v;
  return d;
}

}  // namespace swl

#include "swl/surrogate.hpp"

#include <cmath>

namespace swl {

SurrogateData SurrogateData::rows(const std::vector<std::size_t>& indices) const {
  SurrogateData out;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.actions.resize(m, actions.cols());
  out.weights.resize(m);
  for (const Matrix& h : histories) out.histories.emplace_back(m, h.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
    out.actions.row(r) = actions.row(i);
    out.weights(r) = weights(i);
    for (std::size_t j = 0; j < histories.size(); ++j) out.histories[j].row(r) = histories[j].row(i);
  }
  return out;
}

std::string to_string(RewardTransform t) {
  switch (t) {
    case RewardTransform::None: return "none";
    case RewardTransform::Shift: return "shift";
    case RewardTransform::Center: return "center";
  }
  return "none";
}

RewardTransform parse_reward_transform(const std::string& s) {
  if (s == "none") return RewardTransform::None;
  if (s == "shift") return RewardTransform::Shift;
  if (s == "center") return RewardTransform::Center;
  throw ValidationError("unknown reward transform '" + s + "' (expected none, shift or center)");
}

SurrogateData make_surrogate_data(const Dataset& ds, const HistoryEncoder& encoder,
                                  const Matrix& propensities, RewardTransform transform, bool normalize) {
  if (propensities.rows() != ds.n() || propensities.cols() != ds.T()) {
    throw ShapeError("propensity matrix must be n x T");
  }
  const Panel panel = ds.panel();
  SurrogateData data;
  for (int j = 0; j < ds.T(); ++j) data.histories.push_back(encoder.encode(panel, j));
  data.actions = panel.actions;
  Vector r = ds.rewards();
  if (transform == RewardTransform::Shift) r = shift_nonnegative(r);
  if (transform == RewardTransform::Center) r.array() -= r.mean();
  data.weights = r.cwiseProduct(inverse_propensity_products(propensities));
  if (normalize) {
    const double scale = data.weights.cwiseAbs().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw ValidationError("subject weights are all zero or non-finite");
    }
    data.weights /= scale;
  }
  return data;
}

SurrogateSpec SurrogateSpec::swl(const StageWeights& weights, SurrogateParams params) {
  params.validate();
  SurrogateSpec s;
  s.kind = SurrogateKind::SWL;
  s.stage_weights = weights.values();
  s.params = params;
  return s;
}

SurrogateSpec SurrogateSpec::kipwl(const MatchScale& scale, SurrogateParams params) {
  params.validate();
  SurrogateSpec s;
  s.kind = SurrogateKind::KIPWL;
  s.scale = scale.weights();
  s.params = params;
  return s;
}

SurrogateObjective::SurrogateObjective(const PolicyNet& layout, SurrogateSpec spec, int rows)
    : spec_(std::move(spec)), rows_(rows) {
  const int T = layout.T();
  if (rows < 1) throw ValidationError("surrogate objective needs at least one row");
  if (spec_.kind == SurrogateKind::SWL && static_cast<int>(spec_.stage_weights.size()) != T) {
    throw ValidationError("stage weights have T=" + std::to_string(spec_.stage_weights.size()) +
                          " but the policy has T=" + std::to_string(T));
  }
  if (spec_.kind == SurrogateKind::KIPWL && static_cast<int>(spec_.scale.size()) != T + 1) {
    throw ValidationError("match scale must cover 0..T");
  }
  using numgrad::Var;
  const int d = layout.arch().input_dim;
  lambda_ = tape_.input(1, 1, "lambda");
  weights_ = tape_.input(rows, 1, "c");
  std::vector<Var> psi;
  for (int j = 0; j < T; ++j) {
    histories_.push_back(tape_.input(rows, d, "H" + std::to_string(j + 1)));
    actions_.push_back(tape_.input(rows, 1, "A" + std::to_string(j + 1)));
    const Var f = layout.build(tape_, j, histories_.back(), params_);
    psi.push_back(tape_.sigmoid(tape_.scale_by(tape_.mul(actions_.back(), f), lambda_)));
  }

  Var per_subject;
  if (spec_.kind == SurrogateKind::SWL) {
    for (int j = 0; j < T; ++j) {
      const Var term = tape_.scale(psi[static_cast<std::size_t>(j)], spec_.stage_weights[static_cast<std::size_t>(j)]);
      per_subject = j == 0 ? term : tape_.add(per_subject, term);
    }
  } else {
    Var count = psi[0];
    for (int j = 1; j < T; ++j) count = tape_.add(count, psi[static_cast<std::size_t>(j)]);
    const double sigma = spec_.params.sigma;
    for (int k = 0; k <= T; ++k) {
      const double phi = spec_.scale[static_cast<std::size_t>(k)];
      if (phi == 0.0) continue;
      const Var gauss = tape_.exp(tape_.scale(tape_.square(tape_.add_const(count, -k)), -1.0 / sigma));
      const Var term = tape_.scale(gauss, phi);
      per_subject = per_subject.valid() ? tape_.add(per_subject, term) : term;
    }
  }
  tape_.scale(tape_.sum(tape_.mul(weights_, per_subject)), 1.0 / rows);
}

void SurrogateObjective::assign(const PolicyNet& net, const SurrogateData& data, double lambda) {
  if (data.n() != rows_ || data.T() != static_cast<int>(histories_.size())) {
    throw ShapeError("surrogate objective built for " + std::to_string(rows_) + " rows and T=" +
                     std::to_string(histories_.size()) + ", got " + std::to_string(data.n()) +
                     " rows and T=" + std::to_string(data.T()));
  }
  tape_.set(lambda_, Matrix::Constant(1, 1, lambda));
  tape_.set(weights_, data.weights);
  for (std::size_t j = 0; j < histories_.size(); ++j) {
    tape_.set(histories_[j], data.histories[j]);
    tape_.set(actions_[j], data.actions.col(static_cast<Eigen::Index>(j)));
  }
  const auto params = net.parameters();
  if (params.size() != params_.size()) throw ShapeError("policy layout differs from the objective's");
  for (std::size_t k = 0; k < params.size(); ++k) tape_.set(params_[k], *params[k]);
}

double SurrogateObjective::evaluate(const PolicyNet& net, const SurrogateData& data, double lambda,
                                    std::vector<Matrix>* gradient) {
  assign(net, data, lambda);
  tape_.forward();
  const double value = tape_.value(tape_.last())(0, 0);
  if (gradient) {
    tape_.backward();
    gradient->resize(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) (*gradient)[k] = tape_.grad(params_[k]);
  }
  return value;
}

std::vector<Matrix> SurrogateObjective::leaf_values(const PolicyNet& net, const SurrogateData& data,
                                                    double lambda) const {
  std::vector<Matrix> out;
  out.push_back(Matrix::Constant(1, 1, lambda));
  out.push_back(data.weights);
  const auto params = net.parameters();
  std::size_t k = 0;
  for (int j = 0; j < data.T(); ++j) {
    out.push_back(data.histories[static_cast<std::size_t>(j)]);
    out.push_back(data.actions.col(j));
    for (std::size_t m = 0; m < net.stage_parameters(j).size(); ++m) out.push_back(*params[k++]);
  }
  return out;
}

namespace {

ObjectiveValue exact_objective(const Dataset& ds, const PolicyNet& net, const HistoryEncoder& encoder,
                               SurrogateSpec spec, double lambda) {
  const SurrogateData data = make_surrogate_data(ds, encoder, ds.propensities(), RewardTransform::None, false);
  SurrogateObjective obj(net, std::move(spec), ds.n());
  ObjectiveValue out;
  out.value = obj.evaluate(net, data, lambda, &out.gradient);
  return out;
}

}  // namespace

ObjectiveValue swl_surrogate_objective(const Dataset& ds, const PolicyNet& net,
                                       const HistoryEncoder& encoder, const StageWeights& weights,
                                       double lambda) {
  SurrogateParams params;
  params.lambda = lambda;
  return exact_objective(ds, net, encoder, SurrogateSpec::swl(weights, params), lambda);
}

ObjectiveValue kipwl_surrogate_objective(const Dataset& ds, const PolicyNet& net,
                                         const HistoryEncoder& encoder, const MatchScale& scale,
                                         double lambda, double sigma) {
  SurrogateParams params{lambda, sigma};
  return exact_objective(ds, net, encoder, SurrogateSpec::kipwl(scale, params), lambda);
}

}  // namespace swl

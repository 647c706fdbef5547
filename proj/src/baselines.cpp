#include "swl/baselines.hpp"

#include <Eigen/QR>

namespace swl {

QModel::QModel(std::vector<Vector> coefficients, std::vector<std::string> warnings)
    : coef_(std::move(coefficients)), warnings_(std::move(warnings)) {}

Matrix q_design(const Matrix& histories, const Vector& actions) {
  const Eigen::Index n = histories.rows();
  const Eigen::Index d = histories.cols();
  Matrix Z(n, 2 * d + 2);
  Z.col(0).setOnes();
  Z.middleCols(1, d) = histories;
  Z.col(d + 1) = actions;
  Z.rightCols(d) = histories.array().colwise() * actions.array();
  return Z;
}

Vector QModel::q_values(int stage, const Matrix& histories, int action) const {
  const Vector& beta = coefficients(stage);
  if (2 * histories.cols() + 2 != beta.size()) throw ShapeError("Q model and history width disagree");
  return q_design(histories, Vector::Constant(histories.rows(), action)) * beta;
}

Vector QModel::contrast(int stage, const Matrix& histories) const {
  const Vector& beta = coefficients(stage);
  const Eigen::Index d = histories.cols();
  if (2 * d + 2 != beta.size()) throw ShapeError("Q model and history width disagree");
  return 2.0 * ((histories * beta.tail(d)).array() + beta(d + 1)).matrix();
}

nlohmann::json QModel::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const Vector& b : coef_) stages.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  return {{"coefficients", stages}, {"warnings", warnings_}};
}

QModel QModel::from_json(const nlohmann::json& j) {
  std::vector<Vector> coef;
  for (const auto& s : j.at("coefficients")) {
    const auto v = s.get<std::vector<double>>();
    coef.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return QModel(std::move(coef), j.value("warnings", std::vector<std::string>{}));
}

QModel fit_q_learning(const Dataset& ds, const HistoryEncoder& encoder, const QOptions& options) {
  const Panel panel = ds.panel();
  const int T = ds.T();
  const bool immediate = options.use_immediate_rewards && ds.has_immediate_rewards();
  std::vector<Vector> coef(static_cast<std::size_t>(T));
  std::vector<std::string> warnings;

  Vector future = Vector::Zero(ds.n());  // max_a Q_{j+1}(H_{j+1}, a)
  for (int j = T - 1; j >= 0; --j) {
    Vector y(ds.n());
    if (immediate) {
      for (int i = 0; i < ds.n(); ++i) {
        y(i) = (*ds[static_cast<std::size_t>(i)].immediate_rewards)[static_cast<std::size_t>(j)] + future(i);
      }
    } else {
      y = j == T - 1 ? ds.rewards() : future;
    }
    const Matrix H = encoder.encode(panel, j);
    const Eigen::MatrixXd Z = q_design(H, panel.actions.col(j));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    Vector beta;
    if (qr.rank() == Z.cols()) {
      beta = qr.solve(y);
    } else {
      Eigen::MatrixXd G = Z.transpose() * Z;
      G.diagonal().array() += 1e-6 * std::max(1.0, G.diagonal().maxCoeff());
      beta = G.ldlt().solve(Z.transpose() * y);
      warnings.push_back("stage " + std::to_string(j + 1) + ": rank-deficient design (rank " +
                         std::to_string(qr.rank()) + " of " + std::to_string(Z.cols()) +
                         "), ridge fallback");
    }
    coef[static_cast<std::size_t>(j)] = beta;
    const QModel partial({beta});
    future = partial.q_values(0, H, 1).cwiseMax(partial.q_values(0, H, -1));
  }
  return QModel(std::move(coef), std::move(warnings));
}

QRegime::QRegime(QModel model, std::shared_ptr<const HistoryEncoder> encoder)
    : model_(std::move(model)), encoder_(std::move(encoder)) {
  if (!encoder_) throw ValidationError("Q regime needs an encoder");
}

std::vector<int> QRegime::decide(const Panel& panel, int stage) const {
  const Vector c = model_.contrast(stage, encoder_->encode(panel, stage));
  std::vector<int> out(static_cast<std::size_t>(c.size()));
  for (Eigen::Index i = 0; i < c.size(); ++i) out[static_cast<std::size_t>(i)] = sign_decision(c(i));
  return out;
}

PolicyFit fit_full_matching_ipwe(const Dataset& ds, const HistoryEncoder& encoder,
                                 const Matrix& propensities, const PolicyTrainOptions& options) {
  return train_policy(ds, encoder, propensities,
                      PolicyObjective::kipwl(MatchScale::degenerate(ds.T(), ds.T())), options);
}

}  // namespace swl

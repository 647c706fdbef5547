#include "swl/stage_importance.hpp"

#include <algorithm>
#include <cmath>

#include "swl/random.hpp"
#include "swl/serialization.hpp"

namespace swl {

void ImportanceArch::validate() const {
  if (input_dim < 2) throw ValidationError("importance net input_dim must be at least 2");
  if (hidden < 1) throw ValidationError("importance net hidden size must be positive");
}

void ImportancePenalty::validate() const {
  if (!(head >= 0.0) || !(lstm >= 0.0) || !std::isfinite(head) || !std::isfinite(lstm)) {
    throw ValidationError("importance penalties must be finite and nonnegative");
  }
}

void to_json(nlohmann::json& j, const ImportanceArch& a) {
  j = {{"input_dim", a.input_dim}, {"hidden", a.hidden}};
}

void from_json(const nlohmann::json& j, ImportanceArch& a) {
  a.input_dim = j.value("input_dim", a.input_dim);
  a.hidden = j.value("hidden", a.hidden);
}

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * normal(rng);
  return m;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-std::clamp(v, -numgrad::kExpClamp, numgrad::kExpClamp))); }

}  // namespace

ImportanceNet::ImportanceNet(int T, ImportanceArch arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  if (T < 1) throw ValidationError("importance net needs T >= 1");
  Rng rng(seed);
  const int h = arch_.hidden;
  Wx = gaussian(rng, arch_.input_dim, 4 * h, 1.0 / std::sqrt(arch_.input_dim));
  Wh = gaussian(rng, h, 4 * h, 1.0 / std::sqrt(h));
  b = Matrix::Zero(1, 4 * h);
  b.middleCols(h, h).setOnes();  // forget gate
  raw_.assign(static_cast<std::size_t>(T), Matrix::Ones(1, 1));
  for (int j = 0; j < T; ++j) V.push_back(gaussian(rng, h + arch_.input_dim, 1, 0.1));
  c = Matrix::Zero(1, 1);
}

std::vector<Matrix*> ImportanceNet::parameters() {
  std::vector<Matrix*> out{&Wx, &Wh, &b};
  for (Matrix& w : raw_) out.push_back(&w);
  for (Matrix& v : V) out.push_back(&v);
  out.push_back(&c);
  return out;
}

std::vector<const Matrix*> ImportanceNet::parameters() const {
  std::vector<const Matrix*> out{&Wx, &Wh, &b};
  for (const Matrix& w : raw_) out.push_back(&w);
  for (const Matrix& v : V) out.push_back(&v);
  out.push_back(&c);
  return out;
}

std::vector<double> ImportanceNet::raw_weights() const {
  std::vector<double> out;
  for (const Matrix& w : raw_) out.push_back(w(0, 0));
  return out;
}

void ImportanceNet::set_raw_weights(const std::vector<double>& w) {
  if (w.size() != raw_.size()) throw ShapeError("raw weight count does not match T");
  for (std::size_t j = 0; j < w.size(); ++j) raw_[j](0, 0) = w[j];
}

std::vector<Matrix> ImportanceNet::hidden_states(const Panel& panel, int stage) const {
  if (panel.p + 1 != arch_.input_dim) {
    throw ShapeError("importance net expects p=" + std::to_string(arch_.input_dim - 1) +
                     ", panel has p=" + std::to_string(panel.p));
  }
  if (stage < 0 || stage >= panel.T) throw ValidationError("stage out of range");
  const int h = arch_.hidden;
  const Eigen::Index n = panel.n;
  Matrix hs = Matrix::Zero(n, h);
  Matrix cs = Matrix::Zero(n, h);
  Matrix x(n, arch_.input_dim);
  std::vector<Matrix> out;
  for (int j = 0; j <= stage; ++j) {
    x.leftCols(panel.p) = panel.covariates[static_cast<std::size_t>(j)];
    x.col(panel.p) = j == 0 ? Vector::Zero(n) : Vector(panel.actions.col(j - 1));
    Matrix z = x * Wx + hs * Wh;
    z.rowwise() += b.row(0);
    const Matrix i = z.leftCols(h).unaryExpr(&sigmoid);
    const Matrix f = z.middleCols(h, h).unaryExpr(&sigmoid);
    const Matrix o = z.middleCols(2 * h, h).unaryExpr(&sigmoid);
    const Matrix g = z.rightCols(h).array().tanh();
    cs = f.cwiseProduct(cs) + i.cwiseProduct(g);
    hs = o.cwiseProduct(Matrix(cs.array().tanh()));
    out.push_back(hs);
  }
  return out;
}

Matrix ImportanceNet::stage_rewards(const Panel& panel) const {
  if (panel.T != T()) throw ShapeError("importance net and panel disagree on T");
  const auto hs = hidden_states(panel, panel.T - 1);
  const int h = arch_.hidden;
  Matrix out(panel.n, panel.T);
  for (int j = 0; j < panel.T; ++j) {
    const auto s = static_cast<std::size_t>(j);
    const Matrix& v = V[s];
    out.col(j) = raw_[s](0, 0) * (hs[s] * v.topRows(h) + panel.covariates[s] * v.middleRows(h, panel.p) +
                                  panel.actions.col(j) * v(h + panel.p, 0));
  }
  return out;
}

Vector ImportanceNet::predict_total(const Panel& panel) const {
  const Vector total = stage_rewards(panel).rowwise().sum().array() + c(0, 0) * T();
  return total.array() * target_scale + target_mean;
}

nlohmann::json ImportanceNet::to_json() const {
  nlohmann::json heads = nlohmann::json::array();
  for (const Matrix& v : V) heads.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return {{"T", T()},
          {"arch", arch_},
          {"raw_weights", raw_weights()},
          {"target_mean", target_mean},
          {"target_scale", target_scale},
          {"lstm", {{"Wx", matrix_to_json(Wx)}, {"Wh", matrix_to_json(Wh)}, {"b", matrix_to_json(b)}}},
          {"head", {{"V", heads}, {"c", c(0, 0)}}}};
}

ImportanceNet ImportanceNet::from_json(const nlohmann::json& j) {
  ImportanceNet net(j.at("T").get<int>(), j.at("arch").get<ImportanceArch>(), 0);
  net.set_raw_weights(j.at("raw_weights").get<std::vector<double>>());
  net.target_mean = j.at("target_mean").get<double>();
  net.target_scale = j.at("target_scale").get<double>();
  auto load = [](Matrix& dst, const nlohmann::json& src) {
    Matrix m = matrix_from_json(src);
    if (m.rows() != dst.rows() || m.cols() != dst.cols()) {
      throw ValidationError("importance net parameter has the wrong shape");
    }
    dst = std::move(m);
  };
  const auto& lstm = j.at("lstm");
  load(net.Wx, lstm.at("Wx"));
  load(net.Wh, lstm.at("Wh"));
  load(net.b, lstm.at("b"));
  const auto& head = j.at("head");
  const auto& heads = head.at("V");
  if (heads.size() != net.V.size()) throw ValidationError("importance net head count does not match T");
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto v = heads[k].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != net.V[k].rows()) {
      throw ValidationError("importance net head has the wrong length");
    }
    net.V[k] = Eigen::Map<const Vector>(v.data(), net.V[k].rows());
  }
  net.c(0, 0) = head.at("c").get<double>();
  return net;
}

StageWeights normalize_raw_weights(const std::vector<double>& raw) {
  if (raw.empty()) throw ValidationError("no raw weights to normalize");
  double top = 0.0;
  for (double w : raw) top = std::max(top, std::abs(w));
  std::vector<double> out;
  double total = 0.0;
  for (double w : raw) {
    out.push_back(std::exp(std::abs(w) - top));
    total += out.back();
  }
  for (double& w : out) w /= total;
  return StageWeights(std::move(out));
}

StageWeights normalize_weights(const ImportanceNet& net) { return normalize_raw_weights(net.raw_weights()); }

// ------------------------------------------------------------------ loss tape

ImportanceLoss::ImportanceLoss(const ImportanceNet& layout, int rows, int p, ImportancePenalty penalty)
    : rows_(rows) {
  penalty.validate();
  using numgrad::Var;
  const int T = layout.T();
  const int h = layout.arch().hidden;
  if (p + 1 != layout.arch().input_dim) throw ShapeError("importance loss: covariate dimension mismatch");
  target_ = tape_.input(rows, 1, "R");
  zero_ = tape_.input(rows, 1, "A0");
  for (int j = 0; j < T; ++j) {
    covariates_.push_back(tape_.input(rows, p, "X" + std::to_string(j + 1)));
    actions_.push_back(tape_.input(rows, 1, "A" + std::to_string(j + 1)));
  }
  auto param = [&](const Matrix& m, const std::string& name) {
    params_.push_back(tape_.parameter(m.rows(), m.cols(), name));
    return params_.back();
  };
  const Var Wx = param(layout.Wx, "lstm.Wx");
  const Var Wh = param(layout.Wh, "lstm.Wh");
  const Var bias = param(layout.b, "lstm.b");
  std::vector<Var> raw;
  for (int j = 0; j < T; ++j) raw.push_back(param(Matrix::Zero(1, 1), "w" + std::to_string(j + 1)));
  std::vector<Var> heads;
  for (int j = 0; j < T; ++j) heads.push_back(param(layout.V[static_cast<std::size_t>(j)], "V" + std::to_string(j + 1)));
  const Var offset = param(layout.c, "c");

  Var hprev, cprev, total;
  for (int j = 0; j < T; ++j) {
    const Var x = tape_.hconcat(covariates_[static_cast<std::size_t>(j)],
                                j == 0 ? zero_ : actions_[static_cast<std::size_t>(j - 1)]);
    Var z = tape_.matmul(x, Wx);
    if (j > 0) z = tape_.add(z, tape_.matmul(hprev, Wh));
    z = tape_.add_row(z, bias);
    const Var i = tape_.sigmoid(tape_.cols(z, 0, h));
    const Var f = tape_.sigmoid(tape_.cols(z, h, h));
    const Var o = tape_.sigmoid(tape_.cols(z, 2 * h, h));
    const Var g = tape_.tanh(tape_.cols(z, 3 * h, h));
    const Var c = j == 0 ? tape_.mul(i, g) : tape_.add(tape_.mul(f, cprev), tape_.mul(i, g));
    const Var hs = tape_.mul(o, tape_.tanh(c));
    const Var u = tape_.hconcat(tape_.hconcat(hs, covariates_[static_cast<std::size_t>(j)]),
                                actions_[static_cast<std::size_t>(j)]);
    const Var r = tape_.scale_by(tape_.matmul(u, heads[static_cast<std::size_t>(j)]),
                                 raw[static_cast<std::size_t>(j)]);
    total = j == 0 ? r : tape_.add(total, r);
    hprev = hs;
    cprev = c;
  }
  total = tape_.add_row(total, tape_.scale(offset, T));
  const Var mse = tape_.scale(tape_.sum(tape_.square(tape_.sub(target_, total))), 1.0 / rows);
  auto l2 = [&](Var acc, Var v) { return tape_.add(acc, tape_.sum(tape_.square(v))); };
  Var lstm = tape_.sum(tape_.square(Wx));
  lstm = l2(l2(lstm, Wh), bias);
  Var head = tape_.sum(tape_.square(raw[0]));
  for (int j = 1; j < T; ++j) head = l2(head, raw[static_cast<std::size_t>(j)]);
  for (const Var& v : heads) head = l2(head, v);
  tape_.add(mse, tape_.add(tape_.scale(lstm, penalty.lstm), tape_.scale(head, penalty.head)));
}

void ImportanceLoss::assign(const ImportanceNet& net, const Panel& panel, const Vector& target) {
  if (panel.n != rows_ || panel.T != static_cast<int>(covariates_.size()) || target.size() != rows_) {
    throw ShapeError("importance loss built for " + std::to_string(rows_) + " rows and T=" +
                     std::to_string(covariates_.size()));
  }
  tape_.set(target_, target);
  tape_.set(zero_, Matrix::Zero(rows_, 1));
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    tape_.set(covariates_[j], panel.covariates[j]);
    tape_.set(actions_[j], panel.actions.col(static_cast<Eigen::Index>(j)));
  }
  const auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) tape_.set(params_[k], *params[k]);
}

double ImportanceLoss::evaluate(const ImportanceNet& net, const Panel& panel, const Vector& target,
                                std::vector<Matrix>* gradient) {
  assign(net, panel, target);
  tape_.forward();
  const double v = tape_.value(tape_.last())(0, 0);
  if (gradient) {
    tape_.backward();
    gradient->resize(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) (*gradient)[k] = tape_.grad(params_[k]);
  }
  return v;
}

std::vector<Matrix> ImportanceLoss::leaf_values(const ImportanceNet& net, const Panel& panel,
                                                const Vector& target) const {
  std::vector<Matrix> out{target, Matrix::Zero(rows_, 1)};
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    out.push_back(panel.covariates[j]);
    out.push_back(panel.actions.col(static_cast<Eigen::Index>(j)));
  }
  for (const Matrix* m : net.parameters()) out.push_back(*m);
  return out;
}

// ------------------------------------------------------------------ training

void to_json(nlohmann::json& j, const ImportanceOptions& o) {
  j = {{"hidden", o.arch.hidden},
       {"train", o.train},
       {"penalty", {{"head", o.penalty.head}, {"lstm", o.penalty.lstm}}},
       {"gradient_check", o.gradient_check}};
}

void from_json(const nlohmann::json& j, ImportanceOptions& o) {
  o.arch.hidden = j.value("hidden", o.arch.hidden);
  if (j.contains("train")) j.at("train").get_to(o.train);
  if (j.contains("penalty")) {
    o.penalty.head = j.at("penalty").value("head", o.penalty.head);
    o.penalty.lstm = j.at("penalty").value("lstm", o.penalty.lstm);
  }
  o.gradient_check = j.value("gradient_check", o.gradient_check);
}

namespace {

Panel panel_rows(const Panel& panel, const std::vector<std::size_t>& idx) {
  Panel out = Panel::zeros(static_cast<int>(idx.size()), panel.T, panel.p);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(idx[r]);
    const auto row = static_cast<Eigen::Index>(r);
    for (int t = 0; t < panel.T; ++t) {
      out.covariates[static_cast<std::size_t>(t)].row(row) = panel.covariates[static_cast<std::size_t>(t)].row(i);
    }
    out.actions.row(row) = panel.actions.row(i);
  }
  return out;
}

Vector vector_rows(const Vector& v, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(static_cast<Eigen::Index>(idx[r]));
  return out;
}

}  // namespace

ImportanceFit train_importance(const Dataset& ds, const ImportanceOptions& options) {
  if (ds.T() < 2) throw ValidationError("stage importance needs T >= 2");
  options.train.validate();
  options.penalty.validate();
  ImportanceArch arch = options.arch;
  arch.input_dim = ds.p() + 1;

  ImportanceFit fit;
  fit.net = ImportanceNet(ds.T(), arch, derive_seed(options.train.seed, 1));
  const Vector R = ds.rewards();
  const double mean = R.mean();
  const double var = (R.array() - mean).square().mean();
  fit.net.target_mean = mean;
  fit.net.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Vector target = (R.array() - mean) / fit.net.target_scale;
  const Panel panel = ds.panel();

  if (options.gradient_check) {
    const int probe = std::min(3, ds.n());
    std::vector<std::size_t> rows;
    for (int i = 0; i < probe; ++i) rows.push_back(static_cast<std::size_t>(i));
    ImportanceLoss check(fit.net, probe, ds.p(), options.penalty);
    const auto inputs = check.leaf_values(fit.net, panel_rows(panel, rows), vector_rows(target, rows));
    const auto report = numgrad::finite_difference_check(check.tape(), inputs, 1e-4);
    if (!report.passed()) {
      throw Error("importance gradient check failed, max relative error " +
                  std::to_string(report.max_rel_error));
    }
  }

  const int n = ds.n();
  const int batch = options.train.batch_size == 0 || options.train.batch_size >= n ? n : options.train.batch_size;
  ImportanceLoss loss(fit.net, batch, ds.p(), options.penalty);
  numgrad::Adam adam(fit.net.parameters(), {.learning_rate = options.train.learning_rate});
  const LossFn fn = [&](const std::vector<std::size_t>* rows, int, std::vector<Matrix>* grad) {
    if (!rows) return loss.evaluate(fit.net, panel, target, grad);
    return loss.evaluate(fit.net, panel_rows(panel, *rows), vector_rows(target, *rows), grad);
  };
  OptimizeResult r = run_adam(n, options.train, adam, fn, true, "importance network");
  fit.trace = std::move(r.trace);
  fit.iterations = r.iterations;
  fit.reached_tolerance = r.reached_tolerance;
  fit.mse = (fit.net.predict_total(panel) - R).squaredNorm() / n;
  return fit;
}

// ------------------------------------------------------------------ encoders

LstmEncoder::LstmEncoder(std::shared_ptr<const ImportanceNet> net, bool with_covariates)
    : net_(std::move(net)), with_covariates_(with_covariates) {
  if (!net_) throw ValidationError("LSTM encoder needs a network");
}

Matrix LstmEncoder::encode(const Panel& panel, int stage) const {
  Matrix h = net_->hidden_states(panel, stage).back();
  if (!with_covariates_) return h;
  const Matrix& x = panel.covariates.at(static_cast<std::size_t>(stage));
  Matrix out(h.rows(), h.cols() + x.cols());
  out << h, x;
  return out;
}

nlohmann::json LstmEncoder::to_json() const {
  return {{"kind", "lstm"}, {"with_covariates", with_covariates_}, {"net", net_->to_json()}};
}

std::shared_ptr<const HistoryEncoder> encoder_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "concat") {
    return std::make_shared<ConcatEncoder>(j.at("T").get<int>(), j.at("p").get<int>(),
                                           j.value("window", 0));
  }
  if (kind == "lstm") {
    return std::make_shared<LstmEncoder>(
        std::make_shared<const ImportanceNet>(ImportanceNet::from_json(j.at("net"))),
        j.value("with_covariates", true));
  }
  throw ValidationError("unknown encoder kind '" + kind + "'");
}

}  // namespace swl

#include "swl/policy_net.hpp"

#include <cmath>

#include "swl/random.hpp"
#include "swl/serialization.hpp"

namespace swl {

std::string to_string(PolicyKind k) { return k == PolicyKind::Linear ? "linear" : "nonlinear"; }

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "linear") return PolicyKind::Linear;
  if (s == "nonlinear") return PolicyKind::Nonlinear;
  throw ValidationError("unknown policy kind '" + s + "' (expected linear or nonlinear)");
}

std::size_t PolicyArch::parameter_count() const {
  std::size_t total = 0;
  int in = input_dim;
  for (int l = 0; l < hidden_layers(); ++l) {
    total += static_cast<std::size_t>(in + 1) * static_cast<std::size_t>(width);
    in = width;
  }
  return total + static_cast<std::size_t>(in) + 1;
}

void PolicyArch::validate() const {
  if (input_dim < 1) throw ValidationError("policy input_dim must be positive");
  if (kind == PolicyKind::Nonlinear && (width < 1 || depth < 1)) {
    throw ValidationError("nonlinear policy needs width >= 1 and depth >= 1");
  }
}

void to_json(nlohmann::json& j, const PolicyArch& a) {
  j = {{"kind", to_string(a.kind)}, {"input_dim", a.input_dim}, {"width", a.width}, {"depth", a.depth}};
}

void from_json(const nlohmann::json& j, PolicyArch& a) {
  a.kind = parse_policy_kind(j.value("kind", std::string("nonlinear")));
  a.input_dim = j.value("input_dim", a.input_dim);
  a.width = j.value("width", a.width);
  a.depth = j.value("depth", a.depth);
}

PolicyNet::PolicyNet(int T, PolicyArch arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  if (T < 1) throw ValidationError("policy needs T >= 1");
  Rng rng(seed);
  layers_.resize(static_cast<std::size_t>(T));
  for (auto& stage : layers_) {
    int in = arch_.input_dim;
    auto add_layer = [&](int out) {
      Matrix w(in, out);
      const double sd = 1.0 / std::sqrt(static_cast<double>(in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal(rng);
      stage.push_back(std::move(w));
      stage.push_back(Matrix::Zero(1, out));
      in = out;
    };
    for (int l = 0; l < arch_.hidden_layers(); ++l) add_layer(arch_.width);
    add_layer(1);
  }
}

std::vector<Matrix*> PolicyNet::parameters() {
  std::vector<Matrix*> out;
  for (auto& stage : layers_) {
    for (auto& m : stage) out.push_back(&m);
  }
  return out;
}

std::vector<const Matrix*> PolicyNet::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& stage : layers_) {
    for (const auto& m : stage) out.push_back(&m);
  }
  return out;
}

Vector PolicyNet::score(int stage, const Matrix& histories) const {
  const auto& layer = stage_parameters(stage);
  if (histories.cols() != arch_.input_dim) {
    throw ShapeError("policy stage " + std::to_string(stage + 1) + " expects " +
                     std::to_string(arch_.input_dim) + " history columns, got " +
                     std::to_string(histories.cols()));
  }
  Matrix h = histories;
  const std::size_t n_layers = layer.size() / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix z = h * layer[2 * l];
    z.rowwise() += layer[2 * l + 1].row(0);
    h = l + 1 < n_layers ? Matrix(z.array().tanh()) : z;
  }
  return h.col(0);
}

numgrad::Var PolicyNet::build(numgrad::Tape& tape, int stage, numgrad::Var histories,
                              std::vector<numgrad::Var>& params) const {
  const auto& layer = stage_parameters(stage);
  const std::size_t n_layers = layer.size() / 2;
  numgrad::Var h = histories;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string tag = "f" + std::to_string(stage + 1) + ".l" + std::to_string(l);
    numgrad::Var w = tape.parameter(layer[2 * l].rows(), layer[2 * l].cols(), tag + ".W");
    numgrad::Var b = tape.parameter(1, layer[2 * l + 1].cols(), tag + ".b");
    params.push_back(w);
    params.push_back(b);
    h = tape.add_row(tape.matmul(h, w), b);
    if (l + 1 < n_layers) h = tape.tanh(h);
  }
  return h;
}

nlohmann::json PolicyNet::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& stage : layers_) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& m : stage) ms.push_back(matrix_to_json(m));
    stages.push_back(std::move(ms));
  }
  return {{"arch", arch_}, {"stages", std::move(stages)}};
}

PolicyNet PolicyNet::from_json(const nlohmann::json& j) {
  PolicyNet net;
  net.arch_ = j.at("arch").get<PolicyArch>();
  net.arch_.validate();
  for (const auto& stage : j.at("stages")) {
    std::vector<Matrix> ms;
    for (const auto& m : stage) ms.push_back(matrix_from_json(m));
    if (ms.size() != 2 * static_cast<std::size_t>(net.arch_.hidden_layers() + 1)) {
      throw ValidationError("policy stage has the wrong number of layers");
    }
    net.layers_.push_back(std::move(ms));
  }
  if (net.layers_.empty()) throw ValidationError("policy has no stages");
  return net;
}

PolicyRegime::PolicyRegime(PolicyNet net, std::shared_ptr<const HistoryEncoder> encoder)
    : net_(std::move(net)), encoder_(std::move(encoder)) {
  if (!encoder_) throw ValidationError("policy regime needs an encoder");
  if (encoder_->dim() != net_.arch().input_dim) {
    throw ShapeError("encoder dimension " + std::to_string(encoder_->dim()) +
                     " does not match policy input " + std::to_string(net_.arch().input_dim));
  }
}

std::vector<int> PolicyRegime::decide(const Panel& panel, int stage) const {
  const Vector f = net_.score(stage, encoder_->encode(panel, stage));
  std::vector<int> out(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) out[static_cast<std::size_t>(i)] = sign_decision(f(i));
  return out;
}

Matrix predict(const Regime& regime, const Dataset& ds) {
  if (regime.stages() != ds.T()) {
    throw ValidationError("regime has " + std::to_string(regime.stages()) +
                          " stages but the dataset has " + std::to_string(ds.T()));
  }
  const Panel panel = ds.panel();
  Matrix out(ds.n(), ds.T());
  for (int j = 0; j < ds.T(); ++j) {
    const auto d = regime.decide(panel, j);
    for (int i = 0; i < ds.n(); ++i) out(i, j) = d[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace swl

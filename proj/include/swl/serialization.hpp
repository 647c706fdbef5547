#ifndef SWL_SERIALIZATION_HPP
#define SWL_SERIALIZATION_HPP

#include <algorithm>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/numgrad.hpp"

namespace swl {

/// {"rows", "cols", "data"} with data in row-major order.
inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("matrix data length does not match its shape");
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace swl

#endif  // SWL_SERIALIZATION_HPP

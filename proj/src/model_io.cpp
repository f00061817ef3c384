#include "modesleuth/model_io.hpp"

#include <fstream>

#include "modesleuth/errors.hpp"

namespace modesleuth {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array()) throw Error(Errc::parse_error, "matrix must be an array of rows");
  const auto r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r == 0 ? 0 : static_cast<Eigen::Index>(rows.at(0).size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      throw Error(Errc::parse_error, "matrix rows must have equal length");
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& values) {
  if (!values.is_array()) throw Error(Errc::parse_error, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i].get<double>();
  return v;
}

json to_json(const ModeModel& model, const std::vector<std::string>& channel_names) {
  json doc;
  doc["format"] = kModeModelFormat;
  doc["real_rates"] = model.spec.real_rates;
  json complex_modes = json::array();
  for (const auto& c : model.spec.complex_modes) complex_modes.push_back({c.alpha, c.omega});
  doc["complex_modes"] = complex_modes;
  doc["B"] = matrix_to_json(model.shapes.b);
  doc["pins"] = model.shapes.pins;
  json packed = json::array();
  for (Eigen::Index i = 0; i < model.noise_factor.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) packed.push_back(model.noise_factor(i, j));
  }
  doc["Lambda"] = packed;
  doc["channel_means"] = vector_to_json(model.channel_means);
  doc["meas_noise"] = vector_to_json(model.meas_noise);
  if (!channel_names.empty()) doc["channel_names"] = channel_names;
  return doc;
}

ModeModel mode_model_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != kModeModelFormat) {
      throw Error(Errc::parse_error, std::string("model document must declare \"format\": \"") + kModeModelFormat + "\"");
    }
    ModeModel model;
    model.spec.real_rates = doc.at("real_rates").get<std::vector<double>>();
    for (const auto& pair : doc.at("complex_modes")) {
      if (!pair.is_array() || pair.size() != 2) throw Error(Errc::parse_error, "complex_modes entries are [alpha, omega]");
      model.spec.complex_modes.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    const Eigen::Index n = model.spec.dimension();
    model.shapes.b = matrix_from_json(doc.at("B"));
    if (model.shapes.b.rows() > 0 && model.shapes.b.cols() != n) {
      throw Error(Errc::parse_error, "B must have one column per mode coordinate");
    }
    if (n == 0) {
      const auto m = static_cast<Eigen::Index>(doc.at("channel_means").size());
      model.shapes.b = Matrix::Zero(m, 0);
    }
    model.shapes.pins = doc.at("pins").get<std::vector<int>>();
    const auto packed = doc.at("Lambda").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(packed.size()) != n * (n + 1) / 2) {
      throw Error(Errc::parse_error, "Lambda must hold N(N+1)/2 packed lower-triangular entries");
    }
    model.noise_factor = Matrix::Zero(n, n);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) model.noise_factor(i, j) = packed[at++];
    }
    model.channel_means = vector_from_json(doc.at("channel_means"));
    model.meas_noise = vector_from_json(doc.at("meas_noise"));
    validate(model);
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("malformed model document: ") + e.what());
  }
}

std::vector<std::string> channel_names_from_json(const json& doc) {
  if (doc.contains("channel_names")) return doc.at("channel_names").get<std::vector<std::string>>();
  std::vector<std::string> names;
  const std::size_t m = doc.contains("channel_means") ? doc.at("channel_means").size() : 0;
  for (std::size_t i = 0; i < m; ++i) names.push_back("y" + std::to_string(i));
  return names;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_input, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::invalid_input, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace modesleuth

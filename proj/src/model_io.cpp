// SPDX-License-Identifier: Apache-2.0
#include "qrnn/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qrnn/error.hpp"

namespace qrnn {

using nlohmann::json;

namespace {

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return rows;
}

json vector_of(const Matrix& m) {
  auto v = m.values();
  return json(std::vector<double>(v.begin(), v.end()));
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key, "missing field");
  return *it;
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_unsigned()) throw ParseError(path + "." + key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double read_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path, "expected a number");
  return v.get<double>();
}

void read_vector_into(const json& v, const std::string& path, Matrix& dst) {
  if (!v.is_array()) throw ParseError(path, "expected an array");
  if (v.size() != dst.size())
    throw ParseError(path, "expected " + std::to_string(dst.size()) + " entries, found " + std::to_string(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) dst.data()[k] = read_number(v[k], path + "[" + std::to_string(k) + "]");
}

void read_rows_into(const json& v, const std::string& path, Matrix& dst) {
  if (!v.is_array() || v.size() != dst.rows())
    throw ParseError(path, "expected " + std::to_string(dst.rows()) + " rows");
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    const json& row = v[r];
    if (!row.is_array() || row.size() != dst.cols())
      throw ParseError(rp, "expected " + std::to_string(dst.cols()) + " columns");
    for (std::size_t c = 0; c < dst.cols(); ++c)
      dst(r, c) = read_number(row[c], rp + "[" + std::to_string(c) + "]");
  }
}

std::vector<double> read_doubles(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError(path, "expected an array");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(read_number(v[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

json objective_json(const Objective& o) {
  json j = {{"loss", to_string(o.kind)}};
  switch (o.kind) {
    case LossKind::Pinball:
    case LossKind::Marginal: j["tau"] = o.tau; break;
    case LossKind::Composite: j["taus"] = o.taus.values(); break;
    case LossKind::Geometric: j["direction"] = o.direction.values(); break;
    case LossKind::SquaredError: break;
  }
  return j;
}

Objective read_objective(const json& j, const std::string& path) {
  const json& name = field(j, "loss", path);
  if (!name.is_string()) throw ParseError(path + ".loss", "expected a string");
  try {
    switch (loss_kind_from_string(name.get<std::string>())) {
      case LossKind::Pinball: return Objective::pinball(read_number(field(j, "tau", path), path + ".tau"));
      case LossKind::Marginal: return Objective::marginal(read_number(field(j, "tau", path), path + ".tau"));
      case LossKind::Composite:
        return Objective::composite(QuantileLevels(read_doubles(field(j, "taus", path), path + ".taus")));
      case LossKind::Geometric:
        return Objective::geometric(DirectionU(read_doubles(field(j, "direction", path), path + ".direction")));
      case LossKind::SquaredError: return Objective::squared_error();
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path, e.what());
  }
  throw ParseError(path, "unknown objective");
}

}  // namespace

std::string model_to_json(const MlpModel& model, const Objective* objective) {
  json layers = json::array();
  for (const Layer& l : model.layers()) {
    json j = {{"type", to_string(l.spec.kind)}};
    switch (l.spec.kind) {
      case LayerKind::Linear:
        j["in"] = l.spec.in;
        j["out"] = l.spec.out;
        j["w"] = matrix_rows(l.weight);
        j["b"] = vector_of(l.bias);
        break;
      case LayerKind::BatchNorm:
        j["width"] = l.spec.in;
        j["gamma"] = vector_of(l.gamma);
        j["beta"] = vector_of(l.beta);
        j["running_mean"] = vector_of(l.running_mean);
        j["running_var"] = vector_of(l.running_var);
        break;
      case LayerKind::Dropout:
        j["rate"] = l.spec.rate;
        break;
      case LayerKind::ReLU:
        break;
    }
    layers.push_back(std::move(j));
  }
  json doc = {{"version", kModelFormatVersion},
              {"input_dim", model.input_dim()},
              {"output_dim", model.output_dim()},
              {"layers", std::move(layers)}};
  if (objective != nullptr) doc["objective"] = objective_json(*objective);
  return doc.dump(1);
}

ModelFile model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("$", e.what());
  }
  const std::string root = "$";
  const json& version = field(doc, "version", root);
  if (!version.is_number_integer()) throw ParseError("$.version", "expected an integer");
  if (version.get<long>() != kModelFormatVersion)
    throw VersionError("model file version " + std::to_string(version.get<long>()) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");

  const json& layers = field(doc, "layers", root);
  if (!layers.is_array()) throw ParseError("$.layers", "expected an array");
  std::vector<LayerSpec> spec;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string path = "$.layers[" + std::to_string(i) + "]";
    const json& type = field(layers[i], "type", path);
    if (!type.is_string()) throw ParseError(path + ".type", "expected a string");
    const std::string t = type.get<std::string>();
    if (t == "linear") {
      spec.push_back(LayerSpec::linear(read_count(layers[i], "in", path), read_count(layers[i], "out", path)));
    } else if (t == "batchnorm") {
      spec.push_back(LayerSpec::batch_norm(read_count(layers[i], "width", path)));
    } else if (t == "relu") {
      spec.push_back(LayerSpec::relu());
    } else if (t == "dropout") {
      spec.push_back(LayerSpec::dropout(read_number(field(layers[i], "rate", path), path + ".rate")));
    } else {
      throw ParseError(path + ".type", "unknown layer type '" + t + "'");
    }
  }

  ModelFile file;
  try {
    file.model = MlpModel(std::move(spec));
  } catch (const std::invalid_argument& e) {
    throw ParseError("$.layers", e.what());
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string path = "$.layers[" + std::to_string(i) + "]";
    Layer& l = file.model.layers()[i];
    if (l.spec.kind == LayerKind::Linear) {
      read_rows_into(field(layers[i], "w", path), path + ".w", l.weight);
      read_vector_into(field(layers[i], "b", path), path + ".b", l.bias);
    } else if (l.spec.kind == LayerKind::BatchNorm) {
      read_vector_into(field(layers[i], "gamma", path), path + ".gamma", l.gamma);
      read_vector_into(field(layers[i], "beta", path), path + ".beta", l.beta);
      read_vector_into(field(layers[i], "running_mean", path), path + ".running_mean", l.running_mean);
      read_vector_into(field(layers[i], "running_var", path), path + ".running_var", l.running_var);
      for (double v : l.running_var.values())
        if (!(v > 0.0)) throw ParseError(path + ".running_var", "entries must be positive");
    }
  }
  if (read_count(doc, "input_dim", root) != file.model.input_dim())
    throw ParseError("$.input_dim", "does not match the first layer");
  if (read_count(doc, "output_dim", root) != file.model.output_dim())
    throw ParseError("$.output_dim", "does not match the last layer");
  if (auto it = doc.find("objective"); it != doc.end()) file.objective = read_objective(*it, "$.objective");
  file.model.set_mode(Mode::Eval);
  return file;
}

void save_model(const MlpModel& model, const std::filesystem::path& path, const Objective* objective) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << model_to_json(model, objective) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

Matrix decode_output(const Matrix& raw, const std::optional<Objective>& objective) {
  if (objective && objective->kind == LossKind::Composite) return composite_predict(raw);
  return raw;
}

}  // namespace qrnn

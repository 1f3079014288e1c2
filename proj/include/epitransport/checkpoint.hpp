#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "epitransport/common.hpp"
#include "epitransport/model.hpp"

namespace epitransport::checkpoint {

using json = nlohmann::ordered_json;

constexpr const char* kFormat = "epitransport-checkpoint";
constexpr int kVersion = 1;

/// Serializes parameters to the portable checkpoint document: a version
/// field, the resolved config echo, model dimensions, and one base64-encoded
/// little-endian f64 buffer per named parameter.
inline json to_json(const model::ModelParams& params, const json& model_meta, const json& config_echo,
                    const std::string& config_hash) {
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["config_hash"] = config_hash;
  doc["config"] = config_echo;
  doc["model"] = model_meta;
  json buffers = json::object();
  params.for_each([&buffers](const char* name, const Eigen::MatrixXd& m) {
    json entry;
    entry["rows"] = m.rows();
    entry["cols"] = m.cols();
    // Row-major element order, independent of Eigen's internal layout.
    std::vector<double> values;
    values.reserve(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
    entry["data"] = encode_f64_le(values.data(), values.size());
    buffers[name] = entry;
  });
  doc["params"] = buffers;
  return doc;
}

struct Checkpoint {
  model::ModelParams params;
  json doc;

  int regions() const { return doc.at("model").at("regions").get<int>(); }
  int hidden() const { return doc.at("model").at("hidden").get<int>(); }
  int window() const { return doc.at("model").at("window").get<int>(); }
  int latent_samples() const { return doc.at("model").at("latent_samples").get<int>(); }
};

inline Checkpoint from_json(const json& doc) {
  if (!doc.contains("format") || doc.at("format") != kFormat)
    throw_data("not an epitransport checkpoint");
  if (doc.at("version").get<int>() != kVersion)
    throw_data("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.doc = doc;
  const int n = doc.at("model").at("regions").get<int>();
  const int h = doc.at("model").at("hidden").get<int>();
  ckpt.params = model::ModelParams::init(n, h, 0);
  const json& buffers = doc.at("params");
  ckpt.params.for_each([&buffers](const char* name, Eigen::MatrixXd& m) {
    if (!buffers.contains(name)) throw_data(std::string("checkpoint is missing parameter '") + name + "'");
    const json& entry = buffers.at(name);
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols())
      throw_data(std::string("checkpoint parameter '") + name + "' has unexpected shape");
    std::vector<double> values = decode_f64_le(entry.at("data").get<std::string>());
    if (static_cast<Eigen::Index>(values.size()) != rows * cols)
      throw_data(std::string("checkpoint parameter '") + name + "' has wrong buffer length");
    size_t idx = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[idx++];
  });
  return ckpt;
}

inline void save(const std::string& path, const model::ModelParams& params, const json& model_meta,
                 const json& config_echo, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw_data("cannot open checkpoint file for writing: " + path);
  out << to_json(params, model_meta, config_echo, config_hash).dump(2) << "\n";
}

inline Checkpoint load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open checkpoint file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw_data("checkpoint parse error in " + path + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace epitransport::checkpoint

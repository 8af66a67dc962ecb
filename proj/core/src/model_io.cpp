#include "graftcert/model_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "json_util.hpp"

namespace graftcert {

using nlohmann::json;

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s, const std::string& field) {
  if (s.empty()) throw ParseError(field + ": empty real");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(field + ": not a real number: '" + s + "'");
  return v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

namespace {

json activation_to_json(const Activation& a) {
  json j;
  j["kind"] = std::string(activation_tag(a.kind));
  if (a.is_grafted()) {
    j["slope"] = format_real(a.slope);
    j["intercept"] = format_real(a.intercept);
  }
  return j;
}

Activation activation_from_json(const json& j, const std::string& field) {
  const std::string kind = detail::get_string(j, "kind", field);
  if (kind == "relu") return Activation::relu();
  if (kind == "identity") return Activation::identity();
  if (kind == "grafted") {
    return Activation::grafted(detail::get_real(j, "slope", field), detail::get_real(j, "intercept", field));
  }
  throw ParseError(field + ".kind: unknown activation tag '" + kind + "'");
}

}  // namespace

std::string model_to_json(const Network& net, const GraftSet* graft) {
  json doc;
  doc["format"] = 1;
  doc["input_dim"] = net.input_dim();
  json layers = json::array();
  for (const Layer& layer : net.layers()) {
    json jl;
    jl["rows"] = layer.weights.rows();
    jl["cols"] = layer.weights.cols();
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(format_real(layer.weights(r, c)));
    }
    jl["weights"] = std::move(w);
    json b = json::array();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) b.push_back(format_real(layer.bias(i)));
    jl["bias"] = std::move(b);
    json acts = json::array();
    for (const Activation& a : layer.activations) acts.push_back(activation_to_json(a));
    jl["activations"] = std::move(acts);
    if (layer.has_mask()) {
      json m = json::array();
      for (Eigen::Index r = 0; r < layer.weight_mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight_mask.cols(); ++c) m.push_back(layer.weight_mask(r, c) != 0.0 ? 1 : 0);
      }
      jl["weight_mask"] = std::move(m);
    }
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  if (graft != nullptr) doc["graft"] = json::parse(graft_set_to_json(*graft));
  return doc.dump(1);
}

ModelFile model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("model: top level must be an object");
  const long format = detail::get_int(doc, "format", "model");
  if (format != 1) throw ParseError("model.format: unsupported version " + std::to_string(format));
  const long input_dim = detail::get_int(doc, "input_dim", "model");
  if (!doc.contains("layers") || !doc["layers"].is_array()) throw ParseError("model.layers: missing or not an array");

  std::vector<Layer> layers;
  std::size_t li = 0;
  for (const json& jl : doc["layers"]) {
    const std::string field = "model.layers[" + std::to_string(li++) + "]";
    if (!jl.is_object()) throw ParseError(field + ": not an object");
    const long rows = detail::get_int(jl, "rows", field);
    const long cols = detail::get_int(jl, "cols", field);
    if (rows <= 0 || cols <= 0) throw ValidationError(field + ": rows and cols must be positive");
    Layer layer;
    const auto w = detail::get_real_array(jl, "weights", field);
    if (static_cast<long>(w.size()) != rows * cols) {
      throw ValidationError(field + ".weights: expected " + std::to_string(rows * cols) + " entries, got " +
                            std::to_string(w.size()));
    }
    layer.weights.resize(rows, cols);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    }
    const auto b = detail::get_real_array(jl, "bias", field);
    layer.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    if (!jl.contains("activations") || !jl["activations"].is_array()) {
      throw ParseError(field + ".activations: missing or not an array");
    }
    std::size_t ai = 0;
    for (const json& ja : jl["activations"]) {
      layer.activations.push_back(activation_from_json(ja, field + ".activations[" + std::to_string(ai++) + "]"));
    }
    if (jl.contains("weight_mask")) {
      const json& jm = jl["weight_mask"];
      if (!jm.is_array() || static_cast<long>(jm.size()) != rows * cols) {
        throw ValidationError(field + ".weight_mask: expected " + std::to_string(rows * cols) + " entries");
      }
      layer.weight_mask.resize(rows, cols);
      for (long k = 0; k < rows * cols; ++k) {
        const json& e = jm[static_cast<std::size_t>(k)];
        if (!e.is_number_integer()) throw ParseError(field + ".weight_mask: entries must be 0 or 1");
        layer.weight_mask(k / cols, k % cols) = e.get<int>() != 0 ? 1.0 : 0.0;
      }
    }
    layers.push_back(std::move(layer));
  }
  ModelFile file;
  file.net = Network(static_cast<int>(input_dim), std::move(layers));
  if (doc.contains("graft")) file.graft = graft_set_from_json(doc["graft"].dump());
  return file;
}

void save_model(const Network& net, const std::string& path, const GraftSet* graft) {
  write_text_file(path, model_to_json(net, graft));
}

ModelFile load_model_file(const std::string& path) { return model_from_json(read_text_file(path)); }

Network load_model(const std::string& path) { return load_model_file(path).net; }

}  // namespace graftcert

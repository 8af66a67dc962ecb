#include "graftcert/graft_set.hpp"

#include <algorithm>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "graftcert/model_io.hpp"
#include "json_util.hpp"

namespace graftcert {

using nlohmann::json;

bool GraftSet::empty() const { return size() == 0; }

std::size_t GraftSet::size() const {
  std::size_t n = 0;
  for (const auto& [layer, entry] : layers) n += entry.indices.size();
  return n;
}

bool GraftSet::contains(int layer, int index) const {
  auto it = layers.find(layer);
  if (it == layers.end()) return false;
  return std::binary_search(it->second.indices.begin(), it->second.indices.end(), index);
}

void GraftSet::insert(int layer, int index, double slope, double intercept) {
  Entry& e = layers[layer];
  auto pos = std::lower_bound(e.indices.begin(), e.indices.end(), index);
  if (pos != e.indices.end() && *pos == index) return;
  const auto offset = pos - e.indices.begin();
  e.indices.insert(pos, index);
  e.slopes.insert(e.slopes.begin() + offset, slope);
  e.intercepts.insert(e.intercepts.begin() + offset, intercept);
}

std::string graft_set_to_json(const GraftSet& set) {
  json doc;
  doc["format"] = 1;
  json layers = json::object();
  for (const auto& [layer, entry] : set.layers) {
    if (entry.indices.empty()) continue;
    json je;
    je["indices"] = entry.indices;
    json s = json::array();
    json c = json::array();
    for (double v : entry.slopes) s.push_back(format_real(v));
    for (double v : entry.intercepts) c.push_back(format_real(v));
    je["slopes"] = std::move(s);
    je["intercepts"] = std::move(c);
    layers[std::to_string(layer)] = std::move(je);
  }
  doc["layers"] = std::move(layers);
  return doc.dump(1);
}

GraftSet graft_set_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("graft: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_object()) {
    throw ParseError("graft.layers: missing or not an object");
  }
  GraftSet set;
  for (const auto& [key, je] : doc["layers"].items()) {
    const std::string field = "graft.layers." + key;
    int layer = 0;
    try {
      std::size_t used = 0;
      layer = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ParseError(field + ": layer key must be an integer");
    }
    const auto& ji = detail::require(je, "indices", field);
    if (!ji.is_array()) throw ParseError(field + ".indices: expected an array");
    std::vector<int> indices;
    for (const auto& v : ji) {
      if (!v.is_number_integer()) throw ParseError(field + ".indices: entries must be integers");
      indices.push_back(v.get<int>());
    }
    std::vector<double> slopes = je.contains("slopes") ? detail::get_real_array(je, "slopes", field)
                                                       : std::vector<double>(indices.size(), 0.4);
    std::vector<double> intercepts = je.contains("intercepts") ? detail::get_real_array(je, "intercepts", field)
                                                               : std::vector<double>(indices.size(), 0.0);
    if (slopes.size() != indices.size() || intercepts.size() != indices.size()) {
      throw ValidationError(field + ": slopes/intercepts must match indices in length");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (set.contains(layer, indices[i])) throw ValidationError(field + ".indices: duplicate index");
      set.insert(layer, indices[i], slopes[i], intercepts[i]);
    }
  }
  return set;
}

void save_graft_set(const GraftSet& set, const std::string& path) { write_text_file(path, graft_set_to_json(set)); }

GraftSet load_graft_set(const std::string& path) { return graft_set_from_json(read_text_file(path)); }

}  // namespace graftcert

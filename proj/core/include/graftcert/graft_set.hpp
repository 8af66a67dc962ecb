#pragma once

#include <map>
#include <string>
#include <vector>

namespace graftcert {

// Neurons chosen for grafting, keyed by hidden layer index. Indices within a
// layer are sorted and unique; slopes/intercepts run parallel to them.
struct GraftSet {
  struct Entry {
    std::vector<int> indices;
    std::vector<double> slopes;
    std::vector<double> intercepts;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::map<int, Entry> layers;

  bool empty() const;
  std::size_t size() const;
  bool contains(int layer, int index) const;
  // Inserts (layer, index) keeping indices sorted; no-op when present.
  void insert(int layer, int index, double slope, double intercept);

  friend bool operator==(const GraftSet&, const GraftSet&) = default;
};

// JSON form: {"format":1,"layers":{"<layer>":{"indices":[...],"slopes":[...],
// "intercepts":[...]}}}. Reals are written as round-trip decimal strings.
std::string graft_set_to_json(const GraftSet& set);
GraftSet graft_set_from_json(const std::string& text);

void save_graft_set(const GraftSet& set, const std::string& path);
GraftSet load_graft_set(const std::string& path);

}  // namespace graftcert

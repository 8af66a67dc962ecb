#pragma once

#include <optional>
#include <string>

#include "graftcert/graft_set.hpp"
#include "graftcert/network.hpp"

namespace graftcert {

// Model file: a single JSON document
//   {"format":1,"input_dim":n,"layers":[{"rows":r,"cols":c,
//     "weights":[...row-major...],"bias":[...],"activations":[...],
//     "weight_mask":[0|1,...]}], "graft":{...}}
// Every real is a decimal string with 17 significant digits so that a
// save/load cycle reproduces each double bit for bit. Activations are
// {"kind":"relu"}, {"kind":"identity"} or
// {"kind":"grafted","slope":"...","intercept":"..."}.
struct ModelFile {
  Network net;
  std::optional<GraftSet> graft;
};

std::string model_to_json(const Network& net, const GraftSet* graft = nullptr);
ModelFile model_from_json(const std::string& text);

void save_model(const Network& net, const std::string& path, const GraftSet* graft = nullptr);
Network load_model(const std::string& path);
ModelFile load_model_file(const std::string& path);

// Shortest-safe decimal form of a double (17 significant digits).
std::string format_real(double v);
// Parses a decimal string produced by format_real (or any strtod input).
double parse_real(const std::string& s, const std::string& field);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace graftcert

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graftcert/graft_select.hpp"
#include "graftcert/lipschitz.hpp"
#include "graftcert/robust_train.hpp"
#include "graftcert/verifier.hpp"

namespace graftcert {

// Source of a dataset: a CSV/IDX file or a synthetic generator.
struct DataSource {
  std::string kind = "moons";  // "csv", "idx", "moons", "blobs"
  std::string path;            // csv path, or "images,labels" for idx
  int n = 400;
  double noise = 0.1;
  std::size_t limit = 0;  // 0 keeps every sample

  std::string describe() const;
};

struct RunConfig {
  std::string name = "run";
  std::string model;
  DataSource data;
  std::vector<int> arch = {2, 32, 32, 2};
  std::size_t test_count = 100;
  std::size_t calibration_count = 500;
  double eps = 0.05;
  SelectionConfig selection;
  double init_slope = 0.4;
  double init_intercept = 0.0;
  TrainConfig train;
  // Defaults to `train`; keys given under "finetune" override it.
  TrainConfig finetune;
  BabBudget budget;
  PgdConfig attack{20, 0.0, 5};
  LipWidth lip_width = LipWidth::Pre;
  int lip_pairs = 200;
  std::uint64_t seed = 0;
  std::string output_dir = ".";

  // Throws ConfigError for inconsistent values. eps = 0 is accepted for
  // degenerate checks; stages that need a ball reject it themselves.
  void validate() const;
};

// Every key is optional; missing keys keep the defaults above. Unknown keys
// are a ConfigError.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

// Hash of the canonical JSON form without output_dir, hex encoded.
std::string run_config_hash(const RunConfig& cfg);

}  // namespace graftcert

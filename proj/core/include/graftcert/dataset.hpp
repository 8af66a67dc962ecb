#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graftcert/types.hpp"

namespace graftcert {

// Samples as rows of an n x d matrix with features in [0, 1].
struct Dataset {
  std::string name;
  Matrix inputs;
  std::vector<int> labels;
  int classes = 0;
  std::vector<std::string> tags;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  // d x n view for the column-batched APIs.
  Matrix columns() const { return inputs.transpose(); }

  // Throws ValidationError on NaN, out-of-range labels or shape mismatch.
  void validate() const;
};

enum class DataFormat { Csv, Idx };

// CSV: one sample per row, "label,f1,...,fd"; ragged rows are a ParseError.
Dataset load_csv(const std::string& path);

// IDX image file (magic 0x00000803, big endian, u8 pixels scaled by 1/255)
// paired with an IDX label file (magic 0x00000801).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// path for CSV; "images_path,labels_path" for IDX.
Dataset load_dataset(const std::string& path, DataFormat format);

void save_csv(const Dataset& data, const std::string& path);

enum class SyntheticKind { Moons, Blobs };

// Seeded two-class sets in [0,1]^2 with class sizes differing by at most one.
// noise is the standard deviation of the Gaussian jitter (before mapping).
Dataset make_synthetic(SyntheticKind kind, int n, double noise, std::uint64_t seed);

// Affine map from the canonical two-moons plane into the unit square.
Vector moons_to_unit(double px, double py);

// Seeded permutation indices: the first `count` of a shuffle of [0, n).
std::vector<std::size_t> subset_indices(std::size_t n, std::size_t count, std::uint64_t seed);
Dataset take(const Dataset& data, const std::vector<std::size_t>& indices, const std::string& tag);

struct Split3 {
  Dataset train;
  Dataset calibration;  // drawn from train
  Dataset test;         // disjoint from train and calibration
};

// Deterministic train/test split with a calibration subset of the training
// part.
Split3 split_dataset(const Dataset& data, std::size_t test_count, std::size_t calibration_count,
                     std::uint64_t seed);

}  // namespace graftcert

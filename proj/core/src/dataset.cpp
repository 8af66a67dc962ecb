#include "graftcert/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "graftcert/error.hpp"
#include "graftcert/model_io.hpp"
#include "graftcert/random.hpp"

namespace graftcert {

void Dataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) {
    throw ValidationError("dataset '" + name + "': " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(inputs.rows()) + " samples");
  }
  if (!inputs.allFinite()) throw ValidationError("dataset '" + name + "': non-finite feature");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ValidationError("dataset '" + name + "': label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

Dataset from_rows(std::string name, const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
  Dataset d;
  d.name = std::move(name);
  d.labels = labels;
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  d.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  d.classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  return d;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() < 2) throw ParseError(where + ": expected label and at least one feature");
    char* end = nullptr;
    const long label = std::strtol(cells[0].c_str(), &end, 10);
    if (end == cells[0].c_str() || *end != '\0') {
      if (rows.empty() && labels.empty() && lineno == 1) continue;  // header
      throw ParseError(where + ": label is not an integer");
    }
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(parse_real(cells[j], where + " column " + std::to_string(j)));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(where + ": expected " + std::to_string(rows.front().size()) + " features, found " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
    labels.push_back(static_cast<int>(label));
  }
  Dataset d = from_rows(path, rows, labels);
  d.validate();
  return d;
}

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  if (img.size() < 16 || be32(img, 0) != 0x803) throw ParseError(images_path + ": not an IDX image file");
  if (lab.size() < 8 || be32(lab, 0) != 0x801) throw ParseError(labels_path + ": not an IDX label file");
  const std::size_t n = be32(img, 4);
  const std::size_t dim = std::size_t{be32(img, 8)} * be32(img, 12);
  if (img.size() != 16 + n * dim) throw ParseError(images_path + ": truncated image data");
  if (be32(lab, 4) != n || lab.size() != 8 + n) throw ParseError(labels_path + ": label count does not match images");
  Dataset d;
  d.name = images_path;
  d.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    }
    d.labels.push_back(lab[8 + i]);
  }
  d.classes = n == 0 ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.validate();
  return d;
}

Dataset load_dataset(const std::string& path, DataFormat format) {
  if (format == DataFormat::Csv) return load_csv(path);
  const auto comma = path.find(',');
  if (comma == std::string::npos) throw ConfigError("IDX data needs 'images_path,labels_path', got '" + path + "'");
  return load_idx(path.substr(0, comma), path.substr(comma + 1));
}

void save_csv(const Dataset& data, const std::string& path) {
  std::string out;
  for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
    out += std::to_string(data.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) out += "," + format_real(data.inputs(i, j));
    out += "\n";
  }
  write_text_file(path, out);
}

Vector moons_to_unit(double px, double py) {
  Vector v(2);
  v << (px + 1.5) / 4.5, (py + 1.0) / 2.5;
  return v;
}

Dataset make_synthetic(SyntheticKind kind, int n, double noise, std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic dataset needs n >= 2");
  if (!(noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
  auto rng = make_rng(seed, kind == SyntheticKind::Moons ? "data.moons" : "data.blobs");
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::normal_distribution<double> jitter(0.0, 1.0);
  Dataset d;
  d.name = kind == SyntheticKind::Moons ? "moons" : "blobs";
  d.classes = 2;
  d.inputs.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    Vector p(2);
    if (kind == SyntheticKind::Moons) {
      const double t = angle(rng);
      double px = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double py = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      px += noise * jitter(rng);
      py += noise * jitter(rng);
      p = moons_to_unit(px, py);
    } else {
      const double c = label == 0 ? 0.3 : 0.7;
      p << c + noise * jitter(rng), c + noise * jitter(rng);
    }
    d.inputs.row(i) = p.cwiseMax(0.0).cwiseMin(1.0).transpose();
    d.labels.push_back(label);
  }
  return d;
}

std::vector<std::size_t> subset_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed, "subset");
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, n));
  return idx;
}

Dataset take(const Dataset& data, const std::vector<std::size_t>& indices, const std::string& tag) {
  Dataset out;
  out.name = data.name;
  out.classes = data.classes;
  out.tags = data.tags;
  if (!tag.empty()) out.tags.push_back(tag);
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), data.inputs.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw ShapeError("take: index out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(data.labels[indices[i]]);
  }
  return out;
}

Split3 split_dataset(const Dataset& data, std::size_t test_count, std::size_t calibration_count, std::uint64_t seed) {
  if (test_count >= data.size()) {
    throw ConfigError("test_count " + std::to_string(test_count) + " leaves no training data out of " +
                      std::to_string(data.size()));
  }
  const auto perm = subset_indices(data.size(), data.size(), substream_seed(seed, "split"));
  const std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_count));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(test_count), perm.end());
  std::sort(train.begin(), train.end());
  Split3 s;
  s.test = take(data, test, "test");
  s.train = take(data, train, "train");
  const auto cal = subset_indices(s.train.size(), calibration_count, substream_seed(seed, "calibration"));
  s.calibration = take(s.train, cal, "calibration");
  return s;
}

}  // namespace graftcert

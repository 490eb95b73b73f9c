#include "hydrocar/precision.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "hydrocar/error.hpp"
#include "hydrocar/io.hpp"

namespace hydrocar {

namespace {

using Triplet = Eigen::Triplet<double, int>;

std::vector<int> components_from_pattern(const SparseMatrix& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<int> label(n, -1);
  int next = 0;
  for (int start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    std::vector<int> stack{start};
    label[start] = next;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (SparseMatrix::InnerIterator it(m, v); it; ++it) {
        if (it.value() != 0.0 && label[it.row()] < 0) {
          label[it.row()] = next;
          stack.push_back(it.row());
        }
      }
    }
    ++next;
  }
  return label;
}

SparseMatrix from_triplets(std::size_t n, const std::vector<Triplet>& triplets) {
  SparseMatrix m(static_cast<int>(n), static_cast<int>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace

PrecisionMatrix::PrecisionMatrix(SparseMatrix matrix, std::vector<std::string> labels,
                                 std::vector<int> components, bool intrinsic)
    : matrix_(std::move(matrix)),
      labels_(std::move(labels)),
      components_(std::move(components)),
      intrinsic_(intrinsic) {
  if (matrix_.rows() != matrix_.cols()) throw InputError("precision matrix must be square");
  if (labels_.size() != dim()) throw InputError("precision matrix label count mismatch");
  if (components_.empty()) components_ = components_from_pattern(matrix_);
  if (components_.size() != dim()) throw InputError("precision matrix component count mismatch");
  matrix_.makeCompressed();
}

int PrecisionMatrix::component_count() const {
  if (components_.empty()) return 0;
  return *std::max_element(components_.begin(), components_.end()) + 1;
}

std::size_t PrecisionMatrix::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw InputError("unknown precision row '" + label + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

double PrecisionMatrix::mean_diagonal() const {
  if (dim() == 0) return 0.0;
  return matrix_.diagonal().sum() / static_cast<double>(dim());
}

PrecisionMatrix build_border_precision(const Adjacency& adjacency) {
  const auto n = adjacency.labels.size();
  if (adjacency.neighbors.size() != n) throw InputError("adjacency list count mismatch");
  std::vector<std::set<std::size_t>> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : adjacency.neighbors[i]) {
      if (j >= n) throw InputError("adjacency index out of range at '" + adjacency.labels[i] + "'");
      if (j == i) throw InputError("unit '" + adjacency.labels[i] + "' lists itself as a neighbor");
      sets[i].insert(j);
    }
  }
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : sets[i]) {
      if (!sets[j].count(i)) {
        throw InputError("asymmetric adjacency: '" + adjacency.labels[i] + "' lists '" +
                         adjacency.labels[j] + "' but not the reverse");
      }
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), -1.0);
    }
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i),
                          static_cast<double>(sets[i].size()));
  }
  auto m = from_triplets(n, triplets);
  auto components = components_from_pattern(m);
  return PrecisionMatrix(std::move(m), adjacency.labels, std::move(components), true);
}

PrecisionMatrix build_distance_precision(const WaterNetwork& net) {
  const auto n = net.node_count();
  // Parallel pipes between the same pair add their weights.
  std::map<std::pair<std::size_t, std::size_t>, double> weight;
  for (const auto& s : net.segments()) {
    if (!(s.length > 0.0)) {
      throw InputError("pipe " + s.from + " -> " + s.to + " has non-positive length");
    }
    auto a = net.index_of(s.from);
    auto b = net.index_of(s.to);
    if (a > b) std::swap(a, b);
    weight[{a, b}] += 1.0 / s.length;
  }
  std::vector<double> diag(n, 0.0);
  std::vector<Triplet> triplets;
  for (const auto& [pair, w] : weight) {
    const auto [a, b] = pair;
    triplets.emplace_back(static_cast<int>(a), static_cast<int>(b), -w);
    triplets.emplace_back(static_cast<int>(b), static_cast<int>(a), -w);
    diag[a] += w;
    diag[b] += w;
  }
  for (std::size_t i = 0; i < n; ++i) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), diag[i]);

  std::vector<std::string> labels;
  for (const auto& node : net.nodes()) labels.push_back(node.id);
  return PrecisionMatrix(from_triplets(n, triplets), std::move(labels), component_labels(net), true);
}

Adjacency network_adjacency(const WaterNetwork& net) {
  Adjacency adj;
  for (const auto& node : net.nodes()) adj.labels.push_back(node.id);
  adj.neighbors = net.undirected_adjacency();
  return adj;
}

PrecisionMatrix build_precision(const WaterNetwork& net, Weighting weighting) {
  if (weighting == Weighting::BorderCount) return build_border_precision(network_adjacency(net));
  return build_distance_precision(net);
}

PrecisionBlock PrecisionBlock::structured(PrecisionMatrix q, std::string name) {
  PrecisionBlock b;
  b.kind = Kind::Structured;
  b.dim = q.dim();
  b.structure = std::move(q);
  b.name = std::move(name);
  return b;
}

PrecisionBlock PrecisionBlock::iid(std::size_t dim, std::string name) {
  PrecisionBlock b;
  b.kind = Kind::Iid;
  b.dim = dim;
  b.name = std::move(name);
  return b;
}

PrecisionBlock PrecisionBlock::fixed_effect(std::size_t dim, std::string name) {
  PrecisionBlock b;
  b.kind = Kind::FixedEffect;
  b.dim = dim;
  b.name = std::move(name);
  return b;
}

PrecisionMatrix assemble_block_precision(const std::vector<PrecisionBlock>& blocks,
                                         const std::vector<double>& scales) {
  if (blocks.size() != scales.size()) {
    throw InputError("assemble_block_precision: " + std::to_string(blocks.size()) + " blocks but " +
                     std::to_string(scales.size()) + " scales");
  }
  std::vector<Triplet> triplets;
  std::vector<std::string> labels;
  std::vector<int> components;
  bool intrinsic = false;
  int offset = 0;
  int component_offset = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& block = blocks[k];
    const double scale = scales[k];
    if (!(scale > 0.0)) throw InputError("block '" + block.name + "' has non-positive scale");
    if (block.kind == PrecisionBlock::Kind::Structured) {
      if (block.dim != block.structure.dim()) {
        throw InputError("block '" + block.name + "' dimension mismatch");
      }
      const auto& m = block.structure.matrix();
      for (int col = 0; col < m.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
          triplets.emplace_back(offset + it.row(), offset + col, scale * it.value());
        }
      }
      for (const auto& l : block.structure.labels()) labels.push_back(block.name + ":" + l);
      for (int c : block.structure.components()) components.push_back(component_offset + c);
      component_offset += block.structure.component_count();
      intrinsic = intrinsic || block.structure.intrinsic();
    } else {
      for (std::size_t i = 0; i < block.dim; ++i) {
        triplets.emplace_back(offset + static_cast<int>(i), offset + static_cast<int>(i), scale);
        labels.push_back(block.name + ":" + std::to_string(i));
        components.push_back(component_offset++);
      }
    }
    offset += static_cast<int>(block.size());
  }
  return PrecisionMatrix(from_triplets(static_cast<std::size_t>(offset), triplets), std::move(labels),
                         std::move(components), intrinsic);
}

void write_coordinate_list(const PrecisionMatrix& q, std::ostream& matrix_out,
                           std::ostream& index_out) {
  matrix_out << "row,col,value\n";
  const auto& m = q.matrix();
  for (int col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
      if (it.row() <= col) {
        matrix_out << it.row() << ',' << col << ',' << format_double(it.value()) << '\n';
      }
    }
  }
  index_out << "index,label\n";
  for (std::size_t i = 0; i < q.dim(); ++i) index_out << i << ',' << q.labels()[i] << '\n';
}

PrecisionMatrix read_coordinate_list(std::istream& matrix_in, std::istream& index_in,
                                     bool intrinsic) {
  const auto index_table = read_csv(index_in, {"index", "label"});
  const auto n = index_table.rows.size();
  std::vector<std::string> labels(n);
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    const auto line = index_table.line_numbers[r];
    const double raw = parse_double(index_table.rows[r][index_table.column("index")], line, "index");
    if (raw < 0 || raw >= static_cast<double>(n) || raw != static_cast<double>(static_cast<std::size_t>(raw))) {
      throw InputError("line " + std::to_string(line) + ": index out of range");
    }
    const auto i = static_cast<std::size_t>(raw);
    if (seen[i]) throw InputError("line " + std::to_string(line) + ": duplicate index");
    seen[i] = true;
    labels[i] = index_table.rows[r][index_table.column("label")];
  }

  const auto table = read_csv(matrix_in, {"row", "col", "value"});
  std::vector<Triplet> triplets;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    const auto& row = table.rows[r];
    const double i = parse_double(row[table.column("row")], line, "row");
    const double j = parse_double(row[table.column("col")], line, "col");
    const double v = parse_double(row[table.column("value")], line, "value");
    if (i < 0 || j < 0 || i >= static_cast<double>(n) || j >= static_cast<double>(n) || i > j) {
      throw InputError("line " + std::to_string(line) + ": entry outside the upper triangle");
    }
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
    if (i != j) triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), v);
  }
  auto m = from_triplets(n, triplets);
  auto components = components_from_pattern(m);
  return PrecisionMatrix(std::move(m), std::move(labels), std::move(components), intrinsic);
}

}  // namespace hydrocar

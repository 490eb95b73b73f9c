#pragma once

#include <Eigen/SparseCore>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hydrocar/network.hpp"

namespace hydrocar {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// Symmetric sparse precision ("inverse") matrix with its row labels.
//
// Stored as the full symmetric matrix in compressed column form with sorted
// row indices. `components` gives a partition label per row; for an
// intrinsic matrix each component contributes one null-space direction (the
// constant vector on that component).
class PrecisionMatrix {
 public:
  PrecisionMatrix() = default;
  PrecisionMatrix(SparseMatrix matrix, std::vector<std::string> labels, std::vector<int> components,
                  bool intrinsic);

  std::size_t dim() const { return static_cast<std::size_t>(matrix_.rows()); }
  const SparseMatrix& matrix() const { return matrix_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<int>& components() const { return components_; }
  int component_count() const;
  bool intrinsic() const { return intrinsic_; }

  double coeff(std::size_t i, std::size_t j) const {
    return matrix_.coeff(static_cast<int>(i), static_cast<int>(j));
  }
  // Row index of `label`; throws InputError when absent.
  std::size_t index_of(const std::string& label) const;

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }
  double mean_diagonal() const;

 private:
  SparseMatrix matrix_;
  std::vector<std::string> labels_;
  std::vector<int> components_;
  bool intrinsic_ = false;
};

enum class Weighting { BorderCount, InverseDistance };

// Neighbor lists over labelled units; must be symmetric without self-neighbors.
struct Adjacency {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> neighbors;
};

// Q[i][j] = -1 for neighbors, Q[i][i] = number of neighbors.
PrecisionMatrix build_border_precision(const Adjacency& adjacency);

// Q[i][j] = -sum(1/length) over all pipes joining i and j in either
// direction, Q[i][i] = -sum_j Q[i][j]. Rows follow net.nodes() order.
PrecisionMatrix build_distance_precision(const WaterNetwork& net);

PrecisionMatrix build_precision(const WaterNetwork& net, Weighting weighting);

// Adjacency of the undirected network graph, labelled by node id.
Adjacency network_adjacency(const WaterNetwork& net);

// One block of a composite latent field.
struct PrecisionBlock {
  enum class Kind { Structured, Iid, FixedEffect };
  Kind kind = Kind::Iid;
  PrecisionMatrix structure;  // used when kind == Structured
  std::size_t dim = 0;        // used for Iid and FixedEffect
  std::string name;

  static PrecisionBlock structured(PrecisionMatrix q, std::string name = "structured");
  static PrecisionBlock iid(std::size_t dim, std::string name = "iid");
  static PrecisionBlock fixed_effect(std::size_t dim, std::string name = "fixed");

  std::size_t size() const { return kind == Kind::Structured ? structure.dim() : dim; }
};

// Block-diagonal precision over the concatenated field, block k scaled by
// scales[k]. The result is flagged intrinsic when any block is.
PrecisionMatrix assemble_block_precision(const std::vector<PrecisionBlock>& blocks,
                                         const std::vector<double>& scales);

// Coordinate-list text: header "row,col,value", 0-based, upper triangle
// (row <= col), column-major order. The sidecar lists "index,label".
void write_coordinate_list(const PrecisionMatrix& q, std::ostream& matrix_out,
                           std::ostream& index_out);
PrecisionMatrix read_coordinate_list(std::istream& matrix_in, std::istream& index_in,
                                     bool intrinsic);

}  // namespace hydrocar

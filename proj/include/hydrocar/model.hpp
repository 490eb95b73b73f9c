#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hydrocar/network.hpp"
#include "hydrocar/precision.hpp"

namespace hydrocar {

using Vector = Eigen::VectorXd;

// One survey respondent. Optional fields are missing values in the source
// table; complete-case filtering happens before any fit.
struct Participant {
  std::string id;
  std::optional<int> outcome;  // 0 or 1
  std::optional<double> age;   // years
  std::optional<int> gender;   // 0 female, 1 male
  std::string house_id;        // empty when unknown
  NodeId node_id;
  std::optional<Point> location;
};

enum class Variable { Outcome, Age, Gender, House, Location };

class Dataset {
 public:
  // Validates value ranges and node links. Every node a participant links to
  // is anchored in the stored network so simplification never removes it.
  Dataset(std::vector<Participant> participants, WaterNetwork network, std::string outcome_name = "outcome");

  const std::vector<Participant>& participants() const { return participants_; }
  const WaterNetwork& network() const { return network_; }
  const std::string& outcome_name() const { return outcome_name_; }
  std::size_t size() const { return participants_.size(); }

  // Participants having every listed variable.
  Dataset complete_cases(const std::vector<Variable>& required) const;
  // Same participants on the simplified network.
  Dataset simplified() const;

 private:
  std::vector<Participant> participants_;
  WaterNetwork network_;
  std::string outcome_name_;
};

// participants.csv: id,outcome,age,gender,house_id,node_id,x,y. Empty or NA
// fields are missing.
std::vector<Participant> parse_participants(std::istream& in);
void write_participants(const std::vector<Participant>& participants, std::ostream& out);

enum class FixedEffect { Intercept, Age, Gender };
enum class LatentEffect { Household, Spatial, Graph };

// Gamma(shape, rate) prior on a latent precision τ.
struct GammaPrior {
  double shape = 1.0;
  double rate = 5e-5;

  double log_density_of_log_precision(double log_tau) const;
};

struct ModelSpec {
  std::vector<FixedEffect> fixed{FixedEffect::Intercept};
  std::vector<LatentEffect> latent;
  std::vector<GammaPrior> hyperprior;  // one per latent effect
  double fixed_precision = 0.001;
  double cell_size = 1000.0;  // meters, spatial lattice

  bool has(FixedEffect e) const;
  bool has(LatentEffect e) const;
  // Variables a participant needs for this spec.
  std::vector<Variable> required_variables() const;
  // Human-readable row label, e.g. "Age, Gender, Water Graph".
  std::string label() const;
  // Canonical token form, e.g. "age,gender,graph".
  std::string tokens() const;
  void validate() const;
};

// Parses comma-separated tokens from {age, gender, house, spatial, graph};
// the intercept is implicit. An empty string is the intercept-only model.
ModelSpec parse_spec(const std::string& text);
std::string effect_label(LatentEffect e);

struct BlockRange {
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t end() const { return offset + size; }
};

// Index ranges of the stacked latent field: fixed coefficients first, then
// latent blocks in spec order.
struct LatentLayout {
  BlockRange fixed;
  std::vector<LatentEffect> order;
  std::vector<BlockRange> blocks;  // parallel to order
  std::size_t dim = 0;

  std::optional<BlockRange> range(LatentEffect e) const;
};

// Occupied cells of a square grid over the participants' bounding box.
struct SpatialLattice {
  Adjacency adjacency;            // rook adjacency between occupied cells
  std::vector<std::size_t> cell;  // cell index per participant
  double cell_size = 0.0;
};

SpatialLattice build_spatial_lattice(const std::vector<Participant>& participants, double cell_size);
SpatialLattice build_spatial_lattice(const Dataset& ds, double cell_size);

// Mean and population standard deviation of age over the dataset.
struct AgeScaling {
  double mean = 0.0;
  double sd = 1.0;
  double standardize(double age) const { return (age - mean) / sd; }
  double original(double z) const { return mean + sd * z; }
};
AgeScaling age_scaling(const Dataset& ds);

// Distinct house ids in order of first appearance.
std::vector<std::string> household_labels(const Dataset& ds);

LatentLayout make_layout(const Dataset& ds, const ModelSpec& spec);

// Observation matrix A with η = A x (participants × layout.dim).
SparseMatrix design_matrix(const Dataset& ds, const ModelSpec& spec, const LatentLayout& layout);

struct LogLikelihood {
  double value = 0.0;
  Vector gradient;  // y - p
  Vector weight;    // p (1 - p)
};

// Bernoulli-logit log-likelihood, evaluated without overflow for large |η|.
LogLikelihood loglik(const Vector& y, const Vector& eta);
double loglik_value(const Vector& y, const Vector& eta);

double logistic(double eta);

// Everything a fit needs, resolved from (dataset, spec): responses, the
// observation matrix, and the prior structure of each latent block.
class LatentModel {
 public:
  LatentModel(const Dataset& ds, const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const LatentLayout& layout() const { return layout_; }
  const SparseMatrix& design() const { return design_; }
  const Vector& response() const { return y_; }
  const AgeScaling& age() const { return age_; }
  std::size_t dim() const { return layout_.dim; }
  std::size_t hyper_dim() const { return blocks_.size(); }
  // Sum-to-zero rows for every connected component of each intrinsic block.
  const Eigen::MatrixXd& constraint() const { return constraint_; }
  // Row labels of block k (house ids, cell names, node ids).
  const std::vector<std::string>& block_labels(std::size_t k) const { return blocks_[k].labels; }

  // Prior precision at log-precisions theta. Intrinsic blocks carry the
  // relative diagonal jitter kIntrinsicJitter.
  SparseMatrix prior_precision(const std::vector<double>& theta) const;
  double prior_log_determinant(const std::vector<double>& theta) const;
  // log det(C Qprior⁻¹ Cᵀ).
  double prior_constraint_log_determinant(const std::vector<double>& theta) const;
  double log_hyperprior(const std::vector<double>& theta) const;

 private:
  struct Block {
    LatentEffect effect;
    BlockRange range;
    bool intrinsic = false;
    SparseMatrix structure;  // jittered R, or identity for iid
    std::vector<std::string> labels;
    double base_log_det = 0.0;         // log det(structure)
    double base_gram_log_det = 0.0;    // log det(C_k structure⁻¹ C_kᵀ)
    std::size_t constraint_rows = 0;
  };

  ModelSpec spec_;
  LatentLayout layout_;
  SparseMatrix design_;
  Vector y_;
  AgeScaling age_;
  std::vector<Block> blocks_;
  Eigen::MatrixXd constraint_;
};

}  // namespace hydrocar

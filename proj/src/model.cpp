#include "hydrocar/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hydrocar/error.hpp"
#include "hydrocar/gmrf.hpp"
#include "hydrocar/io.hpp"

namespace hydrocar {

// --- Dataset ---------------------------------------------------------------

Dataset::Dataset(std::vector<Participant> participants, WaterNetwork network, std::string outcome_name)
    : participants_(std::move(participants)), outcome_name_(std::move(outcome_name)) {
  std::set<NodeId> linked;
  std::vector<std::string> dangling;
  for (const auto& p : participants_) {
    if (p.outcome && *p.outcome != 0 && *p.outcome != 1) {
      throw InputError("participant '" + p.id + "': outcome must be 0 or 1");
    }
    if (p.gender && *p.gender != 0 && *p.gender != 1) {
      throw InputError("participant '" + p.id + "': gender must be 0 or 1");
    }
    if (p.age && !(*p.age >= 0.0)) throw InputError("participant '" + p.id + "': negative age");
    if (!network.contains(p.node_id)) {
      dangling.push_back(p.id + " -> '" + p.node_id + "'");
    } else {
      linked.insert(p.node_id);
    }
  }
  if (!dangling.empty()) {
    std::string msg = "participants linked to unknown nodes:";
    for (const auto& d : dangling) msg += " " + d;
    throw InputError(msg);
  }
  network_ = network.with_anchors(linked);
}

Dataset Dataset::complete_cases(const std::vector<Variable>& required) const {
  std::vector<Participant> kept;
  for (const auto& p : participants_) {
    bool ok = true;
    for (auto v : required) {
      switch (v) {
        case Variable::Outcome: ok = ok && p.outcome.has_value(); break;
        case Variable::Age: ok = ok && p.age.has_value(); break;
        case Variable::Gender: ok = ok && p.gender.has_value(); break;
        case Variable::House: ok = ok && !p.house_id.empty(); break;
        case Variable::Location: ok = ok && p.location.has_value(); break;
      }
    }
    if (ok) kept.push_back(p);
  }
  return Dataset(std::move(kept), network_, outcome_name_);
}

Dataset Dataset::simplified() const { return Dataset(participants_, simplify(network_), outcome_name_); }

std::vector<Participant> parse_participants(std::istream& in) {
  const auto table = read_csv(in, {"id", "outcome", "age", "gender", "house_id", "node_id", "x", "y"});
  const auto c_id = table.column("id"), c_out = table.column("outcome"), c_age = table.column("age"),
             c_gender = table.column("gender"), c_house = table.column("house_id"),
             c_node = table.column("node_id"), c_x = table.column("x"), c_y = table.column("y");
  auto as_binary = [](const std::optional<double>& v, std::size_t line, const char* col) -> std::optional<int> {
    if (!v) return std::nullopt;
    if (*v != 0.0 && *v != 1.0) {
      throw InputError("line " + std::to_string(line) + ": column '" + col + "' must be 0 or 1");
    }
    return static_cast<int>(*v);
  };
  std::vector<Participant> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    Participant p;
    p.id = row[c_id];
    if (p.id.empty()) throw InputError("line " + std::to_string(line) + ": empty participant id");
    p.outcome = as_binary(parse_optional_double(row[c_out], line, "outcome"), line, "outcome");
    p.age = parse_optional_double(row[c_age], line, "age");
    if (p.age && *p.age < 0.0) throw InputError("line " + std::to_string(line) + ": negative age");
    p.gender = as_binary(parse_optional_double(row[c_gender], line, "gender"), line, "gender");
    p.house_id = row[c_house] == "NA" ? std::string() : row[c_house];
    p.node_id = row[c_node];
    if (p.node_id.empty()) throw InputError("line " + std::to_string(line) + ": empty node_id");
    const auto x = parse_optional_double(row[c_x], line, "x");
    const auto y = parse_optional_double(row[c_y], line, "y");
    if (x && y) p.location = Point{*x, *y};
    out.push_back(std::move(p));
  }
  return out;
}

void write_participants(const std::vector<Participant>& participants, std::ostream& out) {
  out << "id,outcome,age,gender,house_id,node_id,x,y\n";
  for (const auto& p : participants) {
    out << p.id << ',' << (p.outcome ? std::to_string(*p.outcome) : "") << ','
        << (p.age ? format_double(*p.age) : "") << ',' << (p.gender ? std::to_string(*p.gender) : "")
        << ',' << p.house_id << ',' << p.node_id << ',';
    if (p.location) {
      out << format_double(p.location->x) << ',' << format_double(p.location->y);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

// --- ModelSpec -------------------------------------------------------------

double GammaPrior::log_density_of_log_precision(double log_tau) const {
  // Gamma density on τ plus the Jacobian of τ = exp(θ).
  return shape * std::log(rate) - std::lgamma(shape) + shape * log_tau - rate * std::exp(log_tau);
}

bool ModelSpec::has(FixedEffect e) const { return std::find(fixed.begin(), fixed.end(), e) != fixed.end(); }
bool ModelSpec::has(LatentEffect e) const { return std::find(latent.begin(), latent.end(), e) != latent.end(); }

std::vector<Variable> ModelSpec::required_variables() const {
  std::vector<Variable> vars{Variable::Outcome};
  if (has(FixedEffect::Age)) vars.push_back(Variable::Age);
  if (has(FixedEffect::Gender)) vars.push_back(Variable::Gender);
  if (has(LatentEffect::Household)) vars.push_back(Variable::House);
  if (has(LatentEffect::Spatial)) vars.push_back(Variable::Location);
  return vars;
}

std::string effect_label(LatentEffect e) {
  switch (e) {
    case LatentEffect::Household: return "House ID";
    case LatentEffect::Spatial: return "Spatial Effect";
    case LatentEffect::Graph: return "Water Graph";
  }
  return {};
}

std::string ModelSpec::label() const {
  std::vector<std::string> parts;
  for (auto f : fixed) {
    if (f == FixedEffect::Age) parts.emplace_back("Age");
    if (f == FixedEffect::Gender) parts.emplace_back("Gender");
  }
  for (auto l : latent) parts.push_back(effect_label(l));
  if (parts.empty()) return "Intercept";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += ", " + parts[i];
  return out;
}

std::string ModelSpec::tokens() const {
  std::vector<std::string> parts;
  for (auto f : fixed) {
    if (f == FixedEffect::Age) parts.emplace_back("age");
    if (f == FixedEffect::Gender) parts.emplace_back("gender");
  }
  for (auto l : latent) {
    parts.emplace_back(l == LatentEffect::Household ? "house" : l == LatentEffect::Spatial ? "spatial" : "graph");
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

void ModelSpec::validate() const {
  if (fixed.empty() || fixed.front() != FixedEffect::Intercept) {
    throw InputError("model spec must start with the intercept");
  }
  std::set<FixedEffect> f(fixed.begin(), fixed.end());
  std::set<LatentEffect> l(latent.begin(), latent.end());
  if (f.size() != fixed.size() || l.size() != latent.size()) {
    throw InputError("model spec lists an effect twice");
  }
  if (hyperprior.size() != latent.size()) throw InputError("model spec needs one hyperprior per latent effect");
  for (const auto& h : hyperprior) {
    if (!(h.shape > 0.0) || !(h.rate > 0.0)) throw InputError("hyperprior shape and rate must be positive");
  }
  if (!(fixed_precision > 0.0)) throw InputError("fixed-effect prior precision must be positive");
  if (!(cell_size > 0.0)) throw InputError("cell size must be positive");
}

ModelSpec parse_spec(const std::string& text) {
  ModelSpec spec;
  std::stringstream ss(text);
  std::string token;
  std::vector<std::string> bad;
  while (std::getline(ss, token, ',')) {
    token.erase(0, token.find_first_not_of(" \t"));
    token.erase(token.find_last_not_of(" \t") + 1);
    std::transform(token.begin(), token.end(), token.begin(), [](unsigned char c) { return std::tolower(c); });
    if (token.empty()) continue;
    if (token == "age") {
      spec.fixed.push_back(FixedEffect::Age);
    } else if (token == "gender") {
      spec.fixed.push_back(FixedEffect::Gender);
    } else if (token == "house") {
      spec.latent.push_back(LatentEffect::Household);
    } else if (token == "spatial") {
      spec.latent.push_back(LatentEffect::Spatial);
    } else if (token == "graph") {
      spec.latent.push_back(LatentEffect::Graph);
    } else {
      bad.push_back(token);
    }
  }
  if (!bad.empty()) {
    std::string msg = "unknown spec token";
    for (const auto& b : bad) msg += " '" + b + "'";
    throw InputError(msg + "; valid tokens: age, gender, house, spatial, graph");
  }
  spec.hyperprior.assign(spec.latent.size(), GammaPrior{});
  spec.validate();
  return spec;
}

// --- Layout and design -----------------------------------------------------

std::optional<BlockRange> LatentLayout::range(LatentEffect e) const {
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] == e) return blocks[k];
  }
  return std::nullopt;
}

namespace {

std::string cell_name(long ix, long iy) { return "cell_" + std::to_string(ix) + "_" + std::to_string(iy); }

void require_locations(const std::vector<Participant>& participants) {
  std::string missing;
  for (const auto& p : participants) {
    if (!p.location) missing += (missing.empty() ? "" : ", ") + p.id;
  }
  if (!missing.empty()) throw InputError("spatial effect needs locations; missing for: " + missing);
}

}  // namespace

SpatialLattice build_spatial_lattice(const std::vector<Participant>& participants, double cell_size) {
  if (!(cell_size > 0.0)) throw InputError("cell size must be positive");
  require_locations(participants);
  SpatialLattice lattice;
  lattice.cell_size = cell_size;
  if (participants.empty()) return lattice;
  double min_x = participants[0].location->x, min_y = participants[0].location->y;
  for (const auto& p : participants) {
    min_x = std::min(min_x, p.location->x);
    min_y = std::min(min_y, p.location->y);
  }
  // Occupied cells keyed by (row, column) so indices follow grid order.
  std::vector<std::pair<long, long>> coords;
  for (const auto& p : participants) {
    coords.emplace_back(static_cast<long>(std::floor((p.location->y - min_y) / cell_size)),
                        static_cast<long>(std::floor((p.location->x - min_x) / cell_size)));
  }
  std::map<std::pair<long, long>, std::size_t> index;
  for (const auto& c : coords) index.emplace(c, 0);
  std::size_t next = 0;
  for (auto& [c, i] : index) {
    i = next++;
    lattice.adjacency.labels.push_back(cell_name(c.second, c.first));
  }
  lattice.adjacency.neighbors.resize(index.size());
  for (const auto& [c, i] : index) {
    const std::pair<long, long> around[] = {
        {c.first - 1, c.second}, {c.first + 1, c.second}, {c.first, c.second - 1}, {c.first, c.second + 1}};
    for (const auto& n : around) {
      auto it = index.find(n);
      if (it != index.end()) lattice.adjacency.neighbors[i].push_back(it->second);
    }
    std::sort(lattice.adjacency.neighbors[i].begin(), lattice.adjacency.neighbors[i].end());
  }
  for (const auto& c : coords) lattice.cell.push_back(index.at(c));
  return lattice;
}

SpatialLattice build_spatial_lattice(const Dataset& ds, double cell_size) {
  return build_spatial_lattice(ds.participants(), cell_size);
}

AgeScaling age_scaling(const Dataset& ds) {
  AgeScaling s;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : ds.participants()) {
    if (p.age) {
      sum += *p.age;
      ++n;
    }
  }
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& p : ds.participants()) {
    if (p.age) ss += (*p.age - s.mean) * (*p.age - s.mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  s.sd = sd > 0.0 ? sd : 1.0;
  return s;
}

std::vector<std::string> household_labels(const Dataset& ds) {
  std::vector<std::string> labels;
  std::set<std::string> seen;
  for (const auto& p : ds.participants()) {
    if (p.house_id.empty()) continue;
    if (seen.insert(p.house_id).second) labels.push_back(p.house_id);
  }
  return labels;
}

LatentLayout make_layout(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  LatentLayout layout;
  layout.fixed = {0, spec.fixed.size()};
  std::size_t offset = layout.fixed.size;
  for (auto e : spec.latent) {
    std::size_t size = 0;
    switch (e) {
      case LatentEffect::Household: size = household_labels(ds).size(); break;
      case LatentEffect::Spatial: size = build_spatial_lattice(ds, spec.cell_size).adjacency.labels.size(); break;
      case LatentEffect::Graph: size = ds.network().node_count(); break;
    }
    layout.order.push_back(e);
    layout.blocks.push_back({offset, size});
    offset += size;
  }
  layout.dim = offset;
  return layout;
}

SparseMatrix design_matrix(const Dataset& ds, const ModelSpec& spec, const LatentLayout& layout) {
  using Triplet = Eigen::Triplet<double, int>;
  const auto& people = ds.participants();
  std::vector<Triplet> triplets;
  const AgeScaling scaling = age_scaling(ds);

  for (std::size_t k = 0; k < spec.fixed.size(); ++k) {
    const int col = static_cast<int>(layout.fixed.offset + k);
    for (std::size_t i = 0; i < people.size(); ++i) {
      const auto& p = people[i];
      double value = 1.0;
      if (spec.fixed[k] == FixedEffect::Age) {
        if (!p.age) throw InputError("participant '" + p.id + "' has no age");
        value = scaling.standardize(*p.age);
      } else if (spec.fixed[k] == FixedEffect::Gender) {
        if (!p.gender) throw InputError("participant '" + p.id + "' has no gender");
        value = *p.gender;
      }
      // Stored even when zero so every row has the same nonzero count.
      triplets.emplace_back(static_cast<int>(i), col, value);
    }
  }

  for (std::size_t k = 0; k < layout.order.size(); ++k) {
    const auto range = layout.blocks[k];
    std::vector<std::size_t> column(people.size());
    switch (layout.order[k]) {
      case LatentEffect::Household: {
        const auto labels = household_labels(ds);
        std::unordered_map<std::string, std::size_t> pos;
        for (std::size_t j = 0; j < labels.size(); ++j) pos[labels[j]] = j;
        for (std::size_t i = 0; i < people.size(); ++i) {
          if (people[i].house_id.empty()) throw InputError("participant '" + people[i].id + "' has no house_id");
          column[i] = pos.at(people[i].house_id);
        }
        break;
      }
      case LatentEffect::Spatial: {
        const auto lattice = build_spatial_lattice(ds, spec.cell_size);
        column = lattice.cell;
        break;
      }
      case LatentEffect::Graph:
        for (std::size_t i = 0; i < people.size(); ++i) column[i] = ds.network().index_of(people[i].node_id);
        break;
    }
    for (std::size_t i = 0; i < people.size(); ++i) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(range.offset + column[i]), 1.0);
    }
  }

  SparseMatrix a(static_cast<int>(people.size()), static_cast<int>(layout.dim));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

// --- Likelihood ------------------------------------------------------------

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

void check_response(const Vector& y, const Vector& eta) {
  if (y.size() != eta.size()) throw InputError("loglik: response and predictor lengths differ");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw InputError("loglik: response must be 0 or 1");
  }
}

}  // namespace

namespace {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace

double loglik_value(const Vector& y, const Vector& eta) {
  CompensatedSum value;
  for (Eigen::Index i = 0; i < y.size(); ++i) value.add(y[i] * eta[i] - softplus(eta[i]));
  return value.value();
}

LogLikelihood loglik(const Vector& y, const Vector& eta) {
  check_response(y, eta);
  LogLikelihood out;
  out.gradient.resize(y.size());
  out.weight.resize(y.size());
  CompensatedSum value;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = logistic(eta[i]);
    value.add(y[i] * eta[i] - softplus(eta[i]));
    out.gradient[i] = y[i] - p;
    // p (1 - p) via the smaller tail keeps precision when p is near 1.
    const double q = logistic(-eta[i]);
    out.weight[i] = p * q;
  }
  out.value = value.value();
  return out;
}

// --- LatentModel -----------------------------------------------------------

LatentModel::LatentModel(const Dataset& ds, const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  layout_ = make_layout(ds, spec_);
  design_ = design_matrix(ds, spec_, layout_);
  age_ = age_scaling(ds);

  y_.resize(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& p = ds.participants()[i];
    if (!p.outcome) throw InputError("participant '" + p.id + "' has no outcome");
    y_[static_cast<Eigen::Index>(i)] = *p.outcome;
  }

  std::vector<Eigen::VectorXd> constraint_rows;
  for (std::size_t k = 0; k < layout_.order.size(); ++k) {
    Block b;
    b.effect = layout_.order[k];
    b.range = layout_.blocks[k];
    std::optional<PrecisionMatrix> structure;
    switch (b.effect) {
      case LatentEffect::Household: b.labels = household_labels(ds); break;
      case LatentEffect::Spatial:
        structure = build_border_precision(build_spatial_lattice(ds, spec_.cell_size).adjacency);
        break;
      case LatentEffect::Graph: structure = build_distance_precision(ds.network()); break;
    }
    if (!structure) {
      b.structure.resize(static_cast<int>(b.range.size), static_cast<int>(b.range.size));
      b.structure.setIdentity();
    } else {
      b.intrinsic = true;
      b.labels = structure->labels();
      const double mean_diag = structure->mean_diagonal();
      const double jitter = kIntrinsicJitter * (mean_diag > 0.0 ? mean_diag : 1.0);
      SparseMatrix eye(structure->matrix().rows(), structure->matrix().cols());
      eye.setIdentity();
      b.structure = structure->matrix() + jitter * eye;
      b.structure.makeCompressed();
      if (b.range.size > 0) {
        const auto factor = CholeskyFactor::factorize(b.structure);
        b.base_log_det = factor.log_determinant();
        const auto local = sum_to_zero_constraints(*structure);
        b.constraint_rows = local.rows();
        const Eigen::MatrixXd gram = local.a * factor.solve(Eigen::MatrixXd(local.a.transpose()));
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        const Eigen::MatrixXd l = llt.matrixL();
        b.base_gram_log_det = 2.0 * l.diagonal().array().log().sum();
        for (Eigen::Index r = 0; r < local.a.rows(); ++r) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.dim));
          row.segment(static_cast<Eigen::Index>(b.range.offset), static_cast<Eigen::Index>(b.range.size)) =
              local.a.row(r).transpose();
          constraint_rows.push_back(std::move(row));
        }
      }
    }
    if (b.structure.rows() == 0) b.base_log_det = 0.0;
    blocks_.push_back(std::move(b));
  }
  constraint_.resize(static_cast<Eigen::Index>(constraint_rows.size()), static_cast<Eigen::Index>(layout_.dim));
  for (std::size_t r = 0; r < constraint_rows.size(); ++r) {
    constraint_.row(static_cast<Eigen::Index>(r)) = constraint_rows[r].transpose();
  }
}

SparseMatrix LatentModel::prior_precision(const std::vector<double>& theta) const {
  using Triplet = Eigen::Triplet<double, int>;
  if (theta.size() != blocks_.size()) throw InputError("expected one log-precision per latent effect");
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < layout_.fixed.size; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), spec_.fixed_precision);
  }
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const double tau = std::exp(theta[k]);
    const int off = static_cast<int>(blocks_[k].range.offset);
    const auto& s = blocks_[k].structure;
    for (int col = 0; col < s.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(s, col); it; ++it) {
        triplets.emplace_back(off + it.row(), off + col, tau * it.value());
      }
    }
  }
  SparseMatrix q(static_cast<int>(layout_.dim), static_cast<int>(layout_.dim));
  q.setFromTriplets(triplets.begin(), triplets.end());
  q.makeCompressed();
  return q;
}

double LatentModel::prior_log_determinant(const std::vector<double>& theta) const {
  double value = static_cast<double>(layout_.fixed.size) * std::log(spec_.fixed_precision);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    value += static_cast<double>(blocks_[k].range.size) * theta[k] + blocks_[k].base_log_det;
  }
  return value;
}

double LatentModel::prior_constraint_log_determinant(const std::vector<double>& theta) const {
  double value = 0.0;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    value += blocks_[k].base_gram_log_det - static_cast<double>(blocks_[k].constraint_rows) * theta[k];
  }
  return value;
}

double LatentModel::log_hyperprior(const std::vector<double>& theta) const {
  double value = 0.0;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    value += spec_.hyperprior[k].log_density_of_log_precision(theta[k]);
  }
  return value;
}

}  // namespace hydrocar

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hydrocar/error.hpp"
#include "hydrocar/model.hpp"
#include "hydrocar/rng.hpp"

using namespace hydrocar;

namespace {

WaterNetwork star() {
  return WaterNetwork({{"A", {}}, {"B", {}}, {"C", {}}}, {{"A", "B", 10}, {"A", "C", 30}});
}

Participant person(std::string id, int y, double age, int gender, std::string house, NodeId node,
                   std::optional<Point> where = std::nullopt) {
  return Participant{std::move(id), y, age, gender, std::move(house), std::move(node), where};
}

Dataset small() {
  return Dataset({person("p1", 1, 30, 0, "h1", "A", Point{0, 0}), person("p2", 0, 50, 1, "h1", "B", Point{1500, 0}),
                  person("p3", 1, 70, 1, "h2", "B", Point{10, 1200})},
                 star());
}

}  // namespace

TEST_CASE("spec grammar and labels") {
  CHECK(parse_spec("age,gender").label() == "Age, Gender");
  CHECK(parse_spec("age,gender,house,spatial,graph").label() == "Age, Gender, House ID, Spatial Effect, Water Graph");
  CHECK(parse_spec("graph").label() == "Water Graph");
  CHECK(parse_spec("").label() == "Intercept");
  CHECK(parse_spec(" Age , GENDER ").tokens() == "age,gender");
  try {
    parse_spec("age,weight");
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'weight'") != std::string::npos);
    CHECK(msg.find("age, gender, house, spatial, graph") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_spec("graph,graph"), InputError);
  const auto spec = parse_spec("house,graph");
  REQUIRE(spec.hyperprior.size() == 2);
  CHECK(spec.hyperprior[0].shape == 1.0);
  CHECK(spec.hyperprior[0].rate == 5e-5);
}

TEST_CASE("dataset validation and anchoring") {
  CHECK_THROWS_AS(Dataset({person("p", 1, 20, 0, "h", "Z")}, star()), InputError);
  const auto ds = small();
  CHECK(ds.network().is_anchored("A"));
  CHECK(ds.network().is_anchored("B"));
  CHECK_FALSE(ds.network().is_anchored("C"));

  auto missing = person("p4", 1, 40, 0, "", "C");
  missing.age.reset();
  const Dataset with_gap({person("p1", 1, 30, 0, "h1", "A"), missing}, star());
  CHECK(with_gap.complete_cases({Variable::Outcome}).size() == 2);
  CHECK(with_gap.complete_cases({Variable::Outcome, Variable::Age}).size() == 1);
  CHECK(with_gap.complete_cases({Variable::House}).size() == 1);
}

TEST_CASE("participants csv") {
  std::istringstream in(
      "id,outcome,age,gender,house_id,node_id,x,y\n"
      "a,1,34.5,0,h1,A,1,2\n"
      "b,,60,1,,B,,\n"
      "c,0,NA,NA,h2,C,3,4\n");
  const auto people = parse_participants(in);
  REQUIRE(people.size() == 3);
  CHECK(*people[0].age == 34.5);
  CHECK(people[0].location->y == 2.0);
  CHECK_FALSE(people[1].outcome.has_value());
  CHECK(people[1].house_id.empty());
  CHECK_FALSE(people[1].location.has_value());
  CHECK_FALSE(people[2].age.has_value());
  std::ostringstream out;
  write_participants(people, out);
  std::istringstream again(out.str());
  const auto round = parse_participants(again);
  CHECK(round.size() == 3);
  CHECK(*round[0].age == 34.5);

  std::istringstream bad("id,outcome,age,gender,house_id,node_id,x,y\na,2,30,0,h,A,,\n");
  CHECK_THROWS_AS(parse_participants(bad), InputError);
}

TEST_CASE("design matrix") {
  SUBCASE("intercept only") {
    const auto ds = small();
    const auto spec = parse_spec("");
    const auto a = design_matrix(ds, spec, make_layout(ds, spec));
    CHECK(Eigen::MatrixXd(a) == Eigen::MatrixXd::Ones(3, 1));
  }
  SUBCASE("graph block index of the participant's node") {
    const Dataset ds({person("p", 1, 40, 0, "h", "B")}, star());
    const auto spec = parse_spec("graph");
    const auto layout = make_layout(ds, spec);
    const Eigen::MatrixXd a = design_matrix(ds, spec, layout);
    REQUIRE(layout.dim == 4);
    CHECK(a(0, 0) == 1.0);
    CHECK(a(0, static_cast<Eigen::Index>(layout.range(LatentEffect::Graph)->offset + 1)) == 1.0);
    CHECK(a.sum() == 2.0);
  }
  SUBCASE("shared household column") {
    const auto ds = small();
    const auto spec = parse_spec("house");
    const Eigen::MatrixXd a = design_matrix(ds, spec, make_layout(ds, spec));
    CHECK(a.row(0) == a.row(1));
    CHECK(a.row(0) != a.row(2));
  }
  SUBCASE("row structure and age standardization") {
    const auto ds = small();
    const auto spec = parse_spec("age,gender,house,spatial,graph");
    const auto layout = make_layout(ds, spec);
    const auto a = design_matrix(ds, spec, layout);
    CHECK(static_cast<std::size_t>(a.cols()) == layout.dim);
    for (int r = 0; r < a.rows(); ++r) {
      int nnz = 0;
      for (int c = 0; c < a.cols(); ++c) {
        for (SparseMatrix::InnerIterator it(a, c); it; ++it) nnz += it.row() == r;
      }
      CHECK(nnz == 1 + 2 + 3);
    }
    const Eigen::MatrixXd dense(a);
    const Vector age = dense.col(1);
    CHECK(std::abs(age.mean()) < 1e-12);
    CHECK(std::abs(std::sqrt(age.squaredNorm() / 3.0) - 1.0) < 1e-12);
    const auto scaling = age_scaling(ds);
    CHECK(scaling.original(age[2]) == doctest::Approx(70.0).epsilon(1e-14));
    CHECK(dense.col(2) == Eigen::Vector3d(0, 1, 1));
  }
  SUBCASE("missing location for the spatial effect lists ids") {
    const Dataset ds({person("p1", 1, 30, 0, "h", "A", Point{0, 0}), person("p2", 1, 30, 0, "h", "A"),
                      person("p3", 1, 30, 0, "h", "A")},
                     star());
    const auto spec = parse_spec("spatial");
    try {
      design_matrix(ds, spec, make_layout(ds, spec));
      FAIL("expected an error");
    } catch (const InputError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("p2, p3") != std::string::npos);
    }
  }
}

TEST_CASE("loglik") {
  SUBCASE("at zero") {
    const auto ll = loglik(Vector::Ones(1), Vector::Zero(1));
    CHECK(ll.value == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(ll.gradient[0] == 0.5);
    CHECK(ll.weight[0] == 0.25);
  }
  SUBCASE("saturated predictor") {
    const auto ll = loglik(Vector::Zero(1), Vector::Constant(1, -30.0));
    CHECK(std::abs(ll.value) < 1e-12);
    CHECK(logistic(-30.0) == doctest::Approx(9.357622968840175e-14).epsilon(1e-10));
    CHECK(ll.weight[0] > 0.0);
  }
  SUBCASE("finite over the working range") {
    for (double eta = -700; eta <= 700; eta += 3.5) {
      for (double y : {0.0, 1.0}) {
        const auto ll = loglik(Vector::Constant(1, y), Vector::Constant(1, eta));
        CHECK(std::isfinite(ll.value));
        CHECK(ll.gradient[0] >= -1.0);
        CHECK(ll.gradient[0] <= 1.0);
        CHECK(ll.weight[0] > 0.0);
        CHECK(ll.weight[0] <= 0.25);
      }
    }
  }
  SUBCASE("matches central finite differences") {
    Rng rng(3);
    const int n = 20;
    Vector y(n), eta(n);
    for (int i = 0; i < n; ++i) {
      y[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
      eta[i] = rng.uniform() * 8.0 - 4.0;
    }
    const auto ll = loglik(y, eta);
    const double h = 1e-5;
    for (int i = 0; i < n; ++i) {
      Vector up = eta, down = eta;
      up[i] += h;
      down[i] -= h;
      const auto lu = loglik(y, up), ld = loglik(y, down);
      const double grad_fd = (lu.value - ld.value) / (2 * h);
      const double w_fd = -(lu.gradient[i] - ld.gradient[i]) / (2 * h);
      CHECK(std::abs(grad_fd - ll.gradient[i]) <= 1e-6 * std::max(1e-3, std::abs(ll.gradient[i])));
      CHECK(std::abs(w_fd - ll.weight[i]) <= 1e-6 * ll.weight[i]);
    }
  }
  SUBCASE("non-binary response") {
    CHECK_THROWS_AS(loglik(Vector::Constant(1, 0.5), Vector::Zero(1)), InputError);
    CHECK_THROWS_AS(loglik(Vector::Zero(2), Vector::Zero(1)), InputError);
  }
}

TEST_CASE("spatial lattice") {
  auto at = [](double x, double y) {
    return Participant{"p", 1, 30.0, 0, "h", "A", Point{x, y}};
  };
  SUBCASE("one cell") {
    const auto l = build_spatial_lattice(std::vector<Participant>{at(0, 0), at(1, 0)}, 1000);
    CHECK(l.adjacency.labels.size() == 1);
    CHECK(l.adjacency.neighbors[0].empty());
  }
  SUBCASE("two horizontal neighbors") {
    const auto l = build_spatial_lattice(std::vector<Participant>{at(0, 0), at(1500, 10)}, 1000);
    REQUIRE(l.adjacency.labels.size() == 2);
    CHECK(l.adjacency.neighbors[0] == std::vector<std::size_t>{1});
    CHECK(l.adjacency.neighbors[1] == std::vector<std::size_t>{0});
    CHECK(l.cell == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("bad cell size") {
    CHECK_THROWS_AS(build_spatial_lattice(std::vector<Participant>{at(0, 0)}, 0.0), InputError);
  }
  SUBCASE("random points against brute force") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      std::vector<Participant> people;
      for (int i = 0; i < 100; ++i) people.push_back(at(4000 * rng.uniform(), 4000 * rng.uniform()));
      const double cell = 1000.0;  // about 16 cells over the 4 km square
      const auto l = build_spatial_lattice(people, cell);
      double min_x = 1e300, min_y = 1e300;
      for (const auto& p : people) {
        min_x = std::min(min_x, p.location->x);
        min_y = std::min(min_y, p.location->y);
      }
      std::vector<std::pair<long, long>> coord(people.size());
      for (std::size_t i = 0; i < people.size(); ++i) {
        coord[i] = {static_cast<long>((people[i].location->x - min_x) / cell),
                    static_cast<long>((people[i].location->y - min_y) / cell)};
      }
      // Same cell iff same grid coordinates; neighbors iff Manhattan distance 1.
      for (std::size_t i = 0; i < people.size(); ++i) {
        for (std::size_t j = 0; j < people.size(); ++j) {
          const long d = std::abs(coord[i].first - coord[j].first) + std::abs(coord[i].second - coord[j].second);
          CHECK((l.cell[i] == l.cell[j]) == (d == 0));
          const auto& nb = l.adjacency.neighbors[l.cell[i]];
          const bool linked = std::find(nb.begin(), nb.end(), l.cell[j]) != nb.end();
          CHECK(linked == (d == 1));
        }
      }
    }
  }
}

TEST_CASE("latent model prior structure") {
  const auto ds = small();
  const LatentModel model(ds, parse_spec("age,house,graph"));
  CHECK(model.dim() == 2 + 2 + 3);
  CHECK(model.constraint().rows() == 1);
  const std::vector<double> theta{std::log(2.0), std::log(3.0)};
  const Eigen::MatrixXd q(model.prior_precision(theta));
  CHECK(q(0, 0) == 0.001);
  CHECK(q(2, 2) == 2.0);
  CHECK(q(4, 5) == doctest::Approx(-0.3).epsilon(1e-12));
  // Closed-form log det agrees with a direct dense evaluation.
  CHECK(model.prior_log_determinant(theta) == doctest::Approx(std::log(q.determinant())).epsilon(1e-9));
  const Eigen::MatrixXd c = model.constraint();
  const double gram = (c * q.inverse() * c.transpose())(0, 0);
  CHECK(model.prior_constraint_log_determinant(theta) == doctest::Approx(std::log(gram)).epsilon(1e-6));
}

// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hydrocar/cli.hpp"
#include "hydrocar/inference.hpp"
#include "hydrocar/network.hpp"
#include "hydrocar/precision.hpp"
#include "hydrocar/rng.hpp"
#include "hydrocar/selection.hpp"
#include "hydrocar/synth.hpp"
#include "test_util.hpp"

using namespace hydrocar;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  %2d  %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0 + 0.0; }

Outcome star_precision() {
  const auto t0 = Clock::now();
  const WaterNetwork net({{"A", {}}, {"B", {}}, {"C", {}}}, {{"A", "B", 10}, {"A", "C", 30}});
  const auto q = build_distance_precision(net);
  const double expected[3][3] = {{0.13, -0.1, -0.03}, {-0.1, 0.1, 0.0}, {-0.03, 0.0, 0.03}};
  bool ok = q.dim() == 3;
  for (int i = 0; i < 3 && ok; ++i) {
    for (int j = 0; j < 3; ++j) ok = ok && round2(q.coeff(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) == expected[i][j];
  }
  const double t = seconds_since(t0);
  return {ok && t < 1.0, std::string(ok ? "rounded entries match" : "rounded entries differ") + fmt(", %.4f s", t)};
}

Outcome border_rule() {
  const auto t0 = Clock::now();
  int checked = 0, bad = 0;
  for (std::uint64_t g = 0; g < 100; ++g) {
    Rng rng(derive_seed(2, g));
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 40);
    const double p = 0.05 + 0.4 * rng.uniform();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    Adjacency adj;
    adj.neighbors.resize(n);
    for (std::size_t i = 0; i < n; ++i) adj.labels.push_back("u" + std::to_string(i));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (rng.uniform() < p) {
          edges.push_back({i, j});
          adj.neighbors[i].push_back(j);
          adj.neighbors[j].push_back(i);
        }
      }
    }
    const auto q = build_border_precision(adj);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double expected = 0.0;
        if (i == j) {
          for (const auto& e : edges) expected += (e.first == i) + (e.second == i);
        } else {
          for (const auto& e : edges) {
            if ((e.first == i && e.second == j) || (e.first == j && e.second == i)) expected = -1.0;
          }
        }
        bad += q.coeff(i, j) != expected;
        ++checked;
      }
    }
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 5.0, fmt("%.0f of %.0f entries differ from the brute-force count", bad, checked)};
}

int bfs_components(const WaterNetwork& net) {
  const auto n = net.node_count();
  std::vector<std::vector<std::size_t>> nb(n);
  for (const auto& s : net.segments()) {
    nb[net.index_of(s.from)].push_back(net.index_of(s.to));
    nb[net.index_of(s.to)].push_back(net.index_of(s.from));
  }
  std::vector<bool> seen(n, false);
  int count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++count;
    std::vector<std::size_t> queue{s};
    seen[s] = true;
    while (!queue.empty()) {
      const auto v = queue.back();
      queue.pop_back();
      for (auto w : nb[v]) {
        if (!seen[w]) {
          seen[w] = true;
          queue.push_back(w);
        }
      }
    }
  }
  return count;
}

Outcome intrinsic_structure() {
  double worst_row = 0.0;
  int mismatched = 0;
  for (std::uint64_t g = 0; g < 50; ++g) {
    Rng rng(derive_seed(3, g));
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 49);
    const auto net = testutil::random_graph(n, 1.5 / static_cast<double>(n) + 0.1 * rng.uniform(), derive_seed(4, g));
    const auto q = build_distance_precision(net);
    const Eigen::MatrixXd d = q.dense();
    worst_row = std::max(worst_row, d.rowwise().sum().cwiseAbs().maxCoeff());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d, Eigen::EigenvaluesOnly);
    const int zeros = static_cast<int>((eig.eigenvalues().array().abs() < 1e-8).count());
    mismatched += zeros != bfs_components(net);
  }
  return {worst_row < 1e-12 && mismatched == 0,
          fmt("max |row sum| %.2e, %.0f networks with null space != component count", worst_row, mismatched)};
}

Outcome marginalization() {
  double worst = 0.0;
  std::size_t removed = 0;
  for (std::uint64_t g = 0; g < 50; ++g) {
    Rng rng(derive_seed(5, g));
    const auto chain = testutil::random_chain(3 + static_cast<std::size_t>(rng.uniform() * 30), derive_seed(6, g));
    const auto simple = simplify(chain);
    removed += chain.node_count() - simple.node_count();
    worst = std::max(worst, testutil::schur_gap(chain, simple));
  }
  return {worst < 1e-12 && removed > 0,
          fmt("max entrywise gap %.2e over 50 chains (%.0f nodes contracted)", worst, static_cast<double>(removed))};
}

Outcome posterior_oracle() {
  std::vector<Participant> people;
  const int ya[] = {1, 1, 0}, yb[] = {1, 0, 0};
  for (int i = 0; i < 3; ++i) people.push_back({"a" + std::to_string(i), ya[i], 40.0, 0, "h", "A", Point{0, 0}});
  for (int i = 0; i < 3; ++i) people.push_back({"b" + std::to_string(i), yb[i], 40.0, 0, "h", "B", Point{0, 0}});
  const Dataset ds(people, WaterNetwork({{"A", {}}, {"B", {}}}, {{"A", "B", 1.0}}));
  const LatentModel model(ds, parse_spec("graph"));
  const auto approx = gaussian_approximation(model, {0.0});
  const auto q = testutil::pair_quadrature();
  const auto g = model.layout().range(LatentEffect::Graph)->offset;
  const auto ia = static_cast<Eigen::Index>(g);
  const double mode_err = std::max({std::abs(approx.mode[ia] - q.mode_u), std::abs(approx.mode[ia + 1] + q.mode_u),
                                    std::abs(approx.mode[0] - q.mode_b)});
  const double sd_a = std::sqrt(approx.marginal_variance(g));
  const double sd_b = std::sqrt(approx.marginal_variance(g + 1));
  const double sd_err = std::max(std::abs(sd_a - q.sd_u), std::abs(sd_b - q.sd_u)) / q.sd_u;
  return {mode_err < 0.02 && sd_err < 0.05, fmt("mode error %.2e, graph sd relative error %.2f%%", mode_err, 100 * sd_err)};
}

Outcome gradient_check() {
  const auto net = simulate_network(27, {}, {}, 31);
  SimulationConfig cfg;
  cfg.n_participants = 400;
  cfg.beta0 = -0.4;
  cfg.beta_age = 0.02;
  cfg.tau_graph = 1.0;
  cfg.seed = 31;
  const auto sim = simulate_dataset(net, cfg);
  const LatentModel model(sim.dataset, parse_spec("age,gender,graph"));
  if (model.dim() != 30) return {false, "model dimension is not 30"};
  Rng rng(77);
  std::normal_distribution<double> normal(0.0, 0.5);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    Vector x(30);
    for (Eigen::Index i = 0; i < 30; ++i) x[i] = normal(rng);
    const Hyperparameters theta{normal(rng)};
    const auto lp = log_posterior(model, theta, x);
    Vector fd(30);
    for (Eigen::Index i = 0; i < 30; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      Vector up = x, down = x;
      up[i] += h;
      down[i] -= h;
      fd[i] = (log_posterior(model, theta, up).value - log_posterior(model, theta, down).value) / (2 * h);
    }
    worst = std::max(worst, (fd - lp.gradient).norm() / lp.gradient.norm());
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 20 points", worst)};
}

struct Replicates {
  int supported = 0;
  int failed_rows = 0;
  double seconds = 0.0;
};

Replicates graph_replicates(bool with_graph) {
  const auto t0 = Clock::now();
  Replicates r;
  const auto ladder = ModelLadder::parse("age,gender;age,gender,graph");
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto net = simulate_network(100, {}, {}, derive_seed(seed, 100));
    SimulationConfig cfg;
    cfg.n_participants = 2000;
    cfg.beta0 = -0.5;
    cfg.beta_age = 0.01;
    cfg.beta_gender = 0.2;
    cfg.seed = seed;
    if (with_graph) {
      cfg.tau_graph = 1.0;
      cfg.events.push_back({pick_event_origin(net, 0.25), 2.0, 0.0});
    }
    const auto sim = simulate_dataset(net, cfg);
    const auto table = run_ladder(sim.dataset, ladder, seed);
    for (const auto& row : table.rows) r.failed_rows += !row.ok;
    r.supported += table.rows[1].supported;
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome effect_recovery() {
  const auto r = graph_replicates(true);
  return {r.supported >= 18 && r.seconds < 600,
          fmt("graph row supported in %.0f/20 replicates, %.0f failed rows, %.1f s", r.supported, r.failed_rows,
              r.seconds)};
}

Outcome null_control() {
  const auto r = graph_replicates(false);
  return {r.supported <= 2 && r.seconds < 600,
          fmt("graph row supported in %.0f/20 replicates, %.0f failed rows, %.1f s", r.supported, r.failed_rows,
              r.seconds)};
}

Outcome dic_closed_form() {
  const int n = 1000;
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2;
  const auto factor = CholeskyFactor::factorize(SparseMatrix(0, 0), 0.0);
  const auto d = compute_dic(y, SparseMatrix(n, 0), Vector(), factor, ConstraintCorrection(), 10000, 9);
  const double expected = 2.0 * n * std::log(2.0);
  return {d.deviance_bar == expected && d.deviance_at_mean == expected && std::abs(d.p_eff) <= 0.1,
          fmt("D = %.17g (2n log 2 = %.17g), p_eff = %.3g", d.deviance_bar, expected, d.p_eff)};
}

Outcome downstream_oracle() {
  int mismatched = 0;
  for (std::uint64_t g = 0; g < 200; ++g) {
    Rng rng(derive_seed(10, g));
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 200);
    const auto net = testutil::random_dag(n, std::min(1.0, 2.0 / static_cast<double>(n)), derive_seed(11, g));
    std::map<NodeId, std::vector<NodeId>> out;
    for (const auto& s : net.segments()) out[s.from].push_back(s.to);
    const auto& origin = net.nodes()[static_cast<std::size_t>(rng.uniform() * static_cast<double>(n))].id;
    std::set<NodeId> seen;
    std::function<void(const NodeId&)> dfs = [&](const NodeId& v) {
      if (!seen.insert(v).second) return;
      for (const auto& w : out[v]) dfs(w);
    };
    dfs(origin);
    const auto got = downstream(net, origin);
    mismatched += std::set<NodeId>(got.begin(), got.end()) != seen;
  }
  return {mismatched == 0, fmt("%.0f of 200 DAGs differ from depth-first search", mismatched)};
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "hydrocar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path synthetic_fixture() {
  const auto dir = fs::temp_directory_path() / "hydrocar_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  if (cli({"simulate", "--nodes", "100", "--participants", "2000", "--effect", "2", "--tau-graph", "1", "--tau-house",
           "4", "--seed", "7", "--output-dir", (dir / "data").string()}) != 0) {
    throw std::runtime_error("simulate failed");
  }
  return dir;
}

std::vector<std::string> compare_args(const fs::path& dir, const std::string& prefix) {
  const auto data = dir / "data";
  return {"compare",     "--nodes",  (data / "nodes.csv").string(), "--segments", (data / "segments.csv").string(),
          "--participants", (data / "participants.csv").string(), "--seed", "7", "--output", (dir / prefix).string()};
}

Outcome determinism(const fs::path& dir) {
  std::string first, second;
  if (cli(compare_args(dir, "run1"), &first) != 0 || cli(compare_args(dir, "run2"), &second) != 0) {
    return {false, "compare exited non-zero"};
  }
  const bool same = first == second && slurp(dir / "run1.txt") == slurp(dir / "run2.txt") &&
                    slurp(dir / "run1.csv") == slurp(dir / "run2.csv");
  return {same, same ? "stdout, text and csv outputs byte-identical" : "outputs differ"};
}

Outcome scale(const fs::path& dir) {
  const auto t0 = Clock::now();
  std::string out;
  const int code = cli(compare_args(dir, "scale"), &out);
  const double t = seconds_since(t0);
  const auto csv = slurp(dir / "scale.csv");
  const auto ok_rows = static_cast<double>(std::count(csv.begin(), csv.end(), '\n') - 1);
  const bool all_ok = csv.find(",failed,") == std::string::npos;
  return {code == 0 && ok_rows == 6 && all_ok && t < 300,
          fmt("six-row ladder, 2000 participants / 100 nodes: %.0f rows, %.1f s", ok_rows, t)};
}

}  // namespace

int main() {
  report(1, "three-node precision", star_precision);
  report(2, "border-count rule", border_rule);
  report(3, "intrinsic structure", intrinsic_structure);
  report(4, "marginalization exactness", marginalization);
  report(5, "posterior oracle", posterior_oracle);
  report(6, "gradient check", gradient_check);
  report(7, "effect recovery", effect_recovery);
  report(8, "null control", null_control);
  report(9, "dic closed form", dic_closed_form);
  report(10, "downstream oracle", downstream_oracle);
  fs::path dir;
  try {
    dir = synthetic_fixture();
  } catch (const std::exception&) {
  }
  report(11, "determinism", [&] { return determinism(dir); });
  report(12, "desk-scale ladder", [&] { return scale(dir); });
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "hydrocar/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hydrocar/error.hpp"
#include "hydrocar/inference.hpp"
#include "hydrocar/io.hpp"
#include "hydrocar/precision.hpp"
#include "hydrocar/selection.hpp"
#include "hydrocar/synth.hpp"

namespace hydrocar {

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

WaterNetwork load_network(const std::string& nodes, const std::string& segments) {
  auto n = open_input(nodes);
  auto s = open_input(segments);
  return parse_network(n, s);
}

Dataset load_dataset(const std::string& nodes, const std::string& segments, const std::string& participants,
                     const std::string& outcome_name) {
  auto net = load_network(nodes, segments);
  auto p = open_input(participants);
  return Dataset(parse_participants(p), std::move(net), outcome_name);
}

// Flag wins over HYDROCAR_SEED, which wins over the default of 1.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("HYDROCAR_SEED")) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(env, &used);
      if (used == std::string(env).size()) return value;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("HYDROCAR_SEED is not an unsigned integer: '") + env + "'");
  }
  return 1;
}

struct DataOptions {
  std::string nodes;
  std::string segments;
  std::string participants;
  std::string outcome_name = "outcome";
  double cell_size = 1000.0;
  bool simplify = false;
  int draws = 1000;
  std::optional<std::uint64_t> seed;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--nodes", o.nodes, "nodes.csv (node_id,x,y)")->required();
  cmd->add_option("--segments", o.segments, "segments.csv (from_node,to_node,length_m)")->required();
  cmd->add_option("--participants", o.participants, "participants.csv")->required();
  cmd->add_option("--outcome-name", o.outcome_name, "label of the binary outcome");
  cmd->add_option("--cell-size", o.cell_size, "spatial lattice cell size in meters")->check(CLI::PositiveNumber);
  cmd->add_flag("--simplify", o.simplify, "contract pass-through junctions before fitting");
  cmd->add_option("--draws", o.draws, "posterior draws for DIC")->check(CLI::Range(2, 1000000));
  cmd->add_option("--seed", o.seed, "random seed (default: HYDROCAR_SEED or 1)");
}

Dataset prepare(const DataOptions& o) {
  auto ds = load_dataset(o.nodes, o.segments, o.participants, o.outcome_name);
  return o.simplify ? ds.simplified() : ds;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Water-network CAR models and DIC model comparison", "hydrocar"};
  app.require_subcommand(1);

  // build-qmatrix
  auto* qcmd = app.add_subcommand("build-qmatrix", "write the network precision matrix as a coordinate list");
  std::string q_nodes, q_segments, q_output, q_index, q_weighting = "distance";
  std::vector<std::string> q_anchors;
  bool q_simplify = false;
  qcmd->add_option("--nodes", q_nodes, "nodes.csv")->required();
  qcmd->add_option("--segments", q_segments, "segments.csv")->required();
  qcmd->add_option("--weighting", q_weighting, "border or distance")->check(CLI::IsMember({"border", "distance"}));
  qcmd->add_flag("--simplify", q_simplify, "contract pass-through junctions first");
  qcmd->add_option("--anchor", q_anchors, "node ids that simplification must keep")->delimiter(',');
  qcmd->add_option("--output", q_output, "matrix file (row,col,value; upper triangle)")->required();
  qcmd->add_option("--index", q_index, "index sidecar (default: <output>.index.csv)");

  // fit
  auto* fcmd = app.add_subcommand("fit", "fit one model and report its DIC");
  DataOptions f_opts;
  std::string f_spec = "age,gender", f_output;
  add_data_options(fcmd, f_opts);
  fcmd->add_option("--spec", f_spec, "comma-separated effects from age, gender, house, spatial, graph");
  fcmd->add_option("--output", f_output, "fit result document (JSON)");

  // compare
  auto* ccmd = app.add_subcommand("compare", "fit a model ladder and compare DIC values");
  DataOptions c_opts;
  std::string c_ladder = "default", c_output;
  add_data_options(ccmd, c_opts);
  ccmd->add_option("--ladder", c_ladder, "\"default\" or specs separated by ';'");
  ccmd->add_option("--output", c_output, "output prefix; writes <prefix>.txt and <prefix>.csv");

  // simulate
  auto* scmd = app.add_subcommand("simulate", "generate a synthetic network and cohort");
  std::size_t s_nodes = 100, s_participants = 2000, s_max_children = 3;
  double s_effect = 0.0, s_decay = 0.0, s_tau_graph = 0.0, s_tau_house = 0.0, s_tau_spatial = 0.0;
  double s_beta0 = -0.5, s_beta_age = 0.01, s_beta_gender = 0.2, s_cell_size = 1000.0;
  double s_length_min = 0.2, s_length_max = 1.0;
  std::optional<std::uint64_t> s_seed;
  std::string s_dir;
  scmd->add_option("--nodes", s_nodes, "network size")->check(CLI::PositiveNumber);
  scmd->add_option("--participants", s_participants, "cohort size")->check(CLI::PositiveNumber);
  scmd->add_option("--effect", s_effect, "contamination effect size (log-odds); 0 for none");
  scmd->add_option("--decay", s_decay, "contamination decay per meter")->check(CLI::NonNegativeNumber);
  scmd->add_option("--tau-graph", s_tau_graph, "precision of the network effect; 0 disables")->check(CLI::NonNegativeNumber);
  scmd->add_option("--tau-house", s_tau_house, "precision of the household effect; 0 disables")->check(CLI::NonNegativeNumber);
  scmd->add_option("--tau-spatial", s_tau_spatial, "precision of the spatial effect; 0 disables")->check(CLI::NonNegativeNumber);
  scmd->add_option("--beta0", s_beta0, "intercept");
  scmd->add_option("--beta-age", s_beta_age, "log-odds per year of age");
  scmd->add_option("--beta-gender", s_beta_gender, "log-odds for gender = 1");
  scmd->add_option("--cell-size", s_cell_size, "lattice cell size for the spatial effect")->check(CLI::PositiveNumber);
  scmd->add_option("--max-children", s_max_children, "branching limit of the tree");
  scmd->add_option("--length-min", s_length_min, "shortest pipe")->check(CLI::PositiveNumber);
  scmd->add_option("--length-max", s_length_max, "longest pipe")->check(CLI::PositiveNumber);
  scmd->add_option("--seed", s_seed, "random seed (default: HYDROCAR_SEED or 1)");
  scmd->add_option("--output-dir", s_dir, "directory for nodes.csv, segments.csv, participants.csv, truth.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*qcmd) {
      auto net = load_network(q_nodes, q_segments);
      if (!q_anchors.empty()) net = net.with_anchors(std::set<NodeId>(q_anchors.begin(), q_anchors.end()));
      if (q_simplify) net = simplify(net);
      const auto q = build_precision(net, q_weighting == "border" ? Weighting::BorderCount : Weighting::InverseDistance);
      auto matrix_out = open_output(q_output);
      auto index_out = open_output(q_index.empty() ? q_output + ".index.csv" : q_index);
      write_coordinate_list(q, matrix_out, index_out);
      out << "wrote " << q.dim() << "x" << q.dim() << " precision matrix to " << q_output << '\n';
    } else if (*fcmd) {
      auto spec = parse_spec(f_spec);
      spec.cell_size = f_opts.cell_size;
      const auto ds = prepare(f_opts);
      const auto result = fit(ds, spec, resolve_seed(f_opts.seed), FitOptions{f_opts.draws});
      const auto doc = fit_result_json(result);
      if (!f_output.empty()) {
        auto file = open_output(f_output);
        file << doc;
      }
      out << "model: " << result.spec.label() << '\n'
          << "dic: " << format_double(result.dic.dic) << '\n'
          << "p_eff: " << format_double(result.dic.p_eff) << '\n';
    } else if (*ccmd) {
      auto ladder = ModelLadder::parse(c_ladder);
      for (auto& s : ladder.specs) s.cell_size = c_opts.cell_size;
      const auto ds = prepare(c_opts);
      const auto table = run_ladder(ds, ladder, resolve_seed(c_opts.seed), LadderOptions{c_opts.draws});
      std::ostringstream text;
      write_table_text(table, text);
      out << text.str();
      if (!c_output.empty()) {
        auto txt = open_output(c_output + ".txt");
        txt << text.str();
        auto csv = open_output(c_output + ".csv");
        write_table_csv(table, csv);
      }
      if (!table.any_ok()) {
        err << "every model in the ladder failed\n";
        return kExitNumerical;
      }
    } else if (*scmd) {
      const auto seed = resolve_seed(s_seed);
      std::error_code ec;
      std::filesystem::create_directories(s_dir, ec);
      if (ec) throw InputError("cannot create '" + s_dir + "': " + ec.message());
      const auto net = simulate_network(s_nodes, Branching{s_max_children}, LengthDistribution{s_length_min, s_length_max},
                                        derive_seed(seed, 100));
      SimulationConfig config;
      config.n_participants = s_participants;
      config.beta0 = s_beta0;
      config.beta_age = s_beta_age;
      config.beta_gender = s_beta_gender;
      config.tau_graph = s_tau_graph;
      config.tau_house = s_tau_house;
      config.tau_spatial = s_tau_spatial;
      config.cell_size = s_cell_size;
      config.seed = seed;
      if (s_effect != 0.0) config.events.push_back({pick_event_origin(net, 0.25), s_effect, s_decay});
      const auto sim = simulate_dataset(net, config);

      const std::filesystem::path dir(s_dir);
      auto nodes = open_output((dir / "nodes.csv").string());
      nodes << "node_id,x,y\n";
      for (const auto& n : net.nodes()) {
        nodes << n.id << ',' << format_double(n.location->x) << ',' << format_double(n.location->y) << '\n';
      }
      auto segments = open_output((dir / "segments.csv").string());
      segments << "from_node,to_node,length_m\n";
      for (const auto& s : net.segments()) segments << s.from << ',' << s.to << ',' << format_double(s.length) << '\n';
      auto participants = open_output((dir / "participants.csv").string());
      write_participants(sim.dataset.participants(), participants);
      auto truth = open_output((dir / "truth.json").string());
      truth << truth_json(sim.truth);
      out << "wrote " << net.node_count() << " nodes, " << net.segment_count() << " segments, "
          << sim.dataset.size() << " participants to " << s_dir << '\n';
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}

}  // namespace hydrocar

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hydrocar/inference.hpp"

namespace hydrocar {

// DIC reduction treated as meaningful.
inline constexpr double kDicThreshold = 10.0;

enum class Significance { Supported, NotSupported };

// Supported iff dic_b <= dic_a - 10.
Significance significance(double dic_a, double dic_b);

struct ModelLadder {
  std::vector<ModelSpec> specs;

  // The six stepwise rows: Age, Gender / + House ID / + Spatial Effect /
  // + Water Graph / Age, Gender, Water Graph / Water Graph.
  static ModelLadder standard();
  // Semicolon-separated spec strings, or "default".
  static ModelLadder parse(const std::string& text);
};

struct ComparisonRow {
  std::string label;
  std::string spec;
  bool ok = false;
  std::string error;
  double dic = 0.0;
  double p_eff = 0.0;
  double delta_dic = 0.0;  // dic - baseline dic (first row)
  bool supported = false;
  std::size_t n_observations = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t n_observations = 0;

  bool any_ok() const;
};

struct LadderOptions {
  int n_draws = 1000;
};

// Participants missing any variable used anywhere in the ladder are dropped
// before the first fit, so every row is fitted to the same observations.
Dataset align_complete_cases(const Dataset& ds, const ModelLadder& ladder);

// Row k is fitted with seed derive_seed(seed, k).
ComparisonTable run_ladder(const Dataset& ds, const ModelLadder& ladder, std::uint64_t seed,
                           const LadderOptions& options = {});

void write_table_text(const ComparisonTable& table, std::ostream& out);
void write_table_csv(const ComparisonTable& table, std::ostream& out);

}  // namespace hydrocar

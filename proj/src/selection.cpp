#include "hydrocar/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "hydrocar/error.hpp"
#include "hydrocar/io.hpp"
#include "hydrocar/rng.hpp"

namespace hydrocar {

Significance significance(double dic_a, double dic_b) {
  return dic_b <= dic_a - kDicThreshold ? Significance::Supported : Significance::NotSupported;
}

ModelLadder ModelLadder::standard() {
  ModelLadder ladder;
  for (const char* s : {"age,gender", "age,gender,house", "age,gender,house,spatial",
                        "age,gender,house,spatial,graph", "age,gender,graph", "graph"}) {
    ladder.specs.push_back(parse_spec(s));
  }
  return ladder;
}

ModelLadder ModelLadder::parse(const std::string& text) {
  if (text == "default") return standard();
  ModelLadder ladder;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) ladder.specs.push_back(parse_spec(part));
  if (ladder.specs.empty()) throw InputError("empty model ladder");
  return ladder;
}

bool ComparisonTable::any_ok() const {
  return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.ok; });
}

Dataset align_complete_cases(const Dataset& ds, const ModelLadder& ladder) {
  std::vector<Variable> required;
  for (const auto& spec : ladder.specs) {
    for (auto v : spec.required_variables()) {
      if (std::find(required.begin(), required.end(), v) == required.end()) required.push_back(v);
    }
  }
  return ds.complete_cases(required);
}

ComparisonTable run_ladder(const Dataset& ds, const ModelLadder& ladder, std::uint64_t seed,
                           const LadderOptions& options) {
  if (ladder.specs.empty()) throw InputError("empty model ladder");
  const Dataset aligned = align_complete_cases(ds, ladder);
  if (aligned.size() == 0) throw InputError("no participant has every variable used in the ladder");

  ComparisonTable table;
  table.n_observations = aligned.size();
  for (std::size_t k = 0; k < ladder.specs.size(); ++k) {
    ComparisonRow row;
    row.label = ladder.specs[k].label();
    row.spec = ladder.specs[k].tokens();
    row.n_observations = aligned.size();
    try {
      const auto result = fit(aligned, ladder.specs[k], derive_seed(seed, k), FitOptions{options.n_draws});
      row.ok = true;
      row.dic = result.dic.dic;
      row.p_eff = result.dic.p_eff;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  const auto& base = table.rows.front();
  for (auto& row : table.rows) {
    if (row.ok && base.ok) {
      row.delta_dic = row.dic - base.dic;
      row.supported = significance(base.dic, row.dic) == Significance::Supported;
    } else {
      row.delta_dic = std::nan("");
    }
  }
  return table;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_table_text(const ComparisonTable& table, std::ostream& out) {
  std::size_t width = 5;
  for (const auto& r : table.rows) width = std::max(width, r.label.size());
  auto pad = [](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return left ? s + fill : fill + s;
  };
  out << pad("Model", width, true) << "  " << pad("DIC", 12, false) << "  " << pad("p_eff", 9, false) << "  "
      << pad("dDIC", 10, false) << "  supported\n";
  for (const auto& r : table.rows) {
    out << pad(r.label, width, true) << "  ";
    if (r.ok) {
      out << pad(fixed(r.dic, 2), 12, false) << "  " << pad(fixed(r.p_eff, 2), 9, false) << "  "
          << pad(fixed(r.delta_dic, 2), 10, false) << "  " << (r.supported ? "yes" : "no") << '\n';
    } else {
      out << "failed: " << r.error << '\n';
    }
  }
  out << "N: " << table.n_observations << '\n';
}

void write_table_csv(const ComparisonTable& table, std::ostream& out) {
  out << "row,label,spec,status,dic,p_eff,delta_dic,supported,n_observations\n";
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& r = table.rows[k];
    out << k << ",\"" << r.label << "\",\"" << r.spec << "\"," << (r.ok ? "ok" : "failed") << ','
        << (r.ok ? format_double(r.dic) : "") << ',' << (r.ok ? format_double(r.p_eff) : "") << ','
        << (r.ok && !std::isnan(r.delta_dic) ? format_double(r.delta_dic) : "") << ','
        << (r.supported ? "true" : "false") << ',' << r.n_observations << '\n';
  }
}

}  // namespace hydrocar

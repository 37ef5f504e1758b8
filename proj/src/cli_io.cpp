#include "kmlr/cli_io.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "kmlr/diagnostics.hpp"
#include "kmlr/errors.hpp"
#include "kmlr/filter.hpp"
#include "kmlr/gibbs_mlr.hpp"
#include "kmlr/knockoff_gen.hpp"
#include "kmlr/lasso_stats.hpp"

namespace kmlr {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvTable parse_csv(std::istream& in, bool header) {
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  long line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (first && header) {
      table.header = cells;
      width = cells.size();
      first = false;
      continue;
    }
    if (first) width = cells.size();
    first = false;
    if (cells.size() != width) {
      throw DataError("ragged CSV: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(width));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      double v = 0.0;
      const char* begin = cell.data();
      const char* end = cell.data() + cell.size();
      if (!cell.empty() && *begin == '+') ++begin;
      const auto res = std::from_chars(begin, end, v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != end) {
        throw DataError("non-numeric CSV cell at row " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1) + ": '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError("non-finite CSV cell at row " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1));
      }
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("CSV has no data rows");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

CsvTable read_csv(const std::string& path, bool header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, header);
}

void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const Matrix& values, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, values, header);
}

json record_to_json(const RepRecord& r) {
  json j;
  j["rep"] = r.rep;
  j["method"] = r.method;
  j["knockoff"] = r.knockoff;
  j["n_rej"] = r.n_rej;
  j["fdp"] = r.fdp;
  j["power"] = r.power;
  j["seed"] = r.seed;
  j["runtime_ms"] = r.runtime_ms;
  if (!r.ok) j["error"] = r.error;
  return j;
}

void write_results(std::ostream& out, const std::vector<RepRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename E>
E parse_enum(const std::string& value, const std::vector<std::pair<std::string, E>>& table, const char* what) {
  for (const auto& [name, v] : table) {
    if (name == value) return v;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + value + "'");
}

template <typename E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, e] : table) {
    if (e == v) return name;
  }
  return "?";
}

const std::vector<std::pair<std::string, CovKind>> kCovKinds{
    {"ar1", CovKind::ar1}, {"erdos_renyi", CovKind::erdos_renyi}, {"equicorrelated", CovKind::equicorrelated}};
const std::vector<std::pair<std::string, CoefDist>> kCoefDists{{"uniform", CoefDist::uniform},
                                                               {"laplace", CoefDist::laplace}};
const std::vector<std::pair<std::string, ResponseModel>> kResponses{
    {"linear", ResponseModel::linear}, {"gam", ResponseModel::gam}, {"logistic", ResponseModel::logistic}};
const std::vector<std::pair<std::string, GamLink>> kLinks{
    {"sin", GamLink::sin}, {"cos", GamLink::cos}, {"quadratic", GamLink::quadratic}, {"cubic", GamLink::cubic}};
const std::vector<std::pair<std::string, KnockoffKind>> kKnockoffs{{"fixed_x", KnockoffKind::fixed_x},
                                                                   {"model_x", KnockoffKind::model_x_gaussian}};
const std::vector<std::pair<std::string, SMethod>> kSMethods{{"equi", SMethod::equicorrelated},
                                                             {"mvr", SMethod::mvr}};
const std::vector<std::pair<std::string, BasisKind>> kBases{{"identity", BasisKind::identity},
                                                            {"cubic_spline", BasisKind::cubic_spline}};

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"n", "p", "cov", "sparsity", "coef_dist", "tau", "response", "gam_link", "knockoff", "s_method",
                  "statistics", "q", "n_reps", "seed", "threads", "timing", "prior", "gibbs"},
                 "config");
  ExperimentConfig cfg;
  read_key(j, "n", cfg.n);
  read_key(j, "p", cfg.p);
  read_key(j, "sparsity", cfg.sparsity);
  read_key(j, "tau", cfg.tau);
  read_key(j, "q", cfg.q);
  read_key(j, "n_reps", cfg.n_reps);
  read_key(j, "seed", cfg.seed);
  read_key(j, "threads", cfg.threads);
  read_key(j, "timing", cfg.timing);
  std::string s;
  if (j.contains("coef_dist")) { read_key(j, "coef_dist", s); cfg.coef_dist = parse_enum(s, kCoefDists, "coef_dist"); }
  if (j.contains("response")) { read_key(j, "response", s); cfg.response = parse_enum(s, kResponses, "response"); }
  if (j.contains("gam_link")) { read_key(j, "gam_link", s); cfg.gam_link = parse_enum(s, kLinks, "gam_link"); }
  if (j.contains("knockoff")) { read_key(j, "knockoff", s); cfg.knockoff = parse_enum(s, kKnockoffs, "knockoff"); }
  if (j.contains("s_method")) { read_key(j, "s_method", s); cfg.s_method = parse_enum(s, kSMethods, "s_method"); }
  if (j.contains("statistics")) {
    std::vector<std::string> names;
    read_key(j, "statistics", names);
    cfg.statistics.clear();
    for (const auto& name : names) cfg.statistics.push_back(stat_method_from_string(name));
  }
  if (j.contains("cov")) {
    const json& c = j.at("cov");
    reject_unknown(c, {"kind", "beta_a", "beta_b", "cap", "init_variance", "sparsity", "rho"}, "cov");
    if (c.contains("kind")) { read_key(c, "kind", s); cfg.cov.kind = parse_enum(s, kCovKinds, "cov kind"); }
    read_key(c, "beta_a", cfg.cov.beta_a);
    read_key(c, "beta_b", cfg.cov.beta_b);
    read_key(c, "cap", cfg.cov.cap);
    read_key(c, "init_variance", cfg.cov.init_variance);
    read_key(c, "sparsity", cfg.cov.sparsity);
    read_key(c, "rho", cfg.cov.rho);
  }
  if (j.contains("prior")) {
    const json& pr = j.at("prior");
    reject_unknown(pr, {"basis", "knots", "mixture", "sigma2_shape", "sigma2_rate", "sparsity_a", "sparsity_b"},
                   "prior");
    if (pr.contains("basis")) { read_key(pr, "basis", s); cfg.prior.basis = parse_enum(s, kBases, "basis"); }
    read_key(pr, "knots", cfg.prior.knots);
    read_key(pr, "sigma2_shape", cfg.prior.sigma2_shape);
    read_key(pr, "sigma2_rate", cfg.prior.sigma2_rate);
    read_key(pr, "sparsity_a", cfg.prior.sparsity_a);
    read_key(pr, "sparsity_b", cfg.prior.sparsity_b);
    if (pr.contains("mixture")) {
      if (!pr.at("mixture").is_array()) throw ConfigError("prior.mixture must be an array");
      cfg.prior.mixture.clear();
      for (const auto& m : pr.at("mixture")) {
        reject_unknown(m, {"weight_alpha", "shape", "rate"}, "prior.mixture entry");
        MixtureComponent comp;
        read_key(m, "weight_alpha", comp.weight_alpha);
        read_key(m, "shape", comp.shape);
        read_key(m, "rate", comp.rate);
        cfg.prior.mixture.push_back(comp);
      }
    }
  }
  if (j.contains("gibbs")) {
    const json& g = j.at("gibbs");
    reject_unknown(g, {"n_sample", "burn_in", "chains", "marginalize_beta_on_x_update"}, "gibbs");
    read_key(g, "n_sample", cfg.gibbs.n_sample);
    read_key(g, "burn_in", cfg.gibbs.burn_in);
    read_key(g, "chains", cfg.gibbs.chains);
    read_key(g, "marginalize_beta_on_x_update", cfg.gibbs.marginalize_beta_on_x_update);
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["n"] = cfg.n;
  j["p"] = cfg.p;
  j["cov"] = {{"kind", enum_name(cfg.cov.kind, kCovKinds)}, {"beta_a", cfg.cov.beta_a},
              {"beta_b", cfg.cov.beta_b}, {"cap", cfg.cov.cap}, {"init_variance", cfg.cov.init_variance},
              {"sparsity", cfg.cov.sparsity}, {"rho", cfg.cov.rho}};
  j["sparsity"] = cfg.sparsity;
  j["coef_dist"] = enum_name(cfg.coef_dist, kCoefDists);
  j["tau"] = cfg.tau;
  j["response"] = enum_name(cfg.response, kResponses);
  j["gam_link"] = enum_name(cfg.gam_link, kLinks);
  j["knockoff"] = enum_name(cfg.knockoff, kKnockoffs);
  j["s_method"] = enum_name(cfg.s_method, kSMethods);
  json stats = json::array();
  for (StatMethod m : cfg.statistics) stats.push_back(to_string(m));
  j["statistics"] = stats;
  j["q"] = cfg.q;
  j["n_reps"] = cfg.n_reps;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["timing"] = cfg.timing;
  json mix = json::array();
  for (const auto& m : cfg.prior.mixture) mix.push_back({{"weight_alpha", m.weight_alpha}, {"shape", m.shape}, {"rate", m.rate}});
  j["prior"] = {{"basis", enum_name(cfg.prior.basis, kBases)}, {"knots", cfg.prior.knots}, {"mixture", mix},
                {"sigma2_shape", cfg.prior.sigma2_shape}, {"sigma2_rate", cfg.prior.sigma2_rate},
                {"sparsity_a", cfg.prior.sparsity_a}, {"sparsity_b", cfg.prior.sparsity_b}};
  j["gibbs"] = {{"n_sample", cfg.gibbs.n_sample}, {"burn_in", cfg.gibbs.burn_in}, {"chains", cfg.gibbs.chains},
                {"marginalize_beta_on_x_update", cfg.gibbs.marginalize_beta_on_x_update}};
  return j;
}

json trace_to_json(const GibbsTrace& trace) {
  json j;
  j["burn_in"] = trace.burn_in;
  j["chains"] = trace.chains;
  json eta = json::array(), bits = json::array(), draws = json::array();
  for (Eigen::Index i = 0; i < trace.eta.rows(); ++i) {
    json er = json::array(), br = json::array();
    for (Eigen::Index u = 0; u < trace.eta.cols(); ++u) {
      er.push_back(trace.eta(i, u));
      br.push_back(static_cast<int>(trace.sign_indicators(i, u)));
    }
    eta.push_back(er);
    bits.push_back(br);
  }
  for (const auto& d : trace.param_draws) draws.push_back({{"sigma2", d.sigma2}, {"tau2", d.tau2}, {"p0", d.p0}});
  j["eta"] = eta;
  j["sign_indicators"] = bits;
  j["param_draws"] = draws;
  return j;
}

GibbsTrace trace_from_json(const json& j) {
  GibbsTrace t;
  try {
    t.burn_in = j.value("burn_in", 0);
    t.chains = j.value("chains", 1);
    const auto& eta = j.at("eta");
    const auto& bits = j.at("sign_indicators");
    const auto rows = static_cast<Eigen::Index>(eta.size());
    const Eigen::Index cols = rows ? static_cast<Eigen::Index>(eta.at(0).size()) : 0;
    if (static_cast<Eigen::Index>(bits.size()) != rows) throw DataError("trace: eta and sign_indicators differ in length");
    t.eta.resize(rows, cols);
    t.sign_indicators.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& er = eta.at(static_cast<std::size_t>(i));
      const auto& br = bits.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(er.size()) != cols || static_cast<Eigen::Index>(br.size()) != cols) {
        throw DataError("trace: ragged row " + std::to_string(i));
      }
      for (Eigen::Index u = 0; u < cols; ++u) {
        t.eta(i, u) = er.at(static_cast<std::size_t>(u)).get<double>();
        const int b = br.at(static_cast<std::size_t>(u)).get<int>();
        if (b != 0 && b != 1) throw DataError("trace: sign indicators must be 0 or 1");
        t.sign_indicators(i, u) = static_cast<std::uint8_t>(b);
      }
    }
    if (j.contains("param_draws")) {
      for (const auto& d : j.at("param_draws")) {
        t.param_draws.push_back({d.at("sigma2").get<double>(), d.at("tau2").get<double>(), d.at("p0").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trace JSON: ") + e.what());
  }
  t.validate();
  return t;
}

namespace {

struct UsageError : Error {
  using Error::Error;
};

void emit_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

Vector single_column(const CsvTable& t, const std::string& what) {
  if (t.values.cols() != 1) throw DataError(what + " must have exactly one column");
  return t.values.col(0);
}

// Loads y from its own file or from a named column of the X table.
void load_xy(const std::string& x_path, const std::string& y_path, const std::string& y_column, bool header,
             Matrix& x, Vector& y) {
  CsvTable tx = read_csv(x_path, header);
  if (!y_column.empty()) {
    if (!header) throw UsageError("--y-column needs --header");
    Eigen::Index col = -1;
    for (std::size_t j = 0; j < tx.header.size(); ++j) {
      if (tx.header[j] == y_column) col = static_cast<Eigen::Index>(j);
    }
    if (col < 0) throw DataError("no column named '" + y_column + "'");
    y = tx.values.col(col);
    x.resize(tx.values.rows(), tx.values.cols() - 1);
    Eigen::Index at = 0;
    for (Eigen::Index j = 0; j < tx.values.cols(); ++j) {
      if (j != col) x.col(at++) = tx.values.col(j);
    }
    return;
  }
  if (y_path.empty()) throw UsageError("provide --y or --y-column");
  x = tx.values;
  y = single_column(read_csv(y_path, header), "y");
}

KnockoffKind parse_kind(const std::string& s) {
  if (s == "fixed" || s == "fixed_x") return KnockoffKind::fixed_x;
  if (s == "model" || s == "model_x") return KnockoffKind::model_x_gaussian;
  throw UsageError("unknown knockoff kind '" + s + "'");
}

std::ostream& open_out(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw DataError("cannot write '" + path + "'");
  return file;
}

json rejection_json(const RejectionResult& r) {
  json rej = json::array();
  for (int j : r.rejected) rej.push_back(j + 1);
  json out;
  out["q"] = r.q;
  out["threshold"] = std::isfinite(r.threshold) ? json(r.threshold) : json("inf");
  out["rejected"] = rej;
  return out;
}

// Standardizes X̃ with X's column statistics (fixed-X) or its own (model-X).
Matrix standardize_knockoffs(Matrix xt, const Dataset& d, KnockoffKind kind) {
  if (kind == KnockoffKind::fixed_x) {
    for (Eigen::Index j = 0; j < xt.cols(); ++j) {
      xt.col(j).array() -= d.column_center(j);
      xt.col(j) /= d.column_scale(j);
    }
  } else {
    standardize_columns(xt);
  }
  return xt;
}

FeatureStatVector compute_cli_statistic(const MaskedDataset& masked, const Vector& y, StatMethod method,
                                        const PriorConfig& prior, const GibbsConfig& gcfg,
                                        std::optional<GibbsTrace>* trace_out) {
  if (method == StatMethod::lcd || method == StatMethod::lsm) return lasso_statistic(masked, y, method, gcfg.seed);
  PriorConfig pr = prior;
  MlrResult res;
  switch (method) {
    case StatMethod::mlr: res = mlr_auto(masked, pr, gcfg); break;
    case StatMethod::mlr_spline:
      pr.basis = BasisKind::cubic_spline;
      res = mlr_model_x(masked, pr, gcfg);
      break;
    case StatMethod::mlr_probit: res = mlr_probit(masked, pr, gcfg); break;
    case StatMethod::mlr_group: res = mlr_group(masked, pr, gcfg); break;
    default: throw UsageError("statistic '" + to_string(method) + "' is not available from the command line");
  }
  for (const auto& w : res.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
  if (trace_out) *trace_out = res.trace;
  return res.stats;
}

std::optional<Partition> load_groups(const std::string& path, Eigen::Index p) {
  if (path.empty()) return std::nullopt;
  const Vector labels = single_column(read_csv(path, false), "groups");
  if (labels.size() != p) throw DataError("group file must have one label per feature");
  std::vector<int> l(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) l[static_cast<std::size_t>(j)] = static_cast<int>(labels(j)) - 1;
  return Partition::from_labels(l);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knockoff feature selection with masked likelihood ratio statistics", "kmlr"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 1;
  double q = 0.1;
  if (const char* env = std::getenv("KNOCKOFF_MLR_THREADS")) {
    try {
      threads = std::max(1, std::stoi(env));
    } catch (...) {
      emit_error(err, "usage_error", "KNOCKOFF_MLR_THREADS must be an integer");
      return 2;
    }
  }
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--q", q, "Target FDR level")->check(CLI::Range(0.0, 1.0));
  };

  std::string x_path, xt_path, y_path, y_column, s_path, sigma_path, w_path, out_path, trace_path, config_path,
      groups_path, out_s_path;
  std::string kind = "fixed", s_method = "mvr", method = "mlr";
  bool header = false, binary = false, timing = false;
  int n_sample = 2000, burn_in = 500, chains = 2;
  double decay_c = 1.0, decay_rho = 0.5;

  auto* ko = app.add_subcommand("knockoffs", "Construct knockoffs for a design matrix");
  add_common(ko);
  ko->add_option("--x", x_path, "Design matrix CSV")->required();
  ko->add_option("--kind", kind, "fixed or model");
  ko->add_option("--s-method", s_method, "mvr or equi");
  ko->add_option("--sigma", sigma_path, "Feature covariance CSV for model-X (default: shrinkage estimate)");
  ko->add_option("--groups", groups_path, "Group labels CSV (1-based, one per feature)");
  ko->add_option("--out", out_path, "Knockoff matrix output CSV (default stdout)");
  ko->add_option("--out-s", out_s_path, "S matrix output CSV (standardized scale)");
  ko->add_flag("--header", header, "Input has a header row");

  auto* st = app.add_subcommand("stats", "Compute feature statistics W");
  add_common(st);
  st->add_option("--x", x_path, "Design matrix CSV")->required();
  st->add_option("--x-tilde", xt_path, "Knockoff matrix CSV")->required();
  st->add_option("--y", y_path, "Response CSV (single column)");
  st->add_option("--y-column", y_column, "Response column name inside the X file");
  st->add_option("--s", s_path, "S matrix CSV from `knockoffs --out-s` (fixed-X)");
  st->add_option("--kind", kind, "fixed or model");
  st->add_option("--method", method, "lcd, lsm, mlr, mlr_spline, mlr_probit, mlr_group");
  st->add_option("--groups", groups_path, "Group labels CSV (1-based, one per feature)");
  st->add_option("--n-sample", n_sample, "Kept Gibbs samples per chain");
  st->add_option("--burn-in", burn_in, "Gibbs burn-in sweeps");
  st->add_option("--chains", chains, "Gibbs chains");
  st->add_option("--trace-out", trace_path, "Write the Gibbs trace as JSON");
  st->add_option("--out", out_path, "Output CSV for W (default stdout)");
  st->add_flag("--header", header, "Inputs have a header row");
  st->add_flag("--binary", binary, "Binary 0/1 response");

  auto* fi = app.add_subcommand("filter", "Apply the knockoff+ threshold to W");
  add_common(fi);
  fi->add_option("--w", w_path, "W CSV (single column)")->required();
  fi->add_flag("--header", header, "Input has a header row");

  auto* pi = app.add_subcommand("pipeline", "Knockoffs, statistics and filtering end to end");
  add_common(pi);
  pi->add_option("--x", x_path, "Design matrix CSV")->required();
  pi->add_option("--y", y_path, "Response CSV (single column)");
  pi->add_option("--y-column", y_column, "Response column name inside the X file");
  pi->add_option("--kind", kind, "fixed or model");
  pi->add_option("--s-method", s_method, "mvr or equi");
  pi->add_option("--sigma", sigma_path, "Feature covariance CSV for model-X");
  pi->add_option("--method", method, "lcd, lsm, mlr, mlr_spline, mlr_probit");
  pi->add_option("--n-sample", n_sample, "Kept Gibbs samples per chain");
  pi->add_option("--burn-in", burn_in, "Gibbs burn-in sweeps");
  pi->add_option("--chains", chains, "Gibbs chains");
  pi->add_flag("--header", header, "Inputs have a header row");
  pi->add_flag("--binary", binary, "Binary 0/1 response");

  auto* si = app.add_subcommand("simulate", "Run a simulation study from a JSON config");
  add_common(si);
  si->add_option("--config", config_path, "Experiment config JSON")->required();
  si->add_option("--out", out_path, "Results JSONL (default stdout)");
  si->add_flag("--timing", timing, "Record wall-clock runtime per record");

  auto* di = app.add_subcommand("diagnose", "Sign-covariance report for a Gibbs trace");
  add_common(di);
  di->add_option("--trace", trace_path, "Trace JSON from `stats --trace-out`")->required();
  di->add_option("--c", decay_c, "Decay constant C");
  di->add_option("--rho", decay_rho, "Decay rate rho");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage_error", e.what());
    return 2;
  }

  try {
    SMatrixSpec spec;
    if (s_method == "mvr") {
      spec.method = SMethod::mvr;
    } else if (s_method == "equi") {
      spec.method = SMethod::equicorrelated;
    } else {
      throw UsageError("unknown --s-method '" + s_method + "'");
    }
    GibbsConfig gcfg;
    gcfg.n_sample = n_sample;
    gcfg.burn_in = burn_in;
    gcfg.chains = chains;
    gcfg.seed = derive_seed(seed, Stream::gibbs);
    gcfg.threads = threads;
    const ResponseKind rkind = binary ? ResponseKind::binary : ResponseKind::continuous;

    if (*ko) {
      const KnockoffKind kk = parse_kind(kind);
      CsvTable tx = read_csv(x_path, header);
      Dataset d = Dataset::create(tx.values, Vector::Zero(tx.values.rows()), ResponseKind::continuous, true);
      std::optional<Matrix> sigma;
      if (!sigma_path.empty()) sigma = read_csv(sigma_path, header).values;
      const auto groups = load_groups(groups_path, d.p());
      const KnockoffModel km = make_knockoffs(d.x, kk, spec, derive_seed(seed, Stream::knockoffs), sigma, groups);
      // Back to the input scale.
      Matrix xt = km.x_tilde;
      for (Eigen::Index j = 0; j < xt.cols(); ++j) {
        xt.col(j) *= d.column_scale(j);
        xt.col(j).array() += d.column_center(j);
      }
      std::ofstream file;
      write_csv(open_out(out_path, file, out), xt, tx.header);
      if (!out_s_path.empty()) write_csv_file(out_s_path, km.s);
      return 0;
    }

    if (*st) {
      const KnockoffKind kk = parse_kind(kind);
      Matrix x;
      Vector y;
      load_xy(x_path, y_path, y_column, header, x, y);
      Dataset d = Dataset::create(x, y, rkind, true);
      KnockoffModel km;
      km.kind = kk;
      km.x_tilde = standardize_knockoffs(read_csv(xt_path, header).values, d, kk);
      if (km.x_tilde.rows() != d.n() || km.x_tilde.cols() != d.p()) throw DataError("X~ shape does not match X");
      km.sigma = d.x.transpose() * d.x;
      km.groups = load_groups(groups_path, d.p());
      if (!s_path.empty()) {
        km.s = read_csv(s_path, false).values;
      } else if (kk == KnockoffKind::fixed_x) {
        km.s = km.sigma - d.x.transpose() * km.x_tilde;
        km.s = Matrix(km.s.diagonal().asDiagonal());
      } else {
        km.s = Matrix::Zero(d.p(), d.p());
      }
      const MaskedDataset masked = mask(d, km, derive_seed(seed, Stream::mask));
      std::optional<GibbsTrace> trace;
      const FeatureStatVector w =
          compute_cli_statistic(masked, d.y, stat_method_from_string(method), PriorConfig{}, gcfg, &trace);
      std::ofstream file;
      write_csv(open_out(out_path, file, out), w.w, {"w"});
      if (!trace_path.empty()) {
        if (!trace) throw UsageError("--trace-out needs an MLR statistic");
        std::ofstream tf(trace_path);
        if (!tf) throw DataError("cannot write '" + trace_path + "'");
        tf << trace_to_json(*trace).dump() << '\n';
      }
      return 0;
    }

    if (*fi) {
      const Vector w = single_column(read_csv(w_path, header), "W");
      out << rejection_json(threshold(w, q)).dump() << '\n';
      return 0;
    }

    if (*pi) {
      const KnockoffKind kk = parse_kind(kind);
      Matrix x;
      Vector y;
      load_xy(x_path, y_path, y_column, header, x, y);
      Dataset d = Dataset::create(x, y, rkind, true);
      std::optional<Matrix> sigma;
      if (!sigma_path.empty()) sigma = read_csv(sigma_path, header).values;
      KnockoffModel km = make_knockoffs(d.x, kk, spec, derive_seed(seed, Stream::knockoffs), sigma);
      if (kk == KnockoffKind::model_x_gaussian) standardize_columns(km.x_tilde);
      const MaskedDataset masked = mask(d, km, derive_seed(seed, Stream::mask));
      const FeatureStatVector w =
          compute_cli_statistic(masked, d.y, stat_method_from_string(method), PriorConfig{}, gcfg, nullptr);
      json res = rejection_json(threshold(w, q));
      json wj = json::array();
      for (Eigen::Index j = 0; j < w.w.size(); ++j) wj.push_back(w.w(j));
      res["w"] = wj;
      res["method"] = method;
      res["knockoff"] = to_string(kk);
      out << res.dump() << '\n';
      return 0;
    }

    if (*si) {
      std::ifstream in(config_path);
      if (!in) throw DataError("cannot open '" + config_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      ExperimentConfig cfg = config_from_json(j);
      if (si->count("--seed")) cfg.seed = seed;
      if (si->count("--q")) cfg.q = q;
      if (si->count("--threads") || std::getenv("KNOCKOFF_MLR_THREADS")) cfg.threads = threads;
      if (timing) cfg.timing = true;
      const ExperimentResult res = run_experiment(cfg);
      std::ofstream file;
      write_results(open_out(out_path, file, out), res.records);
      return 0;
    }

    if (*di) {
      std::ifstream in(trace_path);
      if (!in) throw DataError("cannot open '" + trace_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw DataError(std::string("trace is not valid JSON: ") + e.what());
      }
      const GibbsTrace trace = trace_from_json(j);
      const Matrix cov = sign_cov(trace);
      const DecayReport rep = decay_check(cov, decay_c, decay_rho);
      json cj = json::array();
      for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < cov.cols(); ++k) row.push_back(cov(i, k));
        cj.push_back(row);
      }
      out << json{{"max_offdiag", rep.max_offdiag}, {"max_ratio", rep.max_ratio}, {"pass", rep.pass},
                  {"c", decay_c}, {"rho", decay_rho}, {"cov", cj}}
                 .dump()
          << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    emit_error(err, "usage_error", e.what());
    return 2;
  } catch (const ConfigError& e) {
    emit_error(err, "config_error", e.what());
    return 2;
  } catch (const DataError& e) {
    emit_error(err, "data_error", e.what());
    return 1;
  } catch (const NumericalError& e) {
    emit_error(err, "numerical_error", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(err, "internal_error", e.what());
    return 1;
  }
  return 2;
}

}  // namespace kmlr

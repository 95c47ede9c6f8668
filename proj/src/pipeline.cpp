#include "zpo/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>
#include <variant>

#include <openssl/evp.h>

#include "zpo/error.hpp"

#ifndef ZPO_VERSION
#define ZPO_VERSION "0.0.0"
#endif

namespace zpo {

std::string library_version() { return ZPO_VERSION; }

Overrides desk_overrides() {
  Overrides o;
  o.c_beta = 0.15;
  o.c_delta = 0.5;
  o.c_tau = 0.02;
  return o;
}

// ---------------------------------------------------------------------------------------------
// config

namespace {

template <class T>
T get_checked(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::invalid_argument, std::string("config: field '") + key + "' has the wrong type");
  }
}

std::vector<double> number_list(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  require(v.is_array(), std::string("config: '") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    require(e.is_number(), std::string("config: '") + key + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  require(j.is_object(), "config: top level must be a JSON object");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "density") {
      require(it.value().is_object(), "config: 'density' must be an object");
      c.density = it.value();
    } else if (k == "H") {
      c.H = number_list(j, "H");
    } else if (k == "eps") {
      c.eps = number_list(j, "eps");
    } else if (k == "n") {
      require(it.value().is_number_integer(), "config: 'n' must be an integer");
      c.n = it.value().get<int>();
    } else if (k == "tail_mass") {
      c.tail_mass = get_checked<double>(j, "tail_mass");
    } else if (k == "overrides") {
      c.overrides = Overrides::from_json(it.value());
    } else if (k == "oracle") {
      const auto& o = it.value();
      require(o.is_object(), "config: 'oracle' must be an object");
      for (auto ot = o.begin(); ot != o.end(); ++ot) {
        if (ot.key() == "constrained") {
          require(ot.value().is_boolean(), "config: 'oracle.constrained' must be a boolean");
          c.oracle.constrained = ot.value().get<bool>();
        } else if (ot.key() == "n") {
          require(ot.value().is_number_integer(), "config: 'oracle.n' must be an integer");
          c.oracle.n = ot.value().get<int>();
        } else {
          fail(ErrorCode::invalid_argument, "config: unknown oracle field '" + ot.key() + "'");
        }
      }
    } else if (k == "output_dir") {
      c.output_dir = get_checked<std::string>(j, "output_dir");
    } else if (k == "seed") {
      require(it.value().is_number_unsigned() || it.value().is_number_integer(), "config: 'seed' must be an integer");
      c.seed = it.value().get<std::uint64_t>();
    } else if (k == "threads") {
      require(it.value().is_number_integer(), "config: 'threads' must be an integer");
      c.threads = it.value().get<int>();
    } else {
      fail(ErrorCode::invalid_argument, "config: unknown field '" + k + "'");
    }
  }
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"density", density},
          {"H", H},
          {"eps", eps},
          {"n", n},
          {"tail_mass", tail_mass},
          {"overrides", overrides.to_json()},
          {"oracle", {{"constrained", oracle.constrained}, {"n", oracle.n}}},
          {"output_dir", output_dir},
          {"seed", seed},
          {"threads", threads}};
}

void RunConfig::validate() const {
  require(!H.empty(), "config: 'H' must be nonempty");
  require(!eps.empty(), "config: 'eps' must be nonempty");
  for (double h : H) require(h > 1.0 && std::isfinite(h), "config: every H must exceed 1");
  for (double e : eps) require(e > 0.0 && e < std::exp(-1.0), "config: every eps must lie in (0, 1/e)");
  require(n >= 16 && n <= 8192, "config: n must lie in [16, 8192]");
  require(tail_mass > 0.0 && tail_mass < 0.25, "config: tail_mass must lie in (0, 0.25)");
  require(threads >= 1 && threads <= 256, "config: threads must lie in [1, 256]");
  if (oracle.constrained) {
    require(oracle.n >= 8 && oracle.n <= 64, "config: oracle.n must lie in [8, 64]");
    require(n % oracle.n == 0, "config: oracle.n must divide n");
  }
  density_from_json(density);  // throws on a bad spec
}

std::string RunConfig::hash() const {
  // the output directory does not change any number
  nlohmann::json j = to_json();
  j.erase("output_dir");
  j.erase("threads");
  const std::string s = j.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::internal, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// records

namespace {

using Field = std::variant<double CellRecord::*, bool CellRecord::*, std::string CellRecord::*>;
struct Column {
  const char* name;
  Field f;
  bool oracle;
};

const std::vector<Column>& columns() {
  static const std::vector<Column> c = {
      {"H", &CellRecord::H, false},
      {"eps", &CellRecord::eps, false},
      {"ok", &CellRecord::ok, false},
      {"N", &CellRecord::N, false},
      {"beta", &CellRecord::beta, false},
      {"delta", &CellRecord::delta, false},
      {"tau", &CellRecord::tau, false},
      {"schedule_all_hold", &CellRecord::schedule_all_hold, false},
      {"failed_orderings", &CellRecord::failed_orderings, false},
      {"F_OT", &CellRecord::F_OT, false},
      {"F_ZPO", &CellRecord::F_ZPO, false},
      {"F_ZPO_full", &CellRecord::F_ZPO_full, false},
      {"E_main", &CellRecord::E_main, false},
      {"E_main_gap_tau", &CellRecord::E_main_gap_tau, false},
      {"E_total", &CellRecord::E_total, false},
      {"gap_upper", &CellRecord::gap_upper, false},
      {"marginal_residual", &CellRecord::marginal_residual, false},
      {"mass_identity_error", &CellRecord::mass_identity_error, false},
      {"c_H", &CellRecord::c_H, false},
      {"trimmed_mass", &CellRecord::trimmed_mass, false},
      {"cells_per_width", &CellRecord::cells_per_width, false},
      {"PE_remainder_scaled", &CellRecord::pe_remainder_scaled, false},
      {"remainder_mass", &CellRecord::remainder_mass, false},
      {"KE_constant", &CellRecord::ke_constant, false},
      {"PE_constant", &CellRecord::pe_constant, false},
      {"support_ok", &CellRecord::support_ok, false},
      {"upper_sandwich", &CellRecord::upper_sandwich, false},
      {"E_ground", &CellRecord::E_ground, true},
      {"E_oracle", &CellRecord::E_oracle, true},
      {"E_construct_coarse", &CellRecord::E_construct_coarse, true},
      {"gap_oracle", &CellRecord::gap_oracle, true},
      {"oracle_kkt", &CellRecord::oracle_kkt, true},
      {"sandwich_ok", &CellRecord::sandwich_ok, true},
      {"oracle_status", &CellRecord::oracle_status, true},
      {"error", &CellRecord::error, false},
  };
  return c;
}

std::string cell_text(const CellRecord& r, const Field& f) {
  return std::visit(
      [&](auto p) -> std::string {
        using T = std::decay_t<decltype(r.*p)>;
        if constexpr (std::is_same_v<T, double>) return format_double(r.*p);
        else if constexpr (std::is_same_v<T, bool>) return r.*p ? "1" : "0";
        else return r.*p;
      },
      f);
}

void set_from_text(CellRecord& r, const Field& f, const std::string& s) {
  std::visit(
      [&](auto p) {
        using T = std::decay_t<decltype(r.*p)>;
        if constexpr (std::is_same_v<T, double>) {
          require(!s.empty(), "csv: empty numeric field");
          r.*p = std::stod(s);
        } else if constexpr (std::is_same_v<T, bool>) {
          require(s == "0" || s == "1", "csv: boolean fields are 0 or 1");
          r.*p = s == "1";
        } else {
          r.*p = s;
        }
      },
      f);
}

}  // namespace

nlohmann::json CellRecord::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& c : columns()) {
    if (c.oracle && !has_oracle) continue;
    std::visit([&](auto p) { j[c.name] = this->*p; }, c.f);
  }
  j["has_oracle"] = has_oracle;
  return j;
}

CellRecord CellRecord::from_json(const nlohmann::json& j) {
  CellRecord r;
  r.has_oracle = j.value("has_oracle", false);
  for (const auto& c : columns()) {
    if (!j.contains(c.name)) {
      require(c.oracle && !r.has_oracle, std::string("record: missing field '") + c.name + "'");
      continue;
    }
    std::visit([&](auto p) { j.at(c.name).get_to(r.*p); }, c.f);
  }
  return r;
}

std::vector<std::string> csv_columns(bool with_oracle) {
  std::vector<std::string> out;
  for (const auto& c : columns())
    if (with_oracle || !c.oracle) out.push_back(c.name);
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (ch == '\r') {
      continue;
    } else if (ch == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  require(!quoted, "csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

std::vector<CellRecord> cells_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  require(!rows.empty(), "csv: no header");
  const auto& header = rows[0];
  std::vector<const Column*> map;
  bool oracle = false;
  for (const auto& h : header) {
    const Column* found = nullptr;
    for (const auto& c : columns())
      if (h == c.name) found = &c;
    require(found != nullptr, "csv: unknown column '" + h + "'");
    oracle = oracle || found->oracle;
    map.push_back(found);
  }
  std::vector<CellRecord> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    require(rows[r].size() == header.size(), "csv: row " + std::to_string(r) + " has the wrong width");
    CellRecord rec;
    rec.has_oracle = oracle;
    for (size_t k = 0; k < header.size(); ++k) set_from_text(rec, map[k]->f, rows[r][k]);
    out.push_back(rec);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// cells

CellRecord run_cell(const CoulombOT& sol, double H, double eps, const RunConfig& cfg, CellArtifacts* art) {
  CellRecord r;
  r.H = H;
  r.eps = eps;
  r.has_oracle = cfg.oracle.any();
  try {
    const ParameterSchedule s = schedule(eps, H, cfg.overrides);
    r.N = s.N;
    r.beta = s.beta;
    r.delta = s.delta;
    r.tau = s.tau;
    r.schedule_all_hold = s.all_hold();
    for (const auto& o : s.validity)
      if (!o.holds) r.failed_orderings += (r.failed_orderings.empty() ? "" : ";") + o.name;

    const double X = grid_half_width(sol.density(), cfg.tail_mass);
    const TargetDensity tgt = make_target(sol, H, X);
    r.F_OT = f_ot(sol).total();
    r.F_ZPO = tgt.f_zpo();
    r.F_ZPO_full = f_zpo(sol).total();

    const Axis ax = Axis::centered(X, cfg.n);
    const Partition part = build_partition(sol, sol.domain(H), s.delta);
    MainPlan mp = build_main_plan(sol, part, s, ax, tgt);
    r.mass_identity_error = std::abs(mp.mass - mp.mass_expected);
    r.c_H = mp.c_H;
    r.cells_per_width = mp.cells_per_width;
    const PotentialField pot = make_potential(sol, ax, ax);
    const MainPlanEnergy me = main_plan_energy(mp, pot, sol, s);
    r.E_main = me.E;
    r.E_main_gap_tau = me.E - me.target_tau;
    r.trimmed_mass = trim_to_target(mp);
    RemainderPlan rp = remainder_plan(mp, part, pot, s);
    r.pe_remainder_scaled = rp.pe_scaled;
    r.remainder_mass = rp.mass;
    DeconvolvedPlan dp = deconvolve(rp.pi0, rp.sigma1, rp.sigma2, eps);
    const DeconvolutionCheck ck = deconvolution_pe_bound_check(rp, dp, pot, eps);
    r.ke_constant = ck.ke_constant;
    r.pe_constant = ck.pe_constant;
    r.support_ok = ck.support_ok;
    RecoveryField rf = assemble_recovery(mp, dp, pot, eps, r.F_ZPO);
    r.E_total = rf.energy.e;
    r.gap_upper = rf.gap;
    r.marginal_residual = rf.marginal_residual;
    r.upper_sandwich = rf.upper_sandwich;

    const int factor = cfg.oracle.constrained ? cfg.n / cfg.oracle.n : 1;
    const double coarse_cpw = r.cells_per_width / factor;
    if (cfg.oracle.constrained && coarse_cpw < 0.5) {
      // below half a cell per width the dual eigenvalue clusters and the coarse solve is meaningless
      r.oracle_status = "skipped: coarse grid has " + format_double(coarse_cpw) + " cells per width";
    } else if (cfg.oracle.constrained) {
      const GridField2D coarse = block_average(rf.psi_sq, factor);
      const PotentialField cpot = make_potential(sol, coarse.ax, coarse.ay);
      r.E_construct_coarse = e_eps(coarse, cpot, eps).e;
      const GridField1D m1 = coarse.marginal_x();
      GridField1D m2 = coarse.marginal_y();
      const double scale = m1.mass() / m2.mass();  // equal up to summation order
      for (double& v : m2.v) v *= scale;
      const ConstrainedResult cr = constrained_min(cpot, m1, m2, eps);
      const GroundStateResult g = ground_state(cpot, eps);
      r.E_oracle = cr.energy.e;
      r.oracle_kkt = cr.kkt;
      r.E_ground = cr.mass * g.eigenvalue;
      r.gap_oracle = r.E_oracle - r.F_ZPO;
      r.sandwich_ok = r.E_ground <= r.E_oracle && r.E_oracle <= r.E_construct_coarse;
      r.oracle_status = "ok";
    }
    r.ok = true;
    if (art) {
      art->main = std::move(mp);
      art->remainder = std::move(rp);
      art->deconvolved = std::move(dp);
      art->recovery = std::move(rf);
      art->check = ck;
      art->schedule = s;
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// sweep

bool RunReport::all_ok() const {
  for (const auto& c : cells)
    if (!c.ok) return false;
  return true;
}

std::string RunReport::to_csv() const {
  const bool oracle = config.oracle.any();
  std::string out;
  const auto names = csv_columns(oracle);
  for (size_t k = 0; k < names.size(); ++k) out += (k ? "," : "") + names[k];
  out += "\n";
  for (const auto& r : cells) {
    bool first = true;
    for (const auto& c : columns()) {
      if (c.oracle && !oracle) continue;
      out += (first ? "" : ",") + csv_escape(cell_text(r, c.f));
      first = false;
    }
    out += "\n";
  }
  return out;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : cells) cj.push_back(c.to_json());
  return {{"config", config.to_json()}, {"cells", cj}, {"manifest", manifest}};
}

RunReport run_sweep(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.config = cfg;
  const CoulombOT sol(density_from_json(cfg.density));
  std::vector<std::pair<double, double>> jobs;
  for (double H : cfg.H)
    for (double e : cfg.eps) jobs.emplace_back(H, e);
  rep.cells.resize(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t k = next++; k < jobs.size(); k = next++)
      rep.cells[k] = run_cell(sol, jobs[k].first, jobs[k].second, cfg);
  };
  const int nt = std::min<int>(cfg.threads, int(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  int failures = 0;
  for (const auto& c : rep.cells) failures += !c.ok;
  rep.manifest = {{"config_hash", cfg.hash()},
                  {"version", library_version()},
                  {"cells", rep.cells.size()},
                  {"failures", failures},
                  {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return rep;
}

}  // namespace zpo

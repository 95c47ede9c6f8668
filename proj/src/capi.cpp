#include "zpo/zpo.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "zpo/error.hpp"
#include "zpo/pipeline.hpp"

using nlohmann::json;

struct zpo_density {
  zpo::Density1D d;
};
struct zpo_ot {
  zpo::CoulombOT sol;
};
struct zpo_cell {
  zpo::CellRecord record;
  zpo::CellArtifacts art;
  zpo::RunConfig cfg;
};
struct zpo_report {
  zpo::RunReport rep;
};

namespace {

thread_local std::string g_error;

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    g_error.clear();
    return ZPO_OK;
  } catch (const zpo::Error& e) {
    g_error = e.what();
    return static_cast<int>(e.code());
  } catch (const json::exception& e) {
    g_error = std::string("json: ") + e.what();
    return ZPO_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_error = e.what();
    return ZPO_ERR_INTERNAL;
  } catch (...) {
    g_error = "unknown failure";
    return ZPO_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) zpo::fail(zpo::ErrorCode::invalid_argument, std::string(what) + " is null");
}

json parse(const char* text, const char* what) {
  need(text, what);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    zpo::fail(zpo::ErrorCode::invalid_argument, std::string(what) + ": " + e.what());
  }
}

// field of an oracle request with a default; wrong types are errors
template <class T>
T field(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    zpo::fail(zpo::ErrorCode::invalid_argument, std::string("oracle: field '") + key + "' has the wrong type");
  }
}

void only_keys(const json& j, std::initializer_list<const char*> keys) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) zpo::fail(zpo::ErrorCode::invalid_argument, "oracle: unknown field '" + it.key() + "'");
  }
}

json oracle_ground(const zpo::CoulombOT& sol, const json& q) {
  only_keys(q, {"mode", "eps", "n", "tail_mass", "markov_t"});
  const double eps = field(q, "eps", 1e-3);
  const int n = field(q, "n", 512);
  const double tail = field(q, "tail_mass", 0.05);
  const auto ts = field(q, "markov_t", std::vector<double>{0.01, 0.1});
  zpo::require(eps > 0.0 && eps < std::exp(-1.0), "oracle: eps must lie in (0, 1/e)");
  zpo::require(n >= 16 && n <= 4096, "oracle: n must lie in [16, 4096]");
  const double X = zpo::grid_half_width(sol.density(), tail);
  const zpo::Axis ax = zpo::Axis::centered(X, n);
  const zpo::GroundStateResult g = zpo::ground_state(sol, eps, ax, ax);
  const zpo::PotentialField pot = zpo::make_potential(sol, ax, ax);
  json out = {{"mode", "ground"}, {"eps", eps}, {"n", n}, {"half_width", X}, {"result", g.to_json()}};
  out["relative_error"] = (g.eigenvalue - g.predicted_limit) / g.predicted_limit;
  json mk = json::array();
  for (double t : ts) mk.push_back(zpo::markov_check(g, pot, eps, t).to_json());
  out["markov"] = mk;
  return out;
}

json oracle_constrained(const zpo::CoulombOT& sol, const json& q) {
  only_keys(q, {"mode", "eps", "H", "n", "oracle_n", "tail_mass", "overrides"});
  zpo::RunConfig cfg;
  cfg.eps = {field(q, "eps", 1e-2)};
  cfg.H = {field(q, "H", 4.0)};
  cfg.n = field(q, "n", 512);
  cfg.tail_mass = field(q, "tail_mass", 0.05);
  if (q.contains("overrides")) cfg.overrides = zpo::Overrides::from_json(q.at("overrides"));
  cfg.oracle.constrained = true;
  cfg.oracle.n = field(q, "oracle_n", 64);
  cfg.density = sol.density().spec();
  cfg.validate();
  const zpo::CellRecord r = zpo::run_cell(sol, cfg.H[0], cfg.eps[0], cfg);
  if (!r.ok) zpo::fail(zpo::ErrorCode::numerical, r.error);
  return {{"mode", "constrained"},
          {"eps", r.eps},
          {"H", r.H},
          {"n", cfg.n},
          {"oracle_n", cfg.oracle.n},
          {"status", r.oracle_status},
          {"E_ground", r.E_ground},
          {"E_oracle", r.E_oracle},
          {"E_construct_coarse", r.E_construct_coarse},
          {"kkt", r.oracle_kkt},
          {"sandwich_ok", r.sandwich_ok},
          {"F_ZPO", r.F_ZPO},
          {"gap_oracle", r.gap_oracle}};
}

json oracle_delta(const json& q) {
  only_keys(q, {"mode", "hessian", "eps"});
  const auto h = field(q, "hessian", std::vector<double>{1.0, 0.0, 0.0});
  zpo::require(h.size() == 3, "oracle: hessian is [xx, xy, yy]");
  const zpo::Sym2 B{h[0], h[1], h[2]};
  const auto eps = field(q, "eps", std::vector<double>{1e-3, 1e-4, 1e-5});
  zpo::require(!eps.empty(), "oracle: eps list is empty");
  const auto V = [B](zpo::Vec2 x) { return 0.5 * (B.xx * x.x * x.x + 2.0 * B.xy * x.x * x.y + B.yy * x.y * x.y); };
  json recs = json::array();
  for (const auto& r : zpo::delta_recovery(B, V, eps)) recs.push_back(r.to_json());
  return {{"mode", "delta"}, {"hessian", h}, {"h_20", zpo::delta_h(20.0)}, {"records", recs}};
}

}  // namespace

extern "C" {

const char* zpo_version(void) {
  static const std::string v = zpo::library_version();
  return v.c_str();
}

const char* zpo_last_error(void) { return g_error.c_str(); }

void zpo_string_free(char* s) { std::free(s); }

int zpo_density_create(const char* spec_json, zpo_density** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    *out = new zpo_density{zpo::density_from_json(parse(spec_json, "density spec"))};
  });
}

int zpo_density_describe(const zpo_density* d, double tail_mass, char** json_out) {
  return guarded([&] {
    need(d, "density");
    need(json_out, "json_out");
    const zpo::Density1D& rho = d->d;
    const double X = zpo::grid_half_width(rho, tail_mass);
    json q = json::object();
    for (double t : {0.05, 0.25, 0.5, 0.75, 0.95}) q[zpo::format_double(t)] = rho.quantile(t);
    const zpo::TailCheck tc = zpo::tail_check(rho, 10.0, 1000.0);
    json j = {{"spec", rho.spec()},
              {"kind", rho.kind()},
              {"symmetric", rho.symmetric()},
              {"median", rho.median()},
              {"pdf_at_median", rho.pdf(0.0)},
              {"quantiles", q},
              {"tail_mass", tail_mass},
              {"grid_half_width", X},
              {"kinetic_energy_window", zpo::kinetic_energy_1d(rho, -X, X)},
              {"tail_x3_min", {{"x0", tc.x0}, {"x1", tc.x1}, {"min", tc.min_value}, {"at", tc.at}}}};
    *json_out = dup(j.dump(2));
  });
}

void zpo_density_free(zpo_density* d) { delete d; }

int zpo_ot_create(const zpo_density* d, zpo_ot** out) {
  return guarded([&] {
    need(d, "density");
    need(out, "out");
    *out = nullptr;
    *out = new zpo_ot{zpo::CoulombOT(d->d)};
  });
}

int zpo_ot_report(const zpo_ot* ot, double H, char** json_out) {
  return guarded([&] {
    need(ot, "ot");
    need(json_out, "json_out");
    const zpo::CoulombOT& s = ot->sol;
    const zpo::DomainH dom = s.domain(H);
    const zpo::LConstant L = s.L(dom);
    const double fot = zpo::f_ot(s).total();
    const double pair = zpo::u_pairing(s);
    json j = {{"H", H},
              {"F_OT", fot},
              {"F_ZPO", zpo::f_zpo(s).total()},
              {"L_H", L.value},
              {"L_terms", L.to_json()},
              {"r_H", dom.rH},
              {"delta_gap", s.diagonal_gap(dom)},
              {"max_abs_ddu", L.ddu_max},
              {"u_anchor_constant", s.u0()},
              {"u_pairing", pair},
              {"u_pairing_minus_F_OT", pair - fot},
              {"omega", {{dom.omega[0].lo, dom.omega[0].hi}, {dom.omega[1].lo, dom.omega[1].hi}}}};
    *json_out = dup(j.dump(2));
  });
}

int zpo_ot_lattice_csv(const zpo_ot* ot, double H, int n, char** csv_out) {
  return guarded([&] {
    need(ot, "ot");
    need(csv_out, "csv_out");
    zpo::require(n >= 2 && n <= 1000000, "lattice: n must lie in [2, 1e6]");
    const zpo::CoulombOT& s = ot->sol;
    const zpo::DomainH dom = s.domain(H);
    std::string out = "x,T,u,du,ddu,q\n";
    for (const auto& I : dom.omega)
      for (int k = 0; k < n; ++k) {
        const double x = I.lo + (I.hi - I.lo) * k / (n - 1);
        for (double v : {x, s.T(x), s.u(x), s.du(x), s.ddu(x)}) out += zpo::format_double(v) + ",";
        out += zpo::format_double(s.q(x)) + "\n";
      }
    *csv_out = dup(out);
  });
}

void zpo_ot_free(zpo_ot* ot) { delete ot; }

int zpo_recover(const zpo_ot* ot, const char* config_json, double H, double eps, zpo_cell** out) {
  return guarded([&] {
    need(ot, "ot");
    need(out, "out");
    *out = nullptr;
    json j = config_json ? parse(config_json, "config") : json::object();
    j["H"] = {H};
    j["eps"] = {eps};
    j["density"] = ot->sol.density().spec();
    auto c = std::make_unique<zpo_cell>();
    c->cfg = zpo::RunConfig::from_json(j);
    c->record = zpo::run_cell(ot->sol, H, eps, c->cfg, &c->art);
    *out = c.release();
  });
}

int zpo_cell_ok(const zpo_cell* c) { return c && c->record.ok ? 1 : 0; }

int zpo_cell_json(const zpo_cell* c, char** json_out) {
  return guarded([&] {
    need(c, "cell");
    need(json_out, "json_out");
    json j = {{"record", c->record.to_json()}, {"config", c->cfg.to_json()}};
    if (c->record.ok) {
      j["schedule"] = c->art.schedule.to_json();
      j["energy"] = c->art.recovery.energy.to_json();
      j["recovery"] = c->art.recovery.to_json();
      j["remainder"] = c->art.remainder.to_json();
      j["deconvolution"] = c->art.deconvolved.to_json();
      j["deconvolution_check"] = c->art.check.to_json();
    }
    *json_out = dup(j.dump(2));
  });
}

int zpo_cell_dump_csv(const zpo_cell* c, const char* name, char** csv_out) {
  return guarded([&] {
    need(c, "cell");
    need(name, "name");
    need(csv_out, "csv_out");
    zpo::require(c->record.ok, "cell failed; nothing to dump");
    const std::string k = name;
    const auto& a = c->art;
    std::string s;
    if (k == "psi_sq") s = zpo::to_csv(a.recovery.psi_sq);
    else if (k == "gammabar") s = zpo::to_csv(a.main.gammabar);
    else if (k == "sigma1") s = zpo::to_csv(a.remainder.sigma1);
    else if (k == "sigma2") s = zpo::to_csv(a.remainder.sigma2);
    else if (k == "pi0") s = zpo::to_csv(a.remainder.pi0);
    else if (k == "pi_tilde") s = zpo::to_csv(a.deconvolved.pi_tilde);
    else if (k == "target") s = zpo::to_csv(a.main.target);
    else zpo::fail(zpo::ErrorCode::invalid_argument, "unknown dump '" + k + "'");
    *csv_out = dup(s);
  });
}

void zpo_cell_free(zpo_cell* c) { delete c; }

int zpo_oracle(const zpo_ot* ot, const char* request_json, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    const json q = parse(request_json, "oracle request");
    zpo::require(q.is_object(), "oracle: request must be an object");
    const std::string mode = field<std::string>(q, "mode", "ground");
    json out;
    if (mode == "delta") {
      out = oracle_delta(q);
    } else {
      need(ot, "ot");
      if (mode == "ground") out = oracle_ground(ot->sol, q);
      else if (mode == "constrained") out = oracle_constrained(ot->sol, q);
      else zpo::fail(zpo::ErrorCode::invalid_argument, "oracle: unknown mode '" + mode + "'");
    }
    *json_out = dup(out.dump(2));
  });
}

int zpo_config_normalize(const char* config_json, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    const zpo::RunConfig c = zpo::RunConfig::from_json(parse(config_json, "config"));
    json j = c.to_json();
    j["hash"] = c.hash();
    *json_out = dup(j.dump(2));
  });
}

int zpo_sweep(const char* config_json, zpo_report** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    const zpo::RunConfig c = zpo::RunConfig::from_json(parse(config_json, "config"));
    *out = new zpo_report{zpo::run_sweep(c)};
  });
}

int zpo_report_failures(const zpo_report* r, int* out) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    int f = 0;
    for (const auto& c : r->rep.cells) f += !c.ok;
    *out = f;
  });
}

int zpo_report_csv(const zpo_report* r, char** csv_out) {
  return guarded([&] {
    need(r, "report");
    need(csv_out, "csv_out");
    *csv_out = dup(r->rep.to_csv());
  });
}

int zpo_report_json(const zpo_report* r, char** json_out) {
  return guarded([&] {
    need(r, "report");
    need(json_out, "json_out");
    *json_out = dup(r->rep.to_json().dump(2));
  });
}

void zpo_report_free(zpo_report* r) { delete r; }

int zpo_validate_params(double eps, double H, const char* overrides_json, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    zpo::require(eps > 0.0 && eps < std::exp(-1.0), "eps must lie in (0, 1/e)");
    const zpo::Overrides ov =
        overrides_json ? zpo::Overrides::from_json(parse(overrides_json, "overrides")) : zpo::desk_overrides();
    const zpo::ParameterSchedule s = zpo::schedule(eps, H, ov);
    const zpo::AllPassEstimate ap = zpo::all_pass_threshold();
    json j = s.to_json();
    j["all_hold"] = s.all_hold();
    j["all_pass"] = {{"L", ap.L}, {"symbolic", ap.symbolic}, {"binding", ap.binding}};
    *json_out = dup(j.dump(2));
  });
}

}  // extern "C"

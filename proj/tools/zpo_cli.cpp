// Command-line front end; talks to the library only through the C interface.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zpo/zpo.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitCellFailure = 2;

struct Failure {
  int status;
  std::string msg;
};

void check(int status, const char* what) {
  if (status != ZPO_OK) throw Failure{status, std::string(what) + ": " + zpo_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  zpo_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{ZPO_ERR_IO, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{ZPO_ERR_IO, "cannot write " + path.string()};
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw Failure{ZPO_ERR_IO, "write failed for " + path.string()};
}

// flag > environment > fallback
std::string output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ZPO_OUTPUT_DIR"); env && *env) return env;
  return fallback;
}

struct DensityOpts {
  std::string spec = R"({"kind":"cauchy"})";
  double p = 0.0;
  std::string table;

  void add(CLI::App* sc) {
    sc->add_option("--density", spec, "density spec as JSON")->capture_default_str();
    sc->add_option("--power", p, "power-tail exponent p in [2, 3] (overrides --density)");
    sc->add_option("--table", table, "two-column x,pdf CSV (overrides --density)");
  }
  std::string resolved() const {
    if (!table.empty()) return json{{"kind", "tabulated"}, {"path", table}}.dump();
    if (p != 0.0) return json{{"kind", "power_tail"}, {"p", p}}.dump();
    return spec;
  }
};

// RAII over the opaque handles
struct Solution {
  zpo_density* d = nullptr;
  zpo_ot* ot = nullptr;
  explicit Solution(const std::string& spec, bool with_ot = true) {
    check(zpo_density_create(spec.c_str(), &d), "density");
    if (with_ot) check(zpo_ot_create(d, &ot), "transport");
  }
  ~Solution() {
    zpo_ot_free(ot);
    zpo_density_free(d);
  }
  Solution(const Solution&) = delete;
  Solution& operator=(const Solution&) = delete;
};

// k=v pairs on top of the desk tuning, or on an empty set with --literal
json overrides_json(const std::vector<std::string>& kv, bool literal) {
  json o = json::object();
  if (!literal) o = {{"c_beta", 0.15}, {"c_delta", 0.5}, {"c_tau", 0.02}};
  for (const auto& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Failure{ZPO_ERR_INVALID_ARGUMENT, "override must be key=value: " + s};
    const std::string key = s.substr(0, eq), val = s.substr(eq + 1);
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != val.size()) throw Failure{ZPO_ERR_INVALID_ARGUMENT, "override value is not a number: " + s};
    o[key] = v;
  }
  return o;
}

void emit(const std::string& text, const fs::path& dir, const std::string& name) {
  std::cout << text << "\n";
  write_file(dir / name, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-point oscillation toolkit for 1D two-electron Coulomb transport"};
  app.set_version_flag("--version", std::string(zpo_version()));
  app.require_subcommand(1);
  std::string outdir_flag;
  app.add_option("--output-dir", outdir_flag, "where files go (default: $ZPO_OUTPUT_DIR, then zpo_out)");

  // describe-density
  auto* dd = app.add_subcommand("describe-density", "quantiles, tail check and window of a density");
  DensityOpts dd_d;
  dd_d.add(dd);
  double dd_tail = 0.05;
  dd->add_option("--tail-mass", dd_tail, "mass outside the grid window")->capture_default_str();

  // ot
  auto* ot = app.add_subcommand("ot", "optimal map, potential and functionals");
  DensityOpts ot_d;
  ot_d.add(ot);
  double ot_H = 4.0;
  int ot_n = 201;
  ot->add_option("--H", ot_H, "domain parameter")->capture_default_str();
  ot->add_option("--lattice-n", ot_n, "lattice points per component")->capture_default_str();

  // recover
  auto* rc = app.add_subcommand("recover", "one recovery construction");
  DensityOpts rc_d;
  rc_d.add(rc);
  double rc_eps = 1e-2, rc_H = 4.0, rc_tail = 0.05;
  int rc_n = 512;
  std::vector<std::string> rc_over;
  bool rc_literal = false, rc_dump_rem = false, rc_dump_fields = false;
  rc->add_option("--eps", rc_eps, "semiclassical parameter")->capture_default_str();
  rc->add_option("--H", rc_H, "domain parameter")->capture_default_str();
  rc->add_option("--grid-n", rc_n, "cells per axis")->capture_default_str();
  rc->add_option("--tail-mass", rc_tail, "mass outside the grid window")->capture_default_str();
  rc->add_option("--override", rc_over, "schedule override key=value (N, beta, delta, tau, c_N, c_beta, c_delta, c_tau)");
  rc->add_flag("--literal", rc_literal, "start from the untuned schedule instead of the desk tuning");
  rc->add_flag("--dump-remainder", rc_dump_rem, "write sigma1, sigma2, pi0, pi_tilde CSVs");
  rc->add_flag("--dump-fields", rc_dump_fields, "write psi_sq, gammabar and target CSVs");

  // oracle
  auto* orc = app.add_subcommand("oracle", "independent checks: ground state, constrained minimum, delta");
  DensityOpts or_d;
  or_d.add(orc);
  std::string or_mode = "ground";
  std::vector<double> or_eps;
  int or_n = 0, or_on = 64;
  double or_H = 4.0;
  std::vector<double> or_hess{1.0, 0.0, 0.0}, or_t{0.01, 0.1};
  std::vector<std::string> or_over;
  bool or_literal = false;
  orc->add_option("--mode", or_mode, "ground | constrained | delta")
      ->check(CLI::IsMember({"ground", "constrained", "delta"}))
      ->capture_default_str();
  orc->add_option("--eps", or_eps, "eps (a list for delta)");
  orc->add_option("--grid-n", or_n, "fine grid cells per axis (ground, constrained)");
  orc->add_option("--oracle-n", or_on, "coarse grid for the constrained solve")->capture_default_str();
  orc->add_option("--H", or_H, "domain parameter (constrained)")->capture_default_str();
  orc->add_option("--hessian", or_hess, "xx xy yy (delta)")->expected(3);
  orc->add_option("--markov-t", or_t, "thresholds for the concentration check (ground)");
  orc->add_option("--override", or_over, "schedule override key=value (constrained)");
  orc->add_flag("--literal", or_literal, "untuned schedule (constrained)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run an (H, eps) sweep from a JSON config");
  std::string sw_cfg;
  sw->add_option("config", sw_cfg, "config JSON file")->required();

  // validate-params
  auto* vp = app.add_subcommand("validate-params", "schedule orderings and their margins");
  std::vector<double> vp_eps{1e-2, 1e-3, 1e-4};
  double vp_H = 4.0;
  std::vector<std::string> vp_over;
  bool vp_literal = false, vp_json = false;
  vp->add_option("--eps", vp_eps, "eps values")->capture_default_str();
  vp->add_option("--H", vp_H, "domain parameter")->capture_default_str();
  vp->add_option("--override", vp_over, "schedule override key=value");
  vp->add_flag("--literal", vp_literal, "untuned schedule");
  vp->add_flag("--json", vp_json, "print JSON instead of CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*dd) {
      Solution s(dd_d.resolved(), false);
      char* out = nullptr;
      check(zpo_density_describe(s.d, dd_tail, &out), "describe-density");
      emit(take(out), output_dir(outdir_flag, "zpo_out"), "density.json");
    } else if (*ot) {
      Solution s(ot_d.resolved());
      const fs::path dir = output_dir(outdir_flag, "zpo_out");
      char* out = nullptr;
      check(zpo_ot_report(s.ot, ot_H, &out), "ot");
      emit(take(out), dir, "ot.json");
      check(zpo_ot_lattice_csv(s.ot, ot_H, ot_n, &out), "ot lattice");
      write_file(dir / "ot_lattice.csv", take(out));
    } else if (*rc) {
      Solution s(rc_d.resolved());
      const fs::path dir = output_dir(outdir_flag, "zpo_out");
      const json cfg = {{"n", rc_n}, {"tail_mass", rc_tail}, {"overrides", overrides_json(rc_over, rc_literal)}};
      zpo_cell* cell = nullptr;
      check(zpo_recover(s.ot, cfg.dump().c_str(), rc_H, rc_eps, &cell), "recover");
      std::unique_ptr<zpo_cell, decltype(&zpo_cell_free)> guard(cell, zpo_cell_free);
      char* out = nullptr;
      check(zpo_cell_json(cell, &out), "recover");
      emit(take(out), dir, "recover.json");
      if (!zpo_cell_ok(cell)) return kExitCellFailure;
      std::vector<const char*> dumps;
      if (rc_dump_rem) dumps.insert(dumps.end(), {"sigma1", "sigma2", "pi0", "pi_tilde"});
      if (rc_dump_fields) dumps.insert(dumps.end(), {"psi_sq", "gammabar", "target"});
      for (const char* name : dumps) {
        check(zpo_cell_dump_csv(cell, name, &out), name);
        write_file(dir / (std::string(name) + ".csv"), take(out));
      }
    } else if (*orc) {
      json q = {{"mode", or_mode}};
      if (or_mode == "delta") {
        q["hessian"] = or_hess;
        if (!or_eps.empty()) q["eps"] = or_eps;
      } else {
        if (or_eps.size() > 1) throw Failure{ZPO_ERR_INVALID_ARGUMENT, "--eps takes one value in this mode"};
        if (!or_eps.empty()) q["eps"] = or_eps[0];
        if (or_n > 0) q["n"] = or_n;
        if (or_mode == "ground") {
          q["markov_t"] = or_t;
        } else {
          q["H"] = or_H;
          q["oracle_n"] = or_on;
          q["overrides"] = overrides_json(or_over, or_literal);
        }
      }
      std::unique_ptr<Solution> s;
      if (or_mode != "delta") s = std::make_unique<Solution>(or_d.resolved());
      char* out = nullptr;
      check(zpo_oracle(s ? s->ot : nullptr, q.dump().c_str(), &out), "oracle");
      emit(take(out), output_dir(outdir_flag, "zpo_out"), "oracle_" + or_mode + ".json");
    } else if (*sw) {
      json cfg;
      try {
        cfg = json::parse(read_file(sw_cfg));
      } catch (const json::exception& e) {
        throw Failure{ZPO_ERR_INVALID_ARGUMENT, "config: " + std::string(e.what())};
      }
      if (!cfg.is_object()) throw Failure{ZPO_ERR_INVALID_ARGUMENT, "config: top level must be a JSON object"};
      const std::string dir = output_dir(outdir_flag, cfg.value("output_dir", std::string("zpo_out")));
      cfg["output_dir"] = dir;
      zpo_report* rep = nullptr;
      check(zpo_sweep(cfg.dump().c_str(), &rep), "sweep");
      std::unique_ptr<zpo_report, decltype(&zpo_report_free)> guard(rep, zpo_report_free);
      char* out = nullptr;
      check(zpo_report_csv(rep, &out), "sweep");
      const std::string csv = take(out);
      write_file(fs::path(dir) / "sweep.csv", csv);
      check(zpo_report_json(rep, &out), "sweep");
      const json rj = json::parse(take(out));
      write_file(fs::path(dir) / "sweep.json", rj.dump(2));
      write_file(fs::path(dir) / "manifest.json", rj.at("manifest").dump(2));
      std::cout << csv;
      int failures = 0;
      check(zpo_report_failures(rep, &failures), "sweep");
      if (failures > 0) {
        std::cerr << failures << " cell(s) failed; see the error column\n";
        return kExitCellFailure;
      }
    } else if (*vp) {
      const std::string ov = overrides_json(vp_over, vp_literal).dump();
      json all = json::array();
      for (double e : vp_eps) {
        char* out = nullptr;
        check(zpo_validate_params(e, vp_H, ov.c_str(), &out), "validate-params");
        all.push_back(json::parse(take(out)));
      }
      if (vp_json) {
        std::cout << all.dump(2) << "\n";
      } else {
        std::cout << "eps,H,N,beta,delta,tau,ordering,ratio,log10_ratio,status\n";
        for (const auto& s : all)
          for (const auto& o : s.at("orderings")) {
            std::ostringstream line;
            line.precision(6);
            line << s.at("eps").get<double>() << ',' << s.at("H").get<double>() << ',' << s.at("N").get<double>()
                 << ',' << s.at("beta").get<double>() << ',' << s.at("delta").get<double>() << ','
                 << s.at("tau").get<double>() << ",\"" << o.at("ordering").get<std::string>() << "\","
                 << o.at("ratio").get<double>() << ',' << o.at("log10_ratio").get<double>() << ','
                 << (o.at("holds").get<bool>() ? "ok" : "FAILED") << "\n";
            std::cout << line.str();
          }
        if (!all.empty()) std::cerr << "all orderings hold from " << all[0].at("all_pass").at("symbolic").get<std::string>() << "\n";
      }
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.msg << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}

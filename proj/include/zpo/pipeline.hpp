#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zpo/marginal_fix.hpp"
#include "zpo/oracle.hpp"
#include "zpo/recovery.hpp"

namespace zpo {

// Overrides used when a config does not name any: the desk-scale tuning.
Overrides desk_overrides();

struct OracleToggles {
  bool constrained = false;  // sandwich oracle on a coarse grid per cell
  int n = 64;
  bool any() const { return constrained; }
};

struct RunConfig {
  nlohmann::json density = {{"kind", "cauchy"}};
  std::vector<double> H{4.0};
  std::vector<double> eps{1e-2, 1e-3};
  int n = 512;
  double tail_mass = 0.05;
  Overrides overrides = desk_overrides();
  OracleToggles oracle;
  std::string output_dir = "zpo_out";
  std::uint64_t seed = 0;
  int threads = 1;

  // Strict: unknown keys and out-of-range values are errors.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  std::string hash() const;  // SHA-256 of the canonical JSON
};

struct CellRecord {
  double H = 0, eps = 0;
  bool ok = false;
  std::string error;
  double N = 0, beta = 0, delta = 0, tau = 0;
  bool schedule_all_hold = false;
  std::string failed_orderings;  // ';'-separated
  double F_OT = 0, F_ZPO = 0, F_ZPO_full = 0;
  double E_main = 0, E_main_gap_tau = 0, E_total = 0, gap_upper = 0;
  double marginal_residual = 0, mass_identity_error = 0, c_H = 0, trimmed_mass = 0, cells_per_width = 0;
  double pe_remainder_scaled = 0, remainder_mass = 0, ke_constant = 0, pe_constant = 0;
  bool support_ok = false, upper_sandwich = false;
  bool has_oracle = false;
  double E_ground = 0, E_oracle = 0, E_construct_coarse = 0, gap_oracle = 0, oracle_kkt = 0;
  bool sandwich_ok = false;
  std::string oracle_status;  // "ok" or "skipped: ..."

  nlohmann::json to_json() const;
  static CellRecord from_json(const nlohmann::json& j);
  bool operator==(const CellRecord&) const = default;
};

// Intermediate objects of one cell, for dumps.
struct CellArtifacts {
  MainPlan main;
  RemainderPlan remainder;
  DeconvolvedPlan deconvolved;
  RecoveryField recovery;
  DeconvolutionCheck check;
  ParameterSchedule schedule;
};

// density → OT → main plan → remainder → deconvolution → assembly (→ coarse oracle). Never throws;
// failures land in the record.
CellRecord run_cell(const CoulombOT& sol, double H, double eps, const RunConfig& cfg,
                    CellArtifacts* artifacts = nullptr);

struct RunReport {
  RunConfig config;
  std::vector<CellRecord> cells;
  nlohmann::json manifest;
  bool all_ok() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

RunReport run_sweep(const RunConfig& cfg);

std::vector<std::string> csv_columns(bool with_oracle);
std::vector<CellRecord> cells_from_csv(const std::string& text);
// RFC 4180 quoting.
std::string csv_escape(const std::string& s);
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

std::string library_version();

}  // namespace zpo

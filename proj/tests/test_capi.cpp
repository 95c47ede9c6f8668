#include <doctest.h>

#include <cstdlib>
#include <string>

#include <json.hpp>

#include "zpo/zpo.h"

using nlohmann::json;

namespace {

// takes ownership of a library string
std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out = s;
  zpo_string_free(s);
  return out;
}

struct Ot {
  zpo_density* d = nullptr;
  zpo_ot* ot = nullptr;
  Ot() {
    REQUIRE(zpo_density_create(R"({"kind":"cauchy"})", &d) == ZPO_OK);
    REQUIRE(zpo_ot_create(d, &ot) == ZPO_OK);
  }
  ~Ot() {
    zpo_ot_free(ot);
    zpo_density_free(d);
  }
};

}  // namespace

TEST_CASE("version and error channel") {
  CHECK(std::string(zpo_version()).size() > 0);
  zpo_density* d = nullptr;
  CHECK(zpo_density_create(R"({"kind":"bogus"})", &d) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(d == nullptr);
  CHECK(std::string(zpo_last_error()).size() > 0);
  CHECK(zpo_density_create("{not json", &d) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(zpo_density_create(nullptr, &d) == ZPO_ERR_INVALID_ARGUMENT);
  REQUIRE(zpo_density_create(R"({"kind":"cauchy"})", &d) == ZPO_OK);
  CHECK(std::string(zpo_last_error()).empty());
  zpo_density_free(d);
  zpo_density_free(nullptr);
  zpo_string_free(nullptr);
}

TEST_CASE("density and OT reports") {
  Ot o;
  char* s = nullptr;
  REQUIRE(zpo_density_describe(o.d, 0.05, &s) == ZPO_OK);
  const json dj = json::parse(take(s));
  CHECK(dj.at("symmetric") == true);
  CHECK(dj.at("grid_half_width").get<double>() == doctest::Approx(6.3138).epsilon(1e-4));

  REQUIRE(zpo_ot_report(o.ot, 4.0, &s) == ZPO_OK);
  const json oj = json::parse(take(s));
  CHECK(oj.at("F_OT").get<double>() == doctest::Approx(1.0 / 3.141592653589793).epsilon(1e-6));
  for (const char* k : {"F_ZPO", "L_H", "r_H", "delta_gap", "max_abs_ddu"}) CHECK(oj.contains(k));

  REQUIRE(zpo_ot_lattice_csv(o.ot, 4.0, 11, &s) == ZPO_OK);
  const std::string csv = take(s);
  CHECK(csv.rfind("x,T,u,du,ddu,q\n", 0) == 0);
  size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 23);
  CHECK(zpo_ot_lattice_csv(o.ot, 4.0, 1, &s) == ZPO_ERR_INVALID_ARGUMENT);
}

TEST_CASE("parameter validity table") {
  char* s = nullptr;
  REQUIRE(zpo_validate_params(1e-4, 4.0, "{}", &s) == ZPO_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("all_hold") == false);
  CHECK(j.at("all_pass").at("symbolic").get<std::string>().size() > 0);
  CHECK(zpo_validate_params(0.5, 4.0, nullptr, &s) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(zpo_validate_params(1e-3, 4.0, R"({"c_gamma":2})", &s) == ZPO_ERR_INVALID_ARGUMENT);
}

TEST_CASE("one recovery cell with dumps") {
  Ot o;
  zpo_cell* c = nullptr;
  REQUIRE(zpo_recover(o.ot, R"({"n":256})", 4.0, 1e-2, &c) == ZPO_OK);
  CHECK(zpo_cell_ok(c) == 1);
  char* s = nullptr;
  REQUIRE(zpo_cell_json(c, &s) == ZPO_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("record").at("gap_upper").get<double>() > 0.0);
  CHECK(j.at("config").at("n") == 256);
  for (const char* name : {"psi_sq", "sigma1", "sigma2", "pi0", "pi_tilde", "gammabar", "target"}) {
    REQUIRE(zpo_cell_dump_csv(c, name, &s) == ZPO_OK);
    CHECK(take(s).size() > 10);
  }
  CHECK(zpo_cell_dump_csv(c, "nothing", &s) == ZPO_ERR_INVALID_ARGUMENT);
  zpo_cell_free(c);
  CHECK(zpo_recover(o.ot, R"({"bad":1})", 4.0, 1e-2, &c) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(c == nullptr);
}

TEST_CASE("oracle modes") {
  Ot o;
  char* s = nullptr;
  REQUIRE(zpo_oracle(nullptr, R"({"mode":"delta","eps":[1e-4]})", &s) == ZPO_OK);
  const json d = json::parse(take(s));
  CHECK(d.at("records").size() == 1);
  REQUIRE(zpo_oracle(o.ot, R"({"mode":"ground","eps":1e-2,"n":256})", &s) == ZPO_OK);
  const json g = json::parse(take(s));
  CHECK(g.at("markov").size() == 2);
  CHECK(g.at("result").at("eigenvalue").get<double>() > 0.0);
  CHECK(zpo_oracle(o.ot, R"({"mode":"ground","eps":1e-4,"n":64})", &s) == ZPO_ERR_RESOLUTION);
  CHECK(zpo_oracle(o.ot, R"({"mode":"exact"})", &s) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(zpo_oracle(o.ot, R"({"mode":"ground","grid":3})", &s) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(zpo_oracle(nullptr, R"({"mode":"ground"})", &s) == ZPO_ERR_INVALID_ARGUMENT);
}

TEST_CASE("sweep through the C surface") {
  const char* cfg = R"({"eps":[0.01],"n":256})";
  char* s = nullptr;
  REQUIRE(zpo_config_normalize(cfg, &s) == ZPO_OK);
  CHECK(json::parse(take(s)).at("hash").get<std::string>().size() == 64);
  zpo_report* r = nullptr;
  REQUIRE(zpo_sweep(cfg, &r) == ZPO_OK);
  int failures = -1;
  REQUIRE(zpo_report_failures(r, &failures) == ZPO_OK);
  CHECK(failures == 0);
  REQUIRE(zpo_report_csv(r, &s) == ZPO_OK);
  CHECK(take(s).rfind("H,eps,ok,", 0) == 0);
  REQUIRE(zpo_report_json(r, &s) == ZPO_OK);
  CHECK(json::parse(take(s)).at("cells").size() == 1);
  zpo_report_free(r);
  CHECK(zpo_sweep(R"({"eps":[]})", &r) == ZPO_ERR_INVALID_ARGUMENT);
  CHECK(zpo_report_failures(nullptr, &failures) == ZPO_ERR_INVALID_ARGUMENT);
}

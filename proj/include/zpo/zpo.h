/* C interface to the zpo library. Every call returns a status; on failure zpo_last_error()
   holds a message for the calling thread. Strings handed out must be released with zpo_string_free. */
#ifndef ZPO_ZPO_H
#define ZPO_ZPO_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ZPO_API __declspec(dllexport)
#else
#define ZPO_API __attribute__((visibility("default")))
#endif

enum zpo_status {
  ZPO_OK = 0,
  ZPO_ERR_INVALID_ARGUMENT = 1,
  ZPO_ERR_DOMAIN = 2,
  ZPO_ERR_NUMERICAL = 3,
  ZPO_ERR_IO = 4,
  ZPO_ERR_RESOLUTION = 5,
  ZPO_ERR_INTERNAL = 6
};

typedef struct zpo_density zpo_density;
typedef struct zpo_ot zpo_ot;
typedef struct zpo_cell zpo_cell;
typedef struct zpo_report zpo_report;

ZPO_API const char* zpo_version(void);
ZPO_API const char* zpo_last_error(void);
ZPO_API void zpo_string_free(char* s);

/* {"kind":"cauchy"}, {"kind":"power_tail","p":2.5} or {"kind":"tabulated","path":"..."} */
ZPO_API int zpo_density_create(const char* spec_json, zpo_density** out);
ZPO_API int zpo_density_describe(const zpo_density* d, double tail_mass, char** json_out);
ZPO_API void zpo_density_free(zpo_density* d);

ZPO_API int zpo_ot_create(const zpo_density* d, zpo_ot** out);
/* F_OT, F_ZPO, L(H), r_H, diagonal gap, max|u''| and friends */
ZPO_API int zpo_ot_report(const zpo_ot* ot, double H, char** json_out);
/* x,T,u,du,ddu,q on n points per component of the domain at H */
ZPO_API int zpo_ot_lattice_csv(const zpo_ot* ot, double H, int n, char** csv_out);
ZPO_API void zpo_ot_free(zpo_ot* ot);

/* One (H, eps) cell. config_json uses the sweep schema; its H and eps lists are ignored. */
ZPO_API int zpo_recover(const zpo_ot* ot, const char* config_json, double H, double eps, zpo_cell** out);
ZPO_API int zpo_cell_ok(const zpo_cell* c);
ZPO_API int zpo_cell_json(const zpo_cell* c, char** json_out);
/* name: psi_sq, gammabar, sigma1, sigma2, pi0, pi_tilde, target */
ZPO_API int zpo_cell_dump_csv(const zpo_cell* c, const char* name, char** csv_out);
ZPO_API void zpo_cell_free(zpo_cell* c);

/* {"mode":"ground"|"constrained"|"delta", ...}; see the README for the fields of each mode */
ZPO_API int zpo_oracle(const zpo_ot* ot, const char* request_json, char** json_out);

ZPO_API int zpo_config_normalize(const char* config_json, char** json_out);
ZPO_API int zpo_sweep(const char* config_json, zpo_report** out);
ZPO_API int zpo_report_failures(const zpo_report* r, int* out);
ZPO_API int zpo_report_csv(const zpo_report* r, char** csv_out);
ZPO_API int zpo_report_json(const zpo_report* r, char** json_out);
ZPO_API void zpo_report_free(zpo_report* r);

/* overrides_json may be NULL (desk tuning) or "{}" (literal schedule) */
ZPO_API int zpo_validate_params(double eps, double H, const char* overrides_json, char** json_out);

#ifdef __cplusplus
}
#endif

#endif

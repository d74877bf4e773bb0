#include <stdio.h>
#include <stdlib.h>
#include "pfrac.h"

int main(void) {
    const char *cfg_text =
        "[mesh]\n"
        "nx = 4\n"
        "dirichlet = [[\"left\", \"both\"], [\"right\", \"both\"], [\"bottom\", \"both\"], [\"top\", \"both\"]]\n"
        "[time]\n"
        "T = 1.0\n"
        "k = 4\n";
    PfracConfig *cfg = NULL;
    if (pfrac_config_parse_string(cfg_text, &cfg) != PFRAC_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", pfrac_last_error());
        return 1;
    }
    PfracResult *res = NULL;
    if (pfrac_simulate(cfg, &res) != PFRAC_STATUS_OK) {
        fprintf(stderr, "simulate: %s\n", pfrac_last_error());
        return 1;
    }
    printf("version %s, S_k = %.12f, rows = %zu\n",
           pfrac_version(), pfrac_result_total_length(res), pfrac_result_row_count(res));
    size_t n = pfrac_result_node_count(res);
    double *z = malloc(n * sizeof(double));
    pfrac_result_final_phase(res, z, n);
    printf("final z[0] = %.9f (expect 0.4)\n", z[0]);
    free(z);
    pfrac_result_free(res);
    pfrac_config_free(cfg);
    return 0;
}

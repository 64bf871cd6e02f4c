/* Build: cargo build -p prevsim-ffi, then
 * cc crates/ffi/c/demo.c -Icrates/ffi/include target/debug/libprevsim_ffi.a -lpthread -ldl -lm */
#include <stdio.h>

#include "prevsim.h"

int main(void) {
    PrevsimGrid *grid = NULL;
    size_t n = 0;
    if (prevsim_grid_new_default(&grid) != PREVSIM_STATUS_OK) {
        fprintf(stderr, "grid: %s\n", prevsim_last_error());
        return 1;
    }
    prevsim_grid_len(grid, &n);
    const char *label = NULL;
    prevsim_grid_label(grid, 0, &label);
    printf("prevsim %s: %zu conditions, first %s\n", prevsim_version(), n, label);
    prevsim_grid_free(grid);

    PrevsimImpact impact;
    if (prevsim_environmental_impact(2.62, 3.83, 22e6, &impact) == PREVSIM_STATUS_OK) {
        printf("%.2f L per capita, %.0f t in total\n", impact.per_capita_volume_l, impact.total_tons);
    }

    uint8_t level = 0;
    if (prevsim_discretize(1.5, 5, &level) != PREVSIM_STATUS_OK) {
        printf("rejected: %s\n", prevsim_last_error());
    }
    return 0;
}

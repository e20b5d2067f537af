#include <stdio.h>
#include <stdlib.h>
#include "pansharp.h"

int main(void) {
    size_t h = 8, w = 8, b = 3;
    double *data = malloc(h * w * b * sizeof(double));
    for (size_t i = 0; i < h * w * b; i++) data[i] = 50.0 + (double)(i % 17) * 3.0 + (double)(i % 5);
    PsCube *truth = NULL, *pan = NULL, *ms = NULL, *fused = NULL;
    if (ps_cube_new(h, w, b, data, &truth) != PsStatus_Ok) { fprintf(stderr, "new: %s\n", ps_last_error()); return 1; }
    if (ps_synth_pair(truth, 2, &pan, &ms) != PsStatus_Ok) { fprintf(stderr, "synth: %s\n", ps_last_error()); return 1; }
    PsMetricReport report;
    if (ps_fuse(pan, ms, PsMethod_Pcs, true, PsUpsampler_Replicate, 0.9, 1.4, &fused, &report) != PsStatus_Ok) {
        fprintf(stderr, "fuse: %s\n", ps_last_error()); return 1;
    }
    printf("fused %zux%zux%zu consistent=%.3e spatial=%.3e inverse=%.2f\n",
           ps_cube_height(fused), ps_cube_width(fused), ps_cube_bands(fused),
           report.consistent_rmse, report.spatial_rmse, report.inverse_ability);
    PsAblationRow rows[PS_ABLATION_ROWS];
    if (ps_ablate(pan, ms, truth, PsUpsampler_Replicate, 0.9, 1.4, rows, PS_ABLATION_ROWS) != PsStatus_Ok) {
        fprintf(stderr, "ablate: %s\n", ps_last_error()); return 1;
    }
    for (int i = 0; i < PS_ABLATION_ROWS; i++)
        printf("row %d: method=%d dse=%d consistent=%.2f rmse=%.2f\n",
               i, rows[i].method, rows[i].dse, rows[i].metrics.consistent_rmse, rows[i].metrics.rmse);
    ps_cube_free(fused); ps_cube_free(pan); ps_cube_free(ms); ps_cube_free(truth);
    free(data);
    return 0;
}

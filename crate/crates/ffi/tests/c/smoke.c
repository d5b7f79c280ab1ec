#include <math.h>
#include <stdio.h>
#include "gaga.h"

/* 6 genes x 4 arrays, two groups of two. */
int main(void) {
    double x[24] = {
        10, 11, 10.5, 9.8,   5, 5.2, 4.9, 5.1,   20, 21, 60, 65,
        7, 7.5, 6.9, 7.2,    3, 3.3, 9, 9.5,     12, 11, 12.5, 11.8,
    };
    size_t labels[4] = {0, 0, 1, 1};
    GagaDataset *data = NULL;
    GagaPatterns *pats = NULL;
    GagaFit *fit = NULL;
    if (gaga_dataset_new(x, 6, 4, labels, &data) != GAGA_STATUS_OK) return 1;
    if (gaga_patterns_two_group(&pats) != GAGA_STATUS_OK) return 2;
    GagaFitOptions opt = gaga_fit_options_default();
    opt.max_iterations = 5;
    if (gaga_fit(data, pats, &opt, &fit) != GAGA_STATUS_OK) return 3;
    double post[12];
    if (gaga_posterior(fit, data, post, 12) != GAGA_STATUS_OK) return 4;
    for (int i = 0; i < 6; i++)
        if (fabs(post[2 * i] + post[2 * i + 1] - 1.0) > 1e-12) return 5;
    if (gaga_dataset_new(x, 6, 4, NULL, &data) != GAGA_STATUS_NULL_POINTER) return 6;
    if (gaga_last_error_message() == NULL) return 7;
    gaga_fit_free(fit);
    gaga_patterns_free(pats);
    gaga_dataset_free(data);
    printf("ok %s\n", gaga_version());
    return 0;
}

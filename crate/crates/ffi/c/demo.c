/* Open an experiment directory and print the mean memorisation of each ladder entry. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "memladder.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s <experiment-dir>\n", argv[0]);
        return 2;
    }
    MlExperiment *exp = NULL;
    MlStatus st = ml_experiment_open(argv[1], &exp);
    if (st != ML_STATUS_OK) {
        char msg[512];
        ml_last_error(msg, sizeof msg);
        fprintf(stderr, "error %d: %s\n", (int)st, msg);
        return (int)st;
    }
    size_t n = ml_experiment_num_examples(exp);
    double *mem = malloc(n * sizeof *mem);
    for (size_t l = 0; l < ml_experiment_ladder_len(exp); l++) {
        if (ml_experiment_mem(exp, l, ML_LOSS_ONE_HOT, mem, n) != ML_STATUS_OK) {
            continue;
        }
        double sum = 0.0;
        size_t valid = 0;
        for (size_t i = 0; i < n; i++) {
            if (!isnan(mem[i])) {
                sum += mem[i];
                valid++;
            }
        }
        printf("entry %zu: mean mem %.4f over %zu examples\n", l, valid ? sum / valid : NAN, valid);
    }
    free(mem);
    ml_experiment_free(exp);
    return 0;
}

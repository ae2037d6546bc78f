/* Naive dense GEMM: C <- alpha*A*B + beta*C, row-major with leading
 * dimensions. Reference semantics for verification; also a standalone
 * micro-benchmark printing METRIC lines for the harness to parse. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <time.h>

void gemm_naive(int M, int N, int K,
                double alpha, const double *A, int lda,
                const double *B, int ldb,
                double beta, double *C, int ldc) {
    for (int i = 0; i < M; i++) {
        for (int j = 0; j < N; j++) {
            double sum = 0.0;
            for (int k = 0; k < K; k++) {
                sum += A[i * lda + k] * B[k * ldb + j];
            }
            C[i * ldc + j] = alpha * sum + beta * C[i * ldc + j];
        }
    }
}

static double now_s(void) {
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (double)ts.tv_sec + 1e-9 * (double)ts.tv_nsec;
}

int main(void) {
    const int M = 96, N = 80, K = 64;
    const double alpha = 1.5, beta = 0.5;
    double *A = malloc(sizeof(double) * M * K);
    double *B = malloc(sizeof(double) * K * N);
    double *C = malloc(sizeof(double) * M * N);
    double *C0 = malloc(sizeof(double) * M * N);
    if (!A || !B || !C || !C0) return 1;

    for (int i = 0; i < M * K; i++) A[i] = 0.5 + (double)(i % 13) / 13.0;
    for (int i = 0; i < K * N; i++) B[i] = -0.25 + (double)(i % 7) / 7.0;
    for (int i = 0; i < M * N; i++) C[i] = C0[i] = (double)(i % 5) - 2.0;

    const double t0 = now_s();
    gemm_naive(M, N, K, alpha, A, K, B, N, beta, C, N);
    const double t1 = now_s();

    /* recompute a diagonal stripe independently and accumulate the
     * squared deviation; identical arithmetic gives exactly zero */
    double err2 = 0.0;
    for (int i = 0; i < M && i < N; i++) {
        double sum = 0.0;
        for (int k = 0; k < K; k++) sum += A[i * K + k] * B[k * N + i];
        const double want = alpha * sum + beta * C0[i * N + i];
        const double got = C[i * N + i];
        err2 += (want - got) * (want - got);
    }

    const double elapsed = t1 - t0 > 1e-9 ? t1 - t0 : 1e-9;
    const double flops = 2.0 * (double)M * (double)N * (double)K;
    printf("METRIC gflops=%.6f\n", flops / elapsed / 1e9);
    printf("METRIC elapsed_s=%.6f\n", elapsed);
    printf("METRIC error_norm=%.17g\n", sqrt(err2));

    free(A); free(B); free(C); free(C0);
    return 0;
}

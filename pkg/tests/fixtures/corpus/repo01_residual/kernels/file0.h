#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <math.h>

#include <omp.h>

/* project_field_1_0_0: scale the density in place */
void project_field_1_0_0(double *buf, int n, double eps, double h, double omega)
{
    const double alpha = 8.24;
    const double beta = 1.50;
    const double gamma = 17;
    const double dt = 1.82;
    const double dx = 9.61;
    const double tol = 10;
    const double scale = 58;
    double *x = (double *)malloc(sizeof(double) * n * n);
    int k;
#pragma omp parallel for schedule(static) private(k)
    for (int i = 0; i < n; i++) {
        for (int j = 0; j < n; j++) {
            double dot = 0.0;
            for (k = 0; k < n; k++) {
                dot += buf[i * n + k] * buf[k * n + j];
            }
            x[i * n + j] = dot;
        }
    }
    memcpy(buf, x, sizeof(double) * n * n);
    free(x);
#pragma omp parallel for schedule(guided)
    for (int k = 0; k < n; k++) {
        buf[k] = (double)k * scale + 52;
    }
    double *b = (double *)malloc(sizeof(double) * n);
#pragma omp simd
    for (int k = 0; k < n; k++) {
        b[k] = eps * buf[k] + b[k] * 28;
        buf[k] = b[k];
    }
    free(b);
    {
#pragma omp parallel for
    for (int k = 0; k < n; k++) {
        buf[k] = (double)k * dt + 11;
    }
    }
    {
#pragma omp parallel for
    for (int j = 0; j < n; j++) {
        buf[j] = (double)j * omega + 6.78;
    }
    }
    {
    double *src = (double *)malloc(sizeof(double) * n * n);
    int k;
    for (int i = 0; i < n; i++) {
        for (int j = 0; j < n; j++) {
            double dot = 0.0;
            for (k = 0; k < n; k++) {
                dot += buf[i * n + k] * buf[k * n + j];
            }
            src[i * n + j] = dot;
        }
    }
    memcpy(buf, src, sizeof(double) * n * n);
    free(src);
    }
    {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; i++) {
        buf[i] = (double)i * beta + 13;
    }
    }
    {
#pragma omp parallel for
    for (int i = 0; i < n; i++) {
        buf[i] = (double)i * gamma + 8;
    }
    }
    {
    double *w = (double *)malloc(sizeof(double) * n);
#pragma omp simd
    for (int i = 0; i < n; i++) {
        w[i] = eps * buf[i] + w[i] * 1.64;
        buf[i] = w[i];
    }
    free(w);
    }
}

/* smooth_field_1_0_1: sweep the vector in place */
void smooth_field_1_0_1(double *tmp, int m, double gamma, double scale, double tol)
{
    const double alpha = 7.91;
    const double beta = 4.72;
    const double dt = 19;
    const double dx = 34;
    const double h = 3.37;
    const double omega = 59;
    const double eps = 54;
    double *b = (double *)malloc(sizeof(double) * m);
#pragma omp parallel for schedule(dynamic)
    for (int j = 0; j < m; j++) {
        b[j] = alpha * tmp[j] + b[j] * 1024;
        tmp[j] = b[j];
    }
    free(b);
    int iter = 0;
    double err = 1.0;
    while (err > eps && iter < 500) {
        err = 0.0;
#pragma omp parallel for reduction(+:err)
        for (int k = 1; k < m - 1; k++) {
            double next = 0.5 * (tmp[k - 1] + tmp[k + 1]);
            err += fabs(next - tmp[k]);
            tmp[k] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
    double *z = (double *)calloc(m * m, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < m - 1; i++) {
        for (int j = 1; j < m - 1; j++) {
            z[i * m + j] = 0.25 * (tmp[(i - 1) * m + j] + tmp[(i + 1) * m + j]
                + tmp[i * m + j - 1] + tmp[i * m + j + 1]);
        }
    }
    for (int i = 0; i < m * m; i++) {
        tmp[i] = z[i];
    }
    free(z);
    {
    double *b = (double *)calloc(m * m, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < m - 1; i++) {
        for (int j = 1; j < m - 1; j++) {
            b[i * m + j] = 0.25 * (tmp[(i - 1) * m + j] + tmp[(i + 1) * m + j]
                + tmp[i * m + j - 1] + tmp[i * m + j + 1]);
        }
    }
    for (int i = 0; i < m * m; i++) {
        tmp[i] = b[i];
    }
    free(b);
    }
    {
    int iter = 0;
    double err = 1.0;
    while (err > eps && iter < 500) {
        err = 0.0;
#pragma omp parallel for reduction(+:err)
        for (int k = 1; k < m - 1; k++) {
            double next = 0.5 * (tmp[k - 1] + tmp[k + 1]);
            err += fabs(next - tmp[k]);
            tmp[k] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
    }
#pragma omp parallel for
    for (int j = 0; j < m; j++) {
        tmp[j] = (double)j * eps + 53;
    }
    {
    int iter = 0;
    double err = 1.0;
    while (err > eps && iter < 100) {
        err = 0.0;
#pragma omp parallel for reduction(+:err)
        for (int j = 1; j < m - 1; j++) {
            double next = 0.5 * (tmp[j - 1] + tmp[j + 1]);
            err += fabs(next - tmp[j]);
            tmp[j] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
    }
    {
    double *field = (double *)calloc(m * m, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < m - 1; i++) {
        for (int j = 1; j < m - 1; j++) {
            field[i * m + j] = 0.25 * (tmp[(i - 1) * m + j] + tmp[(i + 1) * m + j]
                + tmp[i * m + j - 1] + tmp[i * m + j + 1]);
        }
    }
    for (int i = 0; i < m * m; i++) {
        tmp[i] = field[i];
    }
    free(field);
    }
}

/* update_residual_1_0_2: update the grid in place */
void update_residual_1_0_2(double *y, int ny, double dx, double h, double tol)
{
    const double alpha = 256;
    const double beta = 57;
    const double gamma = 100;
    const double dt = 2.92;
    const double scale = 512;
    const double omega = 58;
    const double eps = 36;
    double *c = (double *)calloc(ny * ny, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < ny - 1; i++) {
        for (int j = 1; j < ny - 1; j++) {
            c[i * ny + j] = 0.25 * (y[(i - 1) * ny + j] + y[(i + 1) * ny + j]
                + y[i * ny + j - 1] + y[i * ny + j + 1]);
        }
    }
    for (int i = 0; i < ny * ny; i++) {
        y[i] = c[i];
    }
    free(c);
    {
    double *dst = (double *)calloc(ny * ny, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < ny - 1; i++) {
        for (int j = 1; j < ny - 1; j++) {
            dst[i * ny + j] = 0.25 * (y[(i - 1) * ny + j] + y[(i + 1) * ny + j]
                + y[i * ny + j - 1] + y[i * ny + j + 1]);
        }
    }
    for (int i = 0; i < ny * ny; i++) {
        y[i] = dst[i];
    }
    free(dst);
    }
    int iter = 0;
    double err = 1.0;
    while (err > tol && iter < 500) {
        err = 0.0;
#pragma omp parallel for reduction(+:err)
        for (int i = 1; i < ny - 1; i++) {
            double next = 0.5 * (y[i - 1] + y[i + 1]);
            err += fabs(next - y[i]);
            y[i] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
    double norm = 0.0;
    for (int k = 0; k < ny; k++) {
        norm += cos(y[k]) * y[k];
    }
    y[0] = norm / ny;
    {
    double acc = 0.0;
#pragma omp parallel for reduction(+:acc)
    for (int j = 0; j < ny; j++) {
        acc += exp(y[j]) * y[j];
    }
    y[0] = acc / ny;
    }
    double *dst = (double *)malloc(sizeof(double) * ny * ny);
    int k;
#pragma omp parallel for private(k)
    for (int i = 0; i < ny; i++) {
        for (int j = 0; j < ny; j++) {
            double dot = 0.0;
            for (k = 0; k < ny; k++) {
                dot += y[i * ny + k] * y[k * ny + j];
            }
            dst[i * ny + j] = dot;
        }
    }
    memcpy(y, dst, sizeof(double) * ny * ny);
    free(dst);
    {
    double *u = (double *)calloc(ny * ny, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < ny - 1; i++) {
        for (int j = 1; j < ny - 1; j++) {
            u[i * ny + j] = 0.25 * (y[(i - 1) * ny + j] + y[(i + 1) * ny + j]
                + y[i * ny + j - 1] + y[i * ny + j + 1]);
        }
    }
    for (int i = 0; i < ny * ny; i++) {
        y[i] = u[i];
    }
    free(u);
    }
    {
    double sum = 0.0;
    for (int i = 0; i < ny; i++) {
        sum += sqrt(y[i]) * y[i];
    }
    y[0] = sum / ny;
    }
    {
    double sum = 0.0;
#pragma omp parallel for reduction(+:sum)
    for (int j = 0; j < ny; j++) {
        sum += exp(y[j]) * y[j];
    }
    y[0] = sum / ny;
    }
}

/* solve_vector_1_0_3: reduce the field in place */
void solve_vector_1_0_3(float *rhs, int count, float dt, float h, float scale)
{
    const float alpha = 27;
    const float beta = 6.67;
    const float gamma = 64;
    const float dx = 4.87;
    const float tol = 41;
    const float omega = 0.43;
    const float eps = 5.78;
    float *src = (float *)malloc(sizeof(float) * count);
    for (int i = 0; i < count; i++) {
        src[i] = tol * rhs[i] + src[i] * 38;
        rhs[i] = src[i];
    }
    free(src);
    int iter = 0;
    float err = 1.0;
    while (err > tol && iter < 1000) {
        err = 0.0;
        for (int j = 1; j < count - 1; j++) {
            float next = 0.5 * (rhs[j - 1] + rhs[j + 1]);
            err += fabs(next - rhs[j]);
            rhs[j] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
    {
    float *v = (float *)malloc(sizeof(float) * count);
    for (int j = 0; j < count; j++) {
        v[j] = dx * rhs[j] + v[j] * 0.48;
        rhs[j] = v[j];
    }
    free(v);
    }
    for (int j = 0; j < count; j++) {
        rhs[j] = (float)j * alpha + 8.72;
    }
    for (int i = 0; i < count; i++) {
        if (rhs[i] < 8.47) {
            rhs[i] = 8.47;
        } else if (rhs[i] > 63) {
            rhs[i] = 63;
        } else {
            rhs[i] = rhs[i] * alpha;
        }
    }
}

/* update_density_1_0_4: update the field in place */
void update_density_1_0_4(double *buf, int nx, double dt, double eps, double omega)
{
    const double alpha = 100;
    const double beta = 38;
    const double gamma = 44;
    const double dx = 0.58;
    const double h = 5.95;
    const double tol = 256;
    const double scale = 4.01;
    int iter = 0;
    double err = 1.0;
    while (err > tol && iter < 100) {
        err = 0.0;
#pragma omp parallel for schedule(guided) reduction(+:err)
        for (int j = 1; j < nx - 1; j++) {
            double next = 0.5 * (buf[j - 1] + buf[j + 1]);
            err += fabs(next - buf[j]);
            buf[j] = next;
        }
        iter++;
    }
    printf("iterations: %d error: %f\n", iter, err);
#pragma omp parallel for
    for (int i = 0; i < nx; i++) {
        if (buf[i] < 6.54) {
            buf[i] = 6.54;
        } else if (buf[i] > 12) {
            buf[i] = 12;
        } else {
            buf[i] = buf[i] * eps;
        }
    }
#pragma omp parallel for schedule(guided)
    for (int i = 0; i < nx; i++) {
        buf[i] = (double)i * beta + 50;
    }
    double *u = (double *)malloc(sizeof(double) * nx * nx);
    int k;
#pragma omp parallel for schedule(static) private(k)
    for (int i = 0; i < nx; i++) {
        for (int j = 0; j < nx; j++) {
            double dot = 0.0;
            for (k = 0; k < nx; k++) {
                dot += buf[i * nx + k] * buf[k * nx + j];
            }
            u[i * nx + j] = dot;
        }
    }
    memcpy(buf, u, sizeof(double) * nx * nx);
    free(u);
    double *u = (double *)malloc(sizeof(double) * nx);
    for (int k = 0; k < nx; k++) {
        u[k] = beta * buf[k] + u[k] * 0.25;
        buf[k] = u[k];
    }
    free(u);
    double *tmp = (double *)calloc(nx * nx, sizeof(double));
#pragma omp parallel for collapse(2)
    for (int i = 1; i < nx - 1; i++) {
        for (int j = 1; j < nx - 1; j++) {
            tmp[i * nx + j] = 0.25 * (buf[(i - 1) * nx + j] + buf[(i + 1) * nx + j]
                + buf[i * nx + j - 1] + buf[i * nx + j + 1]);
        }
    }
    for (int i = 0; i < nx * nx; i++) {
        buf[i] = tmp[i];
    }
    free(tmp);
    {
    double *grid = (double *)malloc(sizeof(double) * nx * nx);
    int k;
#pragma omp parallel for schedule(guided) private(k)
    for (int i = 0; i < nx; i++) {
        for (int j = 0; j < nx; j++) {
            double dot = 0.0;
            for (k = 0; k < nx; k++) {
                dot += buf[i * nx + k] * buf[k * nx + j];
            }
            grid[i * nx + j] = dot;
        }
    }
    memcpy(buf, grid, sizeof(double) * nx * nx);
    free(grid);
    }
}

#pragma once

// Internal assembly helpers shared by the PDE instances.

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <algorithm>
#include <thread>
#include <vector>

#include "sqpbox/mesh.hpp"

namespace sqpbox::detail {

// Index of (row, col) in compressed column storage; the slot must exist in
// the pattern fixed at construction.
inline std::ptrdiff_t csc_index(const Eigen::SparseMatrix<double>& a, int row, int col) {
    const int begin = a.outerIndexPtr()[col];
    const int end = a.outerIndexPtr()[col + 1];
    const int* inner = a.innerIndexPtr();
    const int* it = std::lower_bound(inner + begin, inner + end, row);
    return it - inner;
}

inline double& csc_entry(Eigen::SparseMatrix<double>& a, int row, int col) {
    return a.valuePtr()[csc_index(a, row, col)];
}

// Quadrature loop over a cell range: fn(cell, barycentric point, physical
// coordinates, volume-scaled weight).
template <class Fn>
void for_each_quad_point_range(const SimplexMesh& mesh, const QuadratureRule& rule,
                               int cell_begin, int cell_end, Fn&& fn) {
    const int d = mesh.dimension();
    const int vpc = mesh.verts_per_cell();
    const double vol = mesh.cell_volume();
    double xq[3];
    for (int c = cell_begin; c < cell_end; ++c) {
        for (int q = 0; q < rule.point_count(); ++q) {
            const double* bary = rule.point(q);
            for (int r = 0; r < d; ++r) xq[r] = 0.0;
            for (int k = 0; k < vpc; ++k) {
                const double* xv = mesh.node(mesh.cell_vertex(c, k));
                for (int r = 0; r < d; ++r) xq[r] += bary[k] * xv[r];
            }
            fn(c, bary, xq, vol * rule.weights[static_cast<std::size_t>(q)]);
        }
    }
}

template <class Fn>
void for_each_quad_point(const SimplexMesh& mesh, const QuadratureRule& rule, Fn&& fn) {
    for_each_quad_point_range(mesh, rule, 0, mesh.cell_count(), fn);
}

// Parallel quadrature loop: each worker accumulates into its own buffer,
// buffers are merged in index order afterwards, so results are deterministic
// for a fixed thread count. fn(buffer, cell, bary, xq, weight).
template <class Buffer, class Fn, class Merge>
void parallel_quad_assemble(const SimplexMesh& mesh, const QuadratureRule& rule, int threads,
                            std::vector<Buffer>& buffers, Fn&& fn, Merge&& merge) {
    const int cells = mesh.cell_count();
    if (threads <= 1 || cells < 2 * threads) {
        for_each_quad_point(mesh, rule, [&](int c, const double* b, const double* x, double w) {
            fn(buffers[0], c, b, x, w);
        });
        merge(buffers[0]);
        return;
    }
    const int chunk = (cells + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        const int c0 = t * chunk;
        const int c1 = std::min(cells, c0 + chunk);
        if (c0 >= c1) break;
        pool.emplace_back([&, t, c0, c1] {
            for_each_quad_point_range(mesh, rule, c0, c1,
                                      [&](int c, const double* b, const double* x, double w) {
                                          fn(buffers[static_cast<std::size_t>(t)], c, b, x, w);
                                      });
        });
    }
    for (auto& th : pool) th.join();
    for (std::size_t t = 0; t < buffers.size(); ++t) merge(buffers[t]);
}

inline double interp(const SimplexMesh& mesh, const Eigen::VectorXd& nodal, int cell,
                     const double* bary) {
    double v = 0.0;
    for (int k = 0; k < mesh.verts_per_cell(); ++k)
        v += bary[k] * nodal[mesh.cell_vertex(cell, k)];
    return v;
}

} // namespace sqpbox::detail

#include "sqpbox/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace sqpbox {

QuadratureRule volume_rule(int dimension) {
    QuadratureRule rule;
    rule.dimension = dimension;
    switch (dimension) {
        case 1: {
            // 3-point Gauss-Legendre mapped to barycentric coordinates.
            const double g = 0.5 * std::sqrt(3.0 / 5.0);
            const double ts[3] = {0.5 - g, 0.5, 0.5 + g};
            const double ws[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
            for (int q = 0; q < 3; ++q) {
                rule.bary.insert(rule.bary.end(), {1.0 - ts[q], ts[q]});
                rule.weights.push_back(ws[q]);
            }
            return rule;
        }
        case 2: {
            // Strang 6-point rule, degree 3, all weights positive.
            const double a = 0.659027622374092;
            const double b = 0.231933368553031;
            const double c = 0.109039009072877;
            const double perms[6][3] = {{a, b, c}, {a, c, b}, {b, a, c},
                                        {b, c, a}, {c, a, b}, {c, b, a}};
            for (auto& p : perms) {
                rule.bary.insert(rule.bary.end(), {p[0], p[1], p[2]});
                rule.weights.push_back(1.0 / 6.0);
            }
            return rule;
        }
        case 3: {
            // 10-point symmetric tetrahedral rule, degree 3.
            const double a1 = 0.7784952948213300, b1 = 0.0738349017262234;
            const double w1 = 0.0476331348432089;
            const double a2 = 0.4062443438840510, b2 = 0.0937556561159491;
            const double w2 = 0.1349112434378610;
            for (int k = 0; k < 4; ++k) {
                double p[4] = {b1, b1, b1, b1};
                p[k] = a1;
                rule.bary.insert(rule.bary.end(), {p[0], p[1], p[2], p[3]});
                rule.weights.push_back(w1);
            }
            for (int i = 0; i < 4; ++i)
                for (int j = i + 1; j < 4; ++j) {
                    double p[4] = {b2, b2, b2, b2};
                    p[i] = a2;
                    p[j] = a2;
                    rule.bary.insert(rule.bary.end(), {p[0], p[1], p[2], p[3]});
                    rule.weights.push_back(w2);
                }
            return rule;
        }
        default:
            throw std::invalid_argument("volume_rule: dimension must be 1, 2 or 3");
    }
}

namespace {

// Permutations of {0,...,d-1} in lexicographic order.
std::vector<std::array<int, 3>> permutations(int d) {
    std::array<int, 3> p = {0, 1, 2};
    std::vector<std::array<int, 3>> out;
    std::vector<int> idx(p.begin(), p.begin() + d);
    do {
        std::array<int, 3> entry = {0, 0, 0};
        for (int k = 0; k < d; ++k) entry[k] = idx[k];
        out.push_back(entry);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
}

double face_measure(int dim, const std::vector<double>& coords, const int* verts) {
    if (dim == 1) return 1.0;  // counting measure on endpoint "faces"
    if (dim == 2) {
        const double* a = coords.data() + verts[0] * 2;
        const double* b = coords.data() + verts[1] * 2;
        return std::hypot(b[0] - a[0], b[1] - a[1]);
    }
    const double* a = coords.data() + verts[0] * 3;
    const double* b = coords.data() + verts[1] * 3;
    const double* c = coords.data() + verts[2] * 3;
    const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const double cx = u[1] * v[2] - u[2] * v[1];
    const double cy = u[2] * v[0] - u[0] * v[2];
    const double cz = u[0] * v[1] - u[1] * v[0];
    return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

} // namespace

SimplexMesh SimplexMesh::unit_cube(int dimension, int refinement) {
    if (dimension < 1 || dimension > 3)
        throw std::invalid_argument("SimplexMesh: dimension must be 1, 2 or 3");
    if (refinement < 1 || refinement > 12)
        throw std::invalid_argument("SimplexMesh: refinement out of range");

    SimplexMesh m;
    m.dim_ = dimension;
    m.refinement_ = refinement;
    const int n = 1 << refinement;
    m.h_ = 1.0 / n;

    const int d = dimension;
    const int nn = n + 1;
    int node_total = 1;
    for (int k = 0; k < d; ++k) node_total *= nn;

    m.coords_.resize(static_cast<std::size_t>(node_total) * d);
    m.boundary_flag_.assign(node_total, 0);
    auto node_id = [&](int i, int j, int k) {
        return i + (d >= 2 ? nn * j : 0) + (d >= 3 ? nn * nn * k : 0);
    };
    for (int k = 0; k < (d >= 3 ? nn : 1); ++k)
        for (int j = 0; j < (d >= 2 ? nn : 1); ++j)
            for (int i = 0; i < nn; ++i) {
                const int id = node_id(i, j, k);
                m.coords_[static_cast<std::size_t>(id) * d + 0] = i * m.h_;
                if (d >= 2) m.coords_[static_cast<std::size_t>(id) * d + 1] = j * m.h_;
                if (d >= 3) m.coords_[static_cast<std::size_t>(id) * d + 2] = k * m.h_;
                bool bdry = i == 0 || i == n;
                if (d >= 2) bdry = bdry || j == 0 || j == n;
                if (d >= 3) bdry = bdry || k == 0 || k == n;
                m.boundary_flag_[id] = bdry ? 1 : 0;
            }

    // Kuhn subdivision: per cube, one simplex per permutation of the axes,
    // walking from the low corner to the high corner.
    const auto perms = permutations(d);
    const int cells_per_cube = static_cast<int>(perms.size());
    int cube_total = 1;
    for (int k = 0; k < d; ++k) cube_total *= n;
    m.cells_.reserve(static_cast<std::size_t>(cube_total) * cells_per_cube * (d + 1));
    m.cell_shape_.reserve(static_cast<std::size_t>(cube_total) * cells_per_cube);

    for (int k = 0; k < (d >= 3 ? n : 1); ++k)
        for (int j = 0; j < (d >= 2 ? n : 1); ++j)
            for (int i = 0; i < n; ++i) {
                for (int s = 0; s < cells_per_cube; ++s) {
                    int ci = i, cj = j, ck = k;
                    m.cells_.push_back(node_id(ci, cj, ck));
                    for (int step = 0; step < d; ++step) {
                        const int axis = perms[static_cast<std::size_t>(s)][step];
                        if (axis == 0) ++ci;
                        else if (axis == 1) ++cj;
                        else ++ck;
                        m.cells_.push_back(node_id(ci, cj, ck));
                    }
                    m.cell_shape_.push_back(s);
                }
            }

    // Basis gradients per shape from the vertex coordinate differences.
    double factorial = 1.0;
    for (int k = 2; k <= d; ++k) factorial *= k;
    m.cell_volume_ = std::pow(m.h_, d) / factorial;
    for (int s = 0; s < cells_per_cube; ++s) {
        Eigen::MatrixXd E(d, d);
        // Vertex offsets along the permutation walk, scaled by h.
        std::vector<std::array<double, 3>> verts(static_cast<std::size_t>(d) + 1, {0, 0, 0});
        for (int step = 0; step < d; ++step) {
            verts[static_cast<std::size_t>(step) + 1] = verts[static_cast<std::size_t>(step)];
            verts[static_cast<std::size_t>(step) + 1][perms[static_cast<std::size_t>(s)][step]] += m.h_;
        }
        for (int col = 0; col < d; ++col)
            for (int row = 0; row < d; ++row)
                E(row, col) = verts[static_cast<std::size_t>(col) + 1][row] - verts[0][row];
        const Eigen::MatrixXd Einv_t = E.inverse().transpose();
        std::vector<double> grads(static_cast<std::size_t>(d + 1) * d, 0.0);
        for (int k = 1; k <= d; ++k)
            for (int r = 0; r < d; ++r) {
                grads[static_cast<std::size_t>(k) * d + r] = Einv_t(r, k - 1);
                grads[static_cast<std::size_t>(r)] -= Einv_t(r, k - 1);
            }
        m.shape_grads_.push_back(std::move(grads));
    }

    for (int i = 0; i < node_total; ++i)
        if (m.boundary_flag_[i]) m.boundary_nodes_.push_back(i);
    m.interior_index_.assign(node_total, -1);
    for (int i = 0; i < node_total; ++i)
        if (!m.boundary_flag_[i]) {
            m.interior_index_[i] = static_cast<int>(m.interior_nodes_.size());
            m.interior_nodes_.push_back(i);
        }

    // Boundary faces: the cell faces that occur exactly once.
    std::map<std::array<int, 3>, std::pair<int, std::array<int, 3>>> face_count;
    const int vpc = d + 1;
    for (int c = 0; c < m.cell_count(); ++c)
        for (int omit = 0; omit < vpc; ++omit) {
            std::array<int, 3> fv = {-1, -1, -1};
            int idx = 0;
            for (int k = 0; k < vpc; ++k)
                if (k != omit) fv[idx++] = m.cells_[c * vpc + k];
            std::array<int, 3> key = fv;
            std::sort(key.begin(), key.begin() + d);
            auto it = face_count.find(key);
            if (it == face_count.end()) face_count.emplace(key, std::make_pair(1, fv));
            else it->second.first += 1;
        }
    std::vector<double> lumped(static_cast<std::size_t>(node_total), 0.0);
    for (const auto& [key, entry] : face_count) {
        if (entry.first != 1) continue;
        for (int k = 0; k < d; ++k) m.faces_.push_back(entry.second[k]);
        const double area = face_measure(d, m.coords_, entry.second.data());
        m.face_area_.push_back(area);
        m.boundary_measure_ += area;
        for (int k = 0; k < d; ++k)
            lumped[static_cast<std::size_t>(entry.second[k])] += area / d;
    }
    m.lumped_boundary_mass_.reserve(m.boundary_nodes_.size());
    for (int b : m.boundary_nodes_)
        m.lumped_boundary_mass_.push_back(lumped[static_cast<std::size_t>(b)]);

    return m;
}

} // namespace sqpbox

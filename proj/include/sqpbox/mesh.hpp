#pragma once

#include <array>
#include <vector>

namespace sqpbox {

/// Quadrature rule on the reference simplex, given in barycentric
/// coordinates; weights sum to one and scale with the element volume.
struct QuadratureRule {
    int dimension = 0;
    std::vector<double> bary;     // point-major, dimension+1 entries per point
    std::vector<double> weights;

    int point_count() const { return static_cast<int>(weights.size()); }
    const double* point(int q) const { return bary.data() + q * (dimension + 1); }
};

/// Volume rule exact for polynomials of degree 3: 3-point Gauss on
/// intervals, the 6-point Strang rule on triangles, the 10-point rule on
/// tetrahedra.
QuadratureRule volume_rule(int dimension);

/// Uniform simplicial mesh of the unit cube (0,1)^d, d in {1,2,3}, obtained
/// by Kuhn subdivision of a lattice of h-cubes, h = 2^-N. Every cube is cut
/// into d! simplices sharing the main diagonal, so all cells are translates
/// of d! reference shapes; basis gradients are stored once per shape.
class SimplexMesh {
public:
    static SimplexMesh unit_cube(int dimension, int refinement);

    int dimension() const { return dim_; }
    int refinement() const { return refinement_; }
    double h() const { return h_; }

    int node_count() const { return static_cast<int>(coords_.size()) / dim_; }
    /// Coordinates of node i (dim_ entries).
    const double* node(int i) const { return coords_.data() + i * dim_; }

    int cell_count() const { return static_cast<int>(cell_shape_.size()); }
    int verts_per_cell() const { return dim_ + 1; }
    int cell_vertex(int cell, int k) const { return cells_[cell * (dim_ + 1) + k]; }
    /// All cells have equal volume h^d / d!.
    double cell_volume() const { return cell_volume_; }
    /// Gradient of basis function k on the given cell (dim_ entries).
    const double* basis_gradient(int cell, int k) const {
        return shape_grads_[cell_shape_[cell]].data() + k * dim_;
    }

    bool is_boundary_node(int i) const { return boundary_flag_[i] != 0; }
    const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
    /// Interior (non-boundary) nodes and the node -> interior index map
    /// (-1 on the boundary); used to eliminate Dirichlet unknowns.
    const std::vector<int>& interior_nodes() const { return interior_nodes_; }
    const std::vector<int>& interior_index() const { return interior_index_; }

    int boundary_face_count() const { return static_cast<int>(face_area_.size()); }
    /// Vertices of boundary face f (dim_ entries).
    const int* face_vertex(int f) const { return faces_.data() + f * dim_; }
    double face_area(int f) const { return face_area_[f]; }
    double boundary_measure() const { return boundary_measure_; }

    /// Lumped boundary mass per boundary node, in boundary_nodes() order:
    /// integral of the node's hat function over the boundary.
    const std::vector<double>& lumped_boundary_mass() const { return lumped_boundary_mass_; }

private:
    int dim_ = 0;
    int refinement_ = 0;
    double h_ = 0.0;
    double cell_volume_ = 0.0;
    std::vector<double> coords_;
    std::vector<int> cells_;
    std::vector<int> cell_shape_;
    std::vector<std::vector<double>> shape_grads_;
    std::vector<char> boundary_flag_;
    std::vector<int> boundary_nodes_;
    std::vector<int> interior_nodes_;
    std::vector<int> interior_index_;
    std::vector<int> faces_;
    std::vector<double> face_area_;
    std::vector<double> lumped_boundary_mass_;
    double boundary_measure_ = 0.0;
};

} // namespace sqpbox

#pragma once

#include "tfm/fem.hpp"

namespace tfm {

/// Linear 2.5D parameter-to-state map: traction on the top surface of a 3D
/// substrate to the volume displacement, with homogeneous natural conditions
/// on the side walls and a clamped bottom. All matrices are assembled once
/// and shared read-only, so independent solves may run concurrently.
class LinearForward25 {
public:
    /// Keeps its own copy of the mesh; the argument need not outlive the operator.
    LinearForward25(const Mesh& mesh3, const MaterialParams& params, int order = 1,
                    double cg_tol = 1e-10);

    const Mesh& mesh() const { return mesh_; }
    const FeSpace& volume_space() const { return volume_space_; }
    const FeSpace& traction_space() const { return trace_.surface_space(); }
    const TraceOperator& trace_operator() const { return trace_; }
    const MaterialParams& params() const { return params_; }

    /// Solve a(u, v) = (t, v)_{Gamma_T} with u = 0 on the bottom.
    FeFunction forward(const FeFunction& traction) const;
    /// Adjoint of the composed operator L^2(Gamma_T) -> L^2(Omega):
    /// solve a(phi, v) = (w, v)_Omega and take the top trace.
    FeFunction adjoint(const FeFunction& w) const;

    // discrete L^2 inner products (raw mass matrices)
    double ip_volume(const Vec& a, const Vec& b) const { return weighted_inner(mass_volume_, a, b); }
    double ip_surface(const Vec& a, const Vec& b) const { return weighted_inner(mass_surface_, a, b); }
    double norm_volume(const Vec& a) const { return weighted_norm(mass_volume_, a); }
    double norm_surface(const Vec& a) const { return weighted_norm(mass_surface_, a); }

    const SparseMat& stiffness() const { return stiffness_; }
    const SparseMat& volume_mass() const { return mass_volume_; }
    const SparseMat& surface_mass() const { return mass_surface_; }

private:
    MaterialParams params_;
    Mesh mesh_;  // owned; must precede the space
    FeSpace volume_space_;
    TraceOperator trace_;
    SparseMat stiffness_;     // Dirichlet rows/cols replaced by identity
    SparseMat mass_volume_;   // raw
    SparseMat mass_surface_;  // raw
    double cg_tol_;
};

}  // namespace tfm

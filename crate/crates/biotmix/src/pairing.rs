//! Element pairings: which finite element family discretizes each of the
//! three fields. Pairings are strategy objects selected by name at runtime
//! so the solver, diagnostics, and reports stay generic over the family
//! choice.

use crate::mesh::Mesh;
use crate::refelem::Family;
use crate::space::{build_space, BoundaryCondition, Space, SpaceError};

/// A choice of displacement, flux, and pressure spaces over a mesh.
pub trait ElementPairing: Send + Sync {
    /// Stable identifier used on the command line and in reports.
    fn name(&self) -> &'static str;
    /// One-line human description of the element families.
    fn summary(&self) -> &'static str;
    fn displacement_space(&self, mesh: &Mesh) -> Result<Space, SpaceError>;
    fn flux_space(&self, mesh: &Mesh) -> Result<Space, SpaceError>;
    fn pressure_space(&self, mesh: &Mesh) -> Result<Space, SpaceError>;
}

/// Quadratic displacements, lowest-order edge-flux elements, constant
/// pressures.
pub struct Rt0FluxPairing;

/// Quadratic displacements, continuous piecewise-linear vector fluxes,
/// constant pressures. The flux space carries no edge-based normal
/// continuity structure of its own; its divergences still land in the
/// constant pressure space.
pub struct LagrangeFluxPairing;

impl ElementPairing for Rt0FluxPairing {
    fn name(&self) -> &'static str {
        "p2-rt0-dg0"
    }
    fn summary(&self) -> &'static str {
        "P2 vector displacement / RT0 flux / DG0 pressure"
    }
    fn displacement_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped)
    }
    fn flux_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(
            mesh,
            Family::RaviartThomas0,
            false,
            BoundaryCondition::NormalFlux,
        )
    }
    fn pressure_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(mesh, Family::Dg0, false, BoundaryCondition::None)
    }
}

impl ElementPairing for LagrangeFluxPairing {
    fn name(&self) -> &'static str {
        "p2-p1-dg0"
    }
    fn summary(&self) -> &'static str {
        "P2 vector displacement / P1 vector flux / DG0 pressure"
    }
    fn displacement_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(mesh, Family::LagrangeP2, true, BoundaryCondition::Clamped)
    }
    fn flux_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(
            mesh,
            Family::LagrangeP1,
            true,
            BoundaryCondition::NormalFlux,
        )
    }
    fn pressure_space(&self, mesh: &Mesh) -> Result<Space, SpaceError> {
        build_space(mesh, Family::Dg0, false, BoundaryCondition::None)
    }
}

static RT0_FLUX: Rt0FluxPairing = Rt0FluxPairing;
static LAGRANGE_FLUX: LagrangeFluxPairing = LagrangeFluxPairing;

/// All registered pairings, in presentation order.
pub fn registry() -> [&'static dyn ElementPairing; 2] {
    [&RT0_FLUX, &LAGRANGE_FLUX]
}

/// Look a pairing up by its command-line name.
pub fn lookup(name: &str) -> Option<&'static dyn ElementPairing> {
    registry().into_iter().find(|p| p.name() == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square;

    #[test]
    fn registry_names_resolve() {
        for p in registry() {
            assert!(std::ptr::eq(
                lookup(p.name()).unwrap() as *const dyn ElementPairing as *const (),
                p as *const dyn ElementPairing as *const ()
            ));
        }
        assert!(lookup("p3-bdm1-dg1").is_none());
    }

    #[test]
    fn spaces_have_expected_shapes() {
        let mesh = build_unit_square(4).unwrap();
        let rt = lookup("p2-rt0-dg0").unwrap();
        let u = rt.displacement_space(&mesh).unwrap();
        let w = rt.flux_space(&mesh).unwrap();
        let q = rt.pressure_space(&mesh).unwrap();
        assert_eq!(u.ndofs, 2 * (25 + 56));
        assert!(u.is_vector_valued() && w.is_vector_valued() && !q.is_vector_valued());
        assert_eq!(w.ndofs, 56);
        assert_eq!(q.ndofs, 32);

        let lg = lookup("p2-p1-dg0").unwrap();
        let wl = lg.flux_space(&mesh).unwrap();
        assert_eq!(wl.ndofs, 2 * 25);
        // Boundary handling differs: edge dofs vs componentwise nodes
        // (corners constrain both components).
        assert_eq!(w.constrained.len(), 16);
        assert_eq!(wl.constrained.len(), 12 + 2 * 4);
    }
}

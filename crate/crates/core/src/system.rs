//! The assembled problem: mesh, inner products, material model and datum.

use crate::fem::{assemble_inner_products, InnerProducts, Mesh};
use crate::model::{
    validate_model, BoundaryDatum, DegradationSpec, DissipationSpec, MaterialParams,
};
use crate::{Error, Result};

/// Everything the solvers need, built once and shared immutably.
pub struct System {
    pub mesh: Mesh,
    pub ips: InnerProducts,
    pub params: MaterialParams,
    pub deg: DegradationSpec,
    pub dis: DissipationSpec,
    pub datum: BoundaryDatum,
}

impl System {
    pub fn new(
        mesh: Mesh,
        params: MaterialParams,
        deg: DegradationSpec,
        dis: DissipationSpec,
        datum: BoundaryDatum,
    ) -> Result<Self> {
        let report = validate_model(&params, &deg, &dis);
        if !report.all_passed() {
            return Err(Error::Validation(report.failures()));
        }
        datum.validate()?;
        let ips = assemble_inner_products(&mesh)?;
        Ok(Self {
            mesh,
            ips,
            params,
            deg,
            dis,
            datum,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.node_count()
    }
}

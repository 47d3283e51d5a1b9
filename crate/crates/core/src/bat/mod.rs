//! Boundary-aware transducer: CIF alignment and a loss restricted to a band
//! of the lattice around it.

pub mod band;
pub mod cif;

use crate::error::Result;
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamStore};
use crate::transducer::{lattice_loss_graph, AlignmentLattice, LossOutput, TransducerParams};

pub use band::{band_centers, build_band, PruneBand};
pub use cif::{cif_align, cif_pretrain_step, cif_weights, fire, quantity_loss_graph, CifAlignment, CifParams};

/// Band width used for training.
pub const DEFAULT_BAND_WIDTH: usize = 5;

/// Transducer loss over the cells of `band` only.
pub fn bat_loss_graph<T: Scalar>(
    g: &Graph<T>,
    b: &Bound,
    tp: &TransducerParams,
    h: Var,
    y: &[usize],
    band: &PruneBand,
) -> Result<LossOutput<T>> {
    let t_len = g.shape(h).first().copied().unwrap_or(0);
    band.check(t_len, y.len())?;
    lattice_loss_graph(g, b, tp, h, y, &band.ranges)
}

pub fn bat_loss<T: Scalar>(
    store: &ParamStore<T>,
    tp: &TransducerParams,
    h: &Tensor<T>,
    y: &[usize],
    band: &PruneBand,
) -> Result<(T, AlignmentLattice<T>)> {
    let g = Graph::new();
    let b = store.bind(&g)?;
    let hv = g.constant(h.clone())?;
    let out = bat_loss_graph(&g, &b, tp, hv, y, band)?;
    Ok((g.scalar_value(out.nll), out.lattice))
}

//! Samplers: unconditional reverse-time generation, the guided baseline,
//! and the plug-and-play Monte Carlo posterior chain.

mod ancestral;
mod dps;
mod pmc;

pub use ancestral::sample_unconditional;
pub use dps::{sample_dps, DpsConfig};
pub use pmc::{sample_pmc, sample_pmc_traced, PmcConfig, TraceRow};

use crate::error::{Error, Result};
use crate::numkit::{derive_seed, Rng, Tensor};
use crate::operators::MeasurementOperator;
use crate::scorenet::ScoreFn;

/// One corrupted observation: a stable id (drives the chain seed), the
/// measurement, its forward model, and an optional chain initialization.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub id: u64,
    pub y: Tensor,
    pub op: MeasurementOperator,
    pub x_init: Option<Tensor>,
}

impl Measurement {
    pub fn new(id: u64, y: Tensor, op: MeasurementOperator) -> Self {
        Measurement {
            id,
            y,
            op,
            x_init: None,
        }
    }
}

/// Independent posterior chains, one group of `chains_per_y` per
/// measurement, seeded by `(seed, measurement id, chain index)` so results
/// do not depend on slice order and may be computed concurrently.
///
/// Output rows are grouped by measurement: chains of `items[i]` occupy
/// `i * chains_per_y ..`.
pub fn posterior_batch(
    model: &dyn ScoreFn,
    items: &[Measurement],
    cfg: &PmcConfig,
    seed: u64,
    chains_per_y: usize,
) -> Result<Vec<Tensor>> {
    if items.is_empty() {
        return Err(Error::invalid("empty measurement batch"));
    }
    if chains_per_y == 0 {
        return Err(Error::invalid("chains_per_y must be >= 1"));
    }
    let mut out = Vec::with_capacity(items.len() * chains_per_y);
    for item in items {
        let item_seed = derive_seed(seed, item.id);
        for chain in 0..chains_per_y {
            let mut rng = Rng::derive(item_seed, chain as u64);
            let x = sample_pmc(model, &item.op, &item.y, cfg, &mut rng, item.x_init.as_ref())
                .map_err(|e| Error::Measurement {
                    id: item.id,
                    source: Box::new(e),
                })?;
            out.push(x);
        }
    }
    Ok(out)
}

pub(crate) fn check_finite(x: &Tensor, step: usize, what: &str) -> Result<()> {
    if !x.all_finite() {
        return Err(Error::Divergence {
            step,
            what: what.to_string(),
        });
    }
    Ok(())
}

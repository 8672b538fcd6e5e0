//! Masked autoregressive flow density estimator and its training pieces.

pub mod adam;
pub mod checkpoint;
pub mod made;
pub mod maf;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use made::{made_masks, MadeMasks, MadeNet};
pub use maf::{stack_rows, FlowArchitecture, MafModel, Standardizer};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Mean negative log-likelihood of a batch and its exact gradient.
pub fn nll_grad(model: &MafModel, theta: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
    let b = theta.nrows();
    if b == 0 {
        return Err(Error::Empty("nll batch".into()));
    }
    let w = vec![-1.0 / b as f64; b];
    let (lp, grad) = model.weighted_log_prob_grad(theta, x, &w)?;
    Ok((-lp.sum() / b as f64, grad))
}

//! Minimal differentiable-network substrate: layered graphs with reverse-mode
//! gradients, Adam, Polyak target updates, finite-difference verification and
//! the binary checkpoint container.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod linalg;
pub mod optim;
mod tensor;

pub use attention::{attention_combine, attention_scores, Arch, AttentionKind, Scorer};
pub use checkpoint::{Checkpoint, Record};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Mode, NetworkGraph};
pub use layers::{Activation, LayerSpec, Param};
pub use optim::{adam_step, OptimizerState};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// `target ← τ·target + (1−τ)·online` for every parameter.
pub fn polyak_update(target: &mut NetworkGraph, online: &NetworkGraph, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("polyak factor {tau} outside [0, 1]")));
    }
    if !target.same_structure(online) {
        return Err(Error::shape("polyak update between structurally different graphs"));
    }
    let src = online.params();
    for (t, o) in target.params_mut().into_iter().zip(src) {
        if tau == 0.0 {
            t.value.data_mut().copy_from_slice(o.value.data());
            continue;
        }
        for (tv, &ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            // written as an increment so equal values stay bit-identical
            *tv += (1.0 - tau) * (ov - *tv);
        }
    }
    Ok(())
}

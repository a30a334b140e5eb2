use super::config::ProjectorKind;
use super::layers::{add_linear, linear};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, SeedStream, Tensor, Var};

pub const PROJECTOR_GROUP: &str = "projector";

pub fn init_projector(store: &mut ParamStore, kind: ProjectorKind, d_in: usize, d_out: usize, seeds: &SeedStream) {
    let mut rng = seeds.rng("projector");
    match kind {
        ProjectorKind::Linear => add_linear(store, &mut rng, "projector.fc1", d_in, d_out),
        ProjectorKind::Mlp => {
            add_linear(store, &mut rng, "projector.fc1", d_in, d_out);
            add_linear(store, &mut rng, "projector.fc2", d_out, d_out);
        }
    }
}

/// Maps `[N × d_in]` features to `[N × d_out]` visual tokens.
pub fn project(g: &mut Graph, store: &ParamStore, kind: ProjectorKind, x: Var) -> Result<Var> {
    let w = &store.by_name("projector.fc1.w").ok_or_else(|| Error::usage("projector weights missing"))?.value;
    if w.rows() != g.value(x).cols() {
        return Err(Error::config(
            "encoder.projector",
            format!("projector expects width {}, got {}", w.rows(), g.value(x).cols()),
        ));
    }
    let h = linear(g, store, "projector.fc1", x)?;
    match kind {
        ProjectorKind::Linear => Ok(h),
        ProjectorKind::Mlp => {
            let a = g.gelu(h);
            linear(g, store, "projector.fc2", a)
        }
    }
}

/// Overwrites a square linear projector with the identity map.
pub fn set_identity_projector(store: &mut ParamStore) -> Result<()> {
    let id = store.expect_id("projector.fc1.w")?;
    let n = store.get(id).value.rows();
    if store.get(id).value.cols() != n {
        return Err(Error::usage("identity projector needs a square weight"));
    }
    store.get_mut(id).value = Tensor::identity(n);
    let b = store.expect_id("projector.fc1.b")?;
    store.get_mut(b).value.fill(0.0);
    Ok(())
}

//! Minimal neural-network kernel: parameter storage, dense and GRU layers
//! recorded on a reverse-mode tape, and finite-difference gradient checks.

mod gradcheck;
mod layers;
mod params;
mod tape;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, Probe};
pub use layers::{dense_forward, gru_step, Activation, DenseLayer, GruCell};
pub use params::{Init, ParamId, ParamInfo, ParamStore};
pub use tape::{sigmoid, softplus, Gradients, NodeId, Tape};

pub(crate) use tape::small_cholesky;

/// A network description that knows how to lay out its parameters.
pub trait Architecture {
    type Layout;

    fn register(&self, store: &mut ParamStore) -> Self::Layout;
}

/// Registers the architecture's parameters and initializes them from `seed`:
/// Glorot-uniform input weights, orthogonal recurrent weights, zero biases.
pub fn init_params<A: Architecture>(arch: &A, seed: u64) -> (ParamStore, A::Layout) {
    let mut store = ParamStore::new();
    let layout = arch.register(&mut store);
    store.initialize(seed);
    (store, layout)
}

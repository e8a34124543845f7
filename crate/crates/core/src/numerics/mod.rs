//! Dense tensors, reverse-mode differentiation, initialization and Adam.

pub mod init;
pub mod linear;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use init::{glorot_init, seeded_rng, SeededRng};
pub use linear::{Linear, LinearVars};
pub use optim::{AdamState, LrSchedule};
pub use tape::{sigmoid, Activation, BinaryOp, Tape, Var};
pub use tensor::Tensor;

/// Collects gradients for `vars`, substituting zeros for parameters the loss
/// did not reach.
pub fn collect_grads(tape: &Tape, vars: &[Var]) -> Vec<Tensor> {
    vars.iter()
        .map(|&v| {
            tape.grad(v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect()
}

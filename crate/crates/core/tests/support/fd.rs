//! Central finite-difference gradient checks.

use stdgi_core::numerics::{collect_grads, Tape, Tensor, Var};
use stdgi_core::params::ParamSet;
use stdgi_core::Result;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const FLOOR: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FdReport {
    pub max_rel: f64,
    pub entries: usize,
}

impl FdReport {
    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            max_rel: self.max_rel.max(other.max_rel),
            entries: self.entries + other.entries,
        }
    }
}

/// Checks `d build(inputs) / d inputs` for every entry of every input.
/// `build` must return a scalar.
pub fn check_inputs(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> FdReport {
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = build(&mut tape, &vars).expect("forward");
        tape.scalar(out)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x)).collect();
    let out = build(&mut tape, &vars).expect("forward");
    tape.backward(out).expect("backward");
    let grads = collect_grads(&tape, &vars);

    let mut report = FdReport::default();
    let mut work = inputs.to_vec();
    for (k, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + STEP;
            let up = eval(&work);
            work[k].data_mut()[j] = orig - STEP;
            let down = eval(&work);
            work[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            report.max_rel = report.max_rel.max(rel_error(g.data()[j], numeric));
            report.entries += 1;
        }
    }
    report
}

/// Checks the gradient of `loss` with respect to every parameter of `params`.
/// `loss` returns the scalar and the parameter vars in `ParamSet` order.
pub fn check_params<P: ParamSet + Clone>(
    params: &P,
    loss: impl Fn(&P, &mut Tape) -> Result<(Var, Vec<Var>)>,
) -> FdReport {
    let eval = |p: &P| -> f64 {
        let mut tape = Tape::new();
        let (l, _) = loss(p, &mut tape).expect("forward");
        tape.scalar(l)
    };
    let mut tape = Tape::new();
    let (l, vars) = loss(params, &mut tape).expect("forward");
    tape.backward(l).expect("backward");
    let grads = collect_grads(&tape, &vars);

    let mut report = FdReport::default();
    let mut work = params.clone();
    for (k, g) in grads.iter().enumerate() {
        assert_eq!(g.len(), work.tensors_mut()[k].len(), "vars out of ParamSet order");
        for j in 0..g.len() {
            let orig = work.tensors_mut()[k].data()[j];
            work.tensors_mut()[k].data_mut()[j] = orig + STEP;
            let up = eval(&work);
            work.tensors_mut()[k].data_mut()[j] = orig - STEP;
            let down = eval(&work);
            work.tensors_mut()[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            report.max_rel = report.max_rel.max(rel_error(g.data()[j], numeric));
            report.entries += 1;
        }
    }
    report
}

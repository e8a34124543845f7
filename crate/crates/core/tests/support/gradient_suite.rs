//! Finite-difference cases for every differentiable op and network.

use rand::Rng;
use stdgi_core::encoder::{EncoderConfig, EncoderParams};
use stdgi_core::forecaster::{batch_loss, LstmParams, Seq2SeqParams};
use stdgi_core::mi::{infomax_loss_var, DiscriminatorParams};
use stdgi_core::numerics::{seeded_rng, SeededRng, Tape, Tensor, Var};
use stdgi_core::params::ParamSet;
use stdgi_core::Result;

use super::fd::{check_inputs, check_params, FdReport};

pub const CASES_PER_OP: u64 = 8;

pub struct SuiteEntry {
    pub name: &'static str,
    pub cases: usize,
    pub report: FdReport,
}

fn rand_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Entries kept at least `gap` away from zero so kinks are never straddled.
fn away_from_zero(rng: &mut SeededRng, shape: &[usize], gap: f64) -> Tensor {
    rand_tensor(rng, shape).map(|v| if v.abs() < gap { v.signum() * gap + v } else { v })
}

fn dims(rng: &mut SeededRng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

/// `Σ out ⊙ w` with a fixed random `w`, so every output entry matters.
fn weighted_sum(tape: &mut Tape, out: Var, rng_seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let w = rand_tensor(&mut seeded_rng(rng_seed), &shape);
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn row_stochastic(rng: &mut SeededRng, n: usize) -> Tensor {
    let mut rows = Vec::with_capacity(n * n);
    for _ in 0..n {
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = r.iter().sum();
        rows.extend(r.into_iter().map(|v| v / s));
    }
    Tensor::new(vec![n, n], rows).unwrap()
}

type OpCase = fn(&mut SeededRng, u64) -> FdReport;

fn op_cases() -> Vec<(&'static str, OpCase)> {
    vec![
        ("matmul", |rng, s| {
            let (m, k, n) = dims(rng);
            let xs = [rand_tensor(rng, &[m, k]), rand_tensor(rng, &[k, n])];
            check_inputs(&xs, |t, v| {
                let o = t.matmul(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("add", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m, n])];
            check_inputs(&xs, |t, v| {
                let o = t.add(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("add_row_broadcast", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[n])];
            check_inputs(&xs, |t, v| {
                let o = t.add(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("sub_scalar_broadcast", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[1])];
            check_inputs(&xs, |t, v| {
                let o = t.sub(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("sub", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m, n])];
            check_inputs(&xs, |t, v| {
                let o = t.sub(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("mul", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m, n])];
            check_inputs(&xs, |t, v| {
                let o = t.mul(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("mul_row_broadcast", |rng, s| {
            let (m, n, _) = dims(rng);
            let xs = [rand_tensor(rng, &[m, n]), rand_tensor(rng, &[1, n])];
            check_inputs(&xs, |t, v| {
                let o = t.mul(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("concat", |rng, s| {
            let (m, a, b) = dims(rng);
            let xs = [rand_tensor(rng, &[m, a]), rand_tensor(rng, &[m, b])];
            check_inputs(&xs, |t, v| {
                let o = t.concat(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("sigmoid", |rng, s| {
            let (m, n, _) = dims(rng);
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let o = t.sigmoid(v[0]);
                weighted_sum(t, o, s)
            })
        }),
        ("tanh", |rng, s| {
            let (m, n, _) = dims(rng);
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let o = t.tanh(v[0]);
                weighted_sum(t, o, s)
            })
        }),
        ("relu", |rng, s| {
            let (m, n, _) = dims(rng);
            check_inputs(&[away_from_zero(rng, &[m, n], 0.01)], |t, v| {
                let o = t.relu(v[0]);
                weighted_sum(t, o, s)
            })
        }),
        ("propagate", |rng, s| {
            let (n, d, blocks) = dims(rng);
            let xs = [rand_tensor(rng, &[n, n]), rand_tensor(rng, &[blocks * n, d])];
            check_inputs(&xs, |t, v| {
                let o = t.propagate(v[0], v[1])?;
                weighted_sum(t, o, s)
            })
        }),
        ("slice_cols", |rng, s| {
            let (m, n, _) = dims(rng);
            let n = n + 1;
            let start = rng.random_range(0..n - 1);
            let end = rng.random_range(start + 1..=n);
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let o = t.slice_cols(v[0], start, end)?;
                weighted_sum(t, o, s)
            })
        }),
        ("sum", |rng, _| {
            let (m, n, _) = dims(rng);
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            })
        }),
        ("mean", |rng, _| {
            let (m, n, _) = dims(rng);
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.mean(sq))
            })
        }),
        ("affine", |rng, s| {
            let (m, n, _) = dims(rng);
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            check_inputs(&[rand_tensor(rng, &[m, n])], |t, v| {
                let o = t.affine(v[0], a, b);
                weighted_sum(t, o, s)
            })
        }),
        ("ln", |rng, s| {
            let (m, n, _) = dims(rng);
            let x = rand_tensor(rng, &[m, n]).map(|v| v.abs() + 0.5);
            check_inputs(&[x], |t, v| {
                let o = t.ln(v[0]);
                weighted_sum(t, o, s)
            })
        }),
        ("clamp", |rng, s| {
            let (m, n, _) = dims(rng);
            // Bounds at ±0.7; keep entries clear of them.
            let x = rand_tensor(rng, &[m, n]).map(|v| if (v.abs() - 0.7).abs() < 0.01 { v * 1.1 } else { v });
            check_inputs(&[x], |t, v| {
                let o = t.clamp(v[0], -0.7, 0.7);
                weighted_sum(t, o, s)
            })
        }),
        ("abs", |rng, s| {
            let (m, n, _) = dims(rng);
            check_inputs(&[away_from_zero(rng, &[m, n], 0.01)], |t, v| {
                let o = t.abs(v[0]);
                weighted_sum(t, o, s)
            })
        }),
    ]
}

fn encoder_case(seed: u64) -> FdReport {
    let mut rng = seeded_rng(seed);
    let cfg = EncoderConfig {
        in_features: 2,
        hidden: 4,
        embedding: 3,
    };
    let mut params = EncoderParams::new(cfg, &mut rng);
    // Nonzero biases so every ReLU sees a generic pre-activation.
    for (_, t) in params.named_tensors_mut() {
        if t.shape().len() == 1 {
            *t = rand_tensor(&mut rng, t.shape());
        }
    }
    let n = 3;
    let a_hat = row_stochastic(&mut rng, n);
    let x = rand_tensor(&mut rng, &[2 * n, 2]);
    check_params(&params, |p, tape| {
        let vars = p.bind(tape);
        let a = tape.constant(a_hat.clone());
        let xv = tape.constant(x.clone());
        let h = vars.forward(tape, xv, a)?;
        Ok((weighted_sum(tape, h, seed + 1)?, vars.vars()))
    })
}

fn discriminator_case(seed: u64) -> FdReport {
    let mut rng = seeded_rng(seed);
    let mut params = DiscriminatorParams::new(1, 3, 2, 6, &mut rng);
    params.hidden.bias = rand_tensor(&mut rng, &[6]);
    let h = rand_tensor(&mut rng, &[4, 3]);
    let pos = rand_tensor(&mut rng, &[4, 2]);
    let neg = rand_tensor(&mut rng, &[4, 2]);
    check_params(&params, |p, tape| {
        let vars = p.bind(tape);
        let hv = tape.constant(h.clone());
        let (pv, nv) = (tape.constant(pos.clone()), tape.constant(neg.clone()));
        let sp = vars.forward(tape, hv, pv)?;
        let sn = vars.forward(tape, hv, nv)?;
        Ok((infomax_loss_var(tape, sp, sn), vars.vars()))
    })
}

fn lstm_cell_case(seed: u64) -> FdReport {
    let mut rng = seeded_rng(seed);
    let mut params = LstmParams::new(3, 4, &mut rng);
    params.bias = rand_tensor(&mut rng, &[16]);
    let x = rand_tensor(&mut rng, &[2, 3]);
    let h = rand_tensor(&mut rng, &[2, 4]).map(|v| v * 0.5);
    let c = rand_tensor(&mut rng, &[2, 4]);
    check_params(&params, |p, tape| {
        let vars = p.bind(tape);
        let (xv, hv, cv) = (tape.constant(x.clone()), tape.constant(h.clone()), tape.constant(c.clone()));
        let (h2, c2) = vars.step(tape, xv, hv, cv)?;
        let lh = weighted_sum(tape, h2, seed + 1)?;
        let lc = weighted_sum(tape, c2, seed + 2)?;
        Ok((tape.add(lh, lc)?, vars.vars().to_vec()))
    })
}

fn seq2seq_case(seed: u64) -> FdReport {
    let mut rng = seeded_rng(seed);
    let params = Seq2SeqParams::new(2, 4, &mut rng);
    let (b, steps, horizon) = (2, 3, 3);
    let inputs: Vec<f64> = (0..steps * b * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let last: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Targets far from anything the model can emit keep |pred - true| smooth.
    let targets: Vec<f64> = (0..b * horizon)
        .map(|_| rng.random_range(3.0..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    check_params(&params, |p, tape| {
        let (mut t, loss, vars) = batch_loss(p, &inputs, &last, &targets, steps, horizon)?;
        std::mem::swap(tape, &mut t);
        Ok((loss, vars))
    })
}

/// Runs every case; each entry reports the worst relative error seen.
pub fn run_suite() -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for (i, (name, case)) in op_cases().into_iter().enumerate() {
        let mut report = FdReport::default();
        for c in 0..CASES_PER_OP {
            let seed = 1000 * i as u64 + c;
            report = report.merge(case(&mut seeded_rng(seed), seed + 500));
        }
        out.push(SuiteEntry {
            name,
            cases: CASES_PER_OP as usize,
            report,
        });
    }
    let networks: [(&'static str, fn(u64) -> FdReport); 4] = [
        ("encoder", encoder_case),
        ("discriminator_infomax", discriminator_case),
        ("lstm_cell", lstm_cell_case),
        ("seq2seq_mae", seq2seq_case),
    ];
    for (name, case) in networks {
        let mut report = FdReport::default();
        for c in 0..4 {
            report = report.merge(case(77 + c));
        }
        out.push(SuiteEntry { name, cases: 4, report });
    }
    out
}

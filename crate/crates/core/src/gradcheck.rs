//! Central finite-difference checks of every analytic gradient.
//!
//! Each entry is compared as `|a − n| / max(|a|, |n|, 1e-3)`: a relative
//! error for ordinary magnitudes that degrades to an absolute error of
//! `1e-7` per `1e-4` of tolerance near zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batch::Batch;
use crate::encoder::{BoundParams, DualHelixParams, EncoderConfig};
use crate::graph::{random_molecular_graph, Vocab};
use crate::losses::{self, LossConfig};
use crate::objective::batch_objective;
use crate::tensor::{Primitive, Tape, Tensor, Var};
use crate::{Error, Result};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const ABSOLUTE_FLOOR: f64 = 1e-7;

pub fn entry_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic
        .abs()
        .max(numeric.abs())
        .max(ABSOLUTE_FLOOR / TOLERANCE);
    (analytic - numeric).abs() / scale
}

/// Max entry error between the tape gradient of `f` and central differences,
/// over every entry of every input. `fault` skews one backward rule (used as
/// a negative control).
pub fn check_gradient<F>(inputs: &[Tensor], f: F, fault: Option<Primitive>) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = fault.map_or_else(Tape::new, Tape::with_fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic = vars
        .iter()
        .map(|&v| grads.wrt(v))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        let v = tape.value(loss).item();
        Ok(v)
    };

    let mut probe = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].len() {
            let x = inputs[k].data()[i];
            probe[k].data_mut()[i] = x + STEP;
            let plus = eval(&probe)?;
            probe[k].data_mut()[i] = x - STEP;
            let minus = eval(&probe)?;
            probe[k].data_mut()[i] = x;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(entry_error(analytic[k].data()[i], numeric));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub component: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub components: Vec<ComponentReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> impl Iterator<Item = &ComponentReport> {
        self.components.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Encoder depth and width for the end-to-end objective check.
    pub depth: usize,
    pub hidden: usize,
    #[doc(hidden)]
    pub fault: Option<Primitive>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            depth: 3,
            hidden: 8,
            fault: None,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .expect("shape")
}

/// Entries bounded away from zero so relu kinks stay outside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// `Σ out ∘ weights`, a scalar whose gradient exercises every output entry.
fn weighted_sum(tape: &Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    Ok(tape.sum_all(prod)?)
}

fn primitive_case(p: Primitive, rng: &mut ChaCha8Rng, fault: Option<Primitive>) -> Result<f64> {
    let unary =
        |x: Tensor, rng: &mut ChaCha8Rng, op: fn(&Tape, Var) -> Result<Var>| -> Result<f64> {
            let out_shape = {
                let tape = Tape::new();
                let v = tape.constant(x.clone());
                let o = op(&tape, v)?;
                let s = tape.value(o).shape().to_vec();
                s
            };
            let w = uniform(rng, out_shape[0], out_shape[1], -1.0, 1.0);
            check_gradient(&[x], |t, v| weighted_sum(t, op(t, v[0])?, &w), fault)
        };
    let binary = |rng: &mut ChaCha8Rng,
                  a: Tensor,
                  b: Tensor,
                  op: fn(&Tape, Var, Var) -> Result<Var>|
     -> Result<f64> {
        let out_shape = {
            let tape = Tape::new();
            let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
            let o = op(&tape, va, vb)?;
            let s = tape.value(o).shape().to_vec();
            s
        };
        let w = uniform(rng, out_shape[0], out_shape[1], -1.0, 1.0);
        check_gradient(
            &[a, b],
            |t, v| weighted_sum(t, op(t, v[0], v[1])?, &w),
            fault,
        )
    };
    match p {
        Primitive::MatMul => {
            let (a, b) = (uniform(rng, 3, 4, -1.0, 1.0), uniform(rng, 4, 2, -1.0, 1.0));
            binary(rng, a, b, |t, a, b| Ok(t.matmul(a, b)?))
        }
        Primitive::Add => {
            let (a, b) = (uniform(rng, 3, 4, -1.0, 1.0), uniform(rng, 3, 4, -1.0, 1.0));
            let same = binary(rng, a.clone(), b, |t, a, b| Ok(t.add(a, b)?))?;
            let bias = uniform(rng, 1, 4, -1.0, 1.0);
            let broadcast = binary(rng, a, bias, |t, a, b| Ok(t.add(a, b)?))?;
            Ok(same.max(broadcast))
        }
        Primitive::Scale => unary(uniform(rng, 3, 4, -1.0, 1.0), rng, |t, a| {
            Ok(t.scale(a, -1.7)?)
        }),
        Primitive::Mul => {
            let (a, b) = (uniform(rng, 3, 4, -1.0, 1.0), uniform(rng, 3, 4, -1.0, 1.0));
            binary(rng, a, b, |t, a, b| Ok(t.mul(a, b)?))
        }
        Primitive::Div => {
            let (a, b) = (uniform(rng, 3, 4, -1.0, 1.0), uniform(rng, 3, 4, 0.5, 1.5));
            binary(rng, a, b, |t, a, b| Ok(t.div(a, b)?))
        }
        Primitive::Concat => {
            let (a, b) = (uniform(rng, 3, 2, -1.0, 1.0), uniform(rng, 3, 3, -1.0, 1.0));
            binary(rng, a, b, |t, a, b| Ok(t.concat(a, b)?))
        }
        Primitive::Gather => unary(uniform(rng, 4, 3, -1.0, 1.0), rng, |t, a| {
            Ok(t.gather(a, &[2, 0, 2, 3, 1])?)
        }),
        Primitive::ScatterAdd => unary(uniform(rng, 5, 3, -1.0, 1.0), rng, |t, a| {
            Ok(t.scatter_add(a, &[1, 0, 1, 3, 3], 4)?)
        }),
        Primitive::Relu => unary(away_from_zero(rng, 3, 4), rng, |t, a| Ok(t.relu(a)?)),
        Primitive::RowSum => unary(uniform(rng, 3, 4, -1.0, 1.0), rng, |t, a| Ok(t.row_sum(a)?)),
        Primitive::RowMean => unary(
            uniform(rng, 3, 4, -1.0, 1.0),
            rng,
            |t, a| Ok(t.row_mean(a)?),
        ),
        Primitive::Normalize => unary(
            away_from_zero(rng, 3, 4),
            rng,
            |t, a| Ok(t.l2_normalize(a)?),
        ),
        Primitive::Exp => unary(uniform(rng, 3, 4, -1.0, 1.0), rng, |t, a| Ok(t.exp(a)?)),
        Primitive::Log => unary(uniform(rng, 3, 4, 0.5, 2.0), rng, |t, a| Ok(t.log(a)?)),
        Primitive::Transpose => unary(uniform(rng, 3, 4, -1.0, 1.0), rng, |t, a| {
            Ok(t.transpose(a)?)
        }),
    }
}

fn mean_or_zero(tape: &Tape, s: losses::AnchorSum) -> Result<Var> {
    match s.mean(tape)? {
        Some(v) => Ok(v),
        None => Err(Error::NonFinite { what: "empty loss" }),
    }
}

/// Two random graphs with at least two edges each.
pub fn gradcheck_batch(seed: u64) -> Result<Batch> {
    let vocab = Vocab::default();
    let graphs: Vec<_> = (0..)
        .map(|k| random_molecular_graph(seed.wrapping_mul(31).wrapping_add(k), (4, 7), 4, &vocab))
        .filter(|g| g.num_edges() >= 2)
        .take(2)
        .collect();
    Batch::from_graphs(&graphs)
}

/// Max entry error of the full objective's gradient with respect to every
/// encoder, head and edge-MLP parameter.
pub fn check_objective(
    params: &DualHelixParams,
    batch: &Batch,
    cfg: &LossConfig,
    fault: Option<Primitive>,
) -> Result<f64> {
    check_gradient(
        params.tensors(),
        |tape, vars| {
            let bound = BoundParams::from_vars(params, vars.to_vec());
            Ok(batch_objective(tape, &bound, batch, cfg)?.total)
        },
        fault,
    )
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut components = Vec::new();
    let mut push = |name: &str, err: f64| {
        components.push(ComponentReport {
            component: name.to_string(),
            max_rel_error: err,
            passed: err < TOLERANCE,
        })
    };
    for (k, p) in Primitive::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k as u64 + 1);
        push(p.name(), primitive_case(p, &mut rng, opts.fault)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(100);
    let cfg = LossConfig::default();
    let (a, b) = (
        uniform(&mut rng, 4, 5, -1.0, 1.0),
        uniform(&mut rng, 3, 5, -1.0, 1.0),
    );
    let w = uniform(&mut rng, 4, 3, -1.0, 1.0);
    push(
        "cosine_sim",
        check_gradient(
            &[a, b],
            |t, v| weighted_sum(t, t.cosine_sim(v[0], v[1])?, &w),
            opts.fault,
        )?,
    );

    let (z1, z2) = (
        uniform(&mut rng, 4, 6, -1.0, 1.0),
        uniform(&mut rng, 4, 6, -1.0, 1.0),
    );
    push(
        "nt_xent",
        check_gradient(
            &[z1, z2],
            |t, v| mean_or_zero(t, losses::nt_xent(t, v[0], v[1], &cfg)?),
            opts.fault,
        )?,
    );

    // three graphs: 3 edges, 2 edges, 1 edge (skipped by the intra loss)
    let edge_graph = [0, 0, 0, 1, 1, 2];
    let (h, l) = (
        uniform(&mut rng, 6, 5, -1.0, 1.0),
        uniform(&mut rng, 6, 5, -1.0, 1.0),
    );
    push(
        "intra_local",
        check_gradient(
            &[h.clone(), l.clone()],
            |t, v| mean_or_zero(t, losses::intra_local(t, v[0], v[1], &edge_graph, &cfg)?),
            opts.fault,
        )?,
    );
    push(
        "inter_local",
        check_gradient(
            &[h, l],
            |t, v| mean_or_zero(t, losses::inter_local(t, v[0], v[1], &edge_graph, &cfg)?),
            opts.fault,
        )?,
    );

    let enc = EncoderConfig {
        depth: opts.depth,
        hidden: opts.hidden,
        ..EncoderConfig::desk()
    };
    let params = DualHelixParams::init(enc, opts.seed)?;
    let batch = gradcheck_batch(opts.seed)?;
    push(
        "objective",
        check_objective(&params, &batch, &cfg, opts.fault)?,
    );

    Ok(GradcheckReport {
        seed: opts.seed,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metric() {
        assert_eq!(entry_error(1.0, 1.0), 0.0);
        assert!((entry_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-12);
        // near zero the floor makes 1e-7 absolute error equal the tolerance
        assert!((entry_error(0.0, 1e-7) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn every_primitive_passes() {
        for (k, p) in Primitive::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(3 + k as u64);
            let err = primitive_case(p, &mut rng, None).unwrap();
            assert!(err < TOLERANCE, "{}: {err}", p.name());
        }
    }

    #[test]
    fn fault_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = primitive_case(Primitive::Log, &mut rng, Some(Primitive::Log)).unwrap();
        assert!(err > TOLERANCE);
    }
}

//! Batched jet propagation and its reverse sweep.
//!
//! A chunk of B points is carried as a `(4B × width)` matrix whose row blocks
//! hold the value, ∂t, ∂²t and ∂ζ components. An affine layer maps all four
//! blocks with the same weights (bias on the value block only), so each layer
//! is one matrix product. The activation acts jet-wise:
//!
//! ```text
//! a = σ(p),  a_t = σ'(p)·p_t,  a_tt = σ''(p)·p_t² + σ'(p)·p_tt,  a_ζ = σ'(p)·p_ζ
//! ```
//!
//! The reverse sweep differentiates exactly this computation, which is what
//! makes gradients of residual losses (losses that contain ∂U/∂t, ∂²U/∂t²,
//! ∂U/∂ζ) exact.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use super::{Activation, Jet, LayerLayout, NetworkState};
use crate::error::{Error, Result};
use crate::exec::{self, ExecPolicy, Reduction};

/// Points per chunk. Fixed so that the reduction order does not depend on
/// the thread count.
pub const CHUNK: usize = 64;
/// Upper bound on partial gradient buffers alive at once.
const MAX_GROUPS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub zeta: f64,
}

impl Point {
    pub fn new(t: f64, zeta: f64) -> Self {
        Point { t, zeta }
    }
}

/// A pointwise loss built from the network's output jets.
pub trait PointLoss: Sync {
    /// Loss at `point`. When `adjoint` is given, also writes ∂loss/∂(each jet
    /// component of each output) into it (same length as `outputs`).
    fn eval(&self, point: Point, outputs: &[Jet], adjoint: Option<&mut [Jet]>) -> f64;
}

/// Contributes `weight · Σ_points loss(point)` to the objective.
#[derive(Clone, Copy)]
pub struct LossTerm<'a> {
    pub points: &'a [Point],
    pub loss: &'a dyn PointLoss,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub exec: ExecPolicy,
    pub reduction: Reduction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub total: f64,
    /// Unweighted value of every term, in input order; `total` is
    /// Σ weight·term.
    pub terms: Vec<f64>,
    /// Empty for value-only evaluation.
    pub gradient: Vec<f64>,
}

struct Tape {
    x0: Array2<f64>,
    /// Input of every block, then the head input.
    h: Vec<Array2<f64>>,
    p1: Vec<Array2<f64>>,
    a1: Vec<Array2<f64>>,
    p2: Vec<Array2<f64>>,
}

fn weights<'a>(params: &'a [f64], l: &LayerLayout) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((l.fan_out, l.fan_in), &params[l.weight_range()]).expect("layout matches spec")
}

fn affine(x: &Array2<f64>, l: &LayerLayout, params: &[f64], b: usize) -> Array2<f64> {
    let mut out = x.dot(&weights(params, l).t());
    let bias = &params[l.bias_range()];
    for mut row in out.rows_mut().into_iter().take(b) {
        row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
    }
    out
}

fn activate(p: &Array2<f64>, b: usize, comps: usize, act: Activation) -> Array2<f64> {
    let w = p.ncols();
    let src = p.as_slice().expect("standard layout");
    let mut out = Array2::zeros(p.raw_dim());
    let dst = out.as_slice_mut().expect("standard layout");
    for i in 0..b {
        for j in 0..w {
            let iv = i * w + j;
            let [s0, s1, s2, _] = act.eval(src[iv]);
            dst[iv] = s0;
            if comps == 4 {
                let (it, itt, iz) = ((b + i) * w + j, (2 * b + i) * w + j, (3 * b + i) * w + j);
                let dt = src[it];
                dst[it] = s1 * dt;
                dst[itt] = s2 * dt * dt + s1 * src[itt];
                dst[iz] = s1 * src[iz];
            }
        }
    }
    out
}

fn activate_backward(p: &Array2<f64>, abar: &Array2<f64>, b: usize, act: Activation) -> Array2<f64> {
    let w = p.ncols();
    let src = p.as_slice().expect("standard layout");
    let g = abar.as_slice().expect("standard layout");
    let mut out = Array2::zeros(p.raw_dim());
    let dst = out.as_slice_mut().expect("standard layout");
    for i in 0..b {
        for j in 0..w {
            let (iv, it, itt, iz) = (i * w + j, (b + i) * w + j, (2 * b + i) * w + j, (3 * b + i) * w + j);
            let [_, s1, s2, s3] = act.eval(src[iv]);
            let (dt, dtt, dz) = (src[it], src[itt], src[iz]);
            let (gv, gt, gtt, gz) = (g[iv], g[it], g[itt], g[iz]);
            dst[iv] = gv * s1 + gt * s2 * dt + gz * s2 * dz + gtt * (s3 * dt * dt + s2 * dtt);
            dst[it] = gt * s1 + 2.0 * gtt * s2 * dt;
            dst[itt] = gtt * s1;
            dst[iz] = gz * s1;
        }
    }
    out
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { layer })
    }
}

fn input_block(points: &[Point], comps: usize) -> Array2<f64> {
    let b = points.len();
    let mut x = Array2::zeros((comps * b, 2));
    for (i, p) in points.iter().enumerate() {
        x[[i, 0]] = p.t;
        x[[i, 1]] = p.zeta;
        if comps == 4 {
            x[[b + i, 0]] = 1.0;
            x[[3 * b + i, 1]] = 1.0;
        }
    }
    x
}

/// Forward pass over one chunk. `comps` is 4 for full jets, 1 for values only.
fn forward_chunk(state: &NetworkState, points: &[Point], comps: usize, keep: bool) -> Result<(Array2<f64>, Option<Tape>)> {
    let spec = state.spec;
    let layers = spec.layers();
    let params = &state.params;
    let b = points.len();
    let x0 = input_block(points, comps);
    let mut h = affine(&x0, &layers[0], params, b);
    check_finite(&h, 0)?;
    let mut tape = keep.then(|| Tape {
        x0: x0.clone(),
        h: Vec::with_capacity(spec.n_blocks + 1),
        p1: Vec::with_capacity(spec.n_blocks),
        a1: Vec::with_capacity(spec.n_blocks),
        p2: Vec::with_capacity(spec.n_blocks),
    });
    for k in 0..spec.n_blocks {
        let (l1, l2) = (&layers[1 + 2 * k], &layers[2 + 2 * k]);
        let p1 = affine(&h, l1, params, b);
        let a1 = activate(&p1, b, comps, spec.activation);
        check_finite(&a1, 1 + 2 * k)?;
        let p2 = affine(&a1, l2, params, b);
        let a2 = activate(&p2, b, comps, spec.activation);
        check_finite(&a2, 2 + 2 * k)?;
        let next = &h + &a2;
        if let Some(t) = tape.as_mut() {
            t.h.push(h);
            t.p1.push(p1);
            t.a1.push(a1);
            t.p2.push(p2);
        }
        h = next;
    }
    let y = affine(&h, layers.last().expect("head layer"), params, b);
    check_finite(&y, layers.len() - 1)?;
    if let Some(t) = tape.as_mut() {
        t.h.push(h);
    }
    Ok((y, tape))
}

fn accumulate(grad: &mut [f64], l: &LayerLayout, g: &Array2<f64>, x: &Array2<f64>, b: usize) {
    {
        let mut dw = ArrayViewMut2::from_shape((l.fan_out, l.fan_in), &mut grad[l.weight_range()])
            .expect("layout matches spec");
        general_mat_mul(1.0, &g.t(), x, 1.0, &mut dw);
    }
    let db = &mut grad[l.bias_range()];
    for row in g.rows().into_iter().take(b) {
        db.iter_mut().zip(row.iter()).for_each(|(d, r)| *d += r);
    }
}

fn backward_chunk(state: &NetworkState, tape: &Tape, ybar: &Array2<f64>, b: usize, grad: &mut [f64]) {
    let spec = state.spec;
    let layers = spec.layers();
    let params = &state.params;
    let head = layers.last().expect("head layer");
    accumulate(grad, head, ybar, &tape.h[spec.n_blocks], b);
    let mut hbar = ybar.dot(&weights(params, head));
    for k in (0..spec.n_blocks).rev() {
        let (l1, l2) = (&layers[1 + 2 * k], &layers[2 + 2 * k]);
        let p2bar = activate_backward(&tape.p2[k], &hbar, b, spec.activation);
        accumulate(grad, l2, &p2bar, &tape.a1[k], b);
        let a1bar = p2bar.dot(&weights(params, l2));
        let p1bar = activate_backward(&tape.p1[k], &a1bar, b, spec.activation);
        accumulate(grad, l1, &p1bar, &tape.h[k], b);
        general_mat_mul(1.0, &p1bar, &weights(params, l1), 1.0, &mut hbar);
    }
    accumulate(grad, &layers[0], &hbar, &tape.x0, b);
}

fn jets_of(y: &Array2<f64>, i: usize, b: usize, out: &mut [Jet]) {
    for (o, jet) in out.iter_mut().enumerate() {
        *jet = Jet {
            value: y[[i, o]],
            d_t: y[[b + i, o]],
            d_tt: y[[2 * b + i, o]],
            d_zeta: y[[3 * b + i, o]],
        };
    }
}

/// Output jets of every network output at one point.
pub fn forward_jet(state: &NetworkState, t: f64, zeta: f64) -> Result<Vec<Jet>> {
    if !(t.is_finite() && zeta.is_finite()) {
        return Err(Error::domain("point", "inputs must be finite"));
    }
    let (y, _) = forward_chunk(state, &[Point::new(t, zeta)], 4, false)?;
    let mut out = vec![Jet::default(); state.spec.n_outputs];
    jets_of(&y, 0, 1, &mut out);
    Ok(out)
}

/// Output jets at many points, `[point][output]`.
pub fn forward_jets(state: &NetworkState, points: &[Point], exec: ExecPolicy) -> Result<Vec<Vec<Jet>>> {
    let chunks: Vec<&[Point]> = points.chunks(CHUNK).collect();
    let parts = exec::map_collect(exec, &chunks, |c| -> Result<Vec<Vec<Jet>>> {
        let (y, _) = forward_chunk(state, c, 4, false)?;
        Ok((0..c.len())
            .map(|i| {
                let mut v = vec![Jet::default(); state.spec.n_outputs];
                jets_of(&y, i, c.len(), &mut v);
                v
            })
            .collect())
    });
    let mut out = Vec::with_capacity(points.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Output values only, `[point][output]`.
pub fn predict(state: &NetworkState, points: &[Point], exec: ExecPolicy) -> Result<Vec<Vec<f64>>> {
    let chunks: Vec<&[Point]> = points.chunks(CHUNK).collect();
    let parts = exec::map_collect(exec, &chunks, |c| -> Result<Vec<Vec<f64>>> {
        let (y, _) = forward_chunk(state, c, 1, false)?;
        Ok(y.rows().into_iter().map(|r| r.to_vec()).collect())
    });
    let mut out = Vec::with_capacity(points.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

struct Task {
    term: usize,
    start: usize,
    end: usize,
}

fn tasks(terms: &[LossTerm<'_>]) -> Vec<Task> {
    let mut v = Vec::new();
    for (k, term) in terms.iter().enumerate() {
        let mut s = 0;
        while s < term.points.len() {
            let e = (s + CHUNK).min(term.points.len());
            v.push(Task { term: k, start: s, end: e });
            s = e;
        }
    }
    v
}

struct Partial {
    terms: Vec<f64>,
    grad: Vec<f64>,
    error: Option<Error>,
}

impl Partial {
    fn zero(n_terms: usize, n_params: usize) -> Self {
        Partial {
            terms: vec![0.0; n_terms],
            grad: vec![0.0; n_params],
            error: None,
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        if self.error.is_none() {
            self.error = other.error;
        }
        self.terms.iter_mut().zip(&other.terms).for_each(|(a, b)| *a += b);
        if !other.grad.is_empty() {
            self.grad.iter_mut().zip(&other.grad).for_each(|(a, b)| *a += b);
        }
        self
    }
}

fn run_task(state: &NetworkState, terms: &[LossTerm<'_>], task: &Task, want_grad: bool, acc: &mut Partial) -> Result<()> {
    let term = &terms[task.term];
    let points = &term.points[task.start..task.end];
    let b = points.len();
    let n_out = state.spec.n_outputs;
    let (y, tape) = forward_chunk(state, points, 4, want_grad)?;
    let mut jets = vec![Jet::default(); n_out];
    let mut adj = vec![Jet::default(); n_out];
    let mut ybar = want_grad.then(|| Array2::<f64>::zeros((4 * b, n_out)));
    let mut sum = 0.0;
    for (i, p) in points.iter().enumerate() {
        jets_of(&y, i, b, &mut jets);
        match ybar.as_mut() {
            Some(yb) => {
                adj.iter_mut().for_each(|a| *a = Jet::default());
                sum += term.loss.eval(*p, &jets, Some(&mut adj));
                for (o, a) in adj.iter().enumerate() {
                    yb[[i, o]] = term.weight * a.value;
                    yb[[b + i, o]] = term.weight * a.d_t;
                    yb[[2 * b + i, o]] = term.weight * a.d_tt;
                    yb[[3 * b + i, o]] = term.weight * a.d_zeta;
                }
            }
            None => sum += term.loss.eval(*p, &jets, None),
        }
    }
    acc.terms[task.term] += sum;
    if let (Some(tape), Some(yb)) = (tape, ybar) {
        backward_chunk(state, &tape, &yb, b, &mut acc.grad);
    }
    Ok(())
}

fn evaluate(state: &NetworkState, terms: &[LossTerm<'_>], opts: EvalOptions, want_grad: bool) -> Result<LossEval> {
    state.validate()?;
    let tasks = tasks(terms);
    let n_params = if want_grad { state.spec.n_params() } else { 0 };
    let per_group = tasks.len().div_ceil(MAX_GROUPS).max(1);
    let n_groups = tasks.len().div_ceil(per_group);
    let result = exec::map_reduce(
        opts.exec,
        opts.reduction,
        n_groups,
        |g| {
            let mut acc = Partial::zero(terms.len(), n_params);
            for task in &tasks[g * per_group..((g + 1) * per_group).min(tasks.len())] {
                if let Err(e) = run_task(state, terms, task, want_grad, &mut acc) {
                    acc.error = Some(e);
                    break;
                }
            }
            acc
        },
        || Partial::zero(terms.len(), n_params),
        Partial::merge,
    );
    if let Some(e) = result.error {
        return Err(e);
    }
    if want_grad {
        for (block, l) in state.spec.layers().iter().enumerate() {
            if !result.grad[l.weights..l.bias + l.fan_out].iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGradient { block });
            }
        }
    }
    Ok(LossEval {
        total: terms.iter().zip(&result.terms).map(|(t, v)| t.weight * v).sum(),
        terms: result.terms,
        gradient: result.grad,
    })
}

/// Objective value and its exact gradient with respect to every parameter.
pub fn loss_gradient(state: &NetworkState, terms: &[LossTerm<'_>], opts: EvalOptions) -> Result<LossEval> {
    evaluate(state, terms, opts, true)
}

/// Objective value without the reverse sweep.
pub fn loss_value(state: &NetworkState, terms: &[LossTerm<'_>], opts: EvalOptions) -> Result<LossEval> {
    evaluate(state, terms, opts, false)
}

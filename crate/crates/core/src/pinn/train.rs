//! Training loop: mini-batch Adam on w_pde·mean(pde) + w_ic·mean(ic) with a
//! reduce-on-plateau rate schedule.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, Plateau};
use super::residual::{IcLoss, PdeLoss};
use super::sampling::{sample_collocation, CollocationSet};
use crate::error::{Error, Result};
use crate::exec::{ExecPolicy, Reduction};
use crate::net::{loss_gradient, loss_value, EvalOptions, LossTerm, NetworkState, Point};
use crate::transforms::NormalizedSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Interior points per iteration; 0 means the full set.
    pub batch_size: usize,
    /// Boundary points per iteration; 0 means the full set.
    pub boundary_batch_size: usize,
    pub max_iterations: usize,
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub w_pde: f64,
    pub w_ic: f64,
    pub seed: u64,
    pub corridor_fraction: f64,
    /// Exponential smoothing of the batch loss seen by the scheduler; 0 feeds
    /// the raw batch loss.
    pub plateau_smoothing: f64,
    /// Full-set loss every this many iterations; 0 disables.
    pub eval_every: usize,
    pub exec: ExecPolicy,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_interior: 240_000,
            n_boundary: 2000,
            batch_size: 8192,
            boundary_batch_size: 0,
            max_iterations: 10_000,
            lr: 1e-3,
            factor: 0.9,
            patience: 30,
            min_lr: 1e-7,
            w_pde: 1.0,
            w_ic: 1.0,
            seed: 0,
            corridor_fraction: 0.9,
            plateau_smoothing: 0.9,
            eval_every: 0,
            exec: ExecPolicy::Parallel,
            reduction: Reduction::Deterministic,
        }
    }
}

impl TrainConfig {
    /// Budget for a desktop CPU: 20 000 interior points, 10 000 iterations,
    /// small mini-batches. Pair with a 3 × 64 network.
    pub fn desk() -> Self {
        TrainConfig {
            n_interior: 20_000,
            n_boundary: 2000,
            batch_size: 128,
            boundary_batch_size: 64,
            max_iterations: 10_000,
            eval_every: 500,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(name, "must be finite and > 0"))
            }
        };
        if self.n_interior == 0 {
            return Err(Error::domain("train.n_interior", "must be > 0"));
        }
        if self.n_boundary == 0 {
            return Err(Error::domain("train.n_boundary", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("train.max_iterations", "must be > 0"));
        }
        positive("train.lr", self.lr)?;
        positive("train.min_lr", self.min_lr)?;
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::domain("train.factor", "must lie in (0, 1)"));
        }
        if !(self.w_pde >= 0.0 && self.w_ic >= 0.0 && self.w_pde.is_finite() && self.w_ic.is_finite()) {
            return Err(Error::domain("train.w_pde/w_ic", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.corridor_fraction) {
            return Err(Error::domain("train.corridor_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.plateau_smoothing) {
            return Err(Error::domain("train.plateau_smoothing", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn options(&self) -> EvalOptions {
        EvalOptions {
            exec: self.exec,
            reduction: self.reduction,
        }
    }
}

/// One logged iteration; `total = w_pde·pde + w_ic·ic`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub pde: f64,
    pub ic: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StopReason {
    MaxIterations,
    /// Rate at its floor with no improvement for 10·patience iterations.
    LrFloor,
    Aborted(Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mini-batch loss of every iteration.
    pub history: Vec<LossRecord>,
    /// Full-set loss every `eval_every` iterations.
    pub eval_history: Vec<LossRecord>,
    /// Full-set loss of the returned state; absent after an abort.
    pub final_loss: Option<LossRecord>,
    pub wall_time_s: f64,
    pub stop: StopReason,
}

impl TrainReport {
    pub fn aborted(&self) -> bool {
        matches!(self.stop, StopReason::Aborted(_))
    }

    /// Relative improvement of the full-set loss over the last `fraction` of
    /// the run: (L_start − L_end)/L_start.
    pub fn tail_improvement(&self, fraction: f64) -> Option<f64> {
        let h = &self.eval_history;
        let last = h.last()?;
        let cut = last.iteration as f64 * (1.0 - fraction);
        let start = h.iter().find(|r| r.iteration as f64 >= cut)?;
        Some((start.total - last.total) / start.total)
    }
}

/// Cycles through a set in per-epoch shuffled order.
struct Batcher {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let size = if size == 0 || size > n { n } else { size };
        let mut b = Batcher {
            order: (0..n).collect(),
            cursor: 0,
            size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if size < n {
            b.order.shuffle(&mut b.rng);
        }
        b
    }

    fn next(&mut self, points: &[Point], out: &mut Vec<Point>) {
        out.clear();
        if self.size == points.len() {
            out.extend_from_slice(points);
            return;
        }
        if self.cursor + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        out.extend(self.order[self.cursor..self.cursor + self.size].iter().map(|&i| points[i]));
        self.cursor += self.size;
    }
}

fn terms<'a>(
    sys: &'a NormalizedSystem,
    interior: &'a [Point],
    boundary: &'a [Point],
    pde: &'a PdeLoss<'a>,
    ic: &'a IcLoss<'a>,
    cfg: &TrainConfig,
) -> [LossTerm<'a>; 2] {
    let _ = sys;
    [
        LossTerm {
            points: interior,
            loss: pde,
            weight: cfg.w_pde,
        },
        LossTerm {
            points: boundary,
            loss: ic,
            weight: cfg.w_ic,
        },
    ]
}

/// Full-set objective of `state` on `set`.
pub fn full_loss(state: &NetworkState, sys: &NormalizedSystem, set: &CollocationSet, cfg: &TrainConfig) -> Result<(f64, f64, f64)> {
    let pde = PdeLoss {
        sys,
        scale: 1.0 / set.interior.len() as f64,
    };
    let ic = IcLoss {
        sys,
        scale: 1.0 / set.boundary.len() as f64,
    };
    let t = terms(sys, &set.interior, &set.boundary, &pde, &ic, cfg);
    let e = loss_value(state, &t, cfg.options())?;
    Ok((e.total, e.terms[0], e.terms[1]))
}

/// Train `state` on `sys`. Configuration errors are returned as `Err`;
/// numerical failures stop the loop and are reported in
/// [`TrainReport::stop`] together with the history so far. `on_record` sees
/// every iteration as it is logged.
pub fn train(
    mut state: NetworkState,
    sys: &NormalizedSystem,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&LossRecord),
) -> Result<(NetworkState, TrainReport)> {
    cfg.validate()?;
    state.validate()?;
    if state.spec.n_modes() != sys.n_modes() {
        return Err(Error::domain(
            "network.n_outputs",
            format!("network has {} modes, system has {}", state.spec.n_modes(), sys.n_modes()),
        ));
    }
    if !sys.max_abs_coefficient().is_finite() {
        return Err(Error::domain("coefficients", "must be finite"));
    }
    let start = Instant::now();
    let set = sample_collocation(cfg.n_interior, cfg.n_boundary, cfg.corridor_fraction, cfg.seed)?;
    let mut interior_batches = Batcher::new(set.interior.len(), cfg.batch_size, cfg.seed.wrapping_add(1));
    let mut boundary_batches = Batcher::new(set.boundary.len(), cfg.boundary_batch_size, cfg.seed.wrapping_add(2));
    let pde = PdeLoss {
        sys,
        scale: 1.0 / interior_batches.size as f64,
    };
    let ic = IcLoss {
        sys,
        scale: 1.0 / boundary_batches.size as f64,
    };
    let mut adam = Adam::new(state.params.len());
    let mut sched = Plateau::new(cfg.lr, cfg.factor, cfg.patience, cfg.min_lr);
    let mut smoothed = None::<f64>;
    let (mut bi, mut bb) = (Vec::new(), Vec::new());
    let mut history = Vec::with_capacity(cfg.max_iterations);
    let mut eval_history = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for iteration in 0..cfg.max_iterations {
        interior_batches.next(&set.interior, &mut bi);
        boundary_batches.next(&set.boundary, &mut bb);
        let t = terms(sys, &bi, &bb, &pde, &ic, cfg);
        let eval = match loss_gradient(&state, &t, cfg.options()) {
            Ok(e) if e.total.is_finite() => e,
            Ok(_) => {
                stop = StopReason::Aborted(Error::NonFiniteLoss { iteration });
                break;
            }
            Err(e) => {
                stop = StopReason::Aborted(e);
                break;
            }
        };
        let lr = sched.lr;
        let record = LossRecord {
            iteration,
            total: eval.total,
            pde: eval.terms[0],
            ic: eval.terms[1],
            lr,
        };
        on_record(&record);
        history.push(record);

        let is_eval = cfg.eval_every > 0 && (iteration % cfg.eval_every == 0);
        if is_eval {
            match full_loss(&state, sys, &set, cfg) {
                Ok((total, pde, ic)) => eval_history.push(LossRecord { iteration, total, pde, ic, lr }),
                Err(e) => {
                    stop = StopReason::Aborted(e);
                    break;
                }
            }
        }

        adam.step(&mut state.params, &eval.gradient, lr);
        let observed = match smoothed {
            Some(s) => cfg.plateau_smoothing * s + (1.0 - cfg.plateau_smoothing) * eval.total,
            None => eval.total,
        };
        smoothed = Some(observed);
        sched.observe(observed);
        if sched.at_floor() && sched.stale() >= 10 * cfg.patience {
            stop = StopReason::LrFloor;
            break;
        }
    }

    let final_loss = if matches!(stop, StopReason::Aborted(_)) {
        None
    } else {
        match full_loss(&state, sys, &set, cfg) {
            Ok((total, pde, ic)) => {
                let r = LossRecord {
                    iteration: history.len(),
                    total,
                    pde,
                    ic,
                    lr: sched.lr,
                };
                if cfg.eval_every > 0 {
                    eval_history.push(r);
                }
                Some(r)
            }
            Err(e) => {
                stop = StopReason::Aborted(e);
                None
            }
        }
    };

    Ok((
        state,
        TrainReport {
            history,
            eval_history,
            final_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
            stop,
        },
    ))
}

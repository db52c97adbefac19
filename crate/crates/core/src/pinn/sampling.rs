//! Collocation points on the normalized domain t ∈ [−1/2, 1/2], ζ ∈ [0, 1].
//!
//! A fixed fraction of the points lies in the corridor |t| ≤ 1/4 around the
//! pulse; the rest is uniform on the two outer strips. ζ is uniform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Point;

pub const CORRIDOR_HALF: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    /// Shuffled, so any prefix is an unbiased sample.
    pub interior: Vec<Point>,
    /// Points (t, 0) for the initial condition, drawn by the same rule.
    pub boundary: Vec<Point>,
    pub corridor_fraction: f64,
    pub seed: u64,
}

impl CollocationSet {
    pub fn corridor_count(&self) -> usize {
        self.interior.iter().filter(|p| p.t.abs() <= CORRIDOR_HALF).count()
    }
}

fn draw_t(rng: &mut ChaCha8Rng, n: usize, corridor_fraction: f64) -> Vec<f64> {
    let n_in = (n as f64 * corridor_fraction).round() as usize;
    let mut ts: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-CORRIDOR_HALF..=CORRIDOR_HALF)).collect();
    let outer = 0.5 - CORRIDOR_HALF;
    ts.extend((n_in..n).map(|_| {
        // Uniform on [−1/2, −1/4) ∪ (1/4, 1/2].
        let u: f64 = rng.gen_range(0.0..2.0 * outer);
        let t = if u < outer { -0.5 + u } else { CORRIDOR_HALF + (2.0 * outer - u) };
        if t.abs() <= CORRIDOR_HALF {
            t.signum() * (CORRIDOR_HALF + f64::EPSILON)
        } else {
            t
        }
    }));
    ts
}

/// Deterministic per seed. `corridor_fraction` 0 gives plain uniform sampling
/// in t.
pub fn sample_collocation(n_interior: usize, n_boundary: usize, corridor_fraction: f64, seed: u64) -> Result<CollocationSet> {
    if n_interior == 0 || n_boundary == 0 {
        return Err(Error::domain("collocation", "point counts must be > 0"));
    }
    if !(0.0..=1.0).contains(&corridor_fraction) {
        return Err(Error::domain("corridor_fraction", "must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ts, tb) = if corridor_fraction == 0.0 {
        let plain = |rng: &mut ChaCha8Rng, n| (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect::<Vec<f64>>();
        (plain(&mut rng, n_interior), plain(&mut rng, n_boundary))
    } else {
        (draw_t(&mut rng, n_interior, corridor_fraction), draw_t(&mut rng, n_boundary, corridor_fraction))
    };
    let mut interior: Vec<Point> = ts.into_iter().map(|t| Point::new(t, rng.gen_range(0.0..=1.0))).collect();
    let mut boundary: Vec<Point> = tb.into_iter().map(|t| Point::new(t, 0.0)).collect();
    interior.shuffle(&mut rng);
    boundary.shuffle(&mut rng);
    Ok(CollocationSet {
        interior,
        boundary,
        corridor_fraction,
        seed,
    })
}

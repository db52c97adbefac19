//! Residual network with exact input derivatives.
//!
//! Inputs are (t, ζ); outputs are (Re U_p, Im U_p) for every mode. Each
//! hidden quantity travels as a second-order jet (value, ∂t, ∂²t, ∂ζ), so one
//! forward pass yields every derivative the residual needs. Parameter
//! gradients of a loss built from those jets come from a reverse sweep over
//! the same jet computation (see [`engine`]).

pub mod checkpoint;
pub mod engine;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{forward_jet, loss_gradient, loss_value, EvalOptions, LossEval, LossTerm, Point, PointLoss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// x − tanh x.
    #[default]
    Tanhshrink,
    /// Used for polynomial test networks.
    Identity,
}

impl Activation {
    /// σ and its first three derivatives at `x`.
    #[inline]
    pub fn eval(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Tanhshrink => {
                let th = x.tanh();
                let sech2 = 1.0 - th * th;
                [x - th, th * th, 2.0 * th * sech2, 2.0 * sech2 * (1.0 - 3.0 * th * th)]
            }
            Activation::Identity => [x, 1.0, 0.0, 0.0],
        }
    }
}

/// x − tanh(x).
pub fn tanhshrink(x: f64) -> f64 {
    Activation::Tanhshrink.eval(x)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_blocks: usize,
    pub width: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            n_blocks: 6,
            width: 150,
            n_inputs: 2,
            n_outputs: 6,
            activation: Activation::Tanhshrink,
        }
    }
}

impl NetworkSpec {
    pub fn new(n_blocks: usize, width: usize, n_modes: usize) -> Self {
        NetworkSpec {
            n_blocks,
            width,
            n_inputs: 2,
            n_outputs: 2 * n_modes,
            activation: Activation::Tanhshrink,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 1 {
            return Err(Error::domain("network.n_blocks", "must be >= 1"));
        }
        if self.width < 1 {
            return Err(Error::domain("network.width", "must be >= 1"));
        }
        if self.n_inputs != 2 {
            return Err(Error::domain("network.n_inputs", "the network takes (t, zeta)"));
        }
        if self.n_outputs == 0 || !self.n_outputs.is_multiple_of(2) {
            return Err(Error::domain("network.n_outputs", "must be a positive even number (Re, Im per mode)"));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_outputs / 2
    }

    /// (fan_in, fan_out) of every affine layer: embedding, two per block, head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.n_inputs, self.width)];
        v.extend(std::iter::repeat_n((self.width, self.width), 2 * self.n_blocks));
        v.push((self.width, self.n_outputs));
        v
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = LayerLayout {
                    fan_in,
                    fan_out,
                    weights: offset,
                    bias: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                l
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Location of one affine layer in the flat parameter vector. Weights are
/// row-major `fan_out × fan_in`, followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

impl LayerLayout {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weights..self.bias
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias..self.bias + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl NetworkState {
    pub fn zeros(spec: NetworkSpec) -> Self {
        NetworkState {
            spec,
            params: vec![0.0; spec.n_params()],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.params.len() != self.spec.n_params() {
            return Err(Error::LengthMismatch {
                expected: self.spec.n_params(),
                got: self.params.len(),
            });
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::domain("network.params", format!("entry {i} is not finite")));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, U(±√(6/(fan_in + fan_out))), zero biases.
pub fn xavier_init(spec: NetworkSpec, seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; spec.n_params()];
    for layer in spec.layers() {
        let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        for w in &mut params[layer.weight_range()] {
            *w = rng.gen_range(-bound..bound);
        }
    }
    NetworkState { spec, params, seed }
}

/// One network output with its input derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet {
    pub value: f64,
    pub d_t: f64,
    pub d_tt: f64,
    pub d_zeta: f64,
}

impl Jet {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d_t.is_finite() && self.d_tt.is_finite() && self.d_zeta.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanhshrink_examples() {
        assert_eq!(tanhshrink(0.0), 0.0);
        assert!((tanhshrink(40.0) - 39.0).abs() < 1e-12);
        assert!((tanhshrink(-40.0) + 39.0).abs() < 1e-12);
        assert_eq!(Activation::Tanhshrink.eval(0.0)[1], 0.0);
    }

    #[test]
    fn tanhshrink_derivatives_match_finite_differences() {
        let h = 1e-5;
        for x in [-2.0, -0.3, 0.0, 0.4, 1.7] {
            let d = Activation::Tanhshrink.eval(x);
            let f = |x| Activation::Tanhshrink.eval(x);
            for k in 0..3 {
                let fd = (f(x + h)[k] - f(x - h)[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-8, "x={x} order {}", k + 1);
            }
        }
    }

    #[test]
    fn default_spec_is_six_blocks_of_150() {
        let s = NetworkSpec::default();
        assert_eq!((s.n_blocks, s.width, s.n_inputs, s.n_outputs), (6, 150, 2, 6));
        assert_eq!(s.activation, Activation::Tanhshrink);
        s.validate().unwrap();
        assert_eq!(s.layer_shapes().len(), 14);
        assert_eq!(s.n_params(), 2 * 150 + 150 + 12 * (150 * 150 + 150) + 150 * 6 + 6);
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec { n_blocks: 0, ..Default::default() }.validate().is_err());
        assert!(NetworkSpec { width: 0, ..Default::default() }.validate().is_err());
        assert!(NetworkSpec { n_outputs: 5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn xavier_is_deterministic_with_zero_biases() {
        let spec = NetworkSpec::new(2, 16, 3);
        let a = xavier_init(spec, 7);
        assert_eq!(a, xavier_init(spec, 7));
        assert_ne!(a.params, xavier_init(spec, 8).params);
        for l in spec.layers() {
            assert!(a.params[l.bias_range()].iter().all(|b| *b == 0.0));
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            assert!(a.params[l.weight_range()].iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn xavier_variance_matches_uniform_law() {
        let spec = NetworkSpec::new(1, 150, 3);
        let s = xavier_init(spec, 11);
        let l = spec.layers()[1];
        let w = &s.params[l.weight_range()];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let expect = 2.0 / (l.fan_in + l.fan_out) as f64;
        assert!(((var - expect) / expect).abs() < 0.05, "{var} vs {expect}");
    }
}

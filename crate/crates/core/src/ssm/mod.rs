//! A minimal selective state-space recurrence and the bidirectional block
//! built on it.
//!
//! The state is shared across channels (`state_dim` entries). With
//! `Δ_t = softplus(delta_proj · x_t)` (or `1` when not selective):
//!
//! ```text
//! Ā_t = exp(Δ_t · a_diag)          (elementwise)
//! h_t = Ā_t ⊙ h_{t-1} + Δ_t · (b_proj · x_t),   h_{-1} = 0
//! y_t = c_proj · h_t
//! ```

mod block;
mod footprint;

pub use block::{bfs_block_forward, bfs_block_parts, BlockParams, BlockParts};
pub use footprint::{
    analytic_jacobian, fd_jacobian, footprint, sensitivity_map, Aggregation, FootprintConfig,
    FootprintMap, Jacobian, Method, Probe, ProbeEvaluator,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SerialSequence;

/// Step size used when the model is not selective.
pub const FIXED_DELTA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub channels: usize,
    pub state_dim: usize,
    /// Continuous-time diagonal state matrix; every entry must be negative.
    pub a_diag: Vec<f64>,
    /// `state_dim x channels`, row-major.
    pub b_proj: Vec<f64>,
    /// `channels x state_dim`, row-major.
    pub c_proj: Vec<f64>,
    pub delta_proj: Vec<f64>,
    pub selective: bool,
    pub seed: u64,
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

impl SsmParams {
    /// Gaussian initialization with scale `1/sqrt(fan_in)`. Each `a_diag`
    /// entry is `-|g|` for a standard normal `g`, kept at least `1e-4` away
    /// from zero.
    pub fn random(channels: usize, state_dim: usize, selective: bool, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if channels == 0 || state_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "channels/state_dim",
                reason: "must be at least 1".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_diag = gaussian(&mut rng, state_dim, 1.0)
            .into_iter()
            .map(|g| -g.abs().max(1e-4))
            .collect();
        let c_scale = 1.0 / (channels as f64).sqrt();
        let s_scale = 1.0 / (state_dim as f64).sqrt();
        let p = Self {
            channels,
            state_dim,
            a_diag,
            b_proj: gaussian(&mut rng, state_dim * channels, c_scale),
            c_proj: gaussian(&mut rng, channels * state_dim, s_scale),
            delta_proj: gaussian(&mut rng, channels, c_scale),
            selective,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.channels == 0 || self.state_dim == 0 {
            return bad("channels/state_dim", "must be at least 1".into());
        }
        if self.a_diag.len() != self.state_dim {
            return bad("a_diag", format!("expected {} entries", self.state_dim));
        }
        if let Some(a) = self.a_diag.iter().find(|a| !(a.is_finite() && **a < 0.0)) {
            return bad("a_diag", format!("entries must be negative and finite, got {a}"));
        }
        let cs = self.channels * self.state_dim;
        if self.b_proj.len() != cs || self.c_proj.len() != cs {
            return bad("b_proj/c_proj", format!("expected {cs} entries each"));
        }
        if self.delta_proj.len() != self.channels {
            return bad("delta_proj", format!("expected {} entries", self.channels));
        }
        if !self
            .b_proj
            .iter()
            .chain(&self.c_proj)
            .chain(&self.delta_proj)
            .all(|v| v.is_finite())
        {
            return bad("projections", "must be finite".into());
        }
        Ok(())
    }

    #[inline]
    pub fn delta(&self, x: &[f64]) -> f64 {
        if self.selective {
            let z: f64 = self.delta_proj.iter().zip(x).map(|(w, v)| w * v).sum();
            softplus(z)
        } else {
            FIXED_DELTA
        }
    }

    /// Per-step decay `Ā_t` and input drive `B̄_t x_t` for input `x`.
    #[inline]
    pub(crate) fn step_terms(&self, x: &[f64], decay: &mut [f64], drive: &mut [f64]) {
        let delta = self.delta(x);
        let c = self.channels;
        for n in 0..self.state_dim {
            decay[n] = (delta * self.a_diag[n]).exp();
            let bx: f64 = self.b_proj[n * c..(n + 1) * c]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum();
            drive[n] = delta * bx;
        }
    }

    #[inline]
    pub(crate) fn readout(&self, h: &[f64], y: &mut [f64]) {
        let s = self.state_dim;
        for (c, out) in y.iter_mut().enumerate() {
            *out = self.c_proj[c * s..(c + 1) * s]
                .iter()
                .zip(h)
                .map(|(w, v)| w * v)
                .sum();
        }
    }
}

#[inline]
pub(crate) fn advance(h: &mut [f64], decay: &[f64], drive: &[f64]) {
    for ((h, a), b) in h.iter_mut().zip(decay).zip(drive) {
        *h = a * *h + b;
    }
}

pub fn ssm_forward(seq: &SerialSequence, p: &SsmParams) -> Result<SerialSequence> {
    p.validate()?;
    if seq.channels() != p.channels {
        return Err(Error::DimensionMismatch(format!(
            "sequence has {} channels, model expects {}",
            seq.channels(),
            p.channels
        )));
    }
    if let Some(i) = seq.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let s = p.state_dim;
    let c = p.channels;
    let mut h = vec![0.0; s];
    let mut decay = vec![0.0; s];
    let mut drive = vec![0.0; s];
    let mut out = vec![0.0; seq.len() * c];
    for t in 0..seq.len() {
        p.step_terms(seq.at(t), &mut decay, &mut drive);
        advance(&mut h, &decay, &drive);
        p.readout(&h, &mut out[t * c..(t + 1) * c]);
    }
    SerialSequence::new(seq.len(), c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scalar(a: f64, b: f64, c: f64) -> SsmParams {
        SsmParams {
            channels: 1,
            state_dim: 1,
            a_diag: vec![a],
            b_proj: vec![b],
            c_proj: vec![c],
            delta_proj: vec![0.0],
            selective: false,
            seed: 0,
        }
    }

    #[test]
    fn impulse_response_is_geometric() {
        let p = scalar(0.5f64.ln(), 1.0, 1.0);
        let x = SerialSequence::new(4, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let y = ssm_forward(&x, &p).unwrap();
        // Hand recurrence: h0 = 1, h_t = 0.5 h_{t-1}.
        let mut h = 0.0;
        for (t, &xt) in [1.0, 0.0, 0.0, 0.0].iter().enumerate() {
            h = 0.5f64.ln().exp() * h + FIXED_DELTA * xt;
            assert!((y.data()[t] - h).abs() < 1e-15);
            assert!((y.data()[t] - 0.5f64.powi(t as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_coupling_gives_zero_output() {
        let mut p = SsmParams::random(3, 5, true, 9).unwrap();
        p.b_proj.iter_mut().for_each(|b| *b = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = SerialSequence::new(20, 3, gaussian(&mut rng, 60, 1.0)).unwrap();
        assert!(ssm_forward(&x, &p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fast_decay_is_memoryless() {
        let mut p = SsmParams::random(2, 3, false, 4).unwrap();
        p.a_diag = vec![-1e4; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = SerialSequence::new(6, 2, gaussian(&mut rng, 12, 1.0)).unwrap();
        let y = ssm_forward(&x, &p).unwrap();
        for t in 0..6 {
            let mut decay = [0.0; 3];
            let mut drive = [0.0; 3];
            p.step_terms(x.at(t), &mut decay, &mut drive);
            let mut expect = [0.0; 2];
            p.readout(&drive, &mut expect);
            for c in 0..2 {
                assert!((y.at(t)[c] - expect[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SsmParams::random(2, 3, true, 0).unwrap();
        let x = SerialSequence::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(ssm_forward(&x, &p), Err(Error::DimensionMismatch(_))));
        let mut bad = p.clone();
        bad.a_diag[1] = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.b_proj.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bounded_over_many_random_steps() {
        // 1000 models x 1000 steps = 10^6 recurrence steps.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000u64 {
            let selective = trial % 2 == 0;
            let p = SsmParams::random(2, 4, selective, trial).unwrap();
            let x = SerialSequence::new(1000, 2, gaussian(&mut rng, 2000, 3.0)).unwrap();
            let mut decay = [0.0; 4];
            let mut drive = [0.0; 4];
            p.step_terms(x.at(0), &mut decay, &mut drive);
            assert!(decay.iter().all(|&a| a.abs() <= 1.0));
            let y = ssm_forward(&x, &p).unwrap();
            assert!(y.data().iter().all(|v| v.is_finite()));
        }
    }
}

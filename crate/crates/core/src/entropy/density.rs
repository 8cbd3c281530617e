//! Per-channel learned CDF built from monotone elementwise stages.
//!
//! Each channel maps a scalar through four affine stages of widths
//! `1 → 3 → 3 → 3 → 1`. Stage matrices are `softplus` of raw parameters so
//! they stay positive, the first three stages are followed by
//! `z + tanh(a) ⊙ tanh(z)` (slope bounded below by `1 - |tanh a| > 0`), and
//! the final scalar goes through a sigmoid. The composition is strictly
//! increasing in its input, so it is a valid CDF.

use crate::neural::{Grads, Param, Parameterized};

const MATS: usize = 24;
const BIASES: usize = 10;
const GATES: usize = 9;
const MAT_OFF: [usize; 4] = [0, 3, 12, 21];
const BIAS_OFF: [usize; 4] = [0, 3, 6, 9];
const DIMS: [(usize, usize); 4] = [(1, 3), (3, 3), (3, 3), (3, 1)];

/// Lower bound applied to every channel likelihood.
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / (1u64 << 24) as f64;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    y.exp_m1().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedDensity {
    channels: usize,
    matrices: Param,
    biases: Param,
    gates: Param,
}

/// Forward intermediates of one channel evaluation.
struct Trace {
    /// Stage inputs `u[k]` (width of stage k input).
    inputs: [[f64; 3]; 4],
    /// Pre-gate values of stages 0..3.
    pre: [[f64; 3]; 3],
    logit: f64,
}

/// Gradients from [`FactorizedDensity::likelihood_backward`].
#[derive(Debug, Clone)]
pub struct DensityBackward {
    pub grads: Grads,
    pub input_grad: Vec<f64>,
}

impl FactorizedDensity {
    /// Density whose every channel is exactly a unit-scale logistic CDF.
    /// Stage biases are zero-mean but distinct per hidden unit so the units
    /// do not receive identical updates.
    pub fn new(channels: usize, prefix: &str) -> Self {
        let one = inv_softplus(1.0);
        let third = inv_softplus(1.0 / 3.0);
        let mut m = Vec::with_capacity(channels * MATS);
        let mut b = Vec::with_capacity(channels * BIASES);
        for _ in 0..channels {
            m.extend_from_slice(&[one; 3]);
            m.extend_from_slice(&[third; 21]);
            b.extend_from_slice(&[-0.5, 0.0, 0.5, -0.25, 0.0, 0.25, -0.125, 0.0, 0.125, 0.0]);
        }
        FactorizedDensity {
            channels,
            matrices: Param::new(format!("{prefix}.matrices"), vec![channels, MATS], m),
            biases: Param::new(format!("{prefix}.biases"), vec![channels, BIASES], b),
            gates: Param::zeros(format!("{prefix}.gates"), vec![channels, GATES]),
        }
    }

    /// Rebuilds a density from its three parameter tensors.
    pub fn from_params(matrices: Param, biases: Param, gates: Param) -> Option<Self> {
        let channels = matrices.shape.first().copied()?;
        let ok = matrices.shape == [channels, MATS]
            && biases.shape == [channels, BIASES]
            && gates.shape == [channels, GATES];
        ok.then_some(FactorizedDensity { channels, matrices, biases, gates })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn trace(&self, c: usize, x: f64) -> Trace {
        let m = &self.matrices.value[c * MATS..(c + 1) * MATS];
        let b = &self.biases.value[c * BIASES..(c + 1) * BIASES];
        let a = &self.gates.value[c * GATES..(c + 1) * GATES];
        let mut t = Trace { inputs: [[0.0; 3]; 4], pre: [[0.0; 3]; 3], logit: 0.0 };
        t.inputs[0][0] = x;
        for k in 0..4 {
            let (n_in, n_out) = DIMS[k];
            let mut z = [0.0; 3];
            for (i, zi) in z.iter_mut().enumerate().take(n_out) {
                let mut acc = b[BIAS_OFF[k] + i];
                for j in 0..n_in {
                    acc += softplus(m[MAT_OFF[k] + i * n_in + j]) * t.inputs[k][j];
                }
                *zi = acc;
            }
            if k < 3 {
                t.pre[k] = z;
                for i in 0..3 {
                    t.inputs[k + 1][i] = z[i] + a[3 * k + i].tanh() * z[i].tanh();
                }
            } else {
                t.logit = z[0];
            }
        }
        t
    }

    /// Accumulates gradients of `g · logit` into the per-channel parameter
    /// slices and returns `g · dlogit/dx`.
    fn trace_backward(&self, c: usize, t: &Trace, g: f64, gm: &mut [f64], gb: &mut [f64], ga: &mut [f64]) -> f64 {
        let m = &self.matrices.value[c * MATS..(c + 1) * MATS];
        let a = &self.gates.value[c * GATES..(c + 1) * GATES];
        let mut gz = [g, 0.0, 0.0];
        for k in (0..4).rev() {
            let (n_in, n_out) = DIMS[k];
            if k < 3 {
                // gz currently holds the gradient w.r.t. the stage output u[k+1]
                let mut gpre = [0.0; 3];
                for i in 0..3 {
                    let ta = a[3 * k + i].tanh();
                    let tz = t.pre[k][i].tanh();
                    gpre[i] = gz[i] * (1.0 + ta * (1.0 - tz * tz));
                    ga[3 * k + i] += gz[i] * (1.0 - ta * ta) * tz;
                }
                gz = gpre;
            }
            let mut gu = [0.0; 3];
            for i in 0..n_out {
                gb[BIAS_OFF[k] + i] += gz[i];
                for j in 0..n_in {
                    let raw = m[MAT_OFF[k] + i * n_in + j];
                    gm[MAT_OFF[k] + i * n_in + j] += gz[i] * t.inputs[k][j] * sigmoid(raw);
                    gu[j] += gz[i] * softplus(raw);
                }
            }
            gz = gu;
        }
        gz[0]
    }

    /// Pre-sigmoid CDF value of channel `c` at `x`.
    pub fn logit(&self, c: usize, x: f64) -> f64 {
        self.trace(c, x).logit
    }

    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        sigmoid(self.logit(c, x))
    }

    /// Unclamped mass of `[x - 0.5, x + 0.5]` for channel `c`, computed on
    /// the side of the distribution where the sigmoid is most accurate.
    pub fn interval_mass(&self, c: usize, x: f64) -> f64 {
        let lu = self.logit(c, x + 0.5);
        let ll = self.logit(c, x - 0.5);
        let s = if lu + ll > 0.0 { -1.0 } else { 1.0 };
        (sigmoid(s * lu) - sigmoid(s * ll)).abs()
    }

    /// Per-channel likelihoods `c_i(v_i + 0.5) - c_i(v_i - 0.5)`, floored at
    /// [`LIKELIHOOD_FLOOR`].
    pub fn likelihood(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.channels, "latent width != density channels");
        v.iter().enumerate().map(|(c, &x)| self.interval_mass(c, x).max(LIKELIHOOD_FLOOR)).collect()
    }

    /// Total code length `Σ -log2 p_i` in bits.
    pub fn rate_bits(&self, v: &[f64]) -> f64 {
        self.likelihood(v).iter().map(|p| -p.log2()).sum()
    }

    /// Reverse pass of [`likelihood`](Self::likelihood) given `∂L/∂p_i`.
    /// Where the floor is active the gradient passes through only if it
    /// would raise the likelihood.
    pub fn likelihood_backward(&self, v: &[f64], upstream: &[f64]) -> DensityBackward {
        assert_eq!(v.len(), self.channels);
        assert_eq!(upstream.len(), self.channels);
        let mut gm = vec![0.0; self.matrices.len()];
        let mut gb = vec![0.0; self.biases.len()];
        let mut ga = vec![0.0; self.gates.len()];
        let mut gx = vec![0.0; self.channels];
        for c in 0..self.channels {
            let tu = self.trace(c, v[c] + 0.5);
            let tl = self.trace(c, v[c] - 0.5);
            let s = if tu.logit + tl.logit > 0.0 { -1.0 } else { 1.0 };
            let su = sigmoid(s * tu.logit);
            let sl = sigmoid(s * tl.logit);
            let diff = su - sl;
            let p = diff.abs();
            let mut g = upstream[c];
            if p < LIKELIHOOD_FLOOR && g > 0.0 {
                g = 0.0;
            }
            if g == 0.0 {
                continue;
            }
            let sign = if diff >= 0.0 { 1.0 } else { -1.0 };
            let d_lu = g * sign * s * su * (1.0 - su);
            let d_ll = -g * sign * s * sl * (1.0 - sl);
            let (m, b, a) = (
                &mut gm[c * MATS..(c + 1) * MATS],
                &mut gb[c * BIASES..(c + 1) * BIASES],
                &mut ga[c * GATES..(c + 1) * GATES],
            );
            gx[c] = self.trace_backward(c, &tu, d_lu, m, b, a) + self.trace_backward(c, &tl, d_ll, m, b, a);
        }
        DensityBackward { grads: Grads(vec![gm, gb, ga]), input_grad: gx }
    }

    /// Rate in bits together with its gradients scaled by `weight`.
    pub fn rate_bits_backward(&self, v: &[f64], weight: f64) -> (f64, DensityBackward) {
        let p = self.likelihood(v);
        let bits = p.iter().map(|p| -p.log2()).sum();
        let upstream: Vec<f64> = p.iter().map(|&p| -weight / (p * std::f64::consts::LN_2)).collect();
        (bits, self.likelihood_backward(v, &upstream))
    }
}

impl Parameterized for FactorizedDensity {
    fn params(&self) -> Vec<&Param> {
        vec![&self.matrices, &self.biases, &self.gates]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.matrices, &mut self.biases, &mut self.gates]
    }
}

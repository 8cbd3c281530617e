use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, Mode, Network, NeuralError, Parameterized, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Entries probed per parameter tensor (all entries when smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-3, samples_per_param: 12, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameter name and index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        self.checked += 1;
        if err > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = err;
            self.worst = Some((name.to_string(), idx));
        }
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_relative_error > self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
    }
}

fn probe_indices(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= n {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, n).into_vec();
        v.sort_unstable();
        v
    }
}

/// Compares `analytic` against central differences of `loss` on sampled
/// entries of every parameter tensor of `model`. Parameters are restored
/// exactly after each probe.
pub fn check_params<M, F>(model: &mut M, analytic: &Grads, mut loss: F, opts: GradCheckOptions) -> GradCheckReport
where
    M: Parameterized,
    F: FnMut(&M) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport { max_relative_error: 0.0, checked: 0, worst: None };
    let n_params = model.params().len();
    assert_eq!(n_params, analytic.0.len(), "gradient list does not match parameters");
    for pi in 0..n_params {
        let (len, name) = {
            let p = model.params()[pi];
            (p.len(), p.name.clone())
        };
        for idx in probe_indices(len, opts.samples_per_param, &mut rng) {
            let orig = model.params()[pi].value[idx];
            model.params_mut()[pi].value[idx] = orig + opts.step;
            let up = loss(model);
            model.params_mut()[pi].value[idx] = orig - opts.step;
            let down = loss(model);
            model.params_mut()[pi].value[idx] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            report.record(&name, idx, analytic.0[pi][idx], numeric);
        }
    }
    report
}

/// Finite-difference check of [`Network::backward`] for a scalar loss of the
/// network output. `loss_fn` returns the loss and its gradient with respect
/// to the output. Train mode is used with a fixed dropout seed so every
/// evaluation sees the same masks. Input entries are probed as well.
pub fn gradient_check<L>(
    net: &mut Network,
    input: &Tensor,
    context: Option<&[f64]>,
    loss_fn: L,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, NeuralError>
where
    L: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |net: &Network, x: &Tensor| -> Result<f64, NeuralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
        let (out, _) = net.forward(x, context, Mode::Train, &mut rng)?;
        Ok(loss_fn(out.data()).0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let (out, tape) = net.forward(input, context, Mode::Train, &mut rng)?;
    let (_, gy) = loss_fn(out.data());
    let back = net.backward(&tape, &gy)?;

    let mut failure = None;
    let mut report = check_params(
        net,
        &back.grads,
        |n| match eval(n, input) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }

    let mut input_report = GradCheckReport { max_relative_error: 0.0, checked: 0, worst: None };
    let mut irng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut x = input.clone();
    for idx in probe_indices(x.len(), opts.samples_per_param * 2, &mut irng) {
        let orig = x.data()[idx];
        x.data_mut()[idx] = orig + opts.step;
        let up = eval(net, &x)?;
        x.data_mut()[idx] = orig - opts.step;
        let down = eval(net, &x)?;
        x.data_mut()[idx] = orig;
        input_report.record("input", idx, back.input_grad[idx], (up - down) / (2.0 * opts.step));
    }
    report.merge(input_report);
    Ok(report)
}

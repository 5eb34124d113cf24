//! Central finite-difference verification of [`backward`](super::backward).
//!
//! Runs in `f64`. The scalar loss is a fixed random projection of the network
//! output, so the output gradient is that projection vector. A step whose
//! `+h` or `-h` pass changes any ReLU sign or pool winner is resampled, since
//! the network is not differentiable across those kinks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, init_params, Architecture, LayerSpec, NetworkParams, Result, Shape3, Tensor3};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
const MAGNITUDE_FLOOR: f64 = 1e-6;
const MAX_RESAMPLES: usize = 50;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates sampled per tensor of the full network. The small
    /// single-layer cases check every coordinate.
    pub samples_per_tensor: usize,
    /// Scales every analytic gradient by 1.01 before comparing; exists so the
    /// failure path can be exercised.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { seed: 0, step: DEFAULT_STEP, tolerance: DEFAULT_TOLERANCE, samples_per_tensor: 8, corrupt: false }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub case: String,
    pub tensor: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance && e.checked > 0)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Single-layer cases plus the canonical 80x80x4 network.
pub fn standard_cases(num_actions: usize) -> Result<Vec<(String, Architecture)>> {
    let conv = |kernel, stride, out_channels| LayerSpec::Conv { kernel, stride, out_channels, same_padding: true };
    Ok(vec![
        ("conv".into(), Architecture::new(Shape3::new(9, 7, 3), &[conv(3, 2, 4), LayerSpec::Flatten])?),
        (
            "relu".into(),
            Architecture::new(Shape3::new(6, 6, 2), &[conv(3, 1, 3), LayerSpec::Relu, LayerSpec::Flatten])?,
        ),
        (
            "maxpool".into(),
            Architecture::new(
                Shape3::new(7, 6, 2),
                &[
                    conv(1, 1, 3),
                    LayerSpec::MaxPool { kernel: 2, stride: 1, same_padding: true },
                    LayerSpec::MaxPool { kernel: 3, stride: 2, same_padding: true },
                    LayerSpec::Flatten,
                ],
            )?,
        ),
        (
            "dense".into(),
            Architecture::new(Shape3::new(2, 3, 2), &[LayerSpec::Flatten, LayerSpec::Dense { out: 5 }])?,
        ),
        ("q_network".into(), Architecture::q_network(80, 4, num_actions)?),
    ])
}

fn loss(arch: &Architecture, params: &NetworkParams<f64>, input: &Tensor3<f64>, proj: &[f64]) -> Result<(f64, Vec<u64>)> {
    let fwd = forward(arch, params, input, true)?;
    let l = fwd.output.iter().zip(proj).map(|(a, b)| a * b).sum();
    Ok((l, fwd.activation_pattern().expect("cached")))
}

/// Checks one architecture with random parameters, input, and projection.
pub fn check_architecture(case: &str, arch: &Architecture, opts: &GradCheckOptions) -> Result<Vec<TensorCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6164_6368_6563);
    let mut params = init_params::<f64>(arch, rng.random());
    // non-zero biases so every bias path is exercised
    for t in params.tensors_mut() {
        if t.name.ends_with(".bias") {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let shape = arch.input_shape();
    let input = Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let proj: Vec<f64> = (0..arch.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let fwd = forward(arch, &params, &input, true)?;
    let base_pattern = fwd.activation_pattern().expect("cached");
    let mut grads = backward(arch, &params, &fwd, &proj)?;
    if opts.corrupt {
        grads.scale(1.01);
    }

    let h = opts.step;
    let mut out = Vec::new();
    for ti in 0..params.tensors().len() {
        let n = params.tensors()[ti].data.len();
        let analytic = grads.tensors()[ti].data.clone();
        let exhaustive = n <= 4 * opts.samples_per_tensor.max(64);
        let mut pending: Vec<usize> = if exhaustive {
            (0..n).collect()
        } else {
            let nonzero: Vec<usize> = (0..n).filter(|&i| analytic[i] != 0.0).collect();
            let half = opts.samples_per_tensor / 2;
            let mut picks: Vec<usize> = nonzero.choose_multiple(&mut rng, half).copied().collect();
            picks.extend((0..opts.samples_per_tensor - picks.len()).map(|_| rng.random_range(0..n)));
            picks
        };
        let mut entry = TensorCheck {
            case: case.to_string(),
            tensor: params.tensors()[ti].name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        let mut resamples = 0;
        while let Some(i) = pending.pop() {
            let orig = params.tensors()[ti].data[i];
            params.tensors_mut()[ti].data[i] = orig + h;
            let (lp, pp) = loss(arch, &params, &input, &proj)?;
            params.tensors_mut()[ti].data[i] = orig - h;
            let (lm, pm) = loss(arch, &params, &input, &proj)?;
            params.tensors_mut()[ti].data[i] = orig;
            if pp != base_pattern || pm != base_pattern {
                entry.skipped += 1;
                if !exhaustive && resamples < MAX_RESAMPLES {
                    resamples += 1;
                    pending.push(rng.random_range(0..n));
                }
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            entry.checked += 1;
            entry.max_rel_error = entry.max_rel_error.max(relative_error(analytic[i], numeric));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn run(opts: &GradCheckOptions, num_actions: usize) -> Result<GradCheckReport> {
    let mut entries = Vec::new();
    for (case, arch) in standard_cases(num_actions)? {
        entries.extend(check_architecture(&case, &arch, opts)?);
    }
    Ok(GradCheckReport { tolerance: opts.tolerance, entries })
}

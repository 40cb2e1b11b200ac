//! Event-level stochastic projected gradient descent with offset-clamped
//! gradients, plus a full-gradient baseline.
//!
//! Each step samples a batch of events from the epoch's shuffled index list,
//! featurizes them with at most `J` historical events, and applies
//!
//! ```text
//! theta <- ( theta - eta * sum_i [ X_i - x_i / max(x_i^T theta, lambda0) ] )_+
//! ```
//!
//! where `(.)_+` zeroes negative entries. The offset `lambda0` keeps the
//! gradient finite when an event's intensity is near zero.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelBasis;
use crate::linalg::relative_frobenius_error;
use crate::model::{
    check_compat, featurize, nll_event_theta, Dataset, EventFeatures, ModelParams, ModelShape,
    DEFAULT_LAMBDA_FLOOR,
};

/// Events in the fixed per-epoch NLL evaluation subsample (strided pick).
const NLL_SAMPLE_CAP: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    /// Batch size `B`.
    pub batch_size: usize,
    /// Maximum number of historical events per featurization, `J`.
    pub history_cap: usize,
    /// Gradient offset `lambda0`, also the floor inside the likelihood log.
    pub lambda0: f64,
    /// Learning rate `eta`.
    pub eta: f64,
    /// Decay the learning rate as `eta / sqrt(epoch)`.
    pub eta_decay: bool,
    pub epochs: usize,
    /// Stop early when the relative parameter change per epoch drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            batch_size: 64,
            history_cap: 50,
            lambda0: DEFAULT_LAMBDA_FLOOR,
            eta: 0.01,
            eta_decay: false,
            epochs: 50,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.history_cap == 0 {
            return Err(Error::Config("history cap J must be at least 1".into()));
        }
        if !(self.lambda0.is_finite() && self.lambda0 > 0.0) {
            return Err(Error::Config("lambda0 must be positive".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One epoch of a fit: mean per-event NLL on the fixed evaluation subsample,
/// relative errors against the ground truth when supplied, and wall-clock
/// seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Outer round for alternating pipelines; 0 for plain fits.
    pub round: usize,
    pub nll: f64,
    pub err_u: Option<f64>,
    pub err_a: Option<f64>,
    pub seconds: f64,
}

/// Trace and outcome of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub records: Vec<EpochRecord>,
    pub params: ModelParams,
    /// Echo of the effective configuration (after any batch clamping).
    pub config: OptConfig,
}

impl FitReport {
    pub fn final_err_a(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.err_a)
    }

    pub fn final_err_u(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.err_u)
    }
}

/// Offset-clamped per-event gradient `X - x / max(x^T theta, lambda0)` as
/// sorted sparse `(index, value)` pairs; the support is the union of the
/// supports of `x` and `X`.
pub fn grad_event(
    params: &ModelParams,
    features: &EventFeatures,
    lambda0: f64,
) -> Vec<(usize, f64)> {
    let shape = params.shape();
    let theta = params.to_theta();
    let mut scratch = vec![0.0; shape.d()];
    let mut touched = Vec::new();
    accumulate_grad(&shape, &theta, features, lambda0, &mut scratch, &mut touched);
    touched.sort_unstable();
    touched.dedup();
    touched.into_iter().map(|i| (i, scratch[i])).collect()
}

/// Adds one event's gradient into a dense scratch buffer, recording newly
/// touched indices. Single source of the gradient formula for both the
/// public [`grad_event`] and the fit loop.
fn accumulate_grad(
    shape: &ModelShape,
    theta: &[f64],
    feat: &EventFeatures,
    lambda0: f64,
    scratch: &mut [f64],
    touched: &mut Vec<usize>,
) {
    let mut touch = |idx: usize, scratch: &mut [f64], delta: f64| {
        if delta == 0.0 {
            return;
        }
        if scratch[idx] == 0.0 {
            touched.push(idx);
        }
        scratch[idx] += delta;
    };
    // X part
    for c in 0..shape.c {
        touch(shape.u_index(c, feat.agent), scratch, feat.interval_len);
    }
    for &(src, l, v) in &feat.interval_endo {
        for c in 0..shape.c {
            touch(shape.a_index(c, src, l), scratch, v);
        }
    }
    // -x / max(x^T theta, lambda0) part
    let denom = feat.point_dot(shape, theta).max(lambda0);
    touch(shape.u_index(feat.entity, feat.agent), scratch, -1.0 / denom);
    for &(src, l, v) in &feat.point_endo {
        touch(shape.a_index(feat.entity, src, l), scratch, -v / denom);
    }
}

/// Entrywise `max(., 0)`; idempotent.
pub fn project_nonneg(theta: &mut [f64]) {
    for v in theta.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Initialization used throughout: `U` from per-agent event rates
/// `N_c^m(T) / T`, `A` iid uniform on `[0, 0.1 / C]`.
pub fn default_init(
    data: &Dataset,
    m: usize,
    basis: &KernelBasis,
    seed: u64,
) -> Result<ModelParams> {
    if m == 0 || data.agent_dim() > m {
        return Err(Error::Dimension(format!(
            "dataset references agent {} but M={m}",
            data.agent_dim().saturating_sub(1)
        )));
    }
    let c = data.c;
    let mut u = ndarray::Array2::zeros((c, m));
    for seq in &data.sequences {
        for (entity, count) in seq.entity_counts(c).into_iter().enumerate() {
            u[[entity, seq.agent]] += count as f64 / data.horizon;
        }
    }
    let l = basis.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let hi = 0.1 / c as f64;
    let vals: Vec<f64> = (0..c * c * l).map(|_| rng.random_range(0.0..hi)).collect();
    let a = ndarray::Array3::from_shape_vec((c, c, l), vals).expect("a shape");
    ModelParams::new(u, a, basis.clone())
}

/// Event-level stochastic projected gradient descent.
///
/// Epochs shuffle a global index list over all events and walk it in batches
/// of `B` (sampling without replacement within the epoch). When `freeze_u`
/// is set the exogenous block is left untouched, which the alternating
/// pipeline uses when transferring an impact tensor between models. Supplying
/// `truth` fills the per-epoch error columns of the report.
pub fn stoc_fit(
    data: &Dataset,
    cfg: &OptConfig,
    init: &ModelParams,
    freeze_u: bool,
    truth: Option<&ModelParams>,
) -> Result<FitReport> {
    fit_loop(data, cfg, init, freeze_u, truth, 0)
}

/// Full-gradient baseline: one projected step per epoch using every event
/// and an unbounded history.
pub fn batch_fit(
    data: &Dataset,
    cfg: &OptConfig,
    init: &ModelParams,
    truth: Option<&ModelParams>,
) -> Result<FitReport> {
    let full = OptConfig {
        batch_size: usize::MAX,
        history_cap: usize::MAX,
        ..cfg.clone()
    };
    fit_loop(data, &full, init, false, truth, 0)
}

pub(crate) fn fit_loop(
    data: &Dataset,
    cfg: &OptConfig,
    init: &ModelParams,
    freeze_u: bool,
    truth: Option<&ModelParams>,
    round: usize,
) -> Result<FitReport> {
    cfg.validate()?;
    check_compat(init, data)?;
    if let Some(t) = truth {
        // the augment strategy fits extra agent columns; errors then compare
        // the first truth.m() columns of U
        if t.c() != init.c() || t.l() != init.l() || t.m() > init.m() {
            return Err(Error::Dimension("ground truth shape incompatible with init".into()));
        }
    }

    let shape = init.shape();
    let n_exo = shape.c * shape.m;
    let mut theta = init.to_theta();

    // flatten and featurize every event once; features do not depend on theta
    let mut features: Vec<EventFeatures> = Vec::new();
    for seq in &data.sequences {
        for i in 0..seq.len() {
            features.push(featurize(&shape, seq, i, cfg.history_cap)?);
        }
    }
    let n = features.len();
    if n == 0 {
        return Err(Error::Invalid("dataset contains no events".into()));
    }

    let batch = if cfg.batch_size > n {
        if cfg.batch_size != usize::MAX {
            log::warn!("batch size {} exceeds event count {n}; clamping", cfg.batch_size);
        }
        n
    } else {
        cfg.batch_size
    };
    let effective = OptConfig { batch_size: batch, ..cfg.clone() };

    // fixed evaluation subsample: every k-th event
    let stride = n.div_ceil(NLL_SAMPLE_CAP);
    let eval_idx: Vec<usize> = (0..n).step_by(stride.max(1)).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut scratch = vec![0.0; shape.d()];
    let mut touched: Vec<usize> = Vec::new();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let theta_prev = theta.clone();
        let eta = if cfg.eta_decay {
            cfg.eta / ((epoch + 1) as f64).sqrt()
        } else {
            cfg.eta
        };

        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            for &idx in chunk {
                accumulate_grad(&shape, &theta, &features[idx], cfg.lambda0, &mut scratch, &mut touched);
            }
            for &pos in &touched {
                if !(freeze_u && pos < n_exo) {
                    theta[pos] = (theta[pos] - eta * scratch[pos]).max(0.0);
                }
                scratch[pos] = 0.0;
            }
            touched.clear();
        }

        let nll = eval_idx
            .iter()
            .map(|&i| nll_event_theta(&shape, &theta, &features[i], cfg.lambda0))
            .sum::<f64>()
            / eval_idx.len() as f64;
        let (err_u, err_a) = match truth {
            Some(t) => block_errors(&shape, &theta, t),
            None => (None, None),
        };
        records.push(EpochRecord {
            epoch,
            round,
            nll,
            err_u,
            err_a,
            seconds: start.elapsed().as_secs_f64(),
        });

        let change = relative_frobenius_error(&theta, &theta_prev).unwrap_or(f64::INFINITY);
        if change < cfg.tol {
            break;
        }
    }

    Ok(FitReport {
        records,
        params: ModelParams::from_theta(&shape, &theta)?,
        config: effective,
    })
}

/// Relative Frobenius errors of the U and A blocks of `theta` against a
/// ground truth, comparing only the truth's first `m` columns of `U`.
fn block_errors(
    shape: &ModelShape,
    theta: &[f64],
    truth: &ModelParams,
) -> (Option<f64>, Option<f64>) {
    let mut u_diff = 0.0;
    let mut u_norm = 0.0;
    for c in 0..truth.c() {
        for m in 0..truth.m() {
            let t = truth.u()[[c, m]];
            let d = theta[shape.u_index(c, m)] - t;
            u_diff += d * d;
            u_norm += t * t;
        }
    }
    let mut a_diff = 0.0;
    let mut a_norm = 0.0;
    for c in 0..truth.c() {
        for cp in 0..truth.c() {
            for l in 0..truth.l() {
                let t = truth.a()[[c, cp, l]];
                let d = theta[shape.a_index(c, cp, l)] - t;
                a_diff += d * d;
                a_norm += t * t;
            }
        }
    }
    let err_u = (u_norm > 0.0).then(|| (u_diff / u_norm).sqrt());
    let err_a = (a_norm > 0.0).then(|| (a_diff / a_norm).sqrt());
    (err_u, err_a)
}

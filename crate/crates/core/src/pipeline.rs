//! Alternating superposition-assisted training and the experiment harness.
//!
//! [`superposed_fit`] loops: build superposed sequences from current
//! exogenous estimates, fit the superposed model to sharpen the shared
//! impact tensor, then refit the original model starting from that tensor.
//! [`run_strategy`] dispatches between this loop, the plain stochastic and
//! full-gradient fits, and the augmentation variant that appends merged
//! sequences to the original data.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelBasis;
use crate::linalg::relative_frobenius_error;
use crate::model::{Dataset, ModelParams};
use crate::optimize::{batch_fit, default_init, fit_loop, stoc_fit, EpochRecord, FitReport, OptConfig};
use crate::superpose::{
    diversity_plan_with_estimates, estimate_exogenous_matrix, superpose_exogenous,
    SuperpositionPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Full-gradient projected descent on the original data.
    BatchOpt,
    /// Event-level stochastic fit on the original data.
    StocOpt,
    /// Append merged sequences to the original data, then fit the enlarged
    /// model. Kept as a negative control: it grows both the parameter
    /// dimension and the bound.
    StocOptAugment,
    /// The alternating superposed fit.
    StocOptSuperpose,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::BatchOpt => "batch",
            Strategy::StocOpt => "stoc",
            Strategy::StocOptAugment => "augment",
            Strategy::StocOptSuperpose => "superpose",
        }
    }
}

/// Superposition granularity: either the folder count `M'` or the maximum
/// folder size `K` (resolved as `M' = ceil(M / K)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Folders(usize),
    MaxSize(usize),
}

impl Granularity {
    pub fn folder_count(&self, sources: usize) -> Result<usize> {
        let m_prime = match *self {
            Granularity::Folders(mp) => mp,
            Granularity::MaxSize(k) => {
                if k == 0 {
                    return Err(Error::Config("folder size K must be at least 1".into()));
                }
                sources.div_ceil(k)
            }
        };
        if m_prime == 0 || m_prime > sources {
            return Err(Error::Config(format!(
                "granularity resolves to {m_prime} folders for {sources} sources"
            )));
        }
        Ok(m_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub opt: OptConfig,
    pub strategy: Strategy,
    pub basis: KernelBasis,
    /// Required by the superpose and augment strategies.
    pub granularity: Option<Granularity>,
    pub outer_rounds: usize,
    /// Stop the outer loop when the relative parameter change between rounds
    /// drops below this.
    pub round_tol: f64,
    /// Optimizer epochs per stage of each round.
    pub stage_epochs: usize,
    /// Ground truth for error traces, when known.
    pub truth: Option<ModelParams>,
}

impl PipelineConfig {
    pub fn new(strategy: Strategy, basis: KernelBasis) -> Self {
        PipelineConfig {
            opt: OptConfig::default(),
            strategy,
            basis,
            granularity: None,
            outer_rounds: 5,
            round_tol: 1e-3,
            stage_epochs: 1,
            truth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if self.outer_rounds == 0 {
            return Err(Error::Config("outer_rounds must be at least 1".into()));
        }
        if self.stage_epochs == 0 {
            return Err(Error::Config("stage_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Splits deterministic sub-seeds from a base seed (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The alternating loop. Per round: (a) build superposed sequences from the
/// current exogenous estimates (count-based in the first round, columns of
/// the learned `U` afterwards); (b) fit the superposed model, learning the
/// folder intensities and the shared impact tensor; (c) refit the original
/// model initialized with that tensor. Terminates after `outer_rounds` or
/// when the parameters stop moving between rounds.
///
/// A folder count equal to the source count makes the superposition a pure
/// relabeling, so stage (b) is skipped and the loop reduces to plain
/// [`stoc_fit`].
pub fn superposed_fit(
    data: &Dataset,
    cfg: &PipelineConfig,
    init: &ModelParams,
) -> Result<FitReport> {
    cfg.validate()?;
    let n_sources = data.sequences.len();
    let m_prime = cfg
        .granularity
        .ok_or_else(|| Error::Config("superpose strategy needs a granularity (K or M')".into()))?
        .folder_count(n_sources)?;

    let mut params = init.clone();
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut prev_theta = init.to_theta();

    for round in 0..cfg.outer_rounds {
        // with decay enabled the schedule advances by round, mirroring the
        // per-epoch decay of a plain fit
        let round_eta = if cfg.opt.eta_decay {
            cfg.opt.eta / ((round + 1) as f64).sqrt()
        } else {
            cfg.opt.eta
        };
        let estimates = if round == 0 {
            estimate_exogenous_matrix(data)
        } else {
            learned_estimates(data, &params)
        };
        let plan_seed = derive_seed(cfg.opt.seed, 3 * round as u64 + 1);
        let (plan, merged) =
            diversity_plan_with_estimates(data, &estimates, m_prime, plan_seed)?;
        debug_assert!(plan_is_valid(&plan, n_sources));

        if !plan.is_identity() {
            // (b) superposed stage: folder intensities start at U P (sums of
            // the current estimates over each folder), the impact tensor
            // carries over. Merged sequences are K times as dense, so the
            // history cap scales to J * K.
            let init_b = ModelParams::new(
                superpose_exogenous(&estimates, &plan),
                params.a().clone(),
                cfg.basis.clone(),
            )?;
            let cfg_b = OptConfig {
                epochs: cfg.stage_epochs,
                seed: derive_seed(cfg.opt.seed, 3 * round as u64 + 2),
                history_cap: cfg.opt.history_cap.saturating_mul(plan.k()),
                eta: round_eta,
                eta_decay: false,
                ..cfg.opt.clone()
            };
            let fitted_b = stoc_fit(&merged, &cfg_b, &init_b, false, None)?;
            append_records(&mut records, fitted_b.records, round);
            params = ModelParams::new(params.u().clone(), fitted_b.params.a().clone(), cfg.basis.clone())?;
        }

        // (c) original-data stage, initialized by the learned impact tensor
        let cfg_c = OptConfig {
            epochs: cfg.stage_epochs,
            seed: if round == 0 { cfg.opt.seed } else { derive_seed(cfg.opt.seed, 3 * round as u64 + 3) },
            eta: round_eta,
            eta_decay: false,
            ..cfg.opt.clone()
        };
        let fitted_c = fit_loop(data, &cfg_c, &params, false, cfg.truth.as_ref(), round)?;
        append_records(&mut records, fitted_c.records, round);
        params = fitted_c.params;

        let theta = params.to_theta();
        let change = relative_frobenius_error(&theta, &prev_theta).unwrap_or(f64::INFINITY);
        if change < cfg.round_tol {
            break;
        }
        prev_theta = theta;
    }

    Ok(FitReport { records, params, config: cfg.opt.clone() })
}

fn plan_is_valid(plan: &SuperpositionPlan, sources: usize) -> bool {
    plan.source_count() == sources && plan.k() <= sources.div_ceil(plan.folder_count())
}

/// One estimate column per sequence, taken from the learned `U`.
fn learned_estimates(data: &Dataset, params: &ModelParams) -> Array2<f64> {
    let mut est = Array2::zeros((data.c, data.sequences.len()));
    for (j, seq) in data.sequences.iter().enumerate() {
        est.column_mut(j).assign(&params.u().column(seq.agent));
    }
    est
}

fn append_records(records: &mut Vec<EpochRecord>, stage: Vec<EpochRecord>, round: usize) {
    for r in stage {
        records.push(EpochRecord { epoch: records.len(), round, ..r });
    }
}

/// The shared initialization every strategy starts from: `U` from event
/// rates, `A` uniform on `[0, 0.1/C]` seeded from the optimizer seed.
pub fn strategy_init(data: &Dataset, cfg: &PipelineConfig) -> Result<ModelParams> {
    let m = data.agent_dim().max(1);
    default_init(data, m, &cfg.basis, derive_seed(cfg.opt.seed, 0xA11))
}

/// Runs one of the four strategies from the shared initialization.
pub fn run_strategy(data: &Dataset, cfg: &PipelineConfig) -> Result<FitReport> {
    cfg.validate()?;
    let m = data.agent_dim().max(1);
    let init = strategy_init(data, cfg)?;
    match cfg.strategy {
        Strategy::BatchOpt => batch_fit(data, &cfg.opt, &init, cfg.truth.as_ref()),
        Strategy::StocOpt => stoc_fit(data, &cfg.opt, &init, false, cfg.truth.as_ref()),
        Strategy::StocOptSuperpose => superposed_fit(data, cfg, &init),
        Strategy::StocOptAugment => {
            let n_sources = data.sequences.len();
            let m_prime = cfg
                .granularity
                .ok_or_else(|| {
                    Error::Config("augment strategy needs a granularity (K or M')".into())
                })?
                .folder_count(n_sources)?;
            let estimates = estimate_exogenous_matrix(data);
            let (_, merged) = diversity_plan_with_estimates(
                data,
                &estimates,
                m_prime,
                derive_seed(cfg.opt.seed, 1),
            )?;
            let mut sequences = data.sequences.clone();
            for mut seq in merged.sequences {
                seq.agent += m;
                sequences.push(seq);
            }
            let augmented = Dataset::new(data.c, data.horizon, sequences)?;
            let init_aug =
                default_init(&augmented, m + m_prime, &cfg.basis, derive_seed(cfg.opt.seed, 0xA11))?;
            stoc_fit(&augmented, &cfg.opt, &init_aug, false, cfg.truth.as_ref())
        }
    }
}

/// Relative estimation errors `(err_U, err_A, err_theta)`:
/// `||U* - U||_F / ||U*||_F`, the analogue for `A`, and the stacked-vector
/// ratio.
pub fn relative_errors(est: &ModelParams, truth: &ModelParams) -> Result<(f64, f64, f64)> {
    if est.c() != truth.c() || est.m() != truth.m() || est.l() != truth.l() {
        return Err(Error::Dimension("estimate and truth shapes differ".into()));
    }
    let pair = |e: &[f64], t: &[f64]| {
        relative_frobenius_error(e, t)
            .ok_or_else(|| Error::Invalid("ground truth has zero norm".into()))
    };
    let err_u = pair(
        est.u().as_slice().expect("standard layout"),
        truth.u().as_slice().expect("standard layout"),
    )?;
    let err_a = pair(
        est.a().as_slice().expect("standard layout"),
        truth.a().as_slice().expect("standard layout"),
    )?;
    let err_theta = pair(&est.to_theta(), &truth.to_theta())?;
    Ok((err_u, err_a, err_theta))
}

/// One strategy to run in a sweep; `k` applies to the superpose and augment
/// strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStrategy {
    pub strategy: Strategy,
    #[serde(default)]
    pub k: Option<usize>,
}

/// Grid specification: strategies x seeds over a shared optimizer setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub strategies: Vec<SweepStrategy>,
    pub seeds: Vec<u64>,
    pub opt: OptConfig,
    #[serde(default = "default_rounds")]
    pub outer_rounds: usize,
    #[serde(default = "default_stage_epochs")]
    pub stage_epochs: usize,
}

fn default_rounds() -> usize {
    5
}

fn default_stage_epochs() -> usize {
    1
}

/// One epoch of one run, in tidy long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub k: Option<usize>,
    pub seed: u64,
    pub round: usize,
    pub epoch: usize,
    pub nll: f64,
    pub err_u: Option<f64>,
    pub err_a: Option<f64>,
    pub seconds: f64,
}

/// Runs the grid and flattens every epoch record into tidy rows.
pub fn run_sweep(
    data: &Dataset,
    basis: &KernelBasis,
    truth: Option<&ModelParams>,
    sweep: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for entry in &sweep.strategies {
        for &seed in &sweep.seeds {
            let cfg = PipelineConfig {
                opt: OptConfig { seed, ..sweep.opt.clone() },
                strategy: entry.strategy,
                basis: basis.clone(),
                granularity: entry.k.map(Granularity::MaxSize),
                outer_rounds: sweep.outer_rounds,
                round_tol: 1e-3,
                stage_epochs: sweep.stage_epochs,
                truth: truth.cloned(),
            };
            let report = run_strategy(data, &cfg)?;
            for r in &report.records {
                rows.push(SweepRow {
                    strategy: entry.strategy.name().to_string(),
                    k: entry.k,
                    seed,
                    round: r.round,
                    epoch: r.epoch,
                    nll: r.nll,
                    err_u: r.err_u,
                    err_a: r.err_a,
                    seconds: r.seconds,
                });
            }
        }
    }
    Ok(rows)
}

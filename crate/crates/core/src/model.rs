//! Model domain types, intensity evaluation, event featurization, and the
//! per-event negative log-likelihood.
//!
//! The intensity of entity `c` under agent `m` is
//!
//! ```text
//! lambda_c^m(t) = mu_c^m + sum_{(t_i, c_i) in history} sum_l a_{c c_i l} g_l(t - t_i)
//! ```
//!
//! which is linear in the stacked parameter vector
//! `theta = [vec(U); vec(A)]` of dimension `D = C (M + C L)`. Each event
//! contributes `f_i^m(theta) = X^T theta - log(x^T theta)` to the negative
//! log-likelihood, where `x` is the point feature at the event and `X`
//! integrates the per-entity features over the inter-event interval.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelBasis;

/// Lower clamp applied inside the likelihood's logarithm; kept equal to the
/// optimizer's default gradient offset `lambda0`.
pub const DEFAULT_LAMBDA_FLOOR: f64 = 1e-3;

/// A single marked event: when, and which entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub entity: usize,
}

impl Event {
    pub fn new(time: f64, entity: usize) -> Self {
        Event { time, entity }
    }
}

/// A time-ordered event sequence for one agent over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub agent: usize,
    events: Vec<Event>,
    pub horizon: f64,
}

impl EventSequence {
    /// Validates ordering and window membership. Times must be nondecreasing;
    /// simultaneous events are allowed here (distinct entities only is an
    /// ingest-level check, see [`crate::io::read_events`]).
    pub fn new(agent: usize, events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        for (i, e) in events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::Invalid(format!("event {i}: time {} out of range", e.time)));
            }
            if e.time > horizon {
                return Err(Error::Invalid(format!(
                    "event {i}: time {} exceeds horizon {horizon}",
                    e.time
                )));
            }
            if i > 0 && events[i - 1].time > e.time {
                return Err(Error::Invalid(format!("events out of order at index {i}")));
            }
        }
        Ok(EventSequence { agent, events, horizon })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Per-entity event counts `N_c(horizon)`.
    pub fn entity_counts(&self, c_dim: usize) -> Vec<usize> {
        let mut counts = vec![0usize; c_dim];
        for e in &self.events {
            if e.entity < c_dim {
                counts[e.entity] += 1;
            }
        }
        counts
    }

    pub fn max_entity(&self) -> Option<usize> {
        self.events.iter().map(|e| e.entity).max()
    }
}

/// A collection of sequences sharing one entity space and observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Number of entities `C`.
    pub c: usize,
    /// Shared observation horizon `T`.
    pub horizon: f64,
    pub sequences: Vec<EventSequence>,
}

impl Dataset {
    pub fn new(c: usize, horizon: f64, sequences: Vec<EventSequence>) -> Result<Self> {
        let ds = Dataset { c, horizon, sequences };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(Error::Invalid("dataset needs at least one entity".into()));
        }
        for (i, s) in self.sequences.iter().enumerate() {
            if s.horizon != self.horizon {
                return Err(Error::Invalid(format!(
                    "sequence {i}: horizon {} differs from dataset horizon {}",
                    s.horizon, self.horizon
                )));
            }
            if let Some(me) = s.max_entity() {
                if me >= self.c {
                    return Err(Error::Invalid(format!(
                        "sequence {i}: entity {me} out of range for C={}",
                        self.c
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total number of events across all sequences.
    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Largest agent index plus one (0 when empty).
    pub fn agent_dim(&self) -> usize {
        self.sequences.iter().map(|s| s.agent + 1).max().unwrap_or(0)
    }
}

/// Dimensions and kernel basis of a model, without parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub c: usize,
    pub m: usize,
    pub basis: KernelBasis,
}

impl ModelShape {
    pub fn new(c: usize, m: usize, basis: KernelBasis) -> Result<Self> {
        if c == 0 || m == 0 {
            return Err(Error::Dimension(format!("C and M must be positive, got C={c} M={m}")));
        }
        Ok(ModelShape { c, m, basis })
    }

    pub fn l(&self) -> usize {
        self.basis.len()
    }

    /// Parameter dimension `D = C (M + C L)`.
    pub fn d(&self) -> usize {
        self.c * (self.m + self.c * self.l())
    }

    /// Flat index of `mu_c^m` in `theta` (row-major `U`).
    pub fn u_index(&self, c: usize, m: usize) -> usize {
        c * self.m + m
    }

    /// Flat index of `a_{c c' l}` in `theta` ((c, c', l)-ordered `A` after
    /// the `U` block).
    pub fn a_index(&self, c: usize, c_src: usize, l: usize) -> usize {
        self.c * self.m + (c * self.c + c_src) * self.l() + l
    }
}

/// Model parameters: exogenous intensity matrix `U` (C x M), endogenous
/// impact tensor `A` (C x C x L), and the kernel basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    u: Array2<f64>,
    a: Array3<f64>,
    basis: KernelBasis,
}

impl ModelParams {
    pub fn new(u: Array2<f64>, a: Array3<f64>, basis: KernelBasis) -> Result<Self> {
        let (c, _m) = u.dim();
        let (ac, acp, al) = a.dim();
        if ac != c || acp != c {
            return Err(Error::Dimension(format!(
                "A must be C x C x L with C={c}, got {ac} x {acp} x {al}"
            )));
        }
        if al != basis.len() {
            return Err(Error::Dimension(format!(
                "A has {al} kernel slices but the basis has {}",
                basis.len()
            )));
        }
        if c == 0 || u.dim().1 == 0 {
            return Err(Error::Dimension("U must be nonempty".into()));
        }
        if u.iter().chain(a.iter()).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Invalid("U and A entries must be finite and nonnegative".into()));
        }
        Ok(ModelParams { u, a, basis })
    }

    pub fn zeros(c: usize, m: usize, basis: KernelBasis) -> Result<Self> {
        let l = basis.len();
        Self::new(Array2::zeros((c, m)), Array3::zeros((c, c, l)), basis)
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn a(&self) -> &Array3<f64> {
        &self.a
    }

    pub fn basis(&self) -> &KernelBasis {
        &self.basis
    }

    pub fn c(&self) -> usize {
        self.u.dim().0
    }

    pub fn m(&self) -> usize {
        self.u.dim().1
    }

    pub fn l(&self) -> usize {
        self.basis.len()
    }

    pub fn d(&self) -> usize {
        self.c() * (self.m() + self.c() * self.l())
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape { c: self.c(), m: self.m(), basis: self.basis.clone() }
    }

    /// Stacked parameter vector `[vec(U); vec(A)]` (row-major `U`, then `A`
    /// in (c, c', l) order).
    pub fn to_theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.d());
        theta.extend(self.u.iter());
        theta.extend(self.a.iter());
        theta
    }

    pub fn from_theta(shape: &ModelShape, theta: &[f64]) -> Result<Self> {
        if theta.len() != shape.d() {
            return Err(Error::Dimension(format!(
                "theta has length {}, expected D={}",
                theta.len(),
                shape.d()
            )));
        }
        let nu = shape.c * shape.m;
        let u = Array2::from_shape_vec((shape.c, shape.m), theta[..nu].to_vec())
            .expect("u block shape");
        let a = Array3::from_shape_vec((shape.c, shape.c, shape.l()), theta[nu..].to_vec())
            .expect("a block shape");
        Self::new(u, a, shape.basis.clone())
    }
}

/// Sparse features of one event: the point feature `x` evaluated at the
/// event, and the interval feature `X` integrated over the preceding
/// inter-event interval.
///
/// Both vectors live in the `D`-dimensional parameter space but are stored
/// in a structured sparse form that exploits their block layout:
///
/// - `x`'s U-block is a single implicit 1 at `(entity, agent)`; its A-block
///   entries `(c', l, g_l(t - t_j))` all sit in row `entity`.
/// - `X`'s U-block holds the interval length at `(c, agent)` for every `c`;
///   each A-block entry `(c', l, integral)` is shared by all target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFeatures {
    pub agent: usize,
    pub entity: usize,
    pub time: f64,
    pub interval_start: f64,
    /// A-block of `x`: accumulated `g_l(t_i - t_j)` keyed by (source entity, kernel).
    pub point_endo: Vec<(usize, usize, f64)>,
    /// U-block of `X`: `t_i - t_{i-1}`, broadcast over all entities in the agent's column.
    pub interval_len: f64,
    /// A-block of `X`: accumulated kernel interval integrals keyed by
    /// (source entity, kernel), broadcast over all target entities.
    pub interval_endo: Vec<(usize, usize, f64)>,
}

impl EventFeatures {
    /// `x^T theta`.
    pub fn point_dot(&self, shape: &ModelShape, theta: &[f64]) -> f64 {
        let mut acc = theta[shape.u_index(self.entity, self.agent)];
        for &(src, l, v) in &self.point_endo {
            acc += v * theta[shape.a_index(self.entity, src, l)];
        }
        acc
    }

    /// `X^T theta`.
    pub fn interval_dot(&self, shape: &ModelShape, theta: &[f64]) -> f64 {
        let mut exo = 0.0;
        for c in 0..shape.c {
            exo += theta[shape.u_index(c, self.agent)];
        }
        let mut acc = self.interval_len * exo;
        for &(src, l, v) in &self.interval_endo {
            let mut col = 0.0;
            for c in 0..shape.c {
                col += theta[shape.a_index(c, src, l)];
            }
            acc += v * col;
        }
        acc
    }

    /// Dense `x` of length `D`; for tests and diagnostics.
    pub fn point_dense(&self, shape: &ModelShape) -> Vec<f64> {
        let mut x = vec![0.0; shape.d()];
        x[shape.u_index(self.entity, self.agent)] = 1.0;
        for &(src, l, v) in &self.point_endo {
            x[shape.a_index(self.entity, src, l)] += v;
        }
        x
    }

    /// Dense `X` of length `D`; for tests and diagnostics.
    pub fn interval_dense(&self, shape: &ModelShape) -> Vec<f64> {
        let mut cap = vec![0.0; shape.d()];
        for c in 0..shape.c {
            cap[shape.u_index(c, self.agent)] = self.interval_len;
        }
        for &(src, l, v) in &self.interval_endo {
            for c in 0..shape.c {
                cap[shape.a_index(c, src, l)] += v;
            }
        }
        cap
    }

    /// Number of stored feature entries; the per-iteration cost accounting
    /// counts these.
    pub fn stored_nonzeros(&self) -> usize {
        2 + self.point_endo.len() + self.interval_endo.len()
    }
}

/// Conditional intensity `lambda_c^m(t)` given a history of strictly earlier
/// events, truncated to the `j_cap` most recent ones.
///
/// Equals the full model intensity whenever `j_cap >= history.len()`.
pub fn intensity(
    params: &ModelParams,
    agent: usize,
    entity: usize,
    t: f64,
    history: &[Event],
    j_cap: usize,
) -> Result<f64> {
    if agent >= params.m() || entity >= params.c() {
        return Err(Error::Dimension(format!(
            "agent {agent} or entity {entity} out of range for C={} M={}",
            params.c(),
            params.m()
        )));
    }
    if j_cap == 0 {
        return Err(Error::Config("history cap J must be at least 1".into()));
    }
    debug_assert!(history.iter().all(|e| e.time < t));
    let start = history.len().saturating_sub(j_cap);
    let mut acc = params.u()[[entity, agent]];
    for e in &history[start..] {
        for l in 0..params.l() {
            acc += params.a()[[entity, e.entity, l]] * params.basis().eval(l, t - e.time);
        }
    }
    Ok(acc)
}

/// Features of the `i`-th event (0-based) of a sequence, truncating the
/// endogenous blocks to the `j_cap` most recent preceding events.
///
/// The first event's interval starts at `t_0 = 0`. Preceding events tied
/// with the current timestamp contribute to `x` at lag zero and nothing to
/// `X` (their integration interval is empty).
pub fn featurize(
    shape: &ModelShape,
    sequence: &EventSequence,
    i: usize,
    j_cap: usize,
) -> Result<EventFeatures> {
    let events = sequence.events();
    if i >= events.len() {
        return Err(Error::Dimension(format!(
            "event index {i} out of range for sequence of length {}",
            events.len()
        )));
    }
    if j_cap == 0 {
        return Err(Error::Config("history cap J must be at least 1".into()));
    }
    if sequence.agent >= shape.m {
        return Err(Error::Dimension(format!(
            "agent {} out of range for M={}",
            sequence.agent, shape.m
        )));
    }
    let ev = events[i];
    if ev.entity >= shape.c {
        return Err(Error::Dimension(format!(
            "entity {} out of range for C={}",
            ev.entity, shape.c
        )));
    }
    let t_prev = if i == 0 { 0.0 } else { events[i - 1].time };
    let start = i.saturating_sub(j_cap);

    let l_dim = shape.l();
    let mut point = std::collections::BTreeMap::new();
    let mut interval = std::collections::BTreeMap::new();
    for e in &events[start..i] {
        for l in 0..l_dim {
            let g = shape.basis.eval(l, ev.time - e.time);
            if g != 0.0 {
                *point.entry((e.entity, l)).or_insert(0.0) += g;
            }
            let int = shape.basis.integrate(l, t_prev - e.time, ev.time - e.time);
            if int != 0.0 {
                *interval.entry((e.entity, l)).or_insert(0.0) += int;
            }
        }
    }

    Ok(EventFeatures {
        agent: sequence.agent,
        entity: ev.entity,
        time: ev.time,
        interval_start: t_prev,
        point_endo: point.into_iter().map(|((s, l), v)| (s, l, v)).collect(),
        interval_len: ev.time - t_prev,
        interval_endo: interval.into_iter().map(|((s, l), v)| (s, l, v)).collect(),
    })
}

pub(crate) fn nll_event_theta(
    shape: &ModelShape,
    theta: &[f64],
    features: &EventFeatures,
    lambda_floor: f64,
) -> f64 {
    features.interval_dot(shape, theta)
        - features.point_dot(shape, theta).max(lambda_floor).ln()
}

/// Per-event negative log-likelihood `X^T theta - log(max(x^T theta, floor))`.
pub fn nll_event(params: &ModelParams, features: &EventFeatures, lambda_floor: f64) -> f64 {
    nll_event_theta(&params.shape(), &params.to_theta(), features, lambda_floor)
}

fn nll_total_impl(
    params: &ModelParams,
    data: &Dataset,
    j_cap: usize,
    lambda_floor: f64,
    include_tail: bool,
) -> Result<f64> {
    check_compat(params, data)?;
    let shape = params.shape();
    let theta = params.to_theta();
    let mut total = 0.0;
    for seq in &data.sequences {
        for i in 0..seq.len() {
            let feats = featurize(&shape, seq, i, j_cap)?;
            total += nll_event_theta(&shape, &theta, &feats, lambda_floor);
        }
        if include_tail {
            total += tail_compensator(params, seq, j_cap);
        }
    }
    Ok(total)
}

/// Batch negative log-likelihood: the sum of per-event terms over all
/// sequences. Follows the written objective, which partitions the
/// compensator by inter-event intervals and drops the tail `(t_last, T]`.
pub fn nll_total(params: &ModelParams, data: &Dataset, j_cap: usize, lambda_floor: f64) -> Result<f64> {
    nll_total_impl(params, data, j_cap, lambda_floor, false)
}

/// Textbook-complete variant of [`nll_total`]: adds the compensator over the
/// trailing interval `(t_last, T]` of every sequence (over `(0, T]` for
/// empty sequences).
pub fn nll_total_with_tail(
    params: &ModelParams,
    data: &Dataset,
    j_cap: usize,
    lambda_floor: f64,
) -> Result<f64> {
    nll_total_impl(params, data, j_cap, lambda_floor, true)
}

fn tail_compensator(params: &ModelParams, seq: &EventSequence, j_cap: usize) -> f64 {
    let t_last = seq.events().last().map_or(0.0, |e| e.time);
    let horizon = seq.horizon;
    let mut exo_sum = 0.0;
    for c in 0..params.c() {
        exo_sum += params.u()[[c, seq.agent]];
    }
    let mut acc = exo_sum * (horizon - t_last);
    let start = seq.len().saturating_sub(j_cap);
    for e in &seq.events()[start..] {
        for l in 0..params.l() {
            let int = params.basis().integrate(l, t_last - e.time, horizon - e.time);
            if int != 0.0 {
                let mut col = 0.0;
                for c in 0..params.c() {
                    col += params.a()[[c, e.entity, l]];
                }
                acc += col * int;
            }
        }
    }
    acc
}

pub(crate) fn check_compat(params: &ModelParams, data: &Dataset) -> Result<()> {
    data.validate()?;
    if data.c != params.c() {
        return Err(Error::Dimension(format!(
            "dataset has C={} but params have C={}",
            data.c,
            params.c()
        )));
    }
    if data.agent_dim() > params.m() {
        return Err(Error::Dimension(format!(
            "dataset references agent {} but params have M={}",
            data.agent_dim() - 1,
            params.m()
        )));
    }
    Ok(())
}

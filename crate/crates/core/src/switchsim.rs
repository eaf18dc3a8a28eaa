//! Randomly switched trajectories and an empirical audit of a certificate.
//!
//! An audit is evidence about the sampled initial points only; it never
//! replaces the certificate and says nothing outside the sampled polydisk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{CertificateReport, CertifyError, Clf};
use crate::halton::halton;
use crate::vectorfield::{FieldError, SwitchedFamily};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("a switching signal needs at least one subsystem")]
    NoSubsystems,
    #[error("dwell times must satisfy 0 < min_dwell ≤ max_dwell, got [{0}, {1}]")]
    BadDwell(f64, f64),
    #[error("horizon must be finite and non-negative, got {0}")]
    BadHorizon(f64),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("segment {index} selects subsystem {subsystem}, family has {m}")]
    BadSubsystem { index: usize, subsystem: usize, m: usize },
    #[error("initial state has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("audit needs at least one signal and one initial point")]
    EmptyAudit,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// One constant piece of a switching signal; `subsystem` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub subsystem: usize,
}

/// Piecewise-constant switching signal on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub segments: Vec<Segment>,
    pub horizon: f64,
}

impl SwitchingSignal {
    /// A single subsystem for the whole horizon.
    pub fn constant(subsystem: usize, horizon: f64) -> Self {
        SwitchingSignal { segments: vec![Segment { duration: horizon, subsystem }], horizon }
    }

    /// Switching instants strictly inside `(0, horizon)`.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for s in &self.segments[..self.segments.len().saturating_sub(1)] {
            t += s.duration;
            if t < self.horizon {
                out.push(t);
            }
        }
        out
    }

    /// Active subsystem (1-based) at time `t`, right-continuous.
    pub fn active_at(&self, t: f64) -> usize {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return s.subsystem;
            }
        }
        self.segments.last().map_or(1, |s| s.subsystem)
    }
}

/// Random signal: subsystems drawn uniformly from `1..=m` (repeats allowed),
/// dwell times uniform in `[min_dwell, max_dwell]`; the last segment is cut
/// at the horizon. Deterministic in `seed`.
pub fn random_signal(m: usize, horizon: f64, min_dwell: f64, max_dwell: f64, seed: u64) -> Result<SwitchingSignal, SimError> {
    if m == 0 {
        return Err(SimError::NoSubsystems);
    }
    if !(min_dwell > 0.0 && min_dwell <= max_dwell && max_dwell.is_finite()) {
        return Err(SimError::BadDwell(min_dwell, max_dwell));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SimError::BadHorizon(horizon));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut t = 0.0;
    loop {
        let subsystem = rng.random_range(1..=m);
        let dwell = if max_dwell > min_dwell { rng.random_range(min_dwell..=max_dwell) } else { min_dwell };
        if t + dwell >= horizon {
            segments.push(Segment { duration: horizon - t, subsystem });
            break;
        }
        segments.push(Segment { duration: dwell, subsystem });
        t += dwell;
    }
    Ok(SwitchingSignal { segments, horizon })
}

/// A switched trajectory on the output grid plus switch instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedRun {
    pub signal: SwitchingSignal,
    pub times: Vec<f64>,
    #[serde(with = "crate::serial::cvec_list")]
    pub states: Vec<Vec<C64>>,
    /// Active subsystem (1-based) on the step that ends at each sample; the
    /// first sample reports the initial subsystem.
    pub active: Vec<usize>,
    /// Truncated Lyapunov values, empty when no certificate was supplied.
    #[serde(rename = "V_values")]
    pub v_values: Vec<f64>,
    /// Largest step-to-step increase of V divided by the largest V of the run.
    #[serde(rename = "max_V_increase")]
    pub max_v_increase: f64,
    pub final_norm: f64,
    /// The working-coordinate state reached `‖ẑ‖∞ ≥ 1 − 1e−12`.
    pub escaped: bool,
}

impl SwitchedRun {
    /// Trace as CSV: `t, Re z1, Im z1, …, V, active_subsystem`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for l in 1..=n {
            s.push_str(&format!(",re_z{l},im_z{l}"));
        }
        s.push_str(",V,active_subsystem\n");
        for (i, t) in self.times.iter().enumerate() {
            s.push_str(&t.to_string());
            for c in &self.states[i] {
                s.push_str(&format!(",{},{}", c.re, c.im));
            }
            let v = self.v_values.get(i).map_or(String::new(), f64::to_string);
            s.push_str(&format!(",{v},{}\n", self.active[i]));
        }
        s
    }
}

/// Escape threshold on `‖ẑ‖∞`.
pub const ESCAPE_MARGIN: f64 = 1e-12;

fn sup_norm(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

struct Trace {
    times: Vec<f64>,
    states: Vec<Vec<C64>>,
    active: Vec<usize>,
    v: Vec<f64>,
    max_increase: f64,
    max_hat: f64,
    escaped: bool,
    final_state: Vec<C64>,
}

// RK4 over the signal; uniform grid `k·dt` merged with the switch instants.
fn run(family: &SwitchedFamily, signal: &SwitchingSignal, z0: &[C64], dt: f64, clf: Option<&Clf>, record: bool) -> Result<Trace, SimError> {
    let n = family.dim();
    if z0.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: z0.len() });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadStep(dt));
    }
    for (index, s) in signal.segments.iter().enumerate() {
        if s.subsystem == 0 || s.subsystem > family.len() {
            return Err(SimError::BadSubsystem { index, subsystem: s.subsystem, m: family.len() });
        }
    }
    let hat = |z: &[C64]| clf.map(|c| c.to_hat(z));
    let value = |zh: &Option<Vec<C64>>| -> (Option<f64>, f64) {
        match (clf, zh) {
            (Some(c), Some(h)) => (Some(c.partial_hat(h)), sup_norm(h)),
            _ => (None, sup_norm(&[])),
        }
    };
    let mut z = z0.to_vec();
    let first = signal.segments.first().map_or(1, |s| s.subsystem);
    let (v0, h0) = value(&hat(&z));
    let mut tr = Trace {
        times: vec![0.0],
        states: if record { vec![z.clone()] } else { Vec::new() },
        active: vec![first],
        v: v0.into_iter().collect(),
        max_increase: 0.0,
        max_hat: h0,
        escaped: false,
        final_state: Vec::new(),
    };
    let escape = |h: f64, z: &[C64]| if clf.is_some() { h >= 1.0 - ESCAPE_MARGIN } else { sup_norm(z) >= 1.0 - ESCAPE_MARGIN };
    tr.escaped = escape(h0, &z);
    let mut vmax = v0.unwrap_or(0.0);
    let mut vprev = v0;
    let mut t = 0.0;
    let mut seg_start = 0.0;
    'outer: for s in &signal.segments {
        let seg_end = if std::ptr::eq(s, signal.segments.last().unwrap()) { signal.horizon } else { seg_start + s.duration };
        let f = family.get(s.subsystem - 1);
        while t < seg_end {
            // next grid point, or the segment end if it comes first
            let k = (t / dt).floor() + 1.0;
            let mut next = k * dt;
            if next - t < 1e-12 * dt {
                next += dt;
            }
            let next = next.min(seg_end);
            z = f.rk4(&z, next - t);
            t = next;
            let zh = hat(&z);
            let (v, h) = value(&zh);
            tr.max_hat = tr.max_hat.max(h);
            if let (Some(v), Some(p)) = (v, vprev) {
                vmax = vmax.max(v);
                tr.max_increase = tr.max_increase.max(v - p);
            }
            vprev = v;
            if record {
                tr.times.push(t);
                tr.states.push(z.clone());
                tr.active.push(s.subsystem);
                if let Some(v) = v {
                    tr.v.push(v);
                }
            }
            if escape(h, &z) || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                tr.escaped = true;
                break 'outer;
            }
        }
        seg_start = seg_end;
    }
    if vmax > 0.0 {
        tr.max_increase /= vmax;
    }
    tr.final_state = z;
    Ok(tr)
}

/// Integrates `family` under `signal` from `z0`, recording every grid point
/// and switch instant; `V` is sampled when a certificate is given.
pub fn integrate_switched(family: &SwitchedFamily, signal: &SwitchingSignal, z0: &[C64], dt: f64, clf: Option<&Clf>) -> Result<SwitchedRun, SimError> {
    let tr = run(family, signal, z0, dt, clf, true)?;
    Ok(SwitchedRun {
        signal: signal.clone(),
        final_norm: sup_norm(&tr.final_state),
        times: tr.times,
        states: tr.states,
        active: tr.active,
        v_values: tr.v,
        max_v_increase: tr.max_increase,
        escaped: tr.escaped,
    })
}

/// Audit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Number of random switching signals.
    pub trials: usize,
    /// Initial points per signal.
    pub points: usize,
    pub horizon: f64,
    pub dt: f64,
    pub min_dwell: f64,
    pub max_dwell: f64,
    pub seed: u64,
    /// Initial points fill `𝔻ⁿ(0, radius_fraction·ρ)` in working coordinates.
    pub radius_fraction: f64,
    /// Allowed `max_V_increase`.
    pub slack: f64,
    /// `final_norm` below this counts as converged.
    pub converged_norm: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            trials: 100,
            points: 50,
            horizon: 20.0,
            dt: 0.01,
            min_dwell: 0.1,
            max_dwell: 1.0,
            seed: 0,
            radius_fraction: 0.95,
            slack: 1e-9,
            converged_norm: 1e-3,
        }
    }
}

/// Worst run of an audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRef {
    pub signal: usize,
    pub point: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub runs: usize,
    pub trials: usize,
    pub points: usize,
    pub rho: f64,
    pub sample_radius: f64,
    #[serde(rename = "max_V_increase")]
    pub max_v_increase: f64,
    pub worst_increase: Option<RunRef>,
    pub runs_with_increase: usize,
    pub converged_fraction: f64,
    pub max_final_norm: f64,
    pub escapes: usize,
    /// Runs whose working-coordinate state left the closed polydisk of radius ρ.
    pub left_region: usize,
    pub pass: bool,
    pub scope: String,
}

/// Deterministic initial points in `𝔻ⁿ(0, r)`, working coordinates: the
/// first half real (Halton in the cube), the rest complex with Halton
/// moduli and seeded phases.
pub fn initial_points(n: usize, count: usize, r: f64, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let half = count.div_ceil(2);
    (0..count)
        .map(|i| {
            let h = (0..n).map(|l| halton(i as u64 + 1, l));
            if i < half {
                h.map(|u| C64::new(r * (2.0 * u - 1.0), 0.0)).collect()
            } else {
                h.map(|u| C64::from_polar(r * u.sqrt(), rng.random_range(0.0..std::f64::consts::TAU))).collect()
            }
        })
        .collect()
}

/// Runs `trials × points` switched trajectories from points sampled in
/// `𝔻ⁿ(0, 0.95ρ)` (working coordinates) and checks that the Lyapunov function
/// never increases beyond `slack`, nothing escapes, and trajectories converge.
pub fn audit_clf(family: &SwitchedFamily, clf: &Clf, opts: &AuditOptions) -> Result<AuditSummary, SimError> {
    if opts.trials == 0 || opts.points == 0 {
        return Err(SimError::EmptyAudit);
    }
    let rho = clf.rho();
    let sample_radius = opts.radius_fraction * rho;
    let points = initial_points(family.dim(), opts.points, sample_radius, opts.seed);
    let signals = (0..opts.trials)
        .map(|s| random_signal(family.len(), opts.horizon, opts.min_dwell, opts.max_dwell, opts.seed.wrapping_add(s as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..opts.trials).flat_map(|s| (0..opts.points).map(move |p| (s, p))).collect();
    let results = jobs
        .par_iter()
        .map(|&(s, p)| {
            let z0 = clf.from_hat(&points[p]);
            run(family, &signals[s], &z0, opts.dt, Some(clf), false)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut sum = AuditSummary {
        runs: jobs.len(),
        trials: opts.trials,
        points: opts.points,
        rho,
        sample_radius,
        max_v_increase: 0.0,
        worst_increase: None,
        runs_with_increase: 0,
        converged_fraction: 0.0,
        max_final_norm: 0.0,
        escapes: 0,
        left_region: 0,
        pass: false,
        scope: format!(
            "empirical evidence for {} sampled initial points in the polydisk of radius {sample_radius} (working coordinates) under {} random signals; not a proof of stability, and silent about states outside the sampled region",
            opts.points, opts.trials
        ),
    };
    let mut converged = 0usize;
    for (&(s, p), tr) in jobs.iter().zip(&results) {
        if tr.max_increase > sum.max_v_increase || sum.worst_increase.is_none() {
            sum.max_v_increase = sum.max_v_increase.max(tr.max_increase);
            sum.worst_increase = Some(RunRef { signal: s, point: p, value: tr.max_increase });
        }
        if tr.max_increase > opts.slack {
            sum.runs_with_increase += 1;
        }
        let fin = sup_norm(&tr.final_state);
        sum.max_final_norm = sum.max_final_norm.max(fin);
        if fin < opts.converged_norm && !tr.escaped {
            converged += 1;
        }
        if tr.escaped {
            sum.escapes += 1;
        }
        if tr.max_hat > rho * (1.0 + 1e-9) {
            sum.left_region += 1;
        }
    }
    sum.converged_fraction = converged as f64 / jobs.len() as f64;
    sum.pass = sum.runs_with_increase == 0 && sum.escapes == 0;
    Ok(sum)
}

/// [`audit_clf`] for the certificate stored in a report.
pub fn audit_certificate(report: &CertificateReport, family: &SwitchedFamily, opts: &AuditOptions) -> Result<AuditSummary, SimError> {
    let clf = report.clf()?;
    audit_clf(family, &clf, opts)
}

//! Scenario runner behind the CLI: configuration, per-experiment drivers and
//! output files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::ensemble::{init, simulate_from, Ensemble, InitKind, InitSpec, SimOptions, Trace};
use crate::error::{Error, Result};
use crate::gaussian_local::{classify, evolve, matrix_h, write_trajectory_csv, GaussianState};
use crate::meanfield::MixedDensity;
use crate::spectral::{
    linearized_loss_curve, smallc_range_defect, spectral_table, write_spectral_csv, xi_equation, SmallCState,
};
use crate::spline_model::{GroundTruth, Model, Weight};
use crate::stationary::{equidistant_family, family_table};
use crate::verify::run_oracle_suite;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Atoms,
    Stability,
    SmallC,
    Linearized,
    Gaussian,
    Stationary,
    SpectralTable,
    Verify,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Atoms => "atoms",
            Scenario::Stability => "stability",
            Scenario::SmallC => "small-c",
            Scenario::Linearized => "linearized",
            Scenario::Gaussian => "gaussian",
            Scenario::Stationary => "stationary",
            Scenario::SpectralTable => "spectral-table",
            Scenario::Verify => "verify",
        }
    }
}

/// Flat configuration as read from JSON; unset fields take per-scenario
/// defaults in [`ScenarioConfig::resolve`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub truncation: Option<usize>,
    pub ground_truth: Option<GroundTruth>,
    pub out_dir: Option<PathBuf>,
    /// Rows of table-like scenarios (`spectral-table`, `stationary`).
    pub count: Option<usize>,
    pub init: Option<InitKind>,
    /// Spread of the Gaussian clouds in `stability`.
    pub sigma: Option<f64>,
    pub record_every: Option<usize>,
}

/// Fully populated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub scenario: Scenario,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub truncation: usize,
    pub ground_truth: GroundTruth,
    pub out_dir: PathBuf,
    pub count: usize,
    pub init: Option<InitKind>,
    pub sigma: f64,
    pub record_every: usize,
}

pub const DEFAULT_SEED: u64 = 1;

pub fn unstable_atom() -> Weight {
    let s6 = 6f64.sqrt();
    Weight::new((4.0 + s6) / 5.0, (s6 - 1.0) / 5.0)
}

pub fn stable_atom() -> Weight {
    Weight::new(-1.0, 1.0)
}

impl ScenarioConfig {
    /// Field-wise override: values set in `other` win.
    pub fn merged(self, other: ScenarioConfig) -> Self {
        Self {
            scenario: other.scenario.or(self.scenario),
            n: other.n.or(self.n),
            dt: other.dt.or(self.dt),
            t_end: other.t_end.or(self.t_end),
            seed: other.seed.or(self.seed),
            truncation: other.truncation.or(self.truncation),
            ground_truth: other.ground_truth.or(self.ground_truth),
            out_dir: other.out_dir.or(self.out_dir),
            count: other.count.or(self.count),
            init: other.init.or(self.init),
            sigma: other.sigma.or(self.sigma),
            record_every: other.record_every.or(self.record_every),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let scenario = self
            .scenario
            .ok_or_else(|| Error::Config("no scenario given".into()))?;
        // (n, dt, t_end, truncation, ground truth, count)
        let (n, dt, t_end, truncation, gt, count) = match scenario {
            Scenario::Atoms => (1, 1e-2, 1e4, 10, GroundTruth::x_squared(), 5),
            Scenario::Stability => (10_000, 1e-3, 1.0, 10, GroundTruth::x_squared(), 1),
            Scenario::SmallC => (100, 0.1, 2e4, 10, GroundTruth::sine(1e-3, 2), 1),
            Scenario::Linearized => (1000, 1e-3, 100.0, 10_000, GroundTruth::half_x_squared(), 1),
            Scenario::Gaussian => (1, 1e-3, 1.0, 10, GroundTruth::x_squared(), 1),
            Scenario::Stationary => (1, 1e-3, 1.0, 10, GroundTruth::x_squared(), 8),
            Scenario::SpectralTable => (1, 1e-3, 1.0, 10, GroundTruth::x_squared(), 10),
            Scenario::Verify => (1, 1e-3, 5.0, 10, GroundTruth::x_squared(), 1),
        };
        let r = Resolved {
            scenario,
            n: self.n.unwrap_or(n),
            dt: self.dt.unwrap_or(dt),
            t_end: self.t_end.unwrap_or(t_end),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            truncation: self.truncation.unwrap_or(truncation),
            ground_truth: self.ground_truth.clone().unwrap_or(gt),
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(scenario.name())),
            count: self.count.unwrap_or(count),
            init: self.init.clone(),
            sigma: self.sigma.unwrap_or(1e-3),
            record_every: self.record_every.unwrap_or(0),
        };
        r.validate()?;
        Ok(r)
    }
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("sigma", self.sigma)?;
        for (name, v) in [("n", self.n), ("truncation", self.truncation), ("count", self.count)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.ground_truth
            .validate()
            .map_err(|e| Error::Config(format!("ground_truth: {e}")))?;
        if let Some(kind) = &self.init {
            InitSpec::new(kind.clone(), self.seed).validate()?;
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Record interval: explicit, or about 1000 rows.
    fn record_interval(&self) -> usize {
        if self.record_every > 0 {
            self.record_every
        } else {
            (self.steps() / 1000).max(1)
        }
    }
}

/// Parse a flat JSON configuration; errors carry line and column.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Files produced by a scenario plus its error metrics.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub error_metrics: Value,
    /// Scenario-specific results echoed into the summary.
    pub results: Value,
    /// False when a built-in check failed (exit code 3).
    pub ok: bool,
}

impl Outcome {
    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

fn trace_bytes(trace: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("writing to memory");
    buf
}

/// Least-squares slope of `ln y` against `t`.
pub fn fit_exponential_rate(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mt = ts.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = ts.iter().zip(&ly).map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    num / den
}

fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

// ---------------------------------------------------------------- atoms

/// Result of driving one atom to rest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomRun {
    pub start: Weight,
    pub end: Weight,
    pub t: f64,
    pub speed: f64,
    pub basin: AtomBasin,
    /// `(t, w, loss)` every few steps.
    #[serde(skip)]
    pub path: Vec<(f64, Weight, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomBasin {
    /// Converged to the interior stationary atom.
    Interior,
    /// Converged into `{h ≥ 1}` (or to within the tolerance of it).
    RightOfOne,
    Unconverged,
}

pub const ATOM_SPEED_TOL: f64 = 1e-8;
pub const ATOM_POSITION_TOL: f64 = 1e-4;

/// Gradient descent of a single atom until its speed is below
/// [`ATOM_SPEED_TOL`] or `t_max` is reached.
pub fn converge_atom(start: Weight, f: &GroundTruth, dt: f64, t_max: f64, record_every: usize) -> Result<AtomRun> {
    let mut e = Ensemble::new(vec![start], Model::Full)?;
    let max_steps = (t_max / dt).round() as usize;
    let mut path = Vec::new();
    let mut k = 0usize;
    let speed = loop {
        let v = e.velocity(f, 0)?;
        let speed = v.0.hypot(v.1);
        if k % record_every.max(1) == 0 || speed <= ATOM_SPEED_TOL || k == max_steps {
            path.push((k as f64 * dt, e.weights()[0], e.loss(f)));
        }
        if speed <= ATOM_SPEED_TOL || k == max_steps {
            break speed;
        }
        e = e.step(dt, f)?;
        k += 1;
    };
    let end = e.weights()[0];
    let target = unstable_atom();
    let basin = if speed > ATOM_SPEED_TOL {
        AtomBasin::Unconverged
    } else if end.h >= 1.0 - ATOM_POSITION_TOL {
        AtomBasin::RightOfOne
    } else if (end.c - target.c).abs() <= ATOM_POSITION_TOL && (end.h - target.h).abs() <= ATOM_POSITION_TOL {
        AtomBasin::Interior
    } else {
        AtomBasin::Unconverged
    };
    Ok(AtomRun { start, end, t: k as f64 * dt, speed, basin, path })
}

/// Evenly spaced `count × count` grid on `c ∈ [−1, 2]`, `h ∈ [0, 1.5]`.
pub fn atom_grid(count: usize) -> Vec<Weight> {
    let lin = |lo: f64, hi: f64, i: usize| if count == 1 { lo } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
    (0..count)
        .flat_map(|i| (0..count).map(move |j| Weight::new(lin(-1.0, 2.0, i), lin(0.0, 1.5, j))))
        .collect()
}

fn run_atoms(cfg: &Resolved) -> Result<Outcome> {
    let starts = match &cfg.init {
        Some(InitKind::Atom { c, h }) => vec![Weight::new(*c, *h)],
        Some(_) => return Err(Error::Config("atoms scenario takes an atom init or none".into())),
        None => atom_grid(cfg.count),
    };
    let every = if cfg.record_every > 0 { cfg.record_every } else { 100 };
    let runs = starts
        .iter()
        .map(|&w| converge_atom(w, &cfg.ground_truth, cfg.dt, cfg.t_end, every))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("start,t,c,h,loss\n");
    for (i, run) in runs.iter().enumerate() {
        for (t, w, l) in &run.path {
            writeln!(csv, "{i},{t},{},{},{l}", w.c, w.h).unwrap();
        }
    }
    let target = unstable_atom();
    let interior_err = runs
        .iter()
        .filter(|r| r.basin == AtomBasin::Interior)
        .map(|r| (r.end.c - target.c).abs().max((r.end.h - target.h).abs()))
        .fold(0.0, f64::max);
    let unconverged = runs.iter().filter(|r| r.basin == AtomBasin::Unconverged).count();
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("trace.csv", csv.into_bytes());
    out.error_metrics = json!({
        "max_final_speed": runs.iter().map(|r| r.speed).fold(0.0, f64::max),
        "max_interior_distance": interior_err,
        "unconverged": unconverged,
    });
    out.results = json!({ "runs": runs });
    Ok(out)
}

// ---------------------------------------------------------------- stability

/// h-variance of a cloud over time, restricted to the particles selected at
/// the start.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CloudRun {
    pub center: Weight,
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    pub var_h: Vec<f64>,
    pub tracked: usize,
    pub fitted_rate: f64,
    pub predicted_rate: f64,
}

impl CloudRun {
    pub fn rate_error(&self) -> f64 {
        (self.fitted_rate - self.predicted_rate).abs() / self.predicted_rate.abs()
    }
}

/// Evolve a Gaussian cloud around `center` and fit the growth rate of the
/// h-variance. Particles starting at `h ≥ 1` sit in the frozen region and
/// are left out of the variance.
pub fn cloud_variance_run(
    center: Weight,
    sigma: f64,
    n: usize,
    seed: u64,
    f: &GroundTruth,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<CloudRun> {
    let mut e = init(&InitSpec::new(InitKind::Gaussian { c: center.c, h: center.h, sigma }, seed), n)?;
    let tracked: Vec<usize> = (0..n).filter(|&i| e.weights()[i].h < 1.0).collect();
    if tracked.len() < 2 {
        return Err(Error::Input("fewer than two particles start inside the domain".into()));
    }
    let var = |e: &Ensemble| variance(tracked.iter().map(|&i| e.weights()[i].h));
    let steps = (t_end / dt).round() as usize;
    let (mut times, mut losses, mut var_h) = (vec![0.0], vec![e.loss(f)], vec![var(&e)]);
    for k in 1..=steps {
        e = e.step(dt, f)?;
        if k % record_every.max(1) == 0 || k == steps {
            times.push(k as f64 * dt);
            losses.push(e.loss(f));
            var_h.push(var(&e));
        }
    }
    let fitted_rate = fit_exponential_rate(&times, &var_h);
    let predicted_rate = 2.0 * matrix_h(center, f).hh;
    Ok(CloudRun { center, times, losses, var_h, tracked: tracked.len(), fitted_rate, predicted_rate })
}

fn run_stability(cfg: &Resolved) -> Result<Outcome> {
    let every = if cfg.record_every > 0 { cfg.record_every } else { 10 };
    let f = &cfg.ground_truth;
    let unstable = cloud_variance_run(unstable_atom(), cfg.sigma, cfg.n, cfg.seed, f, cfg.dt, cfg.t_end, every)?;
    let stable = cloud_variance_run(stable_atom(), cfg.sigma, cfg.n, cfg.seed, f, cfg.dt, cfg.t_end, every)?;
    let mut trace = String::from("t,loss_unstable,var_h_unstable,loss_stable,var_h_stable\n");
    let mut theory = String::from("t,var_h_unstable,var_h_stable\n");
    for i in 0..unstable.times.len() {
        let t = unstable.times[i];
        writeln!(
            trace,
            "{t},{},{},{},{}",
            unstable.losses[i], unstable.var_h[i], stable.losses[i], stable.var_h[i]
        )
        .unwrap();
        writeln!(
            theory,
            "{t},{},{}",
            unstable.var_h[0] * (unstable.predicted_rate * t).exp(),
            stable.var_h[0] * (stable.predicted_rate * t).exp()
        )
        .unwrap();
    }
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("trace.csv", trace.into_bytes());
    out.file("theory.csv", theory.into_bytes());
    out.error_metrics = json!({
        "unstable_rate_rel_error": unstable.rate_error(),
        "stable_rate_rel_error": stable.rate_error(),
    });
    let summary = |r: &CloudRun| json!({
        "center": r.center, "tracked": r.tracked,
        "fitted_rate": r.fitted_rate, "predicted_rate": r.predicted_rate,
    });
    out.results = json!({ "unstable": summary(&unstable), "stable": summary(&stable) });
    Ok(out)
}

// ---------------------------------------------------------------- small-c

/// Particle simulation from `δ(c)·1[0,1](h)` next to the truncated
/// eigen-expansion.
#[derive(Clone, Debug)]
pub struct SmallCRun {
    pub trace: Trace,
    pub theory: Vec<f64>,
    pub start: Ensemble,
    pub end: Ensemble,
    pub state: SmallCState,
}

impl SmallCRun {
    /// Max relative loss error while the simulated loss is at least
    /// `floor` times its initial value.
    pub fn max_rel_error(&self, floor: f64) -> f64 {
        let l0 = self.trace.rows[0].loss;
        self.trace
            .rows
            .iter()
            .zip(&self.theory)
            .filter(|(r, _)| r.loss >= floor * l0)
            .map(|(r, th)| (r.loss - th).abs() / th)
            .fold(0.0, f64::max)
    }

    /// First recorded time with loss at most half the initial loss.
    pub fn halving_time(&self) -> Option<f64> {
        let l0 = self.trace.rows[0].loss;
        self.trace.rows.iter().find(|r| r.loss <= 0.5 * l0).map(|r| r.t)
    }
}

pub fn small_c_run(f: &GroundTruth, n: usize, dt: f64, t_end: f64, truncation: usize, record_every: usize) -> Result<SmallCRun> {
    let start = init(&InitSpec::new(InitKind::StratifiedUniform { c: 0.0, h_lo: 0.0, h_hi: 1.0 }, 0), n)?;
    let (trace, end) = simulate_from(start.clone(), f, SimOptions::new(dt, t_end).record_every(record_every))?;
    let state = SmallCState::new(f, truncation)?;
    let theory = trace.rows.iter().map(|r| state.at(r.t).loss()).collect();
    Ok(SmallCRun { trace, theory, start, end, state })
}

fn run_small_c(cfg: &Resolved) -> Result<Outcome> {
    let f = &cfg.ground_truth;
    let run = small_c_run(f, cfg.n, cfg.dt, cfg.t_end, cfg.truncation, cfg.record_interval())?;
    let mut theory = String::from("t,loss\n");
    for (r, th) in run.trace.rows.iter().zip(&run.theory) {
        writeln!(theory, "{},{th}", r.t).unwrap();
    }
    let at_end = run.state.at(run.end.t());
    let mut weights = String::from("h0,h,c,c_theory\n");
    let mut c_err: f64 = 0.0;
    let mut c_scale: f64 = 0.0;
    for (w0, w) in run.start.weights().iter().zip(run.end.weights()) {
        let c_th = at_end.predicted_c(w0.h);
        c_err = c_err.max((w.c - c_th).abs());
        c_scale = c_scale.max(c_th.abs());
        writeln!(weights, "{},{},{},{c_th}", w0.h, w.h, w.c).unwrap();
    }
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("trace.csv", trace_bytes(&run.trace));
    out.file("theory.csv", theory.into_bytes());
    out.file("weights.csv", weights.into_bytes());
    out.error_metrics = json!({
        "max_rel_loss_error_above_1pct": run.max_rel_error(0.01),
        "final_c_rel_error": if c_scale > 0.0 { c_err / c_scale } else { 0.0 },
        "range_defect": smallc_range_defect(f, cfg.truncation)?,
    });
    out.results = json!({
        "halving_time_sim": run.halving_time(),
        "dt_halvings": run.trace.meta.dt_halvings,
    });
    Ok(out)
}

// ---------------------------------------------------------------- linearized

#[derive(Clone, Debug)]
pub struct LinearizedRun {
    pub trace: Trace,
    pub theory: Vec<f64>,
}

impl LinearizedRun {
    /// Max relative error over rows with `floor ≤ loss ≤ loss(0)`.
    pub fn max_rel_error(&self, floor: f64) -> f64 {
        let l0 = self.trace.rows[0].loss;
        self.trace
            .rows
            .iter()
            .zip(&self.theory)
            .filter(|(r, _)| r.loss >= floor && r.loss <= l0)
            .map(|(r, th)| (r.loss - th).abs() / th)
            .fold(0.0, f64::max)
    }
}

/// Knot-only start spread uniformly over `[lo, hi]`, compared against the
/// linearization around `1[0,1]` for `f = x²/2`.
pub fn linearized_run(
    lo: f64,
    hi: f64,
    n: usize,
    dt: f64,
    t_end: f64,
    truncation: usize,
    record_every: usize,
) -> Result<LinearizedRun> {
    let f = GroundTruth::half_x_squared();
    let spec = InitSpec::new(InitKind::StratifiedUniform { c: 1.0, h_lo: lo, h_hi: hi }, 0).knot_only();
    let (trace, _) = simulate_from(init(&spec, n)?, &f, SimOptions::new(dt, t_end).record_every(record_every))?;
    let dp = MixedDensity::knot_box(lo, hi, 1.0 / (hi - lo)).plus(&MixedDensity::knot_box(0.0, 1.0, -1.0));
    let theory = linearized_loss_curve(&dp, &trace.times(), truncation)?;
    Ok(LinearizedRun { trace, theory })
}

fn run_linearized(cfg: &Resolved) -> Result<Outcome> {
    if cfg.ground_truth != GroundTruth::half_x_squared() {
        return Err(Error::Unsupported("the linearized scenario is defined for f = x^2/2".into()));
    }
    let (lo, hi) = match &cfg.init {
        None => (0.3, 0.8),
        Some(InitKind::StratifiedUniform { h_lo, h_hi, .. }) if h_lo < h_hi => (*h_lo, *h_hi),
        Some(_) => return Err(Error::Config("linearized scenario takes a stratified-uniform init".into())),
    };
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::Config("linearized init must lie inside [0, 1]".into()));
    }
    let run = linearized_run(lo, hi, cfg.n, cfg.dt, cfg.t_end, cfg.truncation, cfg.record_interval())?;
    let mut theory = String::from("t,loss\n");
    for (r, th) in run.trace.rows.iter().zip(&run.theory) {
        writeln!(theory, "{},{th}", r.t).unwrap();
    }
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("trace.csv", trace_bytes(&run.trace));
    out.file("theory.csv", theory.into_bytes());
    out.error_metrics = json!({ "max_rel_error_loss_above_1e-6": run.max_rel_error(1e-6) });
    out.results = json!({ "dt_halvings": run.trace.meta.dt_halvings });
    Ok(out)
}

// ---------------------------------------------------------------- gaussian

fn run_gaussian(cfg: &Resolved) -> Result<Outcome> {
    let f = &cfg.ground_truth;
    let (center, sigma) = match &cfg.init {
        None => (unstable_atom(), cfg.sigma),
        Some(InitKind::Gaussian { c, h, sigma }) => (Weight::new(*c, *h), *sigma),
        Some(InitKind::Atom { c, h }) => (Weight::new(*c, *h), 0.0),
        Some(_) => return Err(Error::Config("gaussian scenario takes a gaussian or atom init".into())),
    };
    let traj = evolve(GaussianState::isotropic(center, sigma), f, cfg.dt, cfg.t_end)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf)?;
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("trace.csv", buf);
    match classify(center, f) {
        Ok(verdict) => {
            // around a stationary center H is frozen and A_hh grows as e^{2 H_hh t}
            let rate = 2.0 * verdict.h[1][1];
            let a0 = traj[0].a.hh;
            let mut theory = String::from("t,A_hh\n");
            let mut err: f64 = 0.0;
            for g in &traj {
                let th = a0 * (rate * g.t).exp();
                if th > 0.0 {
                    err = err.max((g.a.hh - th).abs() / th);
                }
                writeln!(theory, "{},{th}", g.t).unwrap();
            }
            out.file("theory.csv", theory.into_bytes());
            out.error_metrics = json!({ "max_rel_error_A_hh": err });
            out.results = json!({ "verdict": verdict });
        }
        Err(Error::NotStationary { drift, .. }) => {
            out.error_metrics = json!({});
            out.results = json!({ "verdict": null, "drift_norm": drift });
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

// ---------------------------------------------------------------- tables

fn run_stationary(cfg: &Resolved) -> Result<Outcome> {
    if !cfg.ground_truth.is_x_squared() {
        return Err(Error::Unsupported("stationary families are defined for f = x^2".into()));
    }
    let table = family_table(cfg.count)?;
    let mut worst_knot: f64 = 0.0;
    for m in 1..=cfg.count {
        let fam = equidistant_family(m)?;
        let target = fam.delta_h.powi(2) / 6.0;
        for r in fam.residual_at_knots().into_iter().chain([fam.residual_at_one()]) {
            worst_knot = worst_knot.max((r - target).abs());
        }
    }
    let worst_residual = table
        .as_array()
        .map(|rows| rows.iter().filter_map(|r| r["residual"].as_f64()).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("table.json", serde_json::to_vec_pretty(&table)?);
    out.error_metrics = json!({
        "max_stationarity_residual": worst_residual,
        "max_knot_residual_deviation": worst_knot,
    });
    Ok(out)
}

fn run_spectral_table(cfg: &Resolved) -> Result<Outcome> {
    let rows = spectral_table(cfg.count);
    let mut buf = Vec::new();
    write_spectral_csv(&rows, &mut buf)?;
    let mut out = Outcome { ok: true, ..Outcome::default() };
    out.file("spectral.csv", buf);
    out.error_metrics = json!({
        "max_root_residual": rows.iter().map(|r| xi_equation(r.xi).abs()).fold(0.0, f64::max),
    });
    Ok(out)
}

fn run_verify(_cfg: &Resolved) -> Result<Outcome> {
    let mut report = run_oracle_suite()?;
    // wall time is reported once, in the summary
    report.wall_time_s = 0.0;
    let mut out = Outcome { ok: report.pass, ..Outcome::default() };
    out.file("report.json", serde_json::to_vec_pretty(&report)?);
    out.error_metrics = report
        .checks
        .iter()
        .map(|c| (c.name.clone(), json!(c.residual)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    out.results = json!({ "pass": report.pass });
    Ok(out)
}

/// Run one scenario and write its files plus `summary.json` into the output
/// directory. Returns the summary.
pub fn run(cfg: &Resolved) -> Result<(Value, bool)> {
    let clock = Instant::now();
    let outcome = match cfg.scenario {
        Scenario::Atoms => run_atoms(cfg),
        Scenario::Stability => run_stability(cfg),
        Scenario::SmallC => run_small_c(cfg),
        Scenario::Linearized => run_linearized(cfg),
        Scenario::Gaussian => run_gaussian(cfg),
        Scenario::Stationary => run_stationary(cfg),
        Scenario::SpectralTable => run_spectral_table(cfg),
        Scenario::Verify => run_verify(cfg),
    }?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    for (name, bytes) in &outcome.files {
        std::fs::write(cfg.out_dir.join(name), bytes)?;
    }
    let meta = json!({
        "scenario": cfg.scenario.name(),
        "seed": cfg.seed,
        "n": cfg.n,
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "ground_truth": cfg.ground_truth,
    });
    if outcome.files.iter().any(|(n, _)| n == "trace.csv") {
        std::fs::write(cfg.out_dir.join("trace.meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    }
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "config": cfg,
        "error_metrics": outcome.error_metrics,
        "results": outcome.results,
        "ok": outcome.ok,
        "wall_time_s": clock.elapsed().as_secs_f64(),
    });
    std::fs::write(cfg.out_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok((summary, outcome.ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_errors() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        let c = parse_config(r#"{"scenario":"small-c","ground_truth":{"kind":"sine","A":0.01,"k":2}}"#).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.scenario, Scenario::SmallC);
        assert_eq!(r.ground_truth, GroundTruth::sine(0.01, 2));
        assert_eq!(r.truncation, 10);

        let bad = parse_config(r#"{"scenario":"atoms","dt":-1}"#).unwrap();
        assert!(matches!(bad.resolve(), Err(Error::Config(_))));
        match parse_config("{\n  \"n\": 3,\n  \"bogus\": 1\n}") {
            Err(Error::Config(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config(r#"{"scenario":"nope"}"#).is_err());
    }

    #[test]
    fn merge_prefers_overrides() {
        let file = ScenarioConfig { n: Some(5), dt: Some(0.1), ..Default::default() };
        let flags = ScenarioConfig { n: Some(7), ..Default::default() };
        let m = file.merged(flags);
        assert_eq!((m.n, m.dt), (Some(7), Some(0.1)));
    }

    #[test]
    fn rate_fit_recovers_exponent() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (0.7 * t).exp()).collect();
        assert!((fit_exponential_rate(&ts, &ys) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn atom_grid_corners() {
        let g = atom_grid(5);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], Weight::new(-1.0, 0.0));
        assert_eq!(g[24], Weight::new(2.0, 1.5));
    }
}

//! N-particle gradient descent on the spline model. Each particle follows
//! `dw/dt = −∇u(w)`, so the ensemble is also a characteristics solver of the
//! mean-field transport equation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::quadrature::{gl8_on, pairwise_sum, GL_ORDER};
use crate::spline_model::{
    GroundTruth, Model, PiecewisePolynomial, Predictor, ResidualProfile, Weight,
};

/// Initial distribution of the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitKind {
    /// Every particle at `(c, h)`.
    Atom { c: f64, h: f64 },
    /// Independent uniform draws on a box.
    UniformBox { c_lo: f64, c_hi: f64, h_lo: f64, h_hi: f64 },
    /// Isotropic Gaussian around `(c, h)`.
    Gaussian { c: f64, h: f64, sigma: f64 },
    /// `δ(c − c₀)` times a uniform random knot on `[h_lo, h_hi]`.
    DeltaCUniformH { c: f64, h_lo: f64, h_hi: f64 },
    /// `δ(c − c₀)` times knots at the quantiles `(i − ½)/N` of `[h_lo, h_hi]`.
    StratifiedUniform { c: f64, h_lo: f64, h_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    #[serde(flatten)]
    pub kind: InitKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Model,
}

impl InitSpec {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self { kind, seed, model: Model::Full }
    }

    pub fn knot_only(mut self) -> Self {
        self.model = Model::KnotOnly;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!("invalid {name} range [{lo}, {hi}]")))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite")))
            }
        };
        match self.kind {
            InitKind::Atom { c, h } => {
                finite("c", c)?;
                finite("h", h)
            }
            InitKind::UniformBox { c_lo, c_hi, h_lo, h_hi } => {
                range("c", c_lo, c_hi)?;
                range("h", h_lo, h_hi)
            }
            InitKind::Gaussian { c, h, sigma } => {
                finite("c", c)?;
                finite("h", h)?;
                if sigma.is_finite() && sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("sigma must be >= 0, got {sigma}")))
                }
            }
            InitKind::DeltaCUniformH { c, h_lo, h_hi }
            | InitKind::StratifiedUniform { c, h_lo, h_hi } => {
                finite("c", c)?;
                range("h", h_lo, h_hi)
            }
        }
    }
}

/// Draw `n` particles from `spec`; deterministic in the seed.
pub fn init(spec: &InitSpec, n: usize) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |lo: f64, hi: f64| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let weights: Vec<Weight> = match spec.kind {
        InitKind::Atom { c, h } => vec![Weight::new(c, h); n],
        InitKind::UniformBox { c_lo, c_hi, h_lo, h_hi } => (0..n)
            .map(|_| {
                let c = draw(c_lo, c_hi);
                Weight::new(c, draw(h_lo, h_hi))
            })
            .collect(),
        InitKind::DeltaCUniformH { c, h_lo, h_hi } => {
            (0..n).map(|_| Weight::new(c, draw(h_lo, h_hi))).collect()
        }
        InitKind::StratifiedUniform { c, h_lo, h_hi } => (0..n)
            .map(|i| Weight::new(c, h_lo + (h_hi - h_lo) * (i as f64 + 0.5) / n as f64))
            .collect(),
        InitKind::Gaussian { c, h, sigma } => (0..n)
            .map(|_| {
                let zc: f64 = rng.sample(StandardNormal);
                let zh: f64 = rng.sample(StandardNormal);
                Weight::new(c + sigma * zc, h + sigma * zh)
            })
            .collect(),
    };
    Ensemble::new(weights, spec.model)
}

/// N weights at a common time.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    weights: Vec<Weight>,
    t: f64,
    model: Model,
}

impl Ensemble {
    pub fn new(mut weights: Vec<Weight>, model: Model) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("ensemble needs at least one particle".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Input(format!("particle {i} has a non-finite weight")));
        }
        if model == Model::KnotOnly {
            weights.iter_mut().for_each(|w| w.c = 1.0);
        }
        Ok(Self { weights, t: 0.0, model })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn weights(&self) -> &[Weight] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn model(&self) -> Model {
        self.model
    }

    /// Particle indices sorted by knot, ties by index.
    fn knot_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&i, &j| {
            self.weights[i]
                .h
                .total_cmp(&self.weights[j].h)
                .then(i.cmp(&j))
        });
        order
    }

    /// Piecewise-linear function with slope `Σ a_n` and intercept `Σ b_n`
    /// accumulated over the particles whose knot lies left of each piece.
    fn cumulative_linear(&self, per_particle: impl Fn(&Weight, usize) -> (f64, f64)) -> PiecewisePolynomial {
        let n = self.weights.len();
        let order = self.knot_order();
        let inv_n = 1.0 / n as f64;
        let mut cuts = vec![0.0];
        let mut coeffs = Vec::with_capacity(2 * n + 2);
        let (mut slope, mut intercept) = (0.0, 0.0);
        let mut k = 0;
        let absorb = |k: usize, slope: &mut f64, intercept: &mut f64| {
            let i = order[k];
            let (a, b) = per_particle(&self.weights[i], i);
            *slope += a;
            *intercept += b;
        };
        while k < n && self.weights[order[k]].h <= 0.0 {
            absorb(k, &mut slope, &mut intercept);
            k += 1;
        }
        loop {
            let next = match order.get(k) {
                Some(&i) if self.weights[i].h < 1.0 => self.weights[i].h,
                _ => 1.0,
            };
            coeffs.push(intercept * inv_n);
            coeffs.push(slope * inv_n);
            cuts.push(next);
            if next >= 1.0 {
                break;
            }
            while k < n && self.weights[order[k]].h == next {
                absorb(k, &mut slope, &mut intercept);
                k += 1;
            }
        }
        PiecewisePolynomial::new(cuts, 2, coeffs)
    }

    /// Residual integrals for the current prediction.
    pub fn profile<'a>(pred: &'a PiecewisePolynomial, f: &'a GroundTruth) -> ResidualProfile<'a> {
        ResidualProfile::new(pred, f, &[])
    }

    fn velocities_from(&self, profile: &ResidualProfile) -> Vec<(f64, f64)> {
        self.weights
            .iter()
            .map(|&w| {
                let (gc, gh) = profile.grad_u(w);
                match self.model {
                    Model::Full => (-gc, -gh),
                    Model::KnotOnly => (0.0, -gh),
                }
            })
            .collect()
    }

    /// All particle velocities `−∇u(w_n)`.
    pub fn velocities(&self, f: &GroundTruth) -> Vec<(f64, f64)> {
        let pred = self.prediction();
        self.velocities_from(&Self::profile(&pred, f))
    }

    /// Velocity of one particle.
    pub fn velocity(&self, f: &GroundTruth, idx: usize) -> Result<(f64, f64)> {
        let w = *self.weights.get(idx).ok_or_else(|| {
            Error::Input(format!("particle index {idx} out of range (n = {})", self.len()))
        })?;
        let pred = self.prediction();
        let (gc, gh) = ResidualProfile::new(&pred, f, &[]).grad_u(w);
        Ok(match self.model {
            Model::Full => (-gc, -gh),
            Model::KnotOnly => (0.0, -gh),
        })
    }

    pub fn loss(&self, f: &GroundTruth) -> f64 {
        let pred = self.prediction();
        Self::profile(&pred, f).loss()
    }

    fn advanced(&self, vel: &[(f64, f64)], dt: f64) -> Result<Self> {
        let mut weights = Vec::with_capacity(self.weights.len());
        for (i, (w, &(dc, dh))) in self.weights.iter().zip(vel).enumerate() {
            if !(dc.is_finite() && dh.is_finite()) {
                return Err(Error::NonFiniteVelocity { index: i, t: self.t, dc, dh });
            }
            weights.push(Weight::new(w.c + dt * dc, w.h + dt * dh));
        }
        Ok(Self { weights, t: self.t + dt, model: self.model })
    }

    /// One explicit Euler step; all particles move from the same snapshot.
    pub fn step(&self, dt: f64, f: &GroundTruth) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        self.advanced(&self.velocities(f), dt)
    }

    /// `(dL/dt, −(1/N)Σ|∇u(w_n)|²)`. The left side integrates the residual
    /// against the time derivative of the prediction; the right side sums the
    /// per-particle gradients.
    pub fn loss_rate_check(&self, f: &GroundTruth) -> (f64, f64) {
        let pred = self.prediction();
        let profile = Self::profile(&pred, f);
        let vel = self.velocities_from(&profile);
        let sq: Vec<f64> = vel.iter().map(|&(a, b)| a * a + b * b).collect();
        let rhs = -pairwise_sum(&sq) / self.len() as f64;

        // d f̂/dt = (1/N) Σ [ċ (x−h)₊ − c ḣ 1(x>h)]
        let dpred = self.cumulative_linear(|w, i| {
            let (dc, dh) = vel[i];
            (dc, -dc * w.h - w.c * dh)
        });
        let cuts = profile.cuts();
        let mut pieces = Vec::with_capacity(cuts.len());
        for seg in cuts.windows(2) {
            let mid = 0.5 * (seg[0] + seg[1]);
            let j = dpred.piece_index(mid);
            let mut terms = [0.0; GL_ORDER];
            for (k, (x, w)) in gl8_on(seg[0], seg[1]).into_iter().enumerate() {
                terms[k] = w * profile.residual(x) * dpred.eval_piece(j, x);
            }
            pieces.push(pairwise_sum(&terms));
        }
        (pairwise_sum(&pieces), rhs)
    }
}

impl Predictor for Ensemble {
    /// Exact piecewise-linear `f̂ = (1/N)Σ c_n (x − h_n)₊` from sorted knots and
    /// cumulative slopes.
    fn prediction(&self) -> PiecewisePolynomial {
        self.cumulative_linear(|w, _| (w.c, -w.c * w.h))
    }
}

/// One recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub loss: f64,
    pub weights: Option<Vec<Weight>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub ground_truth: Option<GroundTruth>,
    /// Steps that were retried with a halved dt because the loss went up.
    #[serde(default)]
    pub dt_halvings: usize,
}

/// Time series of the loss, optionally with particle snapshots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    /// CSV with header `t,loss[,c_0,h_0,...]`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self
            .rows
            .iter()
            .find_map(|r| r.weights.as_ref().map(Vec::len))
            .unwrap_or(0);
        write!(out, "t,loss")?;
        for i in 0..n {
            write!(out, ",c_{i},h_{i}")?;
        }
        writeln!(out)?;
        for row in &self.rows {
            write!(out, "{},{}", row.t, row.loss)?;
            if let Some(ws) = &row.weights {
                for w in ws {
                    write!(out, ",{},{}", w.c, w.h)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn meta_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.meta).expect("trace metadata serializes")
    }
}

/// Knobs for [`simulate_from`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Record every this many steps (the last step is always recorded).
    pub record_every: usize,
    pub snapshots: bool,
    /// Retry a step with two half steps whenever the loss increases.
    pub monotone_retry: bool,
}

impl SimOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, record_every: 1, snapshots: false, monotone_retry: true }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn with_snapshots(mut self, on: bool) -> Self {
        self.snapshots = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        Ok(())
    }
}

/// State plus cached loss and velocities, so each accepted step costs one
/// residual evaluation.
struct Stepper<'f> {
    state: Ensemble,
    loss: f64,
    vel: Vec<(f64, f64)>,
    f: &'f GroundTruth,
    halvings: usize,
}

const MAX_HALVINGS: u32 = 16;
const LOSS_INCREASE_TOL: f64 = 1e-12;

impl<'f> Stepper<'f> {
    fn new(state: Ensemble, f: &'f GroundTruth) -> Self {
        let (loss, vel) = Self::evaluate(&state, f);
        Self { state, loss, vel, f, halvings: 0 }
    }

    fn evaluate(state: &Ensemble, f: &GroundTruth) -> (f64, Vec<(f64, f64)>) {
        let pred = state.prediction();
        let profile = Ensemble::profile(&pred, f);
        (profile.loss(), state.velocities_from(&profile))
    }

    fn advance(&mut self, dt: f64, retry: bool, depth: u32) -> Result<()> {
        let next = self.state.advanced(&self.vel, dt)?;
        let (loss, vel) = Self::evaluate(&next, self.f);
        let increased = loss > self.loss * (1.0 + LOSS_INCREASE_TOL);
        if retry && increased && depth < MAX_HALVINGS {
            self.halvings += 1;
            self.advance(0.5 * dt, retry, depth + 1)?;
            return self.advance(0.5 * dt, retry, depth + 1);
        }
        self.state = next;
        self.loss = loss;
        self.vel = vel;
        Ok(())
    }
}

/// Run gradient descent from `start` and record the loss.
pub fn simulate_from(start: Ensemble, f: &GroundTruth, opts: SimOptions) -> Result<(Trace, Ensemble)> {
    opts.validate()?;
    let steps = (opts.t_end / opts.dt).round() as usize;
    let t0 = start.t();
    let mut stepper = Stepper::new(start, f);
    let record = |s: &Stepper| TraceRow {
        t: s.state.t(),
        loss: s.loss,
        weights: opts.snapshots.then(|| s.state.weights().to_vec()),
    };
    let mut rows = vec![record(&stepper)];
    for k in 1..=steps {
        stepper.advance(opts.dt, opts.monotone_retry, 0)?;
        // pin the clock to the grid so long runs do not drift
        stepper.state.t = t0 + k as f64 * opts.dt;
        if k % opts.record_every == 0 || k == steps {
            rows.push(record(&stepper));
        }
    }
    let meta = TraceMeta {
        n: stepper.state.len(),
        dt: opts.dt,
        t_end: opts.t_end,
        ground_truth: Some(f.clone()),
        dt_halvings: stepper.halvings,
        ..TraceMeta::default()
    };
    Ok((Trace { rows, meta }, stepper.state))
}

/// Initialize from `spec` and simulate to `t_end`.
pub fn simulate(
    spec: &InitSpec,
    n: usize,
    f: &GroundTruth,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<Trace> {
    let start = init(spec, n)?;
    let (mut trace, _) = simulate_from(start, f, SimOptions::new(dt, t_end).record_every(record_every))?;
    trace.meta.seed = spec.seed;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline_model::{phi, u_and_grad};

    fn x2() -> GroundTruth {
        GroundTruth::x_squared()
    }

    #[test]
    fn init_examples() {
        let e = init(&InitSpec::new(InitKind::Atom { c: 1.0, h: 0.5 }, 0), 100).unwrap();
        assert!(e.weights().iter().all(|w| *w == Weight::new(1.0, 0.5)));

        let spec = InitSpec::new(InitKind::StratifiedUniform { c: 1.0, h_lo: 0.3, h_hi: 0.8 }, 0)
            .knot_only();
        let e = init(&spec, 2).unwrap();
        let hs: Vec<f64> = e.weights().iter().map(|w| w.h).collect();
        assert!((hs[0] - 0.425).abs() < 1e-15 && (hs[1] - 0.675).abs() < 1e-15);
    }

    #[test]
    fn gaussian_init_mean() {
        let s6 = 6f64.sqrt();
        let (c, h) = ((4.0 + s6) / 5.0, (s6 - 1.0) / 5.0);
        let sigma = 1e-3;
        let e = init(&InitSpec::new(InitKind::Gaussian { c, h, sigma }, 7), 100).unwrap();
        let mc = e.weights().iter().map(|w| w.c).sum::<f64>() / 100.0;
        let mh = e.weights().iter().map(|w| w.h).sum::<f64>() / 100.0;
        let bound = 4.0 * sigma / 10.0;
        assert!((mc - c).abs() < bound && (mh - h).abs() < bound);
    }

    #[test]
    fn init_errors() {
        let bad = InitSpec::new(InitKind::UniformBox { c_lo: 1.0, c_hi: 0.0, h_lo: 0.0, h_hi: 1.0 }, 0);
        assert!(matches!(init(&bad, 3), Err(Error::Config(_))));
        let bad = InitSpec::new(InitKind::Gaussian { c: 0.0, h: 0.0, sigma: -1.0 }, 0);
        assert!(init(&bad, 3).is_err());
        assert!(init(&InitSpec::new(InitKind::Atom { c: 0.0, h: 0.0 }, 0), 0).is_err());
    }

    #[test]
    fn velocity_examples() {
        let f = x2();
        let e = Ensemble::new(vec![Weight::new(5.0, 1.1); 4], Model::Full).unwrap();
        assert_eq!(e.velocity(&f, 2).unwrap(), (0.0, 0.0));

        let e = Ensemble::new(vec![Weight::new(0.0, 0.0)], Model::Full).unwrap();
        let (dc, dh) = e.velocity(&f, 0).unwrap();
        assert!((dc - 0.25).abs() < 1e-15 && dh == 0.0);
        assert!(e.velocity(&f, 1).is_err());

        // f̂ = f exactly: two atoms reproducing a piecewise-linear truth
        let e = Ensemble::new(vec![Weight::new(2.0, 0.0), Weight::new(-2.0, 0.5)], Model::Full).unwrap();
        let f = GroundTruth::Piecewise {
            pieces: vec![
                crate::spline_model::PolyPiece { lo: 0.0, hi: 0.5, coeffs: crate::poly::Polynomial::new(vec![0.0, 1.0]) },
                crate::spline_model::PolyPiece { lo: 0.5, hi: 1.0, coeffs: crate::poly::Polynomial::constant(0.5) },
            ],
        };
        for (dc, dh) in e.velocities(&f) {
            assert!(dc.abs() < 1e-16 && dh.abs() < 1e-16);
        }
    }

    #[test]
    fn velocity_matches_u_and_grad() {
        let e = init(&InitSpec::new(InitKind::UniformBox { c_lo: -1.0, c_hi: 2.0, h_lo: -0.2, h_hi: 1.2 }, 3), 17).unwrap();
        let f = GroundTruth::sine(0.3, 3);
        let vel = e.velocities(&f);
        for (i, &w) in e.weights().iter().enumerate() {
            let g = u_and_grad(&e, w, &f);
            assert!((vel[i].0 + g.grad_c).abs() < 1e-14 && (vel[i].1 + g.grad_h).abs() < 1e-14);
        }
    }

    #[test]
    fn prediction_matches_naive_sum() {
        let e = init(&InitSpec::new(InitKind::UniformBox { c_lo: -1.0, c_hi: 2.0, h_lo: -0.5, h_hi: 1.5 }, 11), 9).unwrap();
        let pred = e.prediction();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let naive: f64 = e.weights().iter().map(|&w| phi(w, x)).sum::<f64>() / 9.0;
            assert!((pred.eval(x) - naive).abs() <= 8.0 * f64::EPSILON * (1.0 + naive.abs()), "{x}");
        }
    }

    #[test]
    fn step_examples() {
        let f = x2();
        let e = Ensemble::new(vec![Weight::new(0.0, 0.0)], Model::Full).unwrap();
        let next = e.step(0.1, &f).unwrap();
        assert!((next.weights()[0].c - 0.025).abs() < 1e-16 && next.weights()[0].h == 0.0);
        assert!((next.t() - 0.1).abs() < 1e-16);

        let still = Ensemble::new(vec![Weight::new(3.0, 1.5); 3], Model::Full).unwrap();
        let next = still.step(0.5, &f).unwrap();
        assert_eq!(next.weights(), still.weights());
        assert_eq!(next.t(), 0.5);

        assert!(e.step(0.0, &f).is_err());
    }

    #[test]
    fn equal_particles_stay_equal() {
        let f = x2();
        let mut e = Ensemble::new(
            vec![Weight::new(0.4, 0.2), Weight::new(0.4, 0.2), Weight::new(-0.3, 0.7)],
            Model::Full,
        )
        .unwrap();
        for _ in 0..200 {
            e = e.step(1e-2, &f).unwrap();
        }
        assert_eq!(e.weights()[0], e.weights()[1]);
    }

    #[test]
    fn non_finite_velocity_reports_particle() {
        let f = GroundTruth::Monomial { a: f64::MAX, p: 1 };
        let e = Ensemble::new(vec![Weight::new(1.0, 0.9), Weight::new(f64::MAX, 0.1)], Model::Full).unwrap();
        match e.step(1.0, &f) {
            Err(Error::NonFiniteVelocity { index, .. }) => assert!(index <= 1),
            other => panic!("expected non-finite velocity, got {other:?}"),
        }
    }

    #[test]
    fn simulate_examples() {
        let f = x2();
        let spec = InitSpec::new(InitKind::Atom { c: 0.5, h: 0.5 }, 0);
        let tr = simulate(&spec, 3, &f, 1e-3, 0.0, 1).unwrap();
        assert_eq!(tr.rows.len(), 1);
        assert!((tr.rows[0].loss - loss_of(&spec, &f)).abs() < 1e-16);

        let spec = InitSpec::new(InitKind::Atom { c: 0.7, h: 1.3 }, 0);
        let tr = simulate(&spec, 2, &f, 1e-2, 1.0, 10).unwrap();
        assert_eq!(tr.rows.len(), 11);
        assert!(tr.rows.iter().all(|r| (r.loss - 0.1).abs() < 1e-16));
    }

    fn loss_of(spec: &InitSpec, f: &GroundTruth) -> f64 {
        init(spec, 1).unwrap().loss(f)
    }

    #[test]
    fn loss_rate_examples() {
        let f = x2();
        let e = Ensemble::new(vec![Weight::new(2.0, 1.2)], Model::Full).unwrap();
        assert_eq!(e.loss_rate_check(&f), (0.0, 0.0));

        let e = Ensemble::new(vec![Weight::new(0.0, 0.0)], Model::Full).unwrap();
        let (lhs, rhs) = e.loss_rate_check(&f);
        assert!((lhs + 1.0 / 16.0).abs() < 1e-15 && (rhs + 1.0 / 16.0).abs() < 1e-15);

        let e = init(&InitSpec::new(InitKind::UniformBox { c_lo: -1.0, c_hi: 1.0, h_lo: -0.1, h_hi: 1.1 }, 5), 50).unwrap();
        let (lhs, rhs) = e.loss_rate_check(&GroundTruth::half_x_squared());
        assert!(((lhs - rhs) / lhs).abs() <= 1e-10, "{lhs} {rhs}");
    }

    #[test]
    fn csv_layout() {
        let spec = InitSpec::new(InitKind::Atom { c: 0.5, h: 0.5 }, 0);
        let (tr, _) = simulate_from(
            init(&spec, 2).unwrap(),
            &x2(),
            SimOptions::new(0.5, 1.0).with_snapshots(true),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,loss,c_0,h_0,c_1,h_1"));
        assert_eq!(lines.count(), 3);
    }
}

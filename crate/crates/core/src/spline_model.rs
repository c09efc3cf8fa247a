//! The free-knot linear spline instance `φ(c, h, x) = c·(x − h)₊` on `[0, 1]`
//! with Lebesgue measure, and the residual integrals every other module
//! builds on.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quadrature::{gl8, gl8_on, pairwise_sum, KnotPartition, GL_ORDER};

/// A point `(c, h)` of parameter space: output coefficient and knot location.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub c: f64,
    pub h: f64,
}

impl Weight {
    pub const fn new(c: f64, h: f64) -> Self {
        Self { c, h }
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.h.is_finite()
    }
}

/// Which coordinates of a weight are trainable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// `φ = c·(x − h)₊`, both `c` and `h` move.
    #[default]
    Full,
    /// `φ = (x − h)₊`: `c` is pinned to 1 and only the knot moves.
    KnotOnly,
}

/// `c·max(x − h, 0)`.
pub fn phi(w: Weight, x: f64) -> f64 {
    w.c * (x - w.h).max(0.0)
}

/// `((x − h)₊, −c·1[x > h])`. At the tie `x = h` the indicator is 0.
pub fn grad_phi(w: Weight, x: f64) -> (f64, f64) {
    if x > w.h {
        (x - w.h, -w.c)
    } else {
        (0.0, 0.0)
    }
}

/// A polynomial on `[lo, hi]`, one piece of a piecewise ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Polynomial,
}

/// Target function `f` on `[0, 1]`. Every kind has closed-form antiderivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroundTruth {
    /// `a·x^p`
    Monomial { a: f64, p: u32 },
    /// `A·sin(kπx)`
    Sine {
        #[serde(rename = "A")]
        amplitude: f64,
        k: u32,
    },
    /// Polynomials on consecutive intervals covering `[0, 1]`.
    Piecewise { pieces: Vec<PolyPiece> },
}

impl GroundTruth {
    pub fn x_squared() -> Self {
        GroundTruth::Monomial { a: 1.0, p: 2 }
    }

    pub fn half_x_squared() -> Self {
        GroundTruth::Monomial { a: 0.5, p: 2 }
    }

    pub fn sine(amplitude: f64, k: u32) -> Self {
        GroundTruth::Sine { amplitude, k }
    }

    pub fn zero() -> Self {
        GroundTruth::Monomial { a: 0.0, p: 0 }
    }

    pub fn is_x_squared(&self) -> bool {
        matches!(self, GroundTruth::Monomial { a, p: 2 } if *a == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroundTruth::Monomial { a, .. } if !a.is_finite() => {
                Err(Error::Config("monomial coefficient must be finite".into()))
            }
            GroundTruth::Sine { amplitude, .. } if !amplitude.is_finite() => {
                Err(Error::Config("sine amplitude must be finite".into()))
            }
            GroundTruth::Piecewise { pieces } => {
                let (first, last) = match (pieces.first(), pieces.last()) {
                    (Some(f), Some(l)) => (f, l),
                    _ => return Err(Error::Config("piecewise ground truth has no pieces".into())),
                };
                let contiguous = pieces.windows(2).all(|w| w[0].hi == w[1].lo);
                let ordered = pieces.iter().all(|p| p.lo < p.hi);
                if first.lo != 0.0 || last.hi != 1.0 || !contiguous || !ordered {
                    return Err(Error::Config(
                        "piecewise ground truth must tile [0, 1] with ordered, contiguous pieces"
                            .into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn piece_at(pieces: &[PolyPiece], x: f64) -> &PolyPiece {
        let i = pieces.partition_point(|p| p.hi <= x);
        &pieces[i.min(pieces.len() - 1)]
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GroundTruth::Monomial { a, p } => a * x.powi(*p as i32),
            GroundTruth::Sine { amplitude, k } => amplitude * (*k as f64 * PI * x).sin(),
            GroundTruth::Piecewise { pieces } => Self::piece_at(pieces, x).coeffs.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            GroundTruth::Monomial { p: 0, .. } => 0.0,
            GroundTruth::Monomial { a, p } => a * *p as f64 * x.powi(*p as i32 - 1),
            GroundTruth::Sine { amplitude, k } => {
                let w = *k as f64 * PI;
                amplitude * w * (w * x).cos()
            }
            GroundTruth::Piecewise { pieces } => {
                Self::piece_at(pieces, x).coeffs.derivative().eval(x)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            GroundTruth::Monomial { p: 0 | 1, .. } => 0.0,
            GroundTruth::Monomial { a, p } => {
                let pf = *p as f64;
                a * pf * (pf - 1.0) * x.powi(*p as i32 - 2)
            }
            GroundTruth::Sine { amplitude, k } => {
                let w = *k as f64 * PI;
                -amplitude * w * w * (w * x).sin()
            }
            GroundTruth::Piecewise { pieces } => Self::piece_at(pieces, x)
                .coeffs
                .derivative()
                .derivative()
                .eval(x),
        }
    }

    /// Interior points of `(0, 1)` where quadrature pieces must split: the
    /// breakpoints of a piecewise truth, or a grid of eight panels per period
    /// for a sine so that order-8 quadrature stays at roundoff level.
    pub fn quadrature_cuts(&self) -> Vec<f64> {
        match self {
            GroundTruth::Piecewise { pieces } => pieces
                .iter()
                .skip(1)
                .map(|p| p.lo)
                .filter(|&x| x > 0.0 && x < 1.0)
                .collect(),
            GroundTruth::Sine { k, .. } if *k > 0 => {
                let m = 4 * *k as usize;
                (1..m).map(|i| i as f64 / m as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    /// `∫_a^b x^j f(x) dx` in closed form, for `j ∈ {0, 1}`, `0 ≤ a ≤ b ≤ 1`.
    pub fn moment(&self, a: f64, b: f64, j: u32) -> f64 {
        debug_assert!(j <= 1);
        match self {
            GroundTruth::Monomial { a: coef, p } => {
                let e = (p + j + 1) as i32;
                coef * (b.powi(e) - a.powi(e)) / e as f64
            }
            GroundTruth::Sine { amplitude, k } => {
                if *k == 0 {
                    return 0.0;
                }
                let w = *k as f64 * PI;
                let anti = |x: f64| match j {
                    0 => -(w * x).cos() / w,
                    _ => -x * (w * x).cos() / w + (w * x).sin() / (w * w),
                };
                amplitude * (anti(b) - anti(a))
            }
            GroundTruth::Piecewise { pieces } => pieces
                .iter()
                .filter_map(|p| {
                    let lo = p.lo.max(a);
                    let hi = p.hi.min(b);
                    (lo < hi).then(|| {
                        let q = if j == 0 { p.coeffs.clone() } else { p.coeffs.shift_up() };
                        q.integral(lo, hi)
                    })
                })
                .sum(),
        }
    }

    /// `∫_a^b f(x)² dx` in closed form.
    pub fn square_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            GroundTruth::Monomial { a: coef, p } => {
                let e = (2 * p + 1) as i32;
                coef * coef * (b.powi(e) - a.powi(e)) / e as f64
            }
            GroundTruth::Sine { amplitude, k } => {
                if *k == 0 {
                    return 0.0;
                }
                let w = *k as f64 * PI;
                let anti = |x: f64| 0.5 * x - (2.0 * w * x).sin() / (4.0 * w);
                amplitude * amplitude * (anti(b) - anti(a))
            }
            GroundTruth::Piecewise { pieces } => pieces
                .iter()
                .filter_map(|p| {
                    let lo = p.lo.max(a);
                    let hi = p.hi.min(b);
                    (lo < hi).then(|| p.coeffs.mul(&p.coeffs).integral(lo, hi))
                })
                .sum(),
        }
    }
}

/// A piecewise polynomial on `[0, 1]` stored with a uniform coefficient
/// stride; used for every prediction `f̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePolynomial {
    cuts: Vec<f64>,
    stride: usize,
    coeffs: Vec<f64>,
}

impl PiecewisePolynomial {
    /// `cuts` strictly increasing from 0 to 1; `coeffs` holds `stride`
    /// ascending coefficients per piece.
    pub fn new(cuts: Vec<f64>, stride: usize, coeffs: Vec<f64>) -> Self {
        debug_assert!(cuts.len() >= 2);
        debug_assert_eq!(coeffs.len(), (cuts.len() - 1) * stride);
        Self { cuts, stride, coeffs }
    }

    pub fn zero() -> Self {
        Self::new(vec![0.0, 1.0], 1, vec![0.0])
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn num_pieces(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn piece_coeffs(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.stride..(i + 1) * self.stride]
    }

    pub fn eval_piece(&self, i: usize, x: f64) -> f64 {
        self.piece_coeffs(i).iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    /// Index of the piece containing `x`; points outside `[0, 1]` use the end pieces.
    pub fn piece_index(&self, x: f64) -> usize {
        let i = self.cuts.partition_point(|&c| c <= x);
        i.saturating_sub(1).min(self.num_pieces() - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_piece(self.piece_index(x), x)
    }
}

/// Anything that defines a prediction `f̂` on `[0, 1]`.
pub trait Predictor {
    fn prediction(&self) -> PiecewisePolynomial;
}

/// A single atom of unit mass.
impl Predictor for Weight {
    fn prediction(&self) -> PiecewisePolynomial {
        if self.h >= 1.0 {
            return PiecewisePolynomial::zero();
        }
        let line = [-self.c * self.h, self.c];
        if self.h <= 0.0 {
            PiecewisePolynomial::new(vec![0.0, 1.0], 2, line.to_vec())
        } else {
            PiecewisePolynomial::new(vec![0.0, self.h, 1.0], 2, vec![0.0, 0.0, line[0], line[1]])
        }
    }
}

/// Per-piece integrals of the residual `r = f̂ − f` on the union of the
/// prediction, ground-truth and caller-supplied cuts, with suffix sums so
/// that `∫_h^1 r` and `∫_h^1 x·r` are O(1) lookups at any cut.
#[derive(Clone, Debug)]
pub struct ResidualProfile<'a> {
    prediction: &'a PiecewisePolynomial,
    truth: &'a GroundTruth,
    cuts: Vec<f64>,
    pred_piece: Vec<usize>,
    tail0: Vec<f64>,
    tail1: Vec<f64>,
    square: Vec<f64>,
}

impl<'a> ResidualProfile<'a> {
    pub fn new(
        prediction: &'a PiecewisePolynomial,
        truth: &'a GroundTruth,
        extra_cuts: &[f64],
    ) -> Self {
        let mut cuts: Vec<f64> = prediction.cuts().to_vec();
        let bp = truth.quadrature_cuts();
        if !bp.is_empty() || !extra_cuts.is_empty() {
            cuts.extend(bp);
            cuts.extend(extra_cuts.iter().copied().filter(|&x| x > 0.0 && x < 1.0));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
        }
        let pieces = cuts.len() - 1;
        let mut pred_piece = Vec::with_capacity(pieces);
        let mut m0 = Vec::with_capacity(pieces);
        let mut m1 = Vec::with_capacity(pieces);
        let mut square = Vec::with_capacity(pieces);
        let pcuts = prediction.cuts();
        let mut j = 0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            while j + 1 < prediction.num_pieces() && pcuts[j + 1] <= a {
                j += 1;
            }
            pred_piece.push(j);
            let mut t0 = [0.0; GL_ORDER];
            let mut t1 = [0.0; GL_ORDER];
            let mut t2 = [0.0; GL_ORDER];
            for (k, (x, wt)) in gl8_on(a, b).into_iter().enumerate() {
                let r = prediction.eval_piece(j, x) - truth.eval(x);
                t0[k] = wt * r;
                t1[k] = wt * x * r;
                t2[k] = wt * r * r;
            }
            m0.push(pairwise_sum(&t0));
            m1.push(pairwise_sum(&t1));
            square.push(pairwise_sum(&t2));
        }
        let suffix = |m: &[f64]| {
            let mut tail = vec![0.0; m.len() + 1];
            for i in (0..m.len()).rev() {
                tail[i] = tail[i + 1] + m[i];
            }
            tail
        };
        Self {
            prediction,
            truth,
            tail0: suffix(&m0),
            tail1: suffix(&m1),
            cuts,
            pred_piece,
            square,
        }
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn residual(&self, x: f64) -> f64 {
        self.prediction.eval(x) - self.truth.eval(x)
    }

    /// `½∫₀¹ r²`.
    pub fn loss(&self) -> f64 {
        0.5 * pairwise_sum(&self.square)
    }

    /// `(∫_{h₊}^1 r dx, ∫_{h₊}^1 x·r dx)` with `h₊ = max(h, 0)`; zero for `h ≥ 1`.
    pub fn tail(&self, h: f64) -> (f64, f64) {
        if h >= 1.0 {
            return (0.0, 0.0);
        }
        if h <= 0.0 {
            return (self.tail0[0], self.tail1[0]);
        }
        let i = self.cuts.partition_point(|&c| c < h);
        if self.cuts[i] == h {
            return (self.tail0[i], self.tail1[i]);
        }
        // h falls strictly inside piece i-1
        let piece = self.pred_piece[i - 1];
        let b = self.cuts[i];
        let r = |x: f64| self.prediction.eval_piece(piece, x) - self.truth.eval(x);
        let p0 = gl8(h, b, r);
        let p1 = gl8(h, b, |x| x * r(x));
        (self.tail0[i] + p0, self.tail1[i] + p1)
    }

    /// `∇_w u(w) = (∫ r·(x−h)₊, −c·∫_h^1 r)`.
    pub fn grad_u(&self, w: Weight) -> (f64, f64) {
        if w.h >= 1.0 {
            return (0.0, 0.0);
        }
        let (s0, s1) = self.tail(w.h);
        (s1 - w.h * s0, -w.c * s0)
    }

    /// `u(w) = ∫ r·φ(w, ·)`.
    pub fn u(&self, w: Weight) -> f64 {
        w.c * self.grad_u(w).0
    }
}

/// Value and gradient of `u(w) = ∫₀¹ (f̂ − f)(x)·φ(w, x) dx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UGrad {
    pub u: f64,
    pub grad_c: f64,
    pub grad_h: f64,
}

impl UGrad {
    pub fn norm(&self) -> f64 {
        self.grad_c.hypot(self.grad_h)
    }
}

/// `u` and `∇u` at `w` for the prediction defined by `state`.
pub fn u_and_grad(state: &impl Predictor, w: Weight, f: &GroundTruth) -> UGrad {
    let pred = state.prediction();
    let profile = ResidualProfile::new(&pred, f, &[w.h]);
    let (grad_c, grad_h) = profile.grad_u(w);
    UGrad { u: w.c * grad_c, grad_c, grad_h }
}

/// Quadratic loss `½∫₀¹ (f̂ − f)²` of a state.
pub fn loss(state: &impl Predictor, f: &GroundTruth) -> f64 {
    let pred = state.prediction();
    ResidualProfile::new(&pred, f, &[]).loss()
}

/// Partition holding the ground-truth breakpoints and the given knots.
pub fn partition_for(f: &GroundTruth, knots: impl IntoIterator<Item = f64>) -> KnotPartition {
    KnotPartition::unit_with(f.quadrature_cuts().into_iter().chain(knots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::piecewise_integral;

    fn atom_star() -> Weight {
        let s6 = 6f64.sqrt();
        Weight::new((4.0 + s6) / 5.0, (s6 - 1.0) / 5.0)
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(Weight::new(2.0, 0.5), 0.75), 0.5);
        assert_eq!(phi(Weight::new(7.0, 1.2), 0.9), 0.0);
        let v = phi(atom_star(), 1.0);
        assert!((v - 0.915_959_179_422_654_3).abs() < 1e-15, "{v}");
    }

    #[test]
    fn grad_phi_examples() {
        assert_eq!(grad_phi(Weight::new(2.0, 0.5), 0.75), (0.25, -2.0));
        assert_eq!(grad_phi(Weight::new(3.0, 0.9), 0.1), (0.0, 0.0));
        assert_eq!(grad_phi(Weight::new(1.0, 0.3), 0.3), (0.0, 0.0));
    }

    #[test]
    fn u_grad_examples() {
        let f = GroundTruth::x_squared();
        let g = u_and_grad(&Weight::new(5.0, 1.1), Weight::new(5.0, 1.1), &f);
        assert_eq!((g.grad_c, g.grad_h), (0.0, 0.0));

        let g = u_and_grad(&atom_star(), atom_star(), &f);
        assert!(g.grad_c.abs() < 1e-12 && g.grad_h.abs() < 1e-12, "{g:?}");

        let g = u_and_grad(&Weight::new(0.0, 0.5), Weight::new(1.0, 0.0), &f);
        assert!((g.u + 0.25).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_closed_forms_match_quadrature() {
        let truths = [
            GroundTruth::x_squared(),
            GroundTruth::Monomial { a: -0.3, p: 5 },
            GroundTruth::sine(1e-3, 2),
            GroundTruth::sine(0.01, 3),
            GroundTruth::Piecewise {
                pieces: vec![
                    PolyPiece { lo: 0.0, hi: 0.4, coeffs: Polynomial::new(vec![0.0, 1.0]) },
                    PolyPiece { lo: 0.4, hi: 1.0, coeffs: Polynomial::new(vec![0.56, -1.0, 1.0]) },
                ],
            },
        ];
        for f in &truths {
            f.validate().unwrap();
            let p = partition_for(f, [0.25, 0.7]).refined().refined();
            for (a, b) in [(0.0, 1.0), (0.25, 0.7)] {
                let sub = KnotPartition::from_cuts(
                    p.cuts().iter().copied().filter(|&x| x >= a && x <= b).collect(),
                )
                .unwrap();
                let q0 = piecewise_integral(|x| f.eval(x), &sub).unwrap();
                let q1 = piecewise_integral(|x| x * f.eval(x), &sub).unwrap();
                let q2 = piecewise_integral(|x| f.eval(x).powi(2), &sub).unwrap();
                assert!((q0 - f.moment(a, b, 0)).abs() < 1e-14, "{f:?}");
                assert!((q1 - f.moment(a, b, 1)).abs() < 1e-14, "{f:?}");
                assert!((q2 - f.square_integral(a, b)).abs() < 1e-14, "{f:?}");
            }
        }
    }

    #[test]
    fn piecewise_truth_validation() {
        let bad = GroundTruth::Piecewise {
            pieces: vec![PolyPiece { lo: 0.0, hi: 0.5, coeffs: Polynomial::constant(1.0) }],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn derivatives() {
        let f = GroundTruth::x_squared();
        assert_eq!(f.derivative(0.5), 1.0);
        assert_eq!(f.second_derivative(0.3), 2.0);
        let s = GroundTruth::sine(1.0, 1);
        assert!((s.second_derivative(0.5) + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn tail_inside_a_piece_matches_cut_version() {
        let f = GroundTruth::sine(0.1, 3);
        let pred = Weight::new(0.7, 0.2).prediction();
        let with_cut = ResidualProfile::new(&pred, &f, &[0.55]);
        let without = ResidualProfile::new(&pred, &f, &[]);
        let (a0, a1) = with_cut.tail(0.55);
        let (b0, b1) = without.tail(0.55);
        assert!((a0 - b0).abs() < 1e-15 && (a1 - b1).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_right_of_one() {
        let f = GroundTruth::sine(1.0, 1);
        let g = u_and_grad(&Weight::new(2.0, 0.3), Weight::new(-4.0, 1.0), &f);
        assert_eq!((g.u, g.grad_c, g.grad_h), (0.0, 0.0, 0.0));
    }
}

//! Composite Gauss–Legendre quadrature over knot partitions, plus the
//! fixed-order pairwise reduction used for every sum in the crate.

use crate::error::{Error, Result};

/// Nodes of the 8-point Gauss–Legendre rule on [-1, 1] (positive half).
const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Points per piece of the composite rule.
pub const GL_ORDER: usize = 8;

/// Nodes and weights of the 8-point rule mapped onto `[a, b]`.
pub fn gl8_on(a: f64, b: f64) -> [(f64, f64); GL_ORDER] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); GL_ORDER];
    for i in 0..4 {
        let dx = half * GL8_NODES[i];
        let w = half * GL8_WEIGHTS[i];
        out[3 - i] = (mid - dx, w);
        out[4 + i] = (mid + dx, w);
    }
    out
}

/// Integral of `g` over `[a, b]` with one 8-point panel.
pub fn gl8(a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    let terms = gl8_on(a, b).map(|(x, w)| w * g(x));
    pairwise_sum(&terms)
}

/// Pairwise (cascade) summation with a fixed split order, so a given input
/// slice always reduces to the same bits.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sorted cut points of `[0, 1]`: always contains 0 and 1, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotPartition {
    cuts: Vec<f64>,
}

impl KnotPartition {
    /// Unit interval with extra cuts; points outside (0, 1) and duplicates are dropped.
    pub fn unit_with<I: IntoIterator<Item = f64>>(extra: I) -> Self {
        let mut cuts: Vec<f64> = extra
            .into_iter()
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        Self { cuts }
    }

    /// Partition from explicit cuts, which must be strictly increasing with at
    /// least two entries.
    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(Error::DegenerateDomain(format!(
                "partition needs at least two cuts, got {}",
                cuts.len()
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateDomain(
                "partition cuts must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { cuts })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cuts.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn len(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every piece split in two at its midpoint.
    pub fn refined(&self) -> Self {
        let mut cuts = Vec::with_capacity(2 * self.cuts.len());
        for (a, b) in self.pieces() {
            cuts.push(a);
            cuts.push(0.5 * (a + b));
        }
        cuts.push(*self.cuts.last().expect("nonempty"));
        Self { cuts }
    }
}

/// Composite order-8 Gauss–Legendre integral of `g` over the partition.
/// Exact for integrands that are polynomials of degree ≤ 15 on every piece.
pub fn piecewise_integral(g: impl FnMut(f64) -> f64, partition: &KnotPartition) -> Result<f64> {
    piecewise_integral_cuts(g, partition.cuts())
}

/// Same as [`piecewise_integral`] on a raw cut list.
pub fn piecewise_integral_cuts(mut g: impl FnMut(f64) -> f64, cuts: &[f64]) -> Result<f64> {
    if cuts.len() < 2 {
        return Err(Error::DegenerateDomain("empty partition".into()));
    }
    let pieces: Vec<f64> = cuts.windows(2).map(|w| gl8(w[0], w[1], &mut g)).collect();
    Ok(pairwise_sum(&pieces))
}

/// Uniform composite cut list on `[a, b]` with `pieces` panels.
pub fn uniform_cuts(a: f64, b: f64, pieces: usize) -> Vec<f64> {
    let n = pieces.max(1);
    (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_on_unit_interval() {
        let v = piecewise_integral(|x| x * x, &KnotPartition::unit_with([])).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn relu_times_square() {
        let h = 0.0_f64;
        let v = piecewise_integral(|x| (x - h).max(0.0) * x * x, &KnotPartition::unit_with([h]))
            .unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sine_symmetry() {
        let p = KnotPartition::unit_with([0.5]);
        let v = piecewise_integral(|x| (2.0 * std::f64::consts::PI * x).sin(), &p).unwrap();
        assert!(v.abs() <= 1e-12);
    }

    #[test]
    fn degree_fifteen_exact() {
        let v = piecewise_integral(|x| x.powi(15), &KnotPartition::unit_with([0.3])).unwrap();
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_partition_is_an_error() {
        assert!(matches!(
            piecewise_integral_cuts(|x| x, &[0.5]),
            Err(Error::DegenerateDomain(_))
        ));
        assert!(KnotPartition::from_cuts(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn partition_normalizes_cuts() {
        let p = KnotPartition::unit_with([0.5, -1.0, 0.5, 2.0, 0.25]);
        assert_eq!(p.cuts(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(p.refined().cuts(), &[0.0, 0.125, 0.25, 0.375, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn pairwise_is_order_fixed() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(pairwise_sum(&xs).to_bits(), pairwise_sum(&xs).to_bits());
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-13);
    }
}

//! The moment closure against an actual particle cloud.

use wideflow::gaussian_local::matrix_h;
use wideflow::scenario::{cloud_variance_run, unstable_atom};
use wideflow::GroundTruth;

#[test]
fn particle_variance_follows_closure_rate() {
    let f = GroundTruth::x_squared();
    let center = unstable_atom();
    let hhh = matrix_h(center, &f).hh;
    let horizon = 0.2 / hhh.abs();
    let run = cloud_variance_run(center, 1e-3, 10_000, 5, &f, 1e-3, horizon, 20).unwrap();
    assert!(run.rate_error() <= 0.1, "{} vs {}", run.fitted_rate, run.predicted_rate);
}

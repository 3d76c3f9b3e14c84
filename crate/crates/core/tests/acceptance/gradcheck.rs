//! Central finite differences on a 64-bit copy of a model.

use fsgr_core::Parameters;

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
/// Below this magnitude both gradients count as zero.
const ZERO: f64 = 1e-9;

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub passed: usize,
    pub total: usize,
    pub worst: f64,
}

impl Tally {
    pub fn merge(&mut self, other: Tally) {
        self.passed += other.passed;
        self.total += other.total;
        self.worst = self.worst.max(other.worst);
    }

    pub fn fraction(&self) -> f64 {
        self.passed as f64 / self.total as f64
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < ZERO {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Compares `analytic` with central differences of `loss` around `params`.
pub fn check<P, L>(params: &P, analytic: &P, loss: L) -> Tally
where
    P: Parameters<f64> + Clone,
    L: Fn(&P) -> f64,
{
    let base = params.flatten();
    let grads = analytic.flatten();
    let mut probe = params.clone();
    let mut x = base.clone();
    let mut tally = Tally::default();
    for i in 0..base.len() {
        x[i] = base[i] + STEP;
        probe.assign_flat(&x);
        let up = loss(&probe);
        x[i] = base[i] - STEP;
        probe.assign_flat(&x);
        let down = loss(&probe);
        x[i] = base[i];
        let numeric = (up - down) / (2.0 * STEP);
        let err = relative_error(grads[i], numeric);
        tally.total += 1;
        if err < REL_TOL {
            tally.passed += 1;
        }
        tally.worst = tally.worst.max(err);
    }
    tally
}

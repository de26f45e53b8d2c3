use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{floor, lgamma, ln, ln1p, log_sum_exp};
use crate::{Error, Result};

/// `{1.25, 1.5, ..., 63.75, 64}`: every quarter step, integers included.
pub fn default_orders() -> Vec<f64> {
    (5..=256).map(|i| i as f64 / 4.0).collect()
}

fn check_rate(q: f64, sigma: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(alloc::format!("sampling rate must lie in (0, 1], got {q}")));
    }
    if sigma == 0.0 {
        return Err(Error::InfiniteEpsilon);
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(alloc::format!("noise multiplier must be non-negative, got {sigma}")));
    }
    Ok(())
}

/// `log A_alpha` of the Poisson-subsampled Gaussian at integer `alpha`:
/// `sum_k C(alpha, k) (1-q)^(alpha-k) q^k exp((k^2 - k) / (2 sigma^2))`.
fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    if alpha <= 1 {
        return 0.0;
    }
    let a = alpha as f64;
    let log_q = ln(q);
    let log_1mq = ln1p(-q);
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let k = k as f64;
            let log_binom = lgamma(a + 1.0) - lgamma(k + 1.0) - lgamma(a - k + 1.0);
            let mut t = log_binom + (k * k - k) / (2.0 * sigma * sigma);
            if k > 0.0 {
                t += k * log_q;
            }
            if a - k > 0.0 {
                t += (a - k) * log_1mq;
            }
            t
        })
        .collect();
    log_sum_exp(&terms)
}

/// Per-order RDP of one subsampled Gaussian step.
///
/// `q = 1` is the plain Gaussian mechanism, `lambda / (2 sigma^2)`. For
/// `q < 1` integer orders use the binomial expansion; fractional orders
/// interpolate `log A` linearly between the neighbouring integers, which
/// over-estimates it because `log A` is convex in the order.
pub fn rdp_of_step(q: f64, sigma: f64, orders: &[f64]) -> Result<Vec<f64>> {
    check_rate(q, sigma)?;
    orders
        .iter()
        .map(|&lambda| {
            if !(lambda > 1.0) || !lambda.is_finite() {
                return Err(Error::Config(alloc::format!("RDP order must exceed 1, got {lambda}")));
            }
            if q == 1.0 {
                return Ok(lambda / (2.0 * sigma * sigma));
            }
            let lo = floor(lambda);
            let log_a = if lo == lambda {
                log_a_int(q, sigma, lo as u64)
            } else {
                let t = lambda - lo;
                (1.0 - t) * log_a_int(q, sigma, lo as u64) + t * log_a_int(q, sigma, lo as u64 + 1)
            };
            Ok(log_a.max(0.0) / (lambda - 1.0))
        })
        .collect()
}

/// Accumulated RDP of a run of identical subsampled Gaussian steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    orders: Vec<f64>,
    per_step: Vec<f64>,
    rdp: Vec<f64>,
    steps: usize,
    q: f64,
    sigma: f64,
}

impl AccountantState {
    pub fn new(q: f64, sigma: f64) -> Result<Self> {
        Self::with_orders(q, sigma, default_orders())
    }

    pub fn with_orders(q: f64, sigma: f64, orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Config("order grid is empty".into()));
        }
        let per_step = rdp_of_step(q, sigma, &orders)?;
        Ok(Self {
            rdp: alloc::vec![0.0; orders.len()],
            orders,
            per_step,
            steps: 0,
            q,
            sigma,
        })
    }

    /// Record one step.
    pub fn step(&mut self) {
        self.advance(1);
    }

    /// Record `k` steps. RDP composes additively, so this is exact.
    pub fn advance(&mut self, k: usize) {
        self.steps += k;
        for (r, s) in self.rdp.iter_mut().zip(&self.per_step) {
            *r = self.steps as f64 * s;
        }
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sampling_rate(&self) -> f64 {
        self.q
    }

    pub fn noise_multiplier(&self) -> f64 {
        self.sigma
    }
}

/// `(epsilon, order)` minimizing `rdp(order) + ln(1/delta) / (order - 1)`.
pub fn epsilon(acc: &AccountantState, delta: f64) -> Result<(f64, f64)> {
    if acc.steps == 0 {
        return Err(Error::EmptyAccountant);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(alloc::format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_inv_delta = -ln(delta);
    let mut best = (f64::INFINITY, acc.orders[0]);
    for (&lambda, &r) in acc.orders.iter().zip(&acc.rdp) {
        let eps = r + log_inv_delta / (lambda - 1.0);
        if eps < best.0 {
            best = (eps, lambda);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::InfiniteEpsilon);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_batch_is_gaussian_mechanism() {
        assert_eq!(rdp_of_step(1.0, 1.0, &[2.0]).unwrap(), [1.0]);
        assert_eq!(rdp_of_step(1.0, 2.0, &[8.0]).unwrap(), [1.0]);
        let orders = default_orders();
        let r = rdp_of_step(1.0, 0.7, &orders).unwrap();
        for (l, v) in orders.iter().zip(r) {
            assert!((v - l / (2.0 * 0.49)).abs() <= f64::EPSILON * v);
        }
    }

    #[test]
    fn grid_shape() {
        let o = default_orders();
        assert_eq!(o.len(), 252);
        assert_eq!(o[0], 1.25);
        assert_eq!(*o.last().unwrap(), 64.0);
        assert!((2..=64).all(|i| o.contains(&(i as f64))));
    }

    #[test]
    fn subsampled_matches_quadrature_reference() {
        // Reference values from numerical integration of
        // E_{z~N(0,s^2)}[((1-q) + q exp((2z-1)/(2s^2)))^a] at 40 digits.
        let cases = [
            (0.01, 1.0, 32.0, 11.246275937048068857),
            (0.01, 1.0, 2.0, 0.00017181342207453059389),
            (0.05, 0.5, 8.0, 12.57630597309616734),
        ];
        for (q, s, a, want) in cases {
            let got = rdp_of_step(q, s, &[a]).unwrap()[0];
            assert!((got - want).abs() <= 1e-9 * want, "{q} {s} {a}: {got} vs {want}");
        }
    }

    #[test]
    fn second_order_closed_form() {
        // A_2 = 1 + q^2 (e^{1/s^2} - 1).
        for (q, s) in [(0.1, 1.0), (0.3, 2.0), (0.02, 0.8)] {
            let want = libm::log(1.0 + q * q * (libm::exp(1.0 / (s * s)) - 1.0));
            let got = rdp_of_step(q, s, &[2.0]).unwrap()[0];
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_noise_is_infinite() {
        assert!(matches!(rdp_of_step(0.1, 0.0, &[2.0]), Err(Error::InfiniteEpsilon)));
        assert!(matches!(AccountantState::new(0.1, 0.0), Err(Error::InfiniteEpsilon)));
    }

    #[test]
    fn empty_accountant() {
        let acc = AccountantState::new(0.1, 1.0).unwrap();
        assert!(matches!(epsilon(&acc, 1e-5), Err(Error::EmptyAccountant)));
    }

    #[test]
    fn single_step_matches_grid_search() {
        let mut acc = AccountantState::new(1.0, 1.0).unwrap();
        acc.step();
        let (eps, order) = epsilon(&acc, 1e-5).unwrap();
        let log_inv = libm::log(1e5);
        let mut want = (f64::INFINITY, 0.0);
        for i in 5..=256 {
            let l = i as f64 / 4.0;
            let e = l / 2.0 + log_inv / (l - 1.0);
            if e < want.0 {
                want = (e, l);
            }
        }
        assert!((eps - want.0).abs() <= 1e-9);
        assert_eq!(order, want.1);
    }

    #[test]
    fn additivity_is_exact() {
        let mut one = AccountantState::new(0.02, 1.1).unwrap();
        one.step();
        let mut many = AccountantState::new(0.02, 1.1).unwrap();
        for _ in 0..7 {
            many.step();
        }
        for (a, b) in one.rdp().iter().zip(many.rdp()) {
            assert_eq!(*b, 7.0 * a);
        }
    }

    #[test]
    fn noise_ordering_of_epsilon() {
        let eps: Vec<f64> = [5.0, 3.0, 1.0, 0.5, 0.2]
            .iter()
            .map(|&s| {
                let mut a = AccountantState::new(0.05, s).unwrap();
                a.advance(1000);
                epsilon(&a, 1e-5).unwrap().0
            })
            .collect();
        assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");
    }

    proptest! {
        #[test]
        fn rdp_non_negative_and_non_decreasing_in_steps(q in 0.001f64..1.0, s in 0.3f64..10.0) {
            let mut a = AccountantState::new(q, s).unwrap();
            a.step();
            let first = a.rdp().to_vec();
            a.advance(3);
            for (x, y) in first.iter().zip(a.rdp()) {
                prop_assert!(*x >= 0.0);
                prop_assert!(y >= x);
            }
        }
    }
}

//! Binomial confidence bound on the penalty probability and the scheduling
//! of the Monte Carlo constraint checks.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{CoreError, Result};

/// Upper confidence bound on the violation probability after observing `m`
/// violations in `n` independent samples.
///
/// Returns the supremum of `rho` such that the binomial CDF at `m` with
/// parameters `(rho, n)` stays at or above `beta`; the CDF is continuous and
/// strictly decreasing in `rho`, so a bisection locates the supremum to
/// better than 1e-8 absolute.
pub fn chance_upper_bound(m: u64, n: u64, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(CoreError::InvalidParams(
            "chance bound needs at least one sample".into(),
        ));
    }
    if m > n {
        return Err(CoreError::InvalidParams(format!(
            "violation count {m} exceeds sample count {n}"
        )));
    }
    if !(0.0 < beta && beta < 1.0) {
        return Err(CoreError::InvalidParams(format!(
            "confidence level beta {beta} must lie in (0, 1)"
        )));
    }
    if m == n {
        // cdf(n; rho, n) = 1 for every rho.
        return Ok(1.0);
    }
    let cdf = |rho: f64| -> f64 {
        Binomial::new(rho, n)
            .expect("rho is kept inside [0, 1]")
            .cdf(m)
    };
    let mut lo = 0.0f64; // cdf = 1 >= beta
    let mut hi = 1.0f64; // cdf = 0 < beta (m < n)
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) >= beta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest violation count whose upper confidence bound still satisfies the
/// requirement, or `None` when even zero violations cannot certify it (the
/// sample count is too small for the requested `eps_req` and `beta`).
pub fn max_allowed_violations(n: u64, beta: f64, eps_req: f64) -> Result<Option<u64>> {
    if chance_upper_bound(0, n, beta)? > eps_req {
        return Ok(None);
    }
    let mut lo = 0u64; // satisfies
    let mut hi = n; // bound(n) = 1 > eps_req for any eps_req < 1
    if chance_upper_bound(n, n, beta)? <= eps_req {
        return Ok(Some(n));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if chance_upper_bound(mid, n, beta)? <= eps_req {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Exponential-backoff schedule of the constraint checks: the first check
/// runs at `init` iterations; every passing check extends the next one by
/// half of its iteration count (integer floor), a violation resets to `init`
/// iterations from now.
#[derive(Debug, Clone, Copy)]
pub struct CheckSchedule {
    next_check: usize,
    init: usize,
}

impl CheckSchedule {
    pub fn new(init: usize) -> Self {
        Self {
            next_check: init.max(1),
            init: init.max(1),
        }
    }

    pub fn is_due(&self, iteration: usize) -> bool {
        iteration >= self.next_check
    }

    pub fn next_check(&self) -> usize {
        self.next_check
    }

    pub fn record_pass(&mut self) {
        self.next_check += self.next_check / 2;
    }

    pub fn record_violation(&mut self, iteration: usize) {
        self.next_check = iteration + self.init;
    }
}

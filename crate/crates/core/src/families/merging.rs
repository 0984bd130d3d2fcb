//! Two-periodic conductances on `{0, ..., N}` whose drift alternates with the
//! parity of `x + t`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use serde::Deserialize;

use crate::error::{invalid, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::sequence::GraphSequence;

/// Reads a decimal parameter such as `0.05` as the exact ratio `1/20`.
pub fn decimal_ratio(name: &'static str, x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(invalid(name, "must be finite"));
    }
    for digits in 0..=12u32 {
        let scale = 10f64.powi(digits as i32);
        let r = (x * scale).round();
        if (x * scale - r).abs() <= 1e-7 {
            return Ok(BigRational::new(BigInt::from(r as i64), BigInt::from(10i64.pow(digits))));
        }
    }
    Err(invalid(name, format!("{x} is not a decimal with at most 12 digits")))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn default_horizon() -> usize {
    1_000_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergingParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: f64,
    pub eta: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

pub type Kernel = Vec<Vec<(usize, BigRational)>>;

pub struct MergingChainSchedule {
    n: usize,
    theta: BigRational,
    eta: BigRational,
    horizon: usize,
    /// Common denominator making every conductance an integer multiplicity.
    scale: BigInt,
    snapshots: [Arc<GraphSnapshot>; 2],
}

impl MergingChainSchedule {
    pub fn new(n: usize, theta: BigRational, eta: BigRational, horizon: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid("N", "must be even and at least 2"));
        }
        for (name, v) in [("theta", &theta), ("eta", &eta)] {
            if v.is_negative() || *v >= BigRational::one() {
                return Err(invalid(name, "must lie in [0, 1)"));
            }
        }
        let scale = theta.denom().lcm(eta.denom());
        let mut s = Self {
            n,
            theta,
            eta,
            horizon,
            scale,
            snapshots: [Arc::new(GraphSnapshot::default()), Arc::new(GraphSnapshot::default())],
        };
        s.snapshots = [Arc::new(s.build_snapshot(0)?), Arc::new(s.build_snapshot(1)?)];
        Ok(s)
    }

    pub fn from_params(p: &MergingParams) -> Result<Self> {
        Self::new(p.n, decimal_ratio("theta", p.theta)?, decimal_ratio("eta", p.eta)?, p.horizon)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let p: MergingParams = serde_json::from_value(value.clone())?;
        Ok(Arc::new(Self::from_params(&p)?))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> &BigRational {
        &self.theta
    }

    pub fn eta(&self) -> &BigRational {
        &self.eta
    }

    pub fn scale(&self) -> &BigInt {
        &self.scale
    }

    /// Conductances `pi^(t)(x, y)` for `x <= y` at the given parity of `t`.
    pub fn conductances(&self, parity: usize) -> BTreeMap<(usize, usize), BigRational> {
        let one = BigRational::one();
        let plus = &one + &self.theta;
        let minus = &one - &self.theta;
        let hold = &one - &self.eta;
        let half = self.n / 2;
        let mut c = BTreeMap::new();
        c.insert((0, 0), BigRational::from_integer(2.into()));
        c.insert((self.n, self.n), BigRational::from_integer(2.into()));
        for x in 1..=half {
            let even = (x + parity) % 2 == 0;
            c.insert((x - 1, x), if even { plus.clone() } else { minus.clone() });
            c.insert((x, x), if even { hold.clone() } else { one.clone() });
        }
        for x in half..self.n {
            let even = (x + parity) % 2 == 0;
            c.insert((x, x + 1), if even { plus.clone() } else { minus.clone() });
            c.insert((x, x), if even { hold.clone() } else { one.clone() });
        }
        c
    }

    fn build_snapshot(&self, parity: usize) -> Result<GraphSnapshot> {
        let scale = BigRational::from_integer(self.scale.clone());
        let mut edges = Vec::new();
        for ((x, y), c) in self.conductances(parity) {
            let m = (c * &scale).to_integer().to_u64().ok_or_else(|| invalid("theta", "denominator too large"))?;
            if m > 0 {
                edges.push((x as u64, y as u64, m));
            }
        }
        Ok(GraphSnapshot::from_edges(edges))
    }

    /// `pi^(t)(x)`, counting the loop once.
    pub fn weights(&self, parity: usize) -> Vec<BigRational> {
        let mut w = vec![BigRational::zero(); self.n + 1];
        for ((x, y), c) in self.conductances(parity) {
            w[x] += &c;
            if x != y {
                w[y] += &c;
            }
        }
        w
    }

    pub fn kernel(&self, parity: usize) -> Kernel {
        let w = self.weights(parity);
        let mut rows: Kernel = vec![Vec::new(); self.n + 1];
        for ((x, y), c) in self.conductances(parity) {
            rows[x].push((y, &c / &w[x]));
            if x != y {
                rows[y].push((x, &c / &w[y]));
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        rows
    }

    pub fn kernel_f64(&self, parity: usize) -> Vec<Vec<(usize, f64)>> {
        self.kernel(parity)
            .into_iter()
            .map(|row| row.into_iter().map(|(y, p)| (y, to_f64(&p))).collect())
            .collect()
    }

    /// `mu^(t)(x) = pi^(t)(x) / sum_z pi^(t)(z)`.
    pub fn measure(&self, parity: usize) -> Vec<BigRational> {
        let w = self.weights(parity);
        let total: BigRational = w.iter().sum();
        w.into_iter().map(|x| x / &total).collect()
    }

    /// Smallest `eps` with every interior entry within `eps` of 1/3, the
    /// endpoint holds within `eps` of 2/3, and `(N+1) mu` within `eps` of 1,
    /// over one period.
    pub fn epsilon(&self) -> BigRational {
        let third = BigRational::new(1.into(), 3.into());
        let two_thirds = &third + &third;
        let np1 = BigRational::from_integer(BigInt::from(self.n + 1));
        let mut eps = BigRational::zero();
        for parity in 0..2 {
            let k = self.kernel(parity);
            for (x, row) in k.iter().enumerate() {
                for (y, p) in row {
                    let target = if (x == 0 || x == self.n) && *y == x { &two_thirds } else { &third };
                    eps = eps.max((p - target).abs());
                }
            }
            for m in self.measure(parity) {
                eps = eps.max((m * &np1 - BigRational::one()).abs());
            }
        }
        eps
    }

    /// `mu(x) K(x, y) == mu(y) K(y, x)` exactly at both parities.
    pub fn detailed_balance_exact(&self) -> bool {
        (0..2).all(|parity| {
            let mu = self.measure(parity);
            let k = self.kernel(parity);
            let entry = |x: usize, y: usize| {
                k[x].iter().find(|e| e.0 == y).map(|e| e.1.clone()).unwrap_or_else(BigRational::zero)
            };
            k.iter().enumerate().all(|(x, row)| row.iter().all(|(y, p)| &mu[x] * p == &mu[*y] * entry(*y, x)))
        })
    }
}

impl GraphSequence for MergingChainSchedule {
    fn name(&self) -> &str {
        "merging"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>> {
        Ok(Arc::clone(&self.snapshots[t % 2]))
    }

    fn origin(&self) -> VertexId {
        VertexId(0)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "family": "merging",
            "N": self.n,
            "theta": self.theta.to_string(),
            "eta": self.eta.to_string(),
            "scale": self.scale.to_string(),
            "eps": to_f64(&self.epsilon()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn schedule(n: usize, theta: f64, eta: f64) -> MergingChainSchedule {
        MergingChainSchedule::from_params(&MergingParams { n, theta, eta, horizon: 10 }).unwrap()
    }

    #[test]
    fn decimals_become_exact_ratios() {
        assert_eq!(decimal_ratio("x", 0.05).unwrap(), r(1, 20));
        assert_eq!(decimal_ratio("x", 0.1).unwrap(), r(1, 10));
        assert_eq!(decimal_ratio("x", 0.0).unwrap(), r(0, 1));
        assert!(decimal_ratio("x", std::f64::consts::PI).is_err());
    }

    #[test]
    fn drift_free_rows_are_uniform() {
        let s = schedule(8, 0.0, 0.0);
        for parity in 0..2 {
            let k = s.kernel(parity);
            for row in &k[1..8] {
                assert_eq!(row.len(), 3);
                assert!(row.iter().all(|(_, p)| *p == r(1, 3)));
            }
            assert_eq!(k[0], vec![(0, r(2, 3)), (1, r(1, 3))]);
        }
        assert_eq!(s.epsilon(), BigRational::zero());
    }

    #[test]
    fn left_half_row_matches_case_table() {
        let s = schedule(8, 0.1, 0.1);
        let theta = r(1, 10);
        let eta = r(1, 10);
        let one = BigRational::one();
        let denom = BigRational::from_integer(3.into()) - &eta;
        // x = 2, t even: x + t even
        let row = &s.kernel(0)[2];
        assert_eq!(
            row,
            &vec![
                (1, (&one + &theta) / &denom),
                (2, (&one - &eta) / &denom),
                (3, (&one - &theta) / &denom)
            ]
        );
    }

    #[test]
    fn invariant_measure_within_eps() {
        let s = schedule(16, 0.05, 0.05);
        let eps = s.epsilon();
        let np1 = BigRational::from_integer(17.into());
        for parity in 0..2 {
            for m in s.measure(parity) {
                assert!((m * &np1 - BigRational::one()).abs() <= eps);
            }
        }
        assert!(to_f64(&eps) < 0.1);
    }

    #[test]
    fn reversible_in_exact_arithmetic() {
        assert!(schedule(8, 0.05, 0.05).detailed_balance_exact());
        assert!(schedule(8, 0.3, 0.7).detailed_balance_exact());
    }

    #[test]
    fn snapshots_carry_scaled_conductances() {
        let s = schedule(4, 0.05, 0.05);
        let g = s.snapshot_at(0).unwrap();
        // scale 20: 1 + theta -> 21, 1 - theta -> 19, endpoint loops 40
        assert_eq!(g.multiplicity(VertexId(0), VertexId(0)), 40);
        assert_eq!(g.multiplicity(VertexId(1), VertexId(2)), 21);
        assert_eq!(g.multiplicity(VertexId(0), VertexId(1)), 19);
        assert!(Arc::ptr_eq(&g, &s.snapshot_at(2).unwrap()));
        assert_eq!(s.snapshot_at(1).unwrap().multiplicity(VertexId(0), VertexId(1)), 21);
    }
}

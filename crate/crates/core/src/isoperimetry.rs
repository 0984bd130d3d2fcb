//! Isoperimetric profiles `phi_t(r)` and Cheeger constants.
//!
//! A profile is stored as a list of segments on which `phi(r) = coef * r^(-power)`;
//! exact profiles are step functions (`power = 0`), analytic lattice bounds use
//! `power = 1/d` up to `v/2` and are flat afterwards. Below the first segment
//! no admissible set exists and the profile is infinite.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, VertexId};

pub const DEFAULT_ENUMERATION_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSource {
    Exact,
    AnalyticLowerBound,
}

impl ProfileSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileSource::Exact => "exact",
            ProfileSource::AnalyticLowerBound => "analytic-lower-bound",
        }
    }
}

/// `phi(r) = coef * r^(-power)` for `r` in `[start, next start)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileSegment {
    pub start: f64,
    pub coef: f64,
    pub power: f64,
}

impl ProfileSegment {
    pub fn value(&self, r: f64) -> f64 {
        if self.power == 0.0 {
            self.coef
        } else {
            self.coef * r.powf(-self.power)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IsoperimetricProfile {
    segments: Vec<ProfileSegment>,
    cheeger: Option<f64>,
    volume: u64,
    source: ProfileSource,
    /// Exact breakpoints `(pi(A), pi(A, A^c))` of the running minimum.
    exact_breakpoints: Vec<(u64, u64)>,
    witness: Option<Vec<VertexId>>,
}

impl IsoperimetricProfile {
    /// Validates monotonicity and builds a profile from raw segments.
    pub fn from_segments(
        segments: Vec<ProfileSegment>,
        volume: u64,
        source: ProfileSource,
    ) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.coef >= 0.0 && s.power >= 0.0 && s.start >= 0.0) {
                return Err(Error::NonMonotoneProfile(format!("segment {i} has negative parameters")));
            }
            if s.power > 0.0 && s.start == 0.0 && i + 1 == segments.len() {
                return Err(Error::NonMonotoneProfile("unbounded power segment".into()));
            }
            if let Some(next) = segments.get(i + 1) {
                if next.start <= s.start {
                    return Err(Error::NonMonotoneProfile(format!("segment {} does not advance", i + 1)));
                }
                let end = s.value(next.start);
                if next.value(next.start) > end * (1.0 + 1e-12) {
                    return Err(Error::NonMonotoneProfile(format!("increase at r = {}", next.start)));
                }
            }
        }
        let half = volume as f64 / 2.0;
        let mut profile = Self {
            segments,
            cheeger: None,
            volume,
            source,
            exact_breakpoints: Vec::new(),
            witness: None,
        };
        profile.cheeger = profile.value(half);
        Ok(profile)
    }

    /// `phi(r) = delta` for every `r`.
    pub fn constant(delta: f64, volume: u64) -> Self {
        Self::from_segments(
            vec![ProfileSegment { start: 0.0, coef: delta, power: 0.0 }],
            volume,
            ProfileSource::AnalyticLowerBound,
        )
        .expect("constant profile is monotone")
    }

    /// `phi(r) >= c (r ∧ v/2)^(-1/d)`.
    pub fn lattice_bound(c_d: f64, d: usize, volume: u64) -> Self {
        let half = volume as f64 / 2.0;
        let p = 1.0 / d as f64;
        let mut segments = vec![ProfileSegment { start: 0.0, coef: c_d, power: p }];
        if half > 0.0 {
            segments.push(ProfileSegment { start: half, coef: c_d * half.powf(-p), power: 0.0 });
        } else {
            segments[0].power = 0.0;
        }
        Self::from_segments(segments, volume, ProfileSource::AnalyticLowerBound)
            .expect("lattice bound is monotone")
    }

    pub fn segments(&self) -> &[ProfileSegment] {
        &self.segments
    }

    pub fn source(&self) -> ProfileSource {
        self.source
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    /// Cheeger constant `phi(v/2)`; `None` when no admissible set exists.
    pub fn cheeger(&self) -> Option<f64> {
        self.cheeger
    }

    pub fn witness(&self) -> Option<&[VertexId]> {
        self.witness.as_deref()
    }

    pub fn exact_breakpoints(&self) -> &[(u64, u64)] {
        &self.exact_breakpoints
    }

    /// Index of the segment containing `r`, if any.
    pub fn segment_index(&self, r: f64) -> Option<usize> {
        match self.segments.partition_point(|s| s.start <= r) {
            0 => None,
            k => Some(k - 1),
        }
    }

    /// `phi(r)`, `None` standing for the infinite sentinel.
    pub fn value(&self, r: f64) -> Option<f64> {
        self.segment_index(r).map(|i| self.segments[i].value(r))
    }

    /// Checks `self >= lower` pointwise at every segment start of either profile
    /// and just before each of them.
    pub fn dominates(&self, lower: &IsoperimetricProfile) -> bool {
        let mut points: Vec<f64> = self
            .segments
            .iter()
            .chain(&lower.segments)
            .map(|s| s.start)
            .filter(|&r| r > 0.0)
            .collect();
        let before: Vec<f64> = points.iter().map(|r| r * (1.0 - 1e-12)).collect();
        points.extend(before);
        points.push(self.volume as f64);
        points.iter().all(|&r| match (self.value(r), lower.value(r)) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a >= b * (1.0 - 1e-12),
        })
    }

    /// Rows `(r, phi)` for tabulation: the exact breakpoints, or a log grid up
    /// to `v/2` for analytic bounds.
    pub fn table(&self) -> Vec<(f64, Option<f64>)> {
        match self.source {
            ProfileSource::Exact => self
                .segments
                .iter()
                .map(|s| (s.start, Some(s.coef)))
                .collect(),
            ProfileSource::AnalyticLowerBound => {
                let top = (self.volume as f64 / 2.0).max(1.0);
                (0..=16)
                    .map(|k| {
                        let r = top.powf(k as f64 / 16.0);
                        (r, self.value(r))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Best {
    cut: u64,
    mask: u64,
}

fn better(a: &Option<Best>, b: &Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if (y.cut, y.mask) < (x.cut, x.mask) {
                Some(*y)
            } else {
                Some(*x)
            }
        }
        (Some(x), None) => Some(*x),
        (None, y) => *y,
    }
}

/// Enumerates every subset whose high bits equal `prefix`, visiting the low
/// bits in Gray-code order with incremental weight and cut updates.
fn enumerate_chunk(g: &GraphSnapshot, low_bits: usize, prefix: u64, half: u64) -> Vec<Option<Best>> {
    let n = g.len();
    let mut best: Vec<Option<Best>> = vec![None; half as usize + 1];
    let mut member = vec![false; n];
    let mut mask = prefix << low_bits;
    for i in low_bits..n {
        member[i] = (mask >> i) & 1 == 1;
    }
    let set: Vec<usize> = (0..n).filter(|&i| member[i]).collect();
    let mut weight = g.weight(&set);
    let mut cut = g.cut(&set);

    let mut record = |mask: u64, weight: u64, cut: u64| {
        if mask != 0 && weight <= half {
            let slot = &mut best[weight as usize];
            let candidate = Some(Best { cut, mask });
            *slot = better(slot, &candidate);
        }
    };
    record(mask, weight, cut);

    for k in 1u64..(1u64 << low_bits) {
        let i = k.trailing_zeros() as usize;
        let inside: u64 = g
            .neighbors(i)
            .iter()
            .filter(|&&(j, _)| j != i && member[j])
            .map(|&(_, m)| m)
            .sum();
        let outside = g.degree_at(i) - g.loops_at(i) - inside;
        if member[i] {
            member[i] = false;
            weight -= g.degree_at(i);
            cut = cut + inside - outside;
        } else {
            member[i] = true;
            weight += g.degree_at(i);
            cut = cut + outside - inside;
        }
        mask ^= 1 << i;
        record(mask, weight, cut);
    }
    best
}

/// Exact isoperimetric profile by enumeration of all subsets of the snapshot.
pub fn exact_profile(g: &GraphSnapshot, cap: usize) -> Result<IsoperimetricProfile> {
    let n = g.len();
    if n > cap || n > 40 {
        return Err(Error::EnumerationCap { vertices: n, cap });
    }
    let half = g.volume() / 2;
    let high_bits = n.saturating_sub(12).min(8);
    let low_bits = n - high_bits;
    let best = (0..(1u64 << high_bits))
        .into_par_iter()
        .map(|prefix| enumerate_chunk(g, low_bits, prefix, half))
        .reduce(
            || vec![None; half as usize + 1],
            |a, b| a.iter().zip(&b).map(|(x, y)| better(x, y)).collect(),
        );

    // Running minimum of cut/weight over increasing weight.
    let mut segments = Vec::new();
    let mut breakpoints = Vec::new();
    let mut current: Option<(u64, u64, u64)> = None;
    for (w, slot) in best.iter().enumerate() {
        let Some(b) = slot else { continue };
        let w = w as u64;
        let improves = current.map_or(true, |(cw, cc, _)| {
            (b.cut as u128) * (cw as u128) < (cc as u128) * (w as u128)
        });
        if improves {
            current = Some((w, b.cut, b.mask));
            breakpoints.push((w, b.cut));
            segments.push(ProfileSegment {
                start: w as f64,
                coef: b.cut as f64 / w as f64,
                power: 0.0,
            });
        }
    }
    let mut profile = IsoperimetricProfile::from_segments(segments, g.volume(), ProfileSource::Exact)?;
    profile.exact_breakpoints = breakpoints;
    profile.witness = current.map(|(_, _, mask)| {
        (0..n).filter(|&i| (mask >> i) & 1 == 1).map(|i| g.id(i)).collect()
    });
    Ok(profile)
}

/// Cheeger constant as an exact ratio `(cut, weight)` via the exact profile.
pub fn exact_cheeger_ratio(g: &GraphSnapshot, cap: usize) -> Result<Option<(u64, u64)>> {
    Ok(exact_profile(g, cap)?.exact_breakpoints.last().map(|&(w, c)| (c, w)))
}

/// Largest `c` such that `c (r ∧ v/2)^(-1/d)` lies below the exact profiles of
/// the given snapshots.
pub fn calibrate_power_constant(profiles: &[IsoperimetricProfile], d: usize) -> f64 {
    let p = 1.0 / d as f64;
    profiles
        .iter()
        .flat_map(|prof| prof.exact_breakpoints.iter())
        .map(|&(w, cut)| cut as f64 / w as f64 * (w as f64).powf(p))
        .fold(f64::INFINITY, f64::min)
}

fn calibration_cache() -> &'static Mutex<HashMap<(usize, u64), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Vertex cap used when calibrating lattice constants (radius-3 balls in Z^2
/// and radius-2 balls in Z^3 have 25 vertices).
pub const CALIBRATION_CAP: usize = 25;
pub const CALIBRATION_MAX_RADIUS: u32 = 3;

/// Calibrated `c_d` for induced lattice balls with `loops` self-loops per
/// vertex: exact profiles of every ball of radius `1..=3` within
/// [`CALIBRATION_CAP`] vertices dominate the power-law bound. Cached per `(d, loops)`.
pub fn calibrated_lattice_constant(d: usize, loops: u64) -> f64 {
    if let Some(&c) = calibration_cache().lock().unwrap().get(&(d, loops)) {
        return c;
    }
    let profiles: Vec<IsoperimetricProfile> = (1..=CALIBRATION_MAX_RADIUS)
        .filter(|&r| crate::families::lattice::ball_size(d, r) as usize <= CALIBRATION_CAP)
        .map(|r| {
            let g = crate::families::lattice::ball_snapshot(d, r, loops);
            exact_profile(&g, CALIBRATION_CAP).expect("calibration ball within cap")
        })
        .collect();
    let c = calibrate_power_constant(&profiles, d);
    calibration_cache().lock().unwrap().insert((d, loops), c);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: u64) -> GraphSnapshot {
        GraphSnapshot::from_edges((0..n - 1).map(|i| (i, i + 1, 1)))
    }

    /// Independent oracle: direct Cheeger enumeration without Gray-code updates.
    fn cheeger_brute(g: &GraphSnapshot) -> Option<f64> {
        let n = g.len();
        let half = g.volume() as f64 / 2.0;
        let mut best: Option<f64> = None;
        for mask in 1u64..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == 1).collect();
            let w = g.weight(&set) as f64;
            if w <= half {
                let ratio = g.cut(&set) as f64 / w;
                best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
            }
        }
        best
    }

    #[test]
    fn path_four_cheeger_and_witness() {
        let prof = exact_profile(&path(4), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(prof.cheeger(), Some(1.0 / 3.0));
        assert_eq!(prof.witness().unwrap(), &[VertexId(0), VertexId(1)]);
        assert_eq!(prof.value(1.0), Some(1.0));
        assert_eq!(prof.value(0.5), None);
    }

    #[test]
    fn disconnected_components_have_zero_cheeger() {
        let g = GraphSnapshot::from_edges([(0, 1, 1), (2, 3, 1)]);
        assert_eq!(exact_profile(&g, 20).unwrap().cheeger(), Some(0.0));
    }

    #[test]
    fn single_vertex_has_no_admissible_set() {
        let g = GraphSnapshot::from_edges([(0, 0, 2)]);
        let prof = exact_profile(&g, 20).unwrap();
        assert_eq!(prof.cheeger(), None);
        assert!(prof.segments().is_empty());
    }

    #[test]
    fn cap_is_enforced() {
        let err = exact_profile(&path(22), 20).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { vertices: 22, cap: 20 }));
    }

    #[test]
    fn matches_brute_force_on_small_graphs() {
        let graphs = [
            path(6),
            GraphSnapshot::from_edges([(0, 1, 2), (1, 2, 1), (2, 0, 3), (2, 3, 1), (3, 3, 2), (0, 0, 1)]),
            crate::families::lattice::ball_snapshot(2, 2, 4),
        ];
        for g in &graphs {
            let prof = exact_profile(g, 20).unwrap();
            let brute = cheeger_brute(g).unwrap();
            assert!((prof.cheeger().unwrap() - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn chunked_enumeration_agrees_with_single_chunk() {
        // 14 vertices forces two high bits of chunking.
        let mut edges: Vec<(u64, u64, u64)> = (0..13).map(|i| (i, i + 1, 1 + i % 3)).collect();
        edges.extend([(0, 7, 1), (3, 11, 2), (5, 5, 1)]);
        let g = GraphSnapshot::from_edges(edges);
        let chunked = exact_profile(&g, 20).unwrap();
        let single = enumerate_chunk(&g, g.len(), 0, g.volume() / 2);
        let min_single = single
            .iter()
            .enumerate()
            .filter_map(|(w, b)| b.map(|b| b.cut as f64 / w as f64))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(chunked.cheeger().unwrap(), min_single);
        assert!((cheeger_brute(&g).unwrap() - min_single).abs() < 1e-15);
    }

    #[test]
    fn analytic_lattice_value() {
        let prof = IsoperimetricProfile::lattice_bound(0.1, 3, 1000);
        assert!((prof.value(8.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((prof.cheeger().unwrap() - 0.1 * 500f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(prof.value(5000.0), prof.cheeger());
    }

    #[test]
    fn constant_profile() {
        let prof = IsoperimetricProfile::constant(0.25, 40);
        assert_eq!(prof.cheeger(), Some(0.25));
        assert_eq!(prof.value(1.0), Some(0.25));
    }

    #[test]
    fn increasing_segments_are_rejected() {
        let segs = vec![
            ProfileSegment { start: 1.0, coef: 0.2, power: 0.0 },
            ProfileSegment { start: 2.0, coef: 0.3, power: 0.0 },
        ];
        assert!(IsoperimetricProfile::from_segments(segs, 10, ProfileSource::Exact).is_err());
    }

    #[test]
    fn relabeling_leaves_profile_unchanged() {
        let a = GraphSnapshot::from_edges([(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 0, 1), (1, 1, 1)]);
        // permutation 0->10, 1->3, 2->7, 3->1
        let map = |v: u64| [10, 3, 7, 1][v as usize];
        let b = GraphSnapshot::from_edges(a.edges().map(|(x, y, m)| (map(x.0), map(y.0), m)));
        let pa = exact_profile(&a, 20).unwrap();
        let pb = exact_profile(&b, 20).unwrap();
        assert_eq!(pa.exact_breakpoints(), pb.exact_breakpoints());
    }
}

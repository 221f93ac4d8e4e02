//! Affine iterated function systems and the interval unions they generate.
//!
//! An [`AffineIfs`] is a finite family of increasing contractions
//! `phi_j(s) = delta_j (s - gamma_j) + gamma_j` whose images of the hull
//! `E^0 = [min gamma, max gamma]` are pairwise disjoint. Iterating the maps
//! yields nested unions of bands `E^n`, their gaps, and, when the maps carry
//! probability weights, the discrete approximations `(T*)^n mu_0` of the
//! balanced measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default limit on the number of atoms a push-forward may produce.
pub const DEFAULT_ATOM_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub delta: f64,
    pub gamma: f64,
}

impl AffineMap {
    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        self.delta * (s - self.gamma) + self.gamma
    }
}

/// JSON document describing an IFS: `{ "maps": [{"delta": .., "gamma": ..}], "weights": [..] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IfsSpec {
    pub maps: Vec<AffineMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }
}

/// A fully disconnected affine IFS, maps stored in ascending order of their
/// images so that word enumeration produces bands left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIfs {
    maps: Vec<AffineMap>,
    weights: Option<Vec<f64>>,
}

impl AffineIfs {
    pub fn new(maps: Vec<AffineMap>, weights: Option<Vec<f64>>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::invalid("an IFS needs at least two maps"));
        }
        for (j, m) in maps.iter().enumerate() {
            if !(m.delta > 0.0 && m.delta < 1.0) {
                return Err(Error::invalid(format!(
                    "map {j}: contraction ratio {} is not in (0, 1)",
                    m.delta
                )));
            }
            if !m.gamma.is_finite() {
                return Err(Error::invalid(format!("map {j}: fixed point is not finite")));
            }
        }
        if let Some(w) = &weights {
            if w.len() != maps.len() {
                return Err(Error::invalid(format!(
                    "{} weights given for {} maps",
                    w.len(),
                    maps.len()
                )));
            }
            if w.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::invalid("weights must be positive"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("weights sum to {total}, not 1")));
            }
        }

        let lo = maps.iter().map(|m| m.gamma).fold(f64::INFINITY, f64::min);
        let hi = maps.iter().map(|m| m.gamma).fold(f64::NEG_INFINITY, f64::max);
        let mut order: Vec<usize> = (0..maps.len()).collect();
        order.sort_by(|&a, &b| maps[a].apply(lo).total_cmp(&maps[b].apply(lo)));
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let right_of_a = maps[a].apply(hi);
            let left_of_b = maps[b].apply(lo);
            if right_of_a >= left_of_b {
                return Err(Error::Overlap {
                    first: a,
                    second: b,
                    detail: format!(
                        "image of map {a} ends at {right_of_a}, image of map {b} starts at {left_of_b}"
                    ),
                });
            }
        }
        let sorted_maps = order.iter().map(|&j| maps[j]).collect();
        let sorted_weights = weights.map(|w| order.iter().map(|&j| w[j]).collect());
        Ok(Self {
            maps: sorted_maps,
            weights: sorted_weights,
        })
    }

    /// The two-map system `delta = (0.34, 0.52)`, `gamma = (-1, 1)` used
    /// throughout the examples.
    pub fn example1() -> Self {
        Self::new(
            vec![
                AffineMap { delta: 0.34, gamma: -1.0 },
                AffineMap { delta: 0.52, gamma: 1.0 },
            ],
            None,
        )
        .expect("valid IFS")
    }

    pub fn from_spec(spec: IfsSpec) -> Result<Self> {
        Self::new(spec.maps, spec.weights)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> IfsSpec {
        IfsSpec {
            maps: self.maps.clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.maps, Some(weights))
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    /// `E^0 = [min gamma, max gamma]`.
    pub fn hull(&self) -> Interval {
        let lo = self.maps.iter().map(|m| m.gamma).fold(f64::INFINITY, f64::min);
        let hi = self.maps.iter().map(|m| m.gamma).fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }

    /// `E^n = Phi^n(E^0)` as `M^n` ascending bands.
    pub fn iterate_bands(&self, n: usize) -> Result<IntervalUnion> {
        let count = checked_pow(self.maps.len(), n)
            .ok_or_else(|| Error::invalid(format!("level {n} is too deep for this IFS")))?;
        if count > DEFAULT_ATOM_BUDGET {
            return Err(Error::AtomBudget {
                requested: count,
                budget: DEFAULT_ATOM_BUDGET,
            });
        }
        let mut bands = vec![self.hull()];
        for _ in 0..n {
            let mut next = Vec::with_capacity(bands.len() * self.maps.len());
            for m in &self.maps {
                next.extend(bands.iter().map(|b| Interval::new(m.apply(b.lo), m.apply(b.hi))));
            }
            bands = next;
        }
        IntervalUnion::with_level(bands, n)
    }

    /// Gaps of `E^n` ordered by birth level, ascending on the line within a level.
    ///
    /// Level-1 gaps are those of `E^1`; the gaps born at level `m` are the
    /// images of those born at `m - 1` under every map.
    pub fn ordered_gaps(&self, n: usize) -> Result<GapList> {
        if n == 0 {
            return Ok(GapList { gaps: Vec::new() });
        }
        let first = self.iterate_bands(1)?;
        let mut newest: Vec<Interval> = first
            .bands()
            .windows(2)
            .map(|w| Interval::new(w[0].hi, w[1].lo))
            .collect();
        let mut gaps: Vec<Gap> = newest
            .iter()
            .map(|g| Gap {
                lo: g.lo,
                hi: g.hi,
                birth_level: Some(1),
            })
            .collect();
        for level in 2..=n {
            let mut next = Vec::with_capacity(newest.len() * self.maps.len());
            for m in &self.maps {
                next.extend(newest.iter().map(|g| Interval::new(m.apply(g.lo), m.apply(g.hi))));
            }
            gaps.extend(next.iter().map(|g| Gap {
                lo: g.lo,
                hi: g.hi,
                birth_level: Some(level),
            }));
            newest = next;
        }
        Ok(GapList { gaps })
    }

    /// Gaps of `E^n` in real-line order, each tagged with its birth level.
    pub fn gaps(&self, n: usize) -> Result<GapList> {
        let mut list = self.ordered_gaps(n)?;
        list.gaps.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        Ok(list)
    }

    /// For each gap in real-line order, its position in the birth-level ordering.
    pub fn ordered_gap_permutation(&self, n: usize) -> Result<Vec<usize>> {
        let ordered = self.ordered_gaps(n)?;
        let mut idx: Vec<usize> = (0..ordered.len()).collect();
        idx.sort_by(|&a, &b| ordered.gaps[a].lo.total_cmp(&ordered.gaps[b].lo));
        Ok(idx)
    }

    /// `(T*)^n base`: every length-`n` word `w` contributes the atoms of
    /// `base` pushed through `phi_w` with weight `pi_w`. Atoms come out in
    /// lexicographic word order, hence ascending when `base` is.
    pub fn pushforward_measure(&self, base: &DiscreteMeasure, n: usize, atom_budget: usize) -> Result<DiscreteMeasure> {
        let weights = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::invalid("push-forward needs IFS weights"))?;
        let words = checked_pow(self.maps.len(), n);
        let requested = words.and_then(|w| w.checked_mul(base.len()));
        match requested {
            Some(r) if r <= atom_budget => {}
            _ => {
                return Err(Error::AtomBudget {
                    requested: requested.unwrap_or(usize::MAX),
                    budget: atom_budget,
                })
            }
        }
        let mut pos = base.positions.clone();
        let mut wts = base.weights.clone();
        for _ in 0..n {
            let mut next_pos = Vec::with_capacity(pos.len() * self.maps.len());
            let mut next_wts = Vec::with_capacity(pos.len() * self.maps.len());
            for (m, &p) in self.maps.iter().zip(weights) {
                next_pos.extend(pos.iter().map(|&s| m.apply(s)));
                next_wts.extend(wts.iter().map(|&w| p * w));
            }
            pos = next_pos;
            wts = next_wts;
        }
        Ok(DiscreteMeasure {
            positions: pos,
            weights: wts,
        })
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Sorted, strictly disjoint closed bands `[alpha_i, beta_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    bands: Vec<Interval>,
    level: Option<usize>,
}

impl IntervalUnion {
    pub fn new(bands: Vec<Interval>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("an interval union needs at least one band"));
        }
        for (i, b) in bands.iter().enumerate() {
            if !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
                return Err(Error::invalid(format!("band {i} = [{}, {}] is empty or not finite", b.lo, b.hi)));
            }
        }
        for (i, w) in bands.windows(2).enumerate() {
            if !(w[0].hi < w[1].lo) {
                return Err(Error::invalid(format!(
                    "bands {i} and {} are not disjoint and ascending ({} >= {})",
                    i + 1,
                    w[0].hi,
                    w[1].lo
                )));
            }
        }
        Ok(Self { bands, level: None })
    }

    fn with_level(bands: Vec<Interval>, level: usize) -> Result<Self> {
        let mut u = Self::new(bands)?;
        u.level = Some(level);
        Ok(u)
    }

    /// Convenience constructor from `(lo, hi)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(a, b)| Interval::new(a, b)).collect())
    }

    pub fn bands(&self) -> &[Interval] {
        &self.bands
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn hull(&self) -> Interval {
        Interval::new(self.bands[0].lo, self.bands[self.bands.len() - 1].hi)
    }

    pub fn total_length(&self) -> f64 {
        self.bands.iter().map(Interval::width).sum()
    }

    /// The `2N` endpoints `alpha_1 < beta_1 < ... < beta_N`.
    pub fn endpoints(&self) -> Vec<f64> {
        self.bands.iter().flat_map(|b| [b.lo, b.hi]).collect()
    }

    /// Index of the band containing `s`, if any.
    pub fn band_containing(&self, s: f64) -> Option<usize> {
        let idx = self.bands.partition_point(|b| b.hi < s);
        (idx < self.bands.len() && self.bands[idx].contains(s)).then_some(idx)
    }

    /// Index of the gap containing `s` (open interval), if any.
    pub fn gap_containing(&self, s: f64) -> Option<usize> {
        let idx = self.bands.partition_point(|b| b.hi <= s);
        (idx >= 1 && idx < self.bands.len() && s < self.bands[idx].lo).then(|| idx - 1)
    }

    /// The open gaps `(beta_i, alpha_{i+1})` in ascending order.
    pub fn gaps_of(&self) -> GapList {
        GapList {
            gaps: self
                .bands
                .windows(2)
                .map(|w| Gap {
                    lo: w[0].hi,
                    hi: w[1].lo,
                    birth_level: None,
                })
                .collect(),
        }
    }

    /// Gap `i` as an interval.
    pub fn gap(&self, i: usize) -> Interval {
        Interval::new(self.bands[i].hi, self.bands[i + 1].lo)
    }

    pub fn num_gaps(&self) -> usize {
        self.bands.len() - 1
    }

    /// True when every band of `self` lies inside some band of `outer`.
    pub fn is_nested_in(&self, outer: &IntervalUnion) -> bool {
        self.bands.iter().all(|b| {
            outer
                .bands
                .iter()
                .any(|o| o.lo <= b.lo && b.hi <= o.hi)
        })
    }
}

/// An open gap; `birth_level` is the IFS level at which it first appears.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
    pub birth_level: Option<usize>,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapList {
    pub gaps: Vec<Gap>,
}

impl GapList {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// Gaps born at or before `level`.
    pub fn up_to_level(&self, level: usize) -> Vec<Gap> {
        self.gaps
            .iter()
            .copied()
            .filter(|g| g.birth_level.is_some_and(|b| b <= level))
            .collect()
    }
}

/// A finite positive measure given by atoms; weights normalised to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a probability measure, rescaling the weights to unit mass.
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::invalid("positions and weights differ in length"));
        }
        if positions.is_empty() {
            return Err(Error::invalid("a discrete measure needs at least one atom"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("atom weights must be positive and finite"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("atom positions must be finite"));
        }
        let total = crate::numeric::kahan_sum(weights.iter().copied());
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { positions, weights })
    }

    /// A single unit atom.
    pub fn dirac(position: f64) -> Self {
        Self {
            positions: vec![position],
            weights: vec![1.0],
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        crate::numeric::kahan_sum(self.weights.iter().copied())
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integral of `f` against the measure.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        crate::numeric::kahan_sum(self.atoms().map(|(x, w)| w * f(x)))
    }
}

//! Frequency lattice `ω_k = 2π k·ω` over the ℓ¹ ball of radius `L`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Frequencies closer than this are reported as collisions.
pub const COLLISION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEntry {
    pub k: Vec<i32>,
    /// Angular frequency folded into `[0, π]`.
    pub omega: f64,
    /// Set when folding reflected the frequency (`ω_k` was in `(π, 2π)`),
    /// so the phase of `k` is minus the phase stored for `omega`.
    pub conjugate: bool,
}

impl LatticeEntry {
    pub fn norm(&self) -> u32 {
        self.k.iter().map(|v| v.unsigned_abs()).sum()
    }

    pub fn is_dc(&self) -> bool {
        self.k.iter().all(|&v| v == 0)
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    fundamental: Vec<f64>,
    radius: u32,
    entries: Vec<LatticeEntry>,
    collisions: Vec<(usize, usize)>,
}

/// All `k` with `‖k‖₁ <= radius` whose first nonzero component is positive,
/// plus `k = 0`, sorted by folded frequency.
pub fn build_lattice(fundamental: &[f64], radius: u32) -> Result<FrequencyLattice> {
    if fundamental.is_empty() {
        return Err(Error::invalid("the lattice needs at least one fundamental frequency"));
    }
    if let Some(w) = fundamental.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
        return Err(Error::invalid(format!("fundamental frequencies must lie in (0, 1), got {w}")));
    }
    if radius == 0 {
        return Err(Error::invalid("the lattice radius must be at least 1"));
    }
    let d = fundamental.len();
    let mut ks = Vec::new();
    let mut k = vec![0i32; d];
    enumerate(&mut k, 0, radius as i32, false, &mut ks);
    let mut entries: Vec<LatticeEntry> = ks
        .into_iter()
        .map(|k| {
            let mut acc = KahanSum::new();
            for (ki, w) in k.iter().zip(fundamental) {
                acc.add(f64::from(*ki) * w);
            }
            let t = acc.value().rem_euclid(1.0);
            let (omega, conjugate) = if t <= 0.5 { (2.0 * PI * t, false) } else { (2.0 * PI * (1.0 - t), true) };
            LatticeEntry { k, omega, conjugate }
        })
        .collect();
    entries.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.norm().cmp(&b.norm())));
    let collisions = entries
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].omega - w[0].omega < COLLISION_TOL)
        .map(|(i, _)| (i, i + 1))
        .collect();
    Ok(FrequencyLattice {
        fundamental: fundamental.to_vec(),
        radius,
        entries,
        collisions,
    })
}

fn enumerate(k: &mut Vec<i32>, pos: usize, budget: i32, seen_nonzero: bool, out: &mut Vec<Vec<i32>>) {
    if pos == k.len() {
        out.push(k.clone());
        return;
    }
    let lo = if seen_nonzero { -budget } else { 0 };
    for v in lo..=budget {
        k[pos] = v;
        enumerate(k, pos + 1, budget - v.abs(), seen_nonzero || v != 0, out);
    }
    k[pos] = 0;
}

impl FrequencyLattice {
    pub fn fundamental(&self) -> &[f64] {
        &self.fundamental
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.fundamental.len()
    }

    pub fn entries(&self) -> &[LatticeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Neighbouring entries whose frequencies coincide within [`COLLISION_TOL`].
    pub fn collisions(&self) -> &[(usize, usize)] {
        &self.collisions
    }

    /// Smallest spacing between consecutive distinct frequencies.
    pub fn min_spacing(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| w[1].omega - w[0].omega)
            .filter(|d| *d >= COLLISION_TOL)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the entry with integer vector `k`.
    pub fn find(&self, k: &[i32]) -> Option<usize> {
        self.entries.iter().position(|e| e.k == k)
    }

    /// Index of the principal entry `e_i`.
    pub fn principal(&self, i: usize) -> Option<usize> {
        let mut k = vec![0; self.dim()];
        *k.get_mut(i)? = 1;
        self.find(&k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rational_fundamental_folds_and_collides() {
        let lat = build_lattice(&[0.5], 2).unwrap();
        assert_eq!(lat.len(), 3);
        let omegas: Vec<f64> = lat.entries().iter().map(|e| e.omega).collect();
        assert_abs_diff_eq!(omegas[0], 0.0);
        assert_abs_diff_eq!(omegas[1], 0.0);
        assert_abs_diff_eq!(omegas[2], PI);
        assert_eq!(lat.collisions(), &[(0, 1)]);
    }

    #[test]
    fn counts_half_ball() {
        // #{k in Z^3 : |k|_1 <= 8} = 833, one of each ± pair plus k = 0
        let lat = build_lattice(&[0.11, 0.37, 0.71], 8).unwrap();
        assert_eq!(lat.len(), 417);
        let lat = build_lattice(&[0.2, 0.3], 3).unwrap();
        assert_eq!(lat.len(), (25 - 1) / 2 + 1);
    }

    #[test]
    fn omegas_sorted_in_range_and_unique_up_to_sign() {
        let lat = build_lattice(&[0.123, 0.456, 0.789], 5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for w in lat.entries().windows(2) {
            assert!(w[0].omega <= w[1].omega);
        }
        for e in lat.entries() {
            assert!((0.0..=PI).contains(&e.omega));
            let neg: Vec<i32> = e.k.iter().map(|v| -v).collect();
            assert!(!seen.contains(&neg) || e.is_dc());
            seen.insert(e.k.clone());
            let first = e.k.iter().find(|&&v| v != 0);
            assert!(first.map_or(true, |&v| v > 0));
        }
        assert_eq!(lat.entries()[0].k, vec![0, 0, 0]);
    }

    #[test]
    fn conjugate_flag_reflects_fold() {
        let lat = build_lattice(&[0.7], 1).unwrap();
        let e = &lat.entries()[lat.principal(0).unwrap()];
        assert!(e.conjugate);
        assert_abs_diff_eq!(e.omega, 2.0 * PI * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_lattice(&[], 2).is_err());
        assert!(build_lattice(&[1.2], 2).is_err());
        assert!(build_lattice(&[0.3], 0).is_err());
    }
}

//! Equilibrium measure of a finite union of intervals.
//!
//! For bands `[alpha_1, beta_1] ∪ … ∪ [alpha_N, beta_N]` write
//! `Y(s) = Π (s - alpha_i)(s - beta_i)` and `Z(s) = Π (s - zeta_i)` with one
//! root `zeta_i` in every gap. The equilibrium density is
//! `|Z(s)| / (π sqrt|Y(s)|)` on the bands, and the roots are fixed by asking
//! that `∫ Z / sqrt|Y|` vanish over every gap.
//!
//! Integrals over a band or gap `[e_p, e_{p+1}]` use the substitution
//! `s = c + r cos θ`, which absorbs the two local square-root singularities;
//! what remains is smooth and is summed with Gauss–Chebyshev nodes. The
//! remaining factors are evaluated as a product of ratios
//! `(s - zeta_l) / sqrt|(s - e_a)(s - e_b)|`, each of order one, so nothing
//! under- or overflows even with many bands.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ifs::{DiscreteMeasure, IntervalUnion};
use crate::numeric::{chebyshev_first, integrate_adaptive, integrate_adaptive_real, kahan_sum, KahanSum};

/// Knobs for [`solve_zeta_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Tolerance on each gap residual, relative to `∫_gap |Z| / sqrt|Y|`.
    pub tol: f64,
    /// Gauss–Chebyshev nodes per band or gap.
    pub nodes: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            nodes: 256,
            max_iter: 200,
        }
    }
}

/// `cos θ_k` at the first-kind Chebyshev nodes, `θ_k = (2k-1)π/(2P)`.
pub(crate) fn chebyshev_cosines(p: usize) -> Vec<f64> {
    (1..=p)
        .map(|k| ((2 * k - 1) as f64 * PI / (2 * p) as f64).cos())
        .collect()
}

/// Index of the `r`-th endpoint once `e_p` and `e_{p+1}` are removed.
#[inline]
fn remaining(r: usize, p: usize) -> usize {
    if r < p {
        r
    } else {
        r + 2
    }
}

/// `Z(s) / sqrt|Y(s) / ((s - e_p)(s - e_{p+1}))|`, the smooth part of
/// `Z / sqrt|Y|` on the interval `[e_p, e_{p+1}]`.
///
/// The `roots` (one per gap, ascending) are paired with consecutive
/// remaining endpoints so every factor stays of moderate size.
pub(crate) fn local_ratio(endpoints: &[f64], roots: &[f64], p: usize, s: f64) -> f64 {
    let mut acc = 1.0;
    for (l, &z) in roots.iter().enumerate() {
        let a = endpoints[remaining(2 * l, p)];
        let b = endpoints[remaining(2 * l + 1, p)];
        acc *= (s - z) / ((s - a) * (s - b)).abs().sqrt();
    }
    acc
}

/// `Z(t) / sqrt(Y(t))` on the branch that behaves like `1/t` at infinity,
/// for `t` off the real axis or to the right of the hull.
pub(crate) fn z_over_sqrt_y(endpoints: &[f64], roots: &[f64], t: Complex64) -> Complex64 {
    let n2 = endpoints.len();
    let mut acc = Complex64::new(1.0, 0.0) / ((t - endpoints[0]).sqrt() * (t - endpoints[n2 - 1]).sqrt());
    for (l, &z) in roots.iter().enumerate() {
        acc *= (t - z) / ((t - endpoints[2 * l + 1]).sqrt() * (t - endpoints[2 * l + 2]).sqrt());
    }
    acc
}

/// `(t - α_1) Z(t)/sqrt(Y(t)) - 1` at `t = β_N + d`, without cancellation.
fn tail_excess(endpoints: &[f64], roots: &[f64], d: f64) -> f64 {
    let alpha = endpoints[0];
    let beta = endpoints[endpoints.len() - 1];
    let t = beta + d;
    let mut log = 0.5 * ((beta - alpha) / d).ln_1p();
    for (l, &z) in roots.iter().enumerate() {
        let x = t - z;
        log -= 0.5 * (((z - endpoints[2 * l + 1]) / x).ln_1p() + ((z - endpoints[2 * l + 2]) / x).ln_1p());
    }
    log.exp_m1()
}

/// Robin constant `log(1/Cap)` for the set with endpoints `endpoints` and
/// gap roots `roots`, from the behaviour of the Green function at infinity:
/// `E = ∫_{β_N}^∞ [Z/sqrt(Y) − 1/(t − α_1)] dt − log(β_N − α_1)`.
pub(crate) fn robin_constant(endpoints: &[f64], roots: &[f64]) -> f64 {
    let alpha = endpoints[0];
    let beta = endpoints[endpoints.len() - 1];
    let h = beta - alpha;
    // t = beta + u^2 on [beta, beta + h]
    let near = |u: f64| {
        let d = u * u;
        tail_excess(endpoints, roots, d) / (d + h) * 2.0 * u
    };
    // t = beta + h / v beyond
    let far = |v: f64| {
        tail_excess(endpoints, roots, h / v) / (v * (1.0 + v))
    };
    let i1 = integrate_adaptive_real(near, 0.0, h.sqrt(), 1e-15, 1e-14);
    let i2 = integrate_adaptive_real(far, 0.0, 1.0, 1e-15, 1e-14);
    i1 + i2 - h.ln()
}

/// Equilibrium data of one interval union.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    bands: IntervalUnion,
    endpoints: Vec<f64>,
    zeta: Vec<f64>,
    band_masses: Vec<f64>,
    frequencies: Vec<f64>,
    energy: f64,
    capacity: f64,
    residual: f64,
    iterations: usize,
    nodes: usize,
}

impl EquilibriumSolution {
    pub fn bands(&self) -> &IntervalUnion {
        &self.bands
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    /// One root of `Z` per gap, ascending.
    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn band_masses(&self) -> &[f64] {
        &self.band_masses
    }

    pub fn band_mass(&self, i: usize) -> f64 {
        self.band_masses[i]
    }

    /// `omega_i` = equilibrium mass to the left of gap `i`, in `(0, 1)`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `2π omega_i`.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        self.frequencies.iter().map(|w| 2.0 * PI * w).collect()
    }

    /// Robin constant.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Largest relative gap residual at the returned roots.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Equilibrium density `|Z(s)| / (π sqrt|Y(s)|)` at a point of the set.
    pub fn density(&self, s: f64) -> Result<f64> {
        let k = self
            .bands
            .band_containing(s)
            .ok_or_else(|| Error::invalid(format!("{s} lies outside every band")))?;
        let lo = self.endpoints[2 * k];
        let hi = self.endpoints[2 * k + 1];
        let local = ((s - lo) * (hi - s)).sqrt();
        if local == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(local_ratio(&self.endpoints, &self.zeta, 2 * k, s).abs() / (PI * local))
    }

    /// `p` first-kind Gauss-Chebyshev nodes per band carrying the
    /// equilibrium measure, normalised to total mass 1.
    pub fn discretize(&self, p: usize) -> Result<DiscreteMeasure> {
        if p < 1 {
            return Err(Error::invalid("at least one node per band is needed"));
        }
        let rule = chebyshev_first(p);
        let mut positions = Vec::with_capacity(p * self.bands.num_bands());
        let mut weights = Vec::with_capacity(positions.capacity());
        for k in 0..self.bands.num_bands() {
            let (lo, hi) = (self.endpoints[2 * k], self.endpoints[2 * k + 1]);
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = c + r * x;
                positions.push(s);
                weights.push(w * local_ratio(&self.endpoints, &self.zeta, 2 * k, s).abs() / PI);
            }
        }
        let total = kahan_sum(weights.iter().copied());
        weights.iter_mut().for_each(|w| *w /= total);
        DiscreteMeasure::new(positions, weights)
    }

    /// Green function with pole at infinity, `g(z) = Re ∫_{β_N}^z Z/sqrt(Y)`.
    ///
    /// The path runs along the real axis to the right of the set, then
    /// through the half plane containing `z`, and finally drops vertically
    /// onto `z`; it never crosses a band.
    pub fn green_function(&self, z: Complex64) -> f64 {
        let z = if z.im < 0.0 { z.conj() } else { z };
        let e = &self.endpoints;
        let roots = &self.zeta;
        let beta = e[e.len() - 1];
        let h = beta - e[0];
        let f = |t: Complex64| z_over_sqrt_y(e, roots, t);

        // real leg [beta, beta + h], with t = beta + u^2
        let leg1 = integrate_adaptive_real(
            |u| {
                let d = u * u;
                (tail_excess(e, roots, d) + 1.0) / (d + h) * 2.0 * u
            },
            0.0,
            h.sqrt(),
            1e-15,
            1e-13,
        );
        let x0 = Complex64::new(beta + h, 0.0);
        let top = z + Complex64::new(0.0, h);
        let dir = top - x0;
        let leg2 = integrate_adaptive(|s| f(x0 + dir * s) * dir, 0.0, 1.0, 1e-15, 1e-13).0;
        // vertical leg from z + ih down to z, t = z + i h v^2
        let leg3 = integrate_adaptive(
            |v| f(z + Complex64::new(0.0, h * v * v)) * Complex64::new(0.0, -2.0 * h * v),
            0.0,
            1.0,
            1e-15,
            1e-13,
        )
        .0;
        let g = leg1 + (leg2 + leg3).re;
        g.max(0.0)
    }

    /// Logarithmic potential `V(z) = -∫ log|z - s| dν(s) = E - g(z)`.
    pub fn potential(&self, z: Complex64) -> f64 {
        self.energy - self.green_function(z)
    }
}

/// Solves for the gap roots with default options.
pub fn solve_zeta(bands: &IntervalUnion, tol: f64) -> Result<EquilibriumSolution> {
    solve_zeta_with(
        bands,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

struct GapSystem<'a> {
    endpoints: &'a [f64],
    cosines: Vec<f64>,
}

impl GapSystem<'_> {
    fn gap_nodes(&self, g: usize) -> impl Iterator<Item = f64> + '_ {
        let lo = self.endpoints[2 * g + 1];
        let hi = self.endpoints[2 * g + 2];
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        self.cosines.iter().map(move |&x| c + r * x)
    }

    /// Relative residuals `∫_gap Z/sqrt|Y| / ∫_gap |Z|/sqrt|Y|`.
    fn residuals(&self, zeta: &[f64]) -> Vec<f64> {
        (0..zeta.len())
            .map(|g| {
                let mut signed = KahanSum::new();
                let mut abs = KahanSum::new();
                for s in self.gap_nodes(g) {
                    let v = local_ratio(self.endpoints, zeta, 2 * g + 1, s);
                    signed.add(v);
                    abs.add(v.abs());
                }
                signed.value() / abs.value()
            })
            .collect()
    }

    /// Raw residual vector (scaled by `P/π`) and its Jacobian.
    fn linearize(&self, zeta: &[f64]) -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
        let m = zeta.len();
        let mut f = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, m);
        let mut scale = vec![0.0; m];
        let mut prefix = vec![0.0; m + 1];
        let mut suffix = vec![0.0; m + 1];
        let mut factor = vec![0.0; m];
        let mut inv_den = vec![0.0; m];
        for g in 0..m {
            let p = 2 * g + 1;
            let mut fs = KahanSum::new();
            let mut abs = KahanSum::new();
            let mut row = vec![KahanSum::new(); m];
            for s in self.gap_nodes(g) {
                for (l, &z) in zeta.iter().enumerate() {
                    let a = self.endpoints[remaining(2 * l, p)];
                    let b = self.endpoints[remaining(2 * l + 1, p)];
                    inv_den[l] = 1.0 / ((s - a) * (s - b)).abs().sqrt();
                    factor[l] = (s - z) * inv_den[l];
                }
                prefix[0] = 1.0;
                for l in 0..m {
                    prefix[l + 1] = prefix[l] * factor[l];
                }
                suffix[m] = 1.0;
                for l in (0..m).rev() {
                    suffix[l] = suffix[l + 1] * factor[l];
                }
                fs.add(prefix[m]);
                abs.add(prefix[m].abs());
                for l in 0..m {
                    row[l].add(-prefix[l] * suffix[l + 1] * inv_den[l]);
                }
            }
            f[g] = fs.value();
            scale[g] = abs.value();
            for l in 0..m {
                jac[(g, l)] = row[l].value();
            }
        }
        (f, jac, scale)
    }
}

/// Solves the gap conditions by safeguarded Newton iteration started from
/// the gap midpoints, then fills in masses, frequencies and capacity.
pub fn solve_zeta_with(bands: &IntervalUnion, opts: &SolverOptions) -> Result<EquilibriumSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    if opts.nodes < 8 {
        return Err(Error::invalid("at least 8 quadrature nodes are needed"));
    }
    let endpoints = bands.endpoints();
    let n = bands.num_bands();
    let m = n - 1;
    let system = GapSystem {
        endpoints: &endpoints,
        cosines: chebyshev_cosines(opts.nodes),
    };
    let gap = |g: usize| (endpoints[2 * g + 1], endpoints[2 * g + 2]);

    let mut zeta: Vec<f64> = (0..m).map(|g| 0.5 * (gap(g).0 + gap(g).1)).collect();
    let mut iterations = 0;
    let mut residual = 0.0;
    if m > 0 {
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        loop {
            let (f, jac, scale) = system.linearize(&zeta);
            let rel: Vec<f64> = f.iter().zip(&scale).map(|(a, s)| a / s).collect();
            residual = norm(&rel);
            if residual < opts.tol {
                break;
            }
            if iterations >= opts.max_iter {
                return Err(Error::NonConvergence {
                    what: "equilibrium gap roots",
                    iterations,
                    residual,
                });
            }
            iterations += 1;
            let step = jac
                .lu()
                .solve(&(-f))
                .ok_or_else(|| Error::Singular("equilibrium Jacobian".into()))?;
            // largest step fraction keeping every root well inside its gap
            let mut lambda: f64 = 1.0;
            for g in 0..m {
                let (lo, hi) = gap(g);
                let d = step[g];
                if d > 0.0 {
                    lambda = lambda.min(0.99 * (hi - zeta[g]) / d);
                } else if d < 0.0 {
                    lambda = lambda.min(0.99 * (lo - zeta[g]) / d);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = zeta.iter().zip(step.iter()).map(|(z, d)| z + lambda * d).collect();
                let r = norm(&system.residuals(&trial));
                if r < residual || r < opts.tol {
                    zeta = trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    what: "equilibrium gap roots (line search)",
                    iterations,
                    residual,
                });
            }
        }
    }

    let band_masses = band_masses(&endpoints, &zeta, opts.nodes);
    let mut frequencies = Vec::with_capacity(m);
    let mut acc = KahanSum::new();
    for &mass in band_masses.iter().take(m) {
        acc.add(mass);
        frequencies.push(acc.value());
    }
    let energy = robin_constant(&endpoints, &zeta);
    log::debug!(
        "equilibrium: {n} bands, {iterations} Newton steps, residual {residual:.2e}, energy {energy}"
    );
    Ok(EquilibriumSolution {
        bands: bands.clone(),
        endpoints,
        zeta,
        band_masses,
        frequencies,
        energy,
        capacity: (-energy).exp(),
        residual,
        iterations,
        nodes: opts.nodes,
    })
}

fn band_masses(endpoints: &[f64], zeta: &[f64], p: usize) -> Vec<f64> {
    let cosines = chebyshev_cosines(p);
    (0..endpoints.len() / 2)
        .map(|k| {
            let (lo, hi) = (endpoints[2 * k], endpoints[2 * k + 1]);
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            let total = cosines
                .iter()
                .map(|&x| local_ratio(endpoints, zeta, 2 * k, c + r * x).abs());
            crate::numeric::kahan_sum(total) / p as f64
        })
        .collect()
}

/// Rebuilds a solution from known roots, e.g. to evaluate the Green function
/// of a measure whose roots were obtained elsewhere. No Newton step is taken.
pub fn solution_from_roots(bands: &IntervalUnion, zeta: Vec<f64>, nodes: usize) -> Result<EquilibriumSolution> {
    if zeta.len() + 1 != bands.num_bands() {
        return Err(Error::invalid("need exactly one root per gap"));
    }
    for (g, &z) in zeta.iter().enumerate() {
        let gap = bands.gap(g);
        if !(gap.lo < z && z < gap.hi) {
            return Err(Error::invalid(format!("root {z} is not inside gap {g}")));
        }
    }
    let endpoints = bands.endpoints();
    let system = GapSystem {
        endpoints: &endpoints,
        cosines: chebyshev_cosines(nodes),
    };
    let residual = system.residuals(&zeta).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let band_masses = band_masses(&endpoints, &zeta, nodes);
    let mut acc = 0.0;
    let frequencies = band_masses[..band_masses.len() - 1]
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    let energy = robin_constant(&endpoints, &zeta);
    Ok(EquilibriumSolution {
        bands: bands.clone(),
        endpoints,
        zeta,
        band_masses,
        frequencies,
        energy,
        capacity: (-energy).exp(),
        residual,
        iterations: 0,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::AffineIfs;
    use approx::assert_abs_diff_eq;

    fn unit() -> IntervalUnion {
        IntervalUnion::from_pairs(&[(-1.0, 1.0)]).unwrap()
    }

    /// `-∫ log|z - s| dν(s)` by brute force on the bands, valid off the set.
    fn potential_oracle(sol: &EquilibriumSolution, z: Complex64, p: usize) -> f64 {
        let e = sol.endpoints();
        let cos = chebyshev_cosines(p);
        let mut acc = 0.0;
        for k in 0..e.len() / 2 {
            let (c, r) = (0.5 * (e[2 * k] + e[2 * k + 1]), 0.5 * (e[2 * k + 1] - e[2 * k]));
            for &x in &cos {
                let s = c + r * x;
                acc -= (z - s).norm().ln() * local_ratio(e, sol.zeta(), 2 * k, s).abs() / p as f64;
            }
        }
        acc
    }

    #[test]
    fn single_interval() {
        let sol = solve_zeta(&unit(), 1e-12).unwrap();
        assert!(sol.zeta().is_empty());
        assert!(sol.frequencies().is_empty());
        assert_abs_diff_eq!(sol.capacity(), 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(sol.band_mass(0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.density(0.0).unwrap(), 1.0 / PI, epsilon = 1e-15);
        assert!(sol.density(1.0).unwrap().is_infinite());
        assert!(sol.density(1.5).is_err());
        let near = sol.density(1.0 - 1e-8).unwrap();
        assert_abs_diff_eq!(near * PI * (2e-8f64).sqrt(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn shifted_interval_capacity_is_quarter_length() {
        let bands = IntervalUnion::from_pairs(&[(2.0, 5.0)]).unwrap();
        let sol = solve_zeta(&bands, 1e-12).unwrap();
        assert_abs_diff_eq!(sol.capacity(), 0.75, epsilon = 1e-13);
    }

    #[test]
    fn interval_green_function() {
        let sol = solve_zeta(&unit(), 1e-12).unwrap();
        let g = sol.green_function(Complex64::new(2.0, 0.0));
        assert_abs_diff_eq!(g, (2.0 + 3f64.sqrt()).ln(), epsilon = 1e-12);
        let z = Complex64::new(0.3, 0.8);
        let exact = (z + (z * z - 1.0).sqrt()).norm().ln();
        // principal sqrt of z^2 - 1 picks the root with |z + w| > 1 here
        assert_abs_diff_eq!(sol.green_function(z), exact, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.green_function(z.conj()), exact, epsilon = 1e-12);
        assert!(sol.green_function(Complex64::new(0.2, 0.0)) < 1e-8);
        let far = Complex64::new(1e6, 3e5);
        assert_abs_diff_eq!(sol.green_function(far) - far.norm().ln(), -sol.capacity().ln(), epsilon = 1e-8);
    }

    #[test]
    fn symmetric_pair() {
        let bands = IntervalUnion::from_pairs(&[(-1.0, -0.3), (0.3, 1.0)]).unwrap();
        let sol = solve_zeta(&bands, 1e-12).unwrap();
        assert_abs_diff_eq!(sol.zeta()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.frequencies()[0], 0.5, epsilon = 1e-12);
        for s in [0.35, 0.5, 0.9] {
            assert_abs_diff_eq!(sol.density(s).unwrap(), sol.density(-s).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn two_symmetric_bands_capacity() {
        // [-1,-a] ∪ [a,1] is the preimage of an interval under s ↦ s²,
        // so its capacity is sqrt((1 - a²)/4).
        let a: f64 = 0.3;
        let bands = IntervalUnion::from_pairs(&[(-1.0, -a), (a, 1.0)]).unwrap();
        let sol = solve_zeta(&bands, 1e-12).unwrap();
        assert_abs_diff_eq!(sol.capacity(), ((1.0 - a * a) / 4.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn example1_masses_match_refined_quadrature() {
        let ifs = AffineIfs::example1();
        for n in 1..=4 {
            let bands = ifs.iterate_bands(n).unwrap();
            let coarse = solve_zeta(&bands, 1e-12).unwrap();
            let fine = solve_zeta_with(
                &bands,
                &SolverOptions {
                    nodes: 2560,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_abs_diff_eq!(coarse.band_masses().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            for (a, b) in coarse.frequencies().iter().zip(fine.frequencies()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
            for w in coarse.frequencies().windows(2) {
                assert!(w[0] < w[1]);
            }
            for (g, z) in coarse.zeta().iter().enumerate() {
                let gap = bands.gap(g);
                assert!(gap.lo < *z && *z < gap.hi);
            }
        }
    }

    #[test]
    fn green_function_matches_potential_quadrature() {
        let bands = AffineIfs::example1().iterate_bands(2).unwrap();
        let sol = solve_zeta(&bands, 1e-12).unwrap();
        for z in [
            Complex64::new(1.7, 0.0),
            Complex64::new(-0.2, 0.0),
            Complex64::new(0.1, 0.4),
            Complex64::new(-3.0, -2.0),
        ] {
            let oracle = potential_oracle(&sol, z, 4000);
            assert_abs_diff_eq!(sol.potential(z), oracle, epsilon = 1e-9);
        }
        for s in [-0.9, -0.5, 0.0, 0.7, 1.0] {
            assert!(sol.green_function(Complex64::new(s, 0.0)) < 1e-8, "g({s})");
        }
    }

    #[test]
    fn table1_second_gap_frequency() {
        let ifs = AffineIfs::example1();
        let sol = solve_zeta(&ifs.iterate_bands(2).unwrap(), 1e-12).unwrap();
        // real-line gap 1 (left) is the first gap born at level 2
        let w = sol.angular_frequencies()[0];
        assert!((w - 1.55434).abs() < 2e-3, "{w}");
    }

    #[test]
    fn discretised_equilibrium_measure() {
        let sol = solve_zeta(&IntervalUnion::from_pairs(&[(-1.0, 1.0)]).unwrap(), 1e-12).unwrap();
        let jm = crate::jacobi::jacobi_from_discrete(&sol.discretize(80).unwrap(), 64).unwrap();
        assert_abs_diff_eq!(jm.b[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-14);
        for (a, b) in jm.a.iter().zip(&jm.b[1..]) {
            assert_abs_diff_eq!(*a, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(*b, 0.5, epsilon = 1e-14);
        }
        let bands = AffineIfs::example1().iterate_bands(2).unwrap();
        let sol = solve_zeta(&bands, 1e-12).unwrap();
        let mu = sol.discretize(64).unwrap();
        for (k, band) in bands.bands().iter().enumerate() {
            let mass: f64 = mu.atoms().filter(|(x, _)| band.contains(*x)).map(|(_, w)| w).sum();
            assert_abs_diff_eq!(mass, sol.band_mass(k), epsilon = 1e-12);
        }
    }
}

//! Isospectral torus of a finite union of intervals.
//!
//! A torus point picks one `xi_i` in every gap and a sheet sign `sigma_i`.
//! It determines the degree-`N` polynomial `X` with `X - sqrt(Y) = O(z^{N-2})`
//! and `X(xi_i) = sigma_i sqrt|Y(xi_i)|`, and through it the probability
//! measure with Markov function `(X - sqrt(Y)) / (c Z)`, `Z = Π (z - xi_i)`.
//! The measure has density `sqrt|Y| / (π c |Z|)` on the bands and an atom at
//! every `xi_i` whose sign disagrees with the branch of `sqrt(Y)` there.
//!
//! Jacobi coefficients of such a measure are produced exactly by the
//! continued-fraction step: the roots of `(X^2 - Y) / Z` give the next torus
//! point, and `a_j`, `b_{j+1}` follow from the two points. A route through
//! discretisation and Lanczos is kept for cross-checks.
//!
//! Internally all abscissae are shifted so the endpoints sum to zero.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::equilibrium::local_ratio;
use crate::error::{Error, Result};
use crate::ifs::{AffineIfs, DiscreteMeasure, IntervalUnion};
use crate::jacobi::{compare_sequences, jacobi_from_discrete, JacobiMatrix};
use crate::numeric::{chebyshev_second, kahan_sum};

/// Sign of the real branch of `sqrt(Y)` on gap `g` (0-based, left to right),
/// continued from `+∞` where it is positive.
pub fn branch_sign(bands: &IntervalUnion, g: usize) -> i8 {
    let gaps = bands.num_gaps();
    assert!(g < gaps, "gap {g} out of range");
    if (gaps - g) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `(xi_i, sigma_i)` per gap, left to right on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    pub xi: Vec<f64>,
    pub sigma: Vec<i8>,
}

impl TorusPoint {
    pub fn new(bands: &IntervalUnion, xi: Vec<f64>, sigma: Vec<i8>) -> Result<Self> {
        if xi.len() != bands.num_gaps() || sigma.len() != xi.len() {
            return Err(Error::invalid(format!(
                "a torus point of {} bands needs {} (xi, sigma) pairs, got {} and {}",
                bands.num_bands(),
                bands.num_gaps(),
                xi.len(),
                sigma.len()
            )));
        }
        for (g, (&x, &s)) in xi.iter().zip(&sigma).enumerate() {
            let gap = bands.gap(g);
            if !(gap.lo < x && x < gap.hi) {
                return Err(Error::invalid(format!("xi = {x} is not inside gap {g} ({}, {})", gap.lo, gap.hi)));
            }
            if s != 1 && s != -1 {
                return Err(Error::invalid(format!("sigma must be +1 or -1, got {s}")));
            }
        }
        Ok(Self { xi, sigma })
    }

    /// Builds a point from values listed in birth-level gap order.
    pub fn from_ordered(ifs: &AffineIfs, n: usize, xi: &[f64], sigma: &[i8]) -> Result<(IntervalUnion, Self)> {
        let bands = ifs.iterate_bands(n)?;
        let perm = ifs.ordered_gap_permutation(n)?;
        if xi.len() != perm.len() || sigma.len() != perm.len() {
            return Err(Error::invalid(format!("E^{n} has {} gaps", perm.len())));
        }
        let point = Self::new(
            &bands,
            perm.iter().map(|&k| xi[k]).collect(),
            perm.iter().map(|&k| sigma[k]).collect(),
        )?;
        Ok((bands, point))
    }

    pub fn num_gaps(&self) -> usize {
        self.xi.len()
    }
}

/// Deterministic assignment of torus points to the gaps of an IFS level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointRule {
    /// Gap midpoints, all signs `+1`.
    MidpointPlus,
    /// `xi` at fraction `t` of each gap; with `alternate`, the sign flips
    /// along the birth-level order starting from `+1`.
    Fraction { t: f64, alternate: bool },
}

impl PointRule {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "midpoint-plus" | "midpoint" => Ok(Self::MidpointPlus),
            "third-alternating" => Ok(Self::Fraction {
                t: 1.0 / 3.0,
                alternate: true,
            }),
            other => Err(Error::invalid(format!(
                "unknown point rule `{other}` (known: midpoint-plus, third-alternating)"
            ))),
        }
    }

    /// Bands of `E^n` and the point this rule selects on them.
    pub fn apply(&self, ifs: &AffineIfs, n: usize) -> Result<(IntervalUnion, TorusPoint)> {
        let ordered = ifs.ordered_gaps(n)?;
        let (t, alternate) = match *self {
            Self::MidpointPlus => (0.5, false),
            Self::Fraction { t, alternate } => {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::invalid("the gap fraction must lie in (0, 1)"));
                }
                (t, alternate)
            }
        };
        let xi: Vec<f64> = ordered.gaps.iter().map(|g| g.lo + t * (g.hi - g.lo)).collect();
        let sigma: Vec<i8> = (0..xi.len())
            .map(|k| if alternate && k % 2 == 1 { -1 } else { 1 })
            .collect();
        TorusPoint::from_ordered(ifs, n, &xi, &sigma)
    }
}

/// JSON form of a torus point: explicit values in birth-level gap order, or
/// a named rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TorusSpec {
    Explicit { xi: Vec<f64>, sigma: Vec<i8> },
    Rule { rule: String },
}

impl TorusSpec {
    pub fn resolve(&self, ifs: &AffineIfs, n: usize) -> Result<(IntervalUnion, TorusPoint)> {
        match self {
            Self::Explicit { xi, sigma } => TorusPoint::from_ordered(ifs, n, xi, sigma),
            Self::Rule { rule } => PointRule::parse(rule)?.apply(ifs, n),
        }
    }
}

/// Centred endpoint data shared by every point of one torus.
#[derive(Debug, Clone)]
struct Geometry {
    shift: f64,
    e: Vec<f64>,
    p2: f64,
}

impl Geometry {
    fn new(bands: &IntervalUnion) -> Self {
        let raw = bands.endpoints();
        let shift = kahan_sum(raw.iter().copied()) / raw.len() as f64;
        let e: Vec<f64> = raw.iter().map(|v| v - shift).collect();
        let p2 = kahan_sum(e.iter().map(|v| v * v));
        Self { shift, e, p2 }
    }

    fn gaps(&self) -> usize {
        self.e.len() / 2 - 1
    }

    fn gap(&self, g: usize) -> (f64, f64) {
        (self.e[2 * g + 1], self.e[2 * g + 2])
    }
}

/// One torus point in centred coordinates with its derived data.
#[derive(Debug, Clone)]
struct State {
    xi: Vec<f64>,
    sigma: Vec<i8>,
    /// `sqrt|Y(xi_i)| / Z'(xi_i)`.
    kappa: Vec<f64>,
    /// Mass of the unnormalised Markov function `(X - sqrt Y) / Z`.
    c: f64,
}

impl State {
    fn new(geo: &Geometry, xi: Vec<f64>, sigma: Vec<i8>) -> Result<Self> {
        let m = xi.len();
        let e = &geo.e;
        let last = e.len() - 1;
        let kappa: Vec<f64> = (0..m)
            .map(|i| {
                let x = xi[i];
                let mut acc = ((x - e[0]) * (x - e[last])).abs().sqrt();
                for l in 0..m {
                    let den = ((x - e[2 * l + 1]) * (x - e[2 * l + 2])).abs().sqrt();
                    acc *= if l == i { den } else { den / (x - xi[l]) };
                }
                acc
            })
            .collect();
        let q1 = kahan_sum(xi.iter().copied());
        let q2 = kahan_sum(xi.iter().map(|v| v * v));
        let mut acc = crate::numeric::KahanSum::new();
        acc.add(0.25 * geo.p2);
        acc.add(-0.5 * q2);
        acc.add(-0.5 * q1 * q1);
        for (s, k) in sigma.iter().zip(&kappa) {
            acc.add(f64::from(*s) * k);
        }
        let c = acc.value();
        if !(c > 0.0) {
            return Err(Error::LostPositivity { index: 0, value: c });
        }
        Ok(Self { xi, sigma, kappa, c })
    }

    /// `r` in `X = (x - r) Z + (interpolant)`.
    fn r(&self) -> f64 {
        -kahan_sum(self.xi.iter().copied())
    }

    /// `(Z/sqrt|Y|, X/sqrt|Y|)` at a point off the endpoints.
    fn ratios(&self, geo: &Geometry, x: f64, scratch: &mut Scratch) -> (f64, f64) {
        let e = &geo.e;
        let m = self.xi.len();
        let last = e.len() - 1;
        let g0 = 1.0 / ((x - e[0]) * (x - e[last])).abs().sqrt();
        scratch.resize(m);
        for l in 0..m {
            let inv = 1.0 / ((x - e[2 * l + 1]) * (x - e[2 * l + 2])).abs().sqrt();
            scratch.inv[l] = inv;
            scratch.f[l] = (x - self.xi[l]) * inv;
        }
        let mut prefix = 1.0;
        for l in 0..m {
            scratch.pre[l] = prefix;
            prefix *= scratch.f[l];
        }
        let g = g0 * prefix;
        let mut suffix = 1.0;
        let mut interp = 0.0;
        for l in (0..m).rev() {
            interp += f64::from(self.sigma[l]) * self.kappa[l] * scratch.inv[l] * scratch.pre[l] * suffix;
            suffix *= scratch.f[l];
        }
        (g, g * (x - self.r()) + g0 * interp)
    }
}

impl State {
    /// `(G, D, rho)` at `x` in gap `g`, where `D = (rho - sigma_g) / G` is
    /// evaluated with the removable singularity at `xi_g` cancelled.
    fn split(&self, geo: &Geometry, g: usize, x: f64) -> (f64, f64, f64) {
        let e = &geo.e;
        let xg = self.xi[g];
        let t = x - xg;
        // log((x - c) / (xi_g - c)) / t
        let quotient = |c: f64| {
            let d = xg - c;
            if t == 0.0 {
                1.0 / d
            } else if (t / d).abs() < 0.5 {
                (t / d).ln_1p() / t
            } else {
                ((x - c) / d).abs().ln() / t
            }
        };
        // log(Ĝ(x) / Ĝ(xi_g)) / t with Ĝ = G / (x - xi_g)
        let mut log_slope = 0.0;
        for &ek in e {
            log_slope -= 0.5 * quotient(ek);
        }
        let mut hat = 1.0 / ((x - e[0]) * (x - e[e.len() - 1])).abs().sqrt();
        let mut partial = x - self.r();
        for l in 0..self.xi.len() {
            let inv = 1.0 / ((x - e[2 * l + 1]) * (x - e[2 * l + 2])).abs().sqrt();
            if l == g {
                hat *= inv;
            } else {
                log_slope += quotient(self.xi[l]);
                hat *= (x - self.xi[l]) * inv;
                partial += f64::from(self.sigma[l]) * self.kappa[l] / (x - self.xi[l]);
            }
        }
        let log_ratio = t * log_slope;
        let expm1_over_t = if log_ratio == 0.0 { log_slope } else { log_ratio.exp_m1() / log_ratio * log_slope };
        let d = partial + f64::from(self.sigma[g]) * expm1_over_t / hat;
        let gz = t * hat;
        (gz, d, f64::from(self.sigma[g]) + gz * d)
    }
}

#[derive(Default)]
struct Scratch {
    inv: Vec<f64>,
    f: Vec<f64>,
    pre: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, m: usize) {
        if self.f.len() != m {
            self.inv = vec![0.0; m];
            self.f = vec![0.0; m];
            self.pre = vec![0.0; m];
        }
    }
}

/// Root of a continuous function in `(lo, hi)` whose sign just inside `lo`
/// is `sign_lo` and just inside `hi` is `-sign_lo`. Bisection until both
/// ends carry finite values, then Illinois steps with a bisection guard.
fn bracketed_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, sign_lo: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f64::NAN, f64::NAN);
    let tol = 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(hi - lo);
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_finite() && v != 0.0 {
            return v;
        }
        // 0/0 at a root of the old Z: step off it to read the sign
        let nudged = f(x + 1e-9 * (hi - lo));
        if nudged.is_finite() {
            nudged
        } else {
            v
        }
    };
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let x = if fa.is_finite() && fb.is_finite() {
            let s = b - fb * (b - a) / (fb - fa);
            let bis = 0.5 * (a + b);
            if s > a && s < b { s } else { bis }
        } else {
            0.5 * (a + b)
        };
        let fx = eval(x);
        if fx == 0.0 {
            return x;
        }
        if (fx > 0.0) == (sign_lo > 0.0) {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// Coefficients `a_j`, `b_{j+1}` along the torus, one continued-fraction step
/// at a time.
pub struct TorusFlow {
    geo: Geometry,
    state: State,
    scratch: Scratch,
}

impl TorusFlow {
    pub fn new(bands: &IntervalUnion, point: &TorusPoint) -> Result<Self> {
        let geo = Geometry::new(bands);
        let xi = point.xi.iter().map(|v| v - geo.shift).collect();
        let state = State::new(&geo, xi, point.sigma.clone())?;
        Ok(Self {
            geo,
            state,
            scratch: Scratch::default(),
        })
    }

    /// Current torus point.
    pub fn point(&self) -> TorusPoint {
        TorusPoint {
            xi: self.state.xi.iter().map(|v| v + self.geo.shift).collect(),
            sigma: self.state.sigma.clone(),
        }
    }

    /// Advances one row: returns `(a_j, b_{j+1})` and moves to the stripped
    /// measure's torus point.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let m = self.geo.gaps();
        let mut xi = Vec::with_capacity(m);
        let mut sigma = Vec::with_capacity(m);
        for g in 0..m {
            let (lo, hi) = self.geo.gap(g);
            let sign_lo = if (m - g) % 2 == 0 { 1.0 } else { -1.0 };
            let state = &self.state;
            let geo = &self.geo;
            let x = bracketed_root(
                |x| {
                    let (_, d, rho) = state.split(geo, g, x);
                    d * (rho + f64::from(state.sigma[g]))
                },
                lo,
                hi,
                sign_lo,
            );
            let (_, rho) = self.state.ratios(&self.geo, x, &mut self.scratch);
            xi.push(x);
            sigma.push(if rho > 0.0 { -1 } else { 1 });
        }
        let a = self.geo.shift - kahan_sum(xi.iter().copied());
        let next = State::new(&self.geo, xi, sigma)?;
        let b = (0.5 * next.c).sqrt();
        self.state = next;
        Ok((a, b))
    }

    /// Steps back one row, returning `(a_{j-1}, b_j)` for the row just undone.
    pub fn step_back(&mut self) -> Result<(f64, f64)> {
        let m = self.geo.gaps();
        let cur = &self.state;
        let a_prev = -kahan_sum(cur.xi.iter().copied());
        let mut xi = Vec::with_capacity(m);
        let mut sigma = Vec::with_capacity(m);
        for g in 0..m {
            let (lo, hi) = self.geo.gap(g);
            let sign_lo = if (m - g) % 2 == 0 { 1.0 } else { -1.0 };
            let geo = &self.geo;
            let x = bracketed_root(
                |x| {
                    let (gz, d, _) = cur.split(geo, g, x);
                    let up = 2.0 * (x - a_prev) - d;
                    up * (gz * up - 2.0 * f64::from(cur.sigma[g]))
                },
                lo,
                hi,
                sign_lo,
            );
            let (gz, rho) = cur.ratios(&self.geo, x, &mut self.scratch);
            let rho_prev = 2.0 * (x - a_prev) * gz - rho;
            xi.push(x);
            sigma.push(if rho_prev > 0.0 { 1 } else { -1 });
        }
        let b = (0.5 * self.state.c).sqrt();
        self.state = State::new(&self.geo, xi, sigma)?;
        Ok((a_prev + self.geo.shift, b))
    }
}

/// First `j` rows of the Jacobi matrix of the torus measure at `point`.
pub fn torus_jacobi(bands: &IntervalUnion, point: &TorusPoint, j: usize) -> Result<JacobiMatrix> {
    let mut flow = TorusFlow::new(bands, point)?;
    let mut a = Vec::with_capacity(j);
    let mut b = Vec::with_capacity(j);
    for _ in 0..j {
        let (x, y) = flow.step()?;
        a.push(x);
        b.push(y);
    }
    JacobiMatrix::new(a, b)
}

/// Torus point matched to the tail of a Jacobi matrix.
#[derive(Debug, Clone)]
pub struct TailMatch {
    /// Point carried by the tail starting at row `start`.
    pub point: TorusPoint,
    pub start: usize,
    /// Largest deviation between the torus coefficients and the matched
    /// rows of the tail.
    pub residual: f64,
}

const TAIL_SAMPLES: usize = 256;

/// `[sqrt Y]_-(z) = sqrt Y(z) - (polynomial part)` off the bands, as the
/// Cauchy integral of the jump `2i(-1)^{N-1-k} sqrt|Y|` across band `k`.
fn sqrt_y_negative_part(e: &[f64], points: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64;
    const NODES: usize = 96;
    let rule = chebyshev_second(NODES);
    let bands = e.len() / 2;
    let mut nodes = Vec::with_capacity(bands * NODES);
    for k in 0..bands {
        let (lo, hi) = (e[2 * k], e[2 * k + 1]);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let sign = if (bands - 1 - k) % 2 == 0 { 1.0 } else { -1.0 };
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = c + r * t;
            let q: f64 = e
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != 2 * k && j != 2 * k + 1)
                .map(|(_, v)| (s - v).abs().sqrt())
                .product();
            nodes.push((s, sign * r * r * w * q / PI));
        }
    }
    points
        .iter()
        .map(|&z| nodes.iter().map(|&(s, w)| w / (s - z)).sum::<Complex64>())
        .collect()
}

/// Finds the torus point whose measure has the Jacobi tail
/// `(a[start..], b[start..])` of `jm`, using `depth` rows of that tail.
///
/// On a circle around the hull the Markov function `M` and the functions of
/// the second kind `ψ_k` of the tail come from a backward continued
/// fraction. Writing `c Z = Σ u_k p_k` in the tail's orthonormal basis, the
/// identity `X - sqrt Y = c Z M` reduces to `Σ u_k ψ_k = -[sqrt Y]_-`, the
/// negative-power part of `sqrt Y`, which is solved in least squares.
pub fn match_tail(bands: &IntervalUnion, jm: &JacobiMatrix, start: usize, depth: usize) -> Result<TailMatch> {
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rustfft::FftPlanner;

    let geo = Geometry::new(bands);
    let m = geo.gaps();
    let n = m + 1;
    if depth < n + 20 || start + depth > jm.len() {
        return Err(Error::invalid(format!(
            "tail matching needs {} rows from row {start}, the matrix has {}",
            depth.max(n + 20),
            jm.len()
        )));
    }
    let a: Vec<f64> = jm.a[start..start + depth].iter().map(|v| v - geo.shift).collect();
    // b[k] couples tail rows k and k + 1
    let b = &jm.b[start..start + depth];
    let rho = geo.e.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let radius = 1.5 * rho;
    let k_pts = TAIL_SAMPLES.max(4 * n);
    let circle: Vec<Complex64> = (0..k_pts)
        .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / k_pts as f64))
        .collect();

    // ψ_0..ψ_{n-1} at each sample
    let psi: Vec<Vec<Complex64>> = circle
        .iter()
        .map(|&z| {
            let mut ratio = vec![Complex64::new(0.0, 0.0); depth];
            let mut r = Complex64::new(0.0, 0.0);
            for k in (1..depth).rev() {
                r = b[k - 1] / (z - a[k] - b.get(k).copied().unwrap_or(0.0) * r);
                ratio[k] = r;
            }
            let mut out = Vec::with_capacity(n);
            let mut v = 1.0 / (z - a[0] - b[0] * ratio[1]);
            out.push(v);
            for r in ratio.iter().take(n).skip(1) {
                v *= r;
                out.push(v);
            }
            out
        })
        .collect();

    let sqrt_y: Vec<Complex64> = circle
        .iter()
        .map(|&z| {
            let s: Complex64 = geo.e.iter().map(|e| 0.5 * (1.0 - e / z).ln()).sum();
            z.powi(n as i32) * s.exp()
        })
        .collect();
    let neg = sqrt_y_negative_part(&geo.e, &circle);
    let rows = 2 * k_pts;
    let mut mat = DMatrix::<f64>::zeros(rows, n);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (j, (ps, g)) in psi.iter().zip(&neg).enumerate() {
        for (k, p) in ps.iter().enumerate() {
            mat[(2 * j, k)] = p.re;
            mat[(2 * j + 1, k)] = p.im;
        }
        rhs[2 * j] = -g.re;
        rhs[2 * j + 1] = -g.im;
    }
    let scale: Vec<f64> = (0..n).map(|k| mat.column(k).norm()).collect();
    for (k, s) in scale.iter().enumerate() {
        mat.column_mut(k).scale_mut(1.0 / s);
    }
    let sol = mat
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Singular(format!("tail fit: {e}")))?;
    let u: Vec<f64> = (0..n).map(|k| sol[k] / scale[k]).collect();

    // c = leading coefficient of Σ u_k p_k
    let lead: f64 = b[..n - 1].iter().fold(1.0, |acc, v| acc / v);
    let c = u[n - 1] * lead;
    if !(c > 0.0) {
        return Err(Error::LostPositivity { index: start, value: c });
    }
    let poly = |x: f64| {
        let (mut p_prev, mut p) = (0.0, 1.0);
        let mut acc = u[0];
        for k in 1..n {
            let next = ((x - a[k - 1]) * p - if k > 1 { b[k - 2] * p_prev } else { 0.0 }) / b[k - 1];
            p_prev = p;
            p = next;
            acc += u[k] * p;
        }
        acc
    };
    let xi: Vec<f64> = (0..m)
        .map(|g| {
            let (lo, hi) = geo.gap(g);
            let sign_lo = if (m - g) % 2 == 0 { 1.0 } else { -1.0 };
            bracketed_root(poly, lo, hi, sign_lo)
        })
        .collect();

    // X = c Z M + sqrt Y on the circle, then its Laurent coefficients
    let x_samples: Vec<Complex64> = (0..k_pts)
        .map(|j| {
            let z = circle[j];
            let (mut p_prev, mut p) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
            let mut acc = Complex64::new(u[0], 0.0);
            for k in 1..n {
                let next = ((z - a[k - 1]) * p - if k > 1 { p_prev * b[k - 2] } else { Complex64::new(0.0, 0.0) }) / b[k - 1];
                p_prev = p;
                p = next;
                acc += p * u[k];
            }
            acc * psi[j][0] + sqrt_y[j]
        })
        .collect();
    let mut coef = x_samples;
    FftPlanner::new().plan_fft_forward(k_pts).process(&mut coef);
    let coef: Vec<f64> = coef.iter().take(n + 1).map(|v| v.re / k_pts as f64).collect();
    let misfit = psi
        .iter()
        .zip(&neg)
        .map(|(ps, g)| (ps.iter().zip(&u).map(|(p, uk)| p * uk).sum::<Complex64>() + g).norm())
        .fold(0.0f64, f64::max);
    let size = neg.iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
    let sigma: Vec<i8> = xi
        .iter()
        .map(|&x| {
            let w = x / radius;
            let val = coef.iter().rev().fold(0.0, |acc, c| acc * w + c);
            if val >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let point = TorusPoint {
        xi: xi.iter().map(|v| v + geo.shift).collect(),
        sigma,
    };
    if !(misfit <= 1e-6 * size) {
        return Err(Error::Singular(format!("tail fit misfit {:.1e}", misfit / size)));
    }
    let rows = depth.min(8 * n);
    let target = (&jm.a[start..start + rows], &jm.b[start..start + rows]);
    let point = polish_tail(bands, point, target)?;
    let fit = torus_jacobi(bands, &point, depth)?;
    let residual = (0..depth)
        .map(|k| (fit.a[k] - jm.a[start + k]).abs().max((fit.b[k] - jm.b[start + k]).abs()))
        .fold(0.0f64, f64::max);
    Ok(TailMatch { point, start, residual })
}

/// Gauss-Newton refinement of a torus point so that its first rows agree with
/// `target`. Each gap point is written as `mid + half cos(phi)`, with the sheet
/// given by the sign of `sin(phi)`, which stays smooth across the gap edges.
fn polish_tail(bands: &IntervalUnion, point: TorusPoint, target: (&[f64], &[f64])) -> Result<TorusPoint> {
    use nalgebra::{DMatrix, DVector};

    let geo = Geometry::new(bands);
    let gaps: Vec<(f64, f64)> = (0..geo.gaps())
        .map(|g| {
            let (lo, hi) = geo.gap(g);
            (0.5 * (lo + hi) + geo.shift, 0.5 * (hi - lo))
        })
        .collect();
    let to_point = |phi: &[f64]| TorusPoint {
        xi: phi.iter().zip(&gaps).map(|(p, (c, h))| c + h * p.cos()).collect(),
        sigma: phi.iter().map(|p| if p.sin() >= 0.0 { 1 } else { -1 }).collect(),
    };
    let rows = target.0.len();
    let misfit = |phi: &[f64]| -> Result<DVector<f64>> {
        let jm = torus_jacobi(bands, &to_point(phi), rows)?;
        Ok(DVector::from_iterator(
            2 * rows,
            (0..rows).flat_map(|k| [jm.a[k] - target.0[k], jm.b[k] - target.1[k]]),
        ))
    };
    let mut phi: Vec<f64> = point
        .xi
        .iter()
        .zip(&point.sigma)
        .zip(&gaps)
        .map(|((x, s), (c, h))| {
            let t = ((x - c) / h).clamp(-1.0, 1.0).acos();
            if *s > 0 { t } else { 2.0 * PI - t }
        })
        .collect();
    let mut r = misfit(&phi)?;
    let step = 1e-6;
    for _ in 0..20 {
        let mut jac = DMatrix::<f64>::zeros(2 * rows, phi.len());
        for g in 0..phi.len() {
            let mut up = phi.clone();
            let mut down = phi.clone();
            up[g] += step;
            down[g] -= step;
            let col = (misfit(&up)? - misfit(&down)?) / (2.0 * step);
            jac.set_column(g, &col);
        }
        let delta = jac
            .svd(true, true)
            .solve(&r, 1e-13)
            .map_err(|e| Error::Singular(format!("tail polish: {e}")))?;
        let mut scale = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = phi.iter().zip(delta.iter()).map(|(p, d)| p - scale * d).collect();
            let tr = misfit(&trial)?;
            if tr.norm() < r.norm() {
                break Some((trial, tr));
            }
            scale *= 0.5;
            if scale < 1e-4 {
                break None;
            }
        };
        let Some((trial, tr)) = accepted else { break };
        let moved = delta.amax() * scale;
        phi = trial;
        r = tr;
        if moved < 1e-13 {
            break;
        }
    }
    Ok(to_point(&phi))
}

/// Jacobi matrix of the torus measure matched to the tail of `jm` at row
/// `start`, carried back to row 0 and then forward for `len` rows.
pub fn torus_from_tail(bands: &IntervalUnion, jm: &JacobiMatrix, start: usize, depth: usize, len: usize) -> Result<(JacobiMatrix, TailMatch)> {
    let matched = match_tail(bands, jm, start, depth)?;
    let mut flow = TorusFlow::new(bands, &matched.point)?;
    for _ in 0..start {
        flow.step_back()?;
    }
    let origin = flow.point();
    Ok((torus_jacobi(bands, &origin, len)?, matched))
}

/// The polynomial `X` of a torus point, kept in interpolation form.
#[derive(Debug, Clone)]
pub struct XPolynomial {
    geo: Geometry,
    state: State,
}

/// Builds `X` for a torus point.
pub fn build_x(bands: &IntervalUnion, point: &TorusPoint) -> Result<XPolynomial> {
    let geo = Geometry::new(bands);
    let xi: Vec<f64> = point.xi.iter().map(|v| v - geo.shift).collect();
    for w in xi.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Singular("coincident interpolation points".into()));
        }
    }
    let state = State::new(&geo, xi, point.sigma.clone())?;
    Ok(XPolynomial { geo, state })
}

impl XPolynomial {
    pub fn degree(&self) -> usize {
        self.geo.e.len() / 2
    }

    /// `X(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x - self.geo.shift;
        let xi = &self.state.xi;
        let m = xi.len();
        let z: f64 = xi.iter().map(|v| x - v).product();
        let mut interp = 0.0;
        for i in 0..m {
            let others: f64 = (0..m).filter(|&l| l != i).map(|l| x - xi[l]).product();
            interp += f64::from(self.state.sigma[i]) * self.state.kappa[i] * others;
        }
        (x - self.state.r()) * z + interp
    }

    /// `sqrt|Y(x)|`.
    pub fn sqrt_abs_y(&self, x: f64) -> f64 {
        let x = x - self.geo.shift;
        self.geo.e.iter().map(|v| (x - v).abs().sqrt()).product()
    }

    /// Coefficients of `x^N` and `x^{N-1}` in the original variable.
    pub fn leading(&self) -> (f64, f64) {
        let n = self.degree() as f64;
        // centred X = x^N + 0 x^{N-1} + ...; shifting back adds -N * shift
        (1.0, -n * self.geo.shift)
    }

    /// `lim z (X - sqrt Y) / Z`, the mass of the unnormalised measure.
    pub fn mass(&self) -> f64 {
        self.state.c
    }

    /// `z (X(z) - sqrt(Y(z))) / Z(z)` at a large real `z`, evaluated without
    /// cancellation between `X` and `sqrt Y`.
    pub fn mass_probe(&self, z: f64) -> f64 {
        let x = z - self.geo.shift;
        let st = &self.state;
        let mut s = 0.0;
        for e in &self.geo.e {
            s += 0.5 * (-e / x).ln_1p();
        }
        for v in &st.xi {
            s -= (-v / x).ln_1p();
        }
        let poles: f64 = st
            .xi
            .iter()
            .zip(&st.sigma)
            .zip(&st.kappa)
            .map(|((v, sg), k)| f64::from(*sg) * k / (x - v))
            .sum();
        x * (-x * s.exp_m1() - st.r() + poles)
    }
}

/// Normalised torus measure: density on the bands plus atoms in the gaps.
#[derive(Debug, Clone)]
pub struct TorusMeasure {
    bands: IntervalUnion,
    point: TorusPoint,
    geo: Geometry,
    state: State,
    atoms: Vec<(f64, f64)>,
}

/// Clamp for residues that vanish analytically.
const ATOM_CLAMP: f64 = 1e-13;

pub fn torus_measure(bands: &IntervalUnion, point: &TorusPoint) -> Result<TorusMeasure> {
    let x = build_x(bands, point)?;
    let scale = x.geo.e.iter().fold(0.0f64, |a, v| a.max(v.abs())).powi(2);
    let mut atoms = Vec::new();
    for g in 0..point.num_gaps() {
        let hat = branch_sign(bands, g);
        let residue = f64::from(point.sigma[g] - hat) * x.state.kappa[g];
        if residue.abs() < ATOM_CLAMP * scale {
            continue;
        }
        if residue < 0.0 {
            return Err(Error::NegativeAtom {
                gap: g,
                value: residue / x.state.c,
            });
        }
        atoms.push((point.xi[g], residue / x.state.c));
    }
    Ok(TorusMeasure {
        bands: bands.clone(),
        point: point.clone(),
        geo: x.geo,
        state: x.state,
        atoms,
    })
}

impl TorusMeasure {
    pub fn bands(&self) -> &IntervalUnion {
        &self.bands
    }

    pub fn point(&self) -> &TorusPoint {
        &self.point
    }

    /// `(position, weight)` of the nonzero atoms.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Weight `1/c` in front of `sqrt|Y| / (π |Z|)`.
    pub fn ac_weight(&self) -> f64 {
        1.0 / self.state.c
    }

    /// Unnormalised total mass `c`.
    pub fn raw_mass(&self) -> f64 {
        self.state.c
    }

    /// Density of the absolutely continuous part; zero off the bands.
    pub fn density(&self, s: f64) -> f64 {
        let Some(k) = self.bands.band_containing(s) else {
            return 0.0;
        };
        let x = s - self.geo.shift;
        let (lo, hi) = (self.geo.e[2 * k], self.geo.e[2 * k + 1]);
        let local = ((x - lo) * (hi - x)).max(0.0).sqrt();
        local / (PI * self.state.c * local_ratio(&self.geo.e, &self.state.xi, 2 * k, x).abs())
    }

    /// Mass of the absolutely continuous part on each band.
    pub fn band_masses(&self, nodes: usize) -> Vec<f64> {
        let rule = chebyshev_second(nodes);
        (0..self.bands.num_bands())
            .map(|k| {
                let (lo, hi) = (self.geo.e[2 * k], self.geo.e[2 * k + 1]);
                let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                kahan_sum(rule.nodes.iter().zip(&rule.weights).map(|(t, w)| {
                    r * r * w / (PI * self.state.c * local_ratio(&self.geo.e, &self.state.xi, 2 * k, c + r * t).abs())
                }))
            })
            .collect()
    }

    /// Total mass by quadrature (1 up to quadrature error).
    pub fn total_mass(&self, nodes: usize) -> f64 {
        kahan_sum(self.band_masses(nodes).into_iter().chain(self.atoms.iter().map(|a| a.1)))
    }

    /// `nodes` second-kind Gauss–Chebyshev points per band plus the atoms.
    pub fn discretize(&self, nodes: usize) -> Result<DiscreteMeasure> {
        if nodes < 2 {
            return Err(Error::invalid("at least two nodes per band are needed"));
        }
        let rule = chebyshev_second(nodes);
        let mut pos = Vec::with_capacity(nodes * self.bands.num_bands() + self.atoms.len());
        let mut wts = Vec::with_capacity(pos.capacity());
        for k in 0..self.bands.num_bands() {
            let (lo, hi) = (self.geo.e[2 * k], self.geo.e[2 * k + 1]);
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = c + r * t;
                pos.push(x + self.geo.shift);
                wts.push(r * r * w / (PI * self.state.c * local_ratio(&self.geo.e, &self.state.xi, 2 * k, x).abs()));
            }
        }
        let mut merged: Vec<(f64, f64)> = pos.into_iter().zip(wts).collect();
        merged.extend(self.atoms.iter().copied());
        merged.sort_by(|p, q| p.0.total_cmp(&q.0));
        DiscreteMeasure::new(merged.iter().map(|p| p.0).collect(), merged.iter().map(|p| p.1).collect())
    }
}

/// Jacobi matrix of a torus measure through discretisation, doubling the
/// nodes per band from 64 until the first `j` rows move by less than `tol`.
/// Returns the matrix and the node count used.
pub fn jacobi_discretized(measure: &TorusMeasure, j: usize, tol: f64) -> Result<(JacobiMatrix, usize)> {
    const CAP: usize = 1 << 15;
    let bands = measure.bands.num_bands();
    let mut p = 64.max((j + 2).div_ceil(bands) + 1);
    let mut prev = jacobi_from_discrete(&measure.discretize(p)?, j)?;
    while p < CAP {
        p *= 2;
        let next = jacobi_from_discrete(&measure.discretize(p)?, j)?;
        let db = compare_sequences(&prev, &next).running_max.last().copied().unwrap_or(0.0);
        let da = prev.a.iter().zip(&next.a).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if db.max(da) < tol {
            return Ok((next, p));
        }
        prev = next;
    }
    Err(Error::NotStabilized(format!("discretisation did not settle within {CAP} nodes per band")))
}

/// Row of the torus stabilisation table.
#[derive(Debug, Clone)]
pub struct StabilizationRow {
    pub n: usize,
    /// `max_{l <= j} |b_l(theta_n) - b_l(theta_{n-1})|`.
    pub running_max: Vec<f64>,
    /// `N(eps, n)` for each requested `eps`.
    pub prefix: Vec<usize>,
}

/// Output of [`torus_limit_sequence`].
#[derive(Debug, Clone)]
pub struct TorusLimit {
    pub matrices: Vec<JacobiMatrix>,
    pub rows: Vec<StabilizationRow>,
}

/// `J(theta_n)` for `n = 1..=n_max` under a point rule, with the stabilisation
/// gauge between consecutive levels.
pub fn torus_limit_sequence(ifs: &AffineIfs, rule: PointRule, n_max: usize, j: usize, eps: &[f64]) -> Result<TorusLimit> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let mut matrices = Vec::with_capacity(n_max);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let (bands, point) = rule.apply(ifs, n)?;
        let jm = torus_jacobi(&bands, &point, j)?;
        if let Some(prev) = matrices.last() {
            let prof = compare_sequences(prev, &jm);
            rows.push(StabilizationRow {
                n,
                prefix: eps.iter().map(|&e| prof.stable_prefix(e)).collect(),
                running_max: prof.running_max,
            });
        }
        matrices.push(jm);
    }
    Ok(TorusLimit { matrices, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_bands() -> IntervalUnion {
        IntervalUnion::from_pairs(&[(-1.0, -0.2), (0.1, 1.0)]).unwrap()
    }

    #[test]
    fn branch_signs() {
        let b2 = two_bands();
        assert_eq!(branch_sign(&b2, 0), -1);
        let b3 = IntervalUnion::from_pairs(&[(-1.0, -0.5), (-0.2, 0.2), (0.5, 1.0)]).unwrap();
        assert_eq!(branch_sign(&b3, 1), -1);
        assert_eq!(branch_sign(&b3, 0), 1);
    }

    #[test]
    fn single_band_is_semicircle() {
        let bands = IntervalUnion::from_pairs(&[(2.0, 5.0)]).unwrap();
        let point = TorusPoint::new(&bands, vec![], vec![]).unwrap();
        let x = build_x(&bands, &point).unwrap();
        assert_abs_diff_eq!(x.eval(7.0), 7.0 - 3.5, epsilon = 1e-14);
        assert_abs_diff_eq!(x.mass(), 9.0 / 8.0, epsilon = 1e-14);
        let th = torus_measure(&bands, &point).unwrap();
        assert!(th.atoms().is_empty());
        assert_abs_diff_eq!(th.density(3.5), 2.0 / (PI * 1.5), epsilon = 1e-14);
        let jm = torus_jacobi(&bands, &point, 20).unwrap();
        for (a, b) in jm.a.iter().zip(&jm.b) {
            assert_abs_diff_eq!(*a, 3.5, epsilon = 1e-14);
            assert_abs_diff_eq!(*b, 0.75, epsilon = 1e-14);
        }
        let disc = jacobi_from_discrete(&th.discretize(40).unwrap(), 39).unwrap();
        for b in &disc.b {
            assert_abs_diff_eq!(*b, 0.75, epsilon = 1e-13);
        }
    }

    #[test]
    fn interpolation_and_atoms() {
        let bands = two_bands();
        let hat = branch_sign(&bands, 0);
        for sigma in [hat, -hat] {
            let point = TorusPoint::new(&bands, vec![-0.1], vec![sigma]).unwrap();
            let x = build_x(&bands, &point).unwrap();
            assert_abs_diff_eq!(x.eval(-0.1), f64::from(sigma) * x.sqrt_abs_y(-0.1), epsilon = 1e-14);
            let th = torus_measure(&bands, &point).unwrap();
            if sigma == hat {
                assert!(th.atoms().is_empty());
            } else {
                assert_eq!(th.atoms().len(), 1);
                assert!(th.atoms()[0].1 > 0.0);
            }
            assert_abs_diff_eq!(th.total_mass(2000), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn flipping_sigma_toggles_one_atom() {
        let bands = IntervalUnion::from_pairs(&[(-1.0, -0.6), (-0.4, 0.1), (0.3, 1.0)]).unwrap();
        let hat: Vec<i8> = (0..2).map(|g| branch_sign(&bands, g)).collect();
        let base = torus_measure(&bands, &TorusPoint::new(&bands, vec![-0.5, 0.2], hat.clone()).unwrap()).unwrap();
        assert!(base.atoms().is_empty());
        let flipped = torus_measure(&bands, &TorusPoint::new(&bands, vec![-0.5, 0.2], vec![hat[0], -hat[1]]).unwrap()).unwrap();
        assert_eq!(flipped.atoms().len(), 1);
        assert_abs_diff_eq!(flipped.atoms()[0].0, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn mass_matches_asymptotics() {
        let ifs = AffineIfs::example1();
        for n in 1..=3 {
            let (bands, point) = PointRule::Fraction { t: 0.3, alternate: true }.apply(&ifs, n).unwrap();
            let x = build_x(&bands, &point).unwrap();
            let p6 = x.mass_probe(1e6);
            let p7 = x.mass_probe(1e7);
            assert!(p6 > 0.0);
            assert_abs_diff_eq!(p6, p7, epsilon = 1e-5 * p7);
            assert_abs_diff_eq!(p7, x.mass(), epsilon = 1e-6 * p7);
            let th = torus_measure(&bands, &point).unwrap();
            assert_abs_diff_eq!(th.total_mass(4000), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn continued_fraction_matches_discretisation() {
        let ifs = AffineIfs::example1();
        for (n, rule) in [
            (1, PointRule::MidpointPlus),
            (1, PointRule::Fraction { t: 0.2, alternate: true }),
            (2, PointRule::Fraction { t: 1.0 / 3.0, alternate: true }),
            (3, PointRule::MidpointPlus),
            (4, PointRule::MidpointPlus),
            (5, PointRule::Fraction { t: 1.0 / 3.0, alternate: true }),
        ] {
            let (bands, point) = rule.apply(&ifs, n).unwrap();
            let j = 60;
            let exact = torus_jacobi(&bands, &point, j).unwrap();
            let th = torus_measure(&bands, &point).unwrap();
            let (disc, _) = jacobi_discretized(&th, j, 1e-13).unwrap();
            let db = compare_sequences(&exact, &disc).running_max[j - 1];
            let da = exact.a.iter().zip(&disc.a).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(db < 1e-11 && da < 1e-11, "n={n} {rule:?}: db={db:e} da={da:e}");
        }
    }

    #[test]
    fn backward_step_inverts_forward_step() {
        let ifs = AffineIfs::example1();
        let (bands, point) = PointRule::Fraction { t: 0.7, alternate: true }.apply(&ifs, 3).unwrap();
        let mut flow = TorusFlow::new(&bands, &point).unwrap();
        let mut fwd = Vec::new();
        for _ in 0..200 {
            fwd.push(flow.step().unwrap());
        }
        for k in (0..200).rev() {
            let (a, b) = flow.step_back().unwrap();
            assert_abs_diff_eq!(a, fwd[k].0, epsilon = 1e-11);
            assert_abs_diff_eq!(b, fwd[k].1, epsilon = 1e-11);
        }
        let back = flow.point();
        for (x, y) in back.xi.iter().zip(&point.xi) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-11);
        }
        assert_eq!(back.sigma, point.sigma);
    }

    #[test]
    fn torus_coefficients_respect_hull() {
        let ifs = AffineIfs::example1();
        let (bands, point) = PointRule::MidpointPlus.apply(&ifs, 4).unwrap();
        let jm = torus_jacobi(&bands, &point, 2000).unwrap();
        for (a, b) in jm.a.iter().zip(&jm.b) {
            assert!(a.abs() <= 1.0 && *b > 0.0 && *b <= 1.0);
        }
    }

    #[test]
    fn stabilisation_table() {
        let ifs = AffineIfs::example1();
        let lim = torus_limit_sequence(&ifs, PointRule::MidpointPlus, 3, 300, &[1e-2, 1e-3]).unwrap();
        assert_eq!(lim.matrices.len(), 3);
        assert_eq!(lim.rows.len(), 2);
        assert!(lim.rows[0].running_max[0] > 0.0);
        for row in &lim.rows {
            assert!(row.prefix[0] >= row.prefix[1]);
        }
    }

    #[test]
    fn tail_match_recovers_point() {
        let ifs = AffineIfs::example1();
        for (n, rule) in [
            (1, PointRule::Fraction { t: 0.8, alternate: false }),
            (2, PointRule::Fraction { t: 1.0 / 3.0, alternate: true }),
            (3, PointRule::MidpointPlus),
        ] {
            let (bands, point) = rule.apply(&ifs, n).unwrap();
            let jm = torus_jacobi(&bands, &point, 900).unwrap();
            let mut flow = TorusFlow::new(&bands, &point).unwrap();
            for _ in 0..400 {
                flow.step().unwrap();
            }
            let want = flow.point();
            let got = match_tail(&bands, &jm, 400, 300).unwrap();
            assert!(got.residual < 1e-10, "residual {:e}", got.residual);
            for (x, y) in got.point.xi.iter().zip(&want.xi) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
            assert_eq!(got.point.sigma, want.sigma);
            let (back, _) = torus_from_tail(&bands, &jm, 400, 300, 900).unwrap();
            let db = compare_sequences(&jm, &back).running_max[899];
            assert!(db < 1e-10, "n={n}: {db:e}");
        }
    }

    #[test]
    fn torus_spec_json() {
        let ifs = AffineIfs::example1();
        let spec: TorusSpec = serde_json::from_str(r#"{"rule": "midpoint-plus"}"#).unwrap();
        let (_, p) = spec.resolve(&ifs, 2).unwrap();
        assert_eq!(p.sigma, vec![1, 1, 1]);
        let spec: TorusSpec = serde_json::from_str(r#"{"xi": [-0.2, -0.75, 0.4], "sigma": [1, -1, 1]}"#).unwrap();
        let (_, p) = spec.resolve(&ifs, 2).unwrap();
        // birth order (-0.2 first) re-sorted left to right
        assert_eq!(p.xi, vec![-0.75, -0.2, 0.4]);
        assert_eq!(p.sigma, vec![-1, 1, 1]);
        let bad: TorusSpec = serde_json::from_str(r#"{"xi": [0.0], "sigma": [1]}"#).unwrap();
        assert!(bad.resolve(&ifs, 2).is_err());
    }
}

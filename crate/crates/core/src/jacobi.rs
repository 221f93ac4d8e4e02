//! Jacobi matrices of discrete and IFS-generated measures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{AffineIfs, DiscreteMeasure, DEFAULT_ATOM_BUDGET};
use crate::numeric::{chebyshev_second, gauss_legendre, Rule};

/// Leading block of a Jacobi matrix: `a_0 .. a_{J-1}` on the diagonal and
/// `b_1 .. b_J` off it (`b[0]` holds `b_1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiMatrix {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl JacobiMatrix {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid("diagonal and off-diagonal lengths differ"));
        }
        if let Some((i, &v)) = b.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::LostPositivity { index: i + 1, value: v });
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// The first `j` rows.
    pub fn truncate(&self, j: usize) -> Self {
        let j = j.min(self.len());
        Self {
            a: self.a[..j].to_vec(),
            b: self.b[..j].to_vec(),
        }
    }

    /// `b_j` with the 1-based index of the literature.
    pub fn b_at(&self, j: usize) -> f64 {
        self.b[j - 1]
    }
}

/// Initial measure of the IFS iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseMeasure {
    /// Normalised Lebesgue measure on the hull.
    LebesgueA,
    /// Second-kind Chebyshev (semicircle) measure on the hull.
    ChebyshevB,
}

impl std::str::FromStr for BaseMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" | "lebesgue" => Ok(Self::LebesgueA),
            "b" | "B" | "chebyshev" => Ok(Self::ChebyshevB),
            other => Err(Error::invalid(format!("unknown base measure `{other}`, expected a or b"))),
        }
    }
}

/// Largest `J^2 K` for which every Lanczos vector is kept and reorthogonalised.
pub const FULL_REORTH_WORK: f64 = 4e8;

/// Jacobi matrix of a discrete measure by Lanczos tridiagonalisation of the
/// diagonal matrix of atom positions, started from the square roots of the
/// weights.
///
/// Small problems keep every Lanczos vector and reorthogonalise twice per
/// step. Large problems use the equivalent rotation-based reduction, which
/// is orthogonal by construction and costs `O(K J)`.
pub fn jacobi_from_discrete(mu: &DiscreteMeasure, j: usize) -> Result<JacobiMatrix> {
    if j == 0 {
        return Err(Error::invalid("J must be at least 1"));
    }
    if mu.len() < j + 1 {
        return Err(Error::invalid(format!(
            "{} atoms cannot determine {j} rows; at least J + 1 are needed",
            mu.len()
        )));
    }
    let work = (j as f64).powi(2) * mu.len() as f64;
    if work <= FULL_REORTH_WORK {
        lanczos_full(mu.positions(), mu.weights(), j)
    } else {
        rkpw(mu.positions(), mu.weights(), j)
    }
}

/// Orthogonal reduction of `diag(x)` against `sqrt(w)` by Givens rotations,
/// adding one atom at a time (Gragg and Harrod). The rotation chase only
/// moves downward, so keeping the leading `j + 1` rows is exact.
fn rkpw(x: &[f64], w: &[f64], j: usize) -> Result<JacobiMatrix> {
    let rows = j + 1;
    let mut atoms = x.iter().zip(w).filter(|(_, w)| **w > 0.0);
    let (&x0, &w0) = atoms.next().ok_or_else(|| Error::invalid("the measure has no positive weight"))?;
    // alpha_k and beta_k (beta_0 is the mass) of the matrix built so far
    let mut alpha = vec![0.0; rows];
    let mut beta = vec![0.0; rows];
    alpha[0] = x0;
    beta[0] = w0;
    let mut size = 1;
    for (&lambda, &weight) in atoms {
        let (mut gamma, mut sigma, mut t) = (1.0, 0.0, 0.0);
        let mut pending = weight;
        let reach = (size + 1).min(rows);
        for k in 0..reach {
            let rho = beta[k] + pending;
            let kept = gamma * rho;
            let old_sigma = sigma;
            if rho <= 0.0 {
                gamma = 1.0;
                sigma = 0.0;
            } else {
                gamma = beta[k] / rho;
                sigma = pending / rho;
            }
            let tk = sigma * (alpha[k] - lambda) - gamma * t;
            alpha[k] -= tk - t;
            t = tk;
            pending = if sigma <= 0.0 { old_sigma * beta[k] } else { t * t / sigma };
            beta[k] = kept;
        }
        size = reach;
    }
    if size < rows {
        return Err(Error::invalid(format!(
            "{size} distinct atoms cannot determine {j} rows; at least J + 1 are needed"
        )));
    }
    let mut b = Vec::with_capacity(j);
    for (k, v) in beta[1..].iter().enumerate() {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::LostPositivity { index: k + 1, value: *v });
        }
        b.push(v.sqrt());
    }
    alpha.truncate(j);
    Ok(JacobiMatrix { a: alpha, b })
}

fn lanczos_full(x: &[f64], w: &[f64], j: usize) -> Result<JacobiMatrix> {
    use crate::numeric::kahan_sum;
    let k = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(j + 1);
    let q0: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let n0 = kahan_sum(q0.iter().map(|v| v * v)).sqrt();
    basis.push(q0.into_iter().map(|v| v / n0).collect());
    let mut a = Vec::with_capacity(j);
    let mut b = Vec::with_capacity(j);
    for step in 0..j {
        let q = &basis[step];
        let alpha = kahan_sum((0..k).map(|i| x[i] * q[i] * q[i]));
        let mut r: Vec<f64> = (0..k).map(|i| (x[i] - alpha) * q[i]).collect();
        if step > 0 {
            let beta = b[step - 1];
            let qp = &basis[step - 1];
            for i in 0..k {
                r[i] -= beta * qp[i];
            }
        }
        for _ in 0..2 {
            for v in &basis {
                let h = kahan_sum((0..k).map(|i| v[i] * r[i]));
                for i in 0..k {
                    r[i] -= h * v[i];
                }
            }
        }
        let beta = kahan_sum(r.iter().map(|v| v * v)).sqrt();
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::LostPositivity {
                index: step + 1,
                value: beta,
            });
        }
        a.push(alpha);
        b.push(beta);
        basis.push(r.into_iter().map(|v| v / beta).collect());
    }
    Ok(JacobiMatrix { a, b })
}

/// Quadrature discretisation of the base measure on `[lo, hi]` with `p` nodes.
pub fn base_measure_rule(base: BaseMeasure, lo: f64, hi: f64, p: usize) -> Result<DiscreteMeasure> {
    let rule: Rule = match base {
        BaseMeasure::LebesgueA => gauss_legendre(p),
        BaseMeasure::ChebyshevB => chebyshev_second(p),
    };
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    DiscreteMeasure::new(rule.nodes.iter().map(|x| c + r * x).collect(), rule.weights)
}

/// Options for [`jacobi_mu_n_with`].
#[derive(Debug, Clone, Copy)]
pub struct MuOptions {
    /// Base-rule nodes; `None` uses `J + 1`, for which the push-forward of
    /// the Gauss rule reproduces all moments up to degree `2J + 1` exactly.
    pub nodes: Option<usize>,
    pub atom_budget: usize,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            nodes: None,
            atom_budget: DEFAULT_ATOM_BUDGET,
        }
    }
}

/// Jacobi matrix of `mu_n = (T*)^n mu_0`.
pub fn jacobi_mu_n(ifs: &AffineIfs, base: BaseMeasure, n: usize, j: usize) -> Result<JacobiMatrix> {
    jacobi_mu_n_with(ifs, base, n, j, &MuOptions::default())
}

pub fn jacobi_mu_n_with(ifs: &AffineIfs, base: BaseMeasure, n: usize, j: usize, opts: &MuOptions) -> Result<JacobiMatrix> {
    if ifs.weights().is_none() {
        return Err(Error::invalid("the IFS needs weights to define mu_n"));
    }
    let p = opts.nodes.unwrap_or(j + 1);
    let atoms = ifs.num_maps().checked_pow(n as u32).and_then(|m| m.checked_mul(p));
    if atoms.is_none_or(|a| a > opts.atom_budget) {
        return Err(Error::AtomBudget {
            requested: atoms.unwrap_or(usize::MAX),
            budget: opts.atom_budget,
        });
    }
    let hull = ifs.hull();
    let mu0 = base_measure_rule(base, hull.lo, hull.hi, p)?;
    let mu = ifs.pushforward_measure(&mu0, n, opts.atom_budget)?;
    jacobi_from_discrete(&mu, j)
}

/// Result of [`jacobi_balanced`].
#[derive(Debug, Clone)]
pub struct BalancedJacobi {
    pub matrix: JacobiMatrix,
    /// Level `n` at which the stopping rule was met.
    pub level: usize,
    /// `max_j |b_j(mu_n) - b_j(mu_{n-1})|` per level, starting at `n = 1`.
    pub deltas: Vec<f64>,
}

/// Jacobi matrix of the balanced measure, approximated by `mu_n` with `n`
/// raised until the first `J` off-diagonal entries move by less than `eps`.
pub fn jacobi_balanced(ifs: &AffineIfs, base: BaseMeasure, j: usize, eps: f64) -> Result<BalancedJacobi> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut previous = jacobi_mu_n(ifs, base, 0, j)?;
    let mut deltas = Vec::new();
    for n in 1.. {
        let current = match jacobi_mu_n(ifs, base, n, j) {
            Ok(m) => m,
            Err(Error::AtomBudget { .. }) => {
                return Err(Error::NotStabilized(format!(
                    "level {} exceeds the atom budget; last change {:.3e} > eps {eps:e}",
                    n,
                    deltas.last().copied().unwrap_or(f64::INFINITY)
                )))
            }
            Err(e) => return Err(e),
        };
        let delta = compare_sequences(&previous, &current)
            .running_max
            .last()
            .copied()
            .unwrap_or(0.0);
        deltas.push(delta);
        log::debug!("balanced: n = {n}, change {delta:.3e}");
        if delta < eps {
            return Ok(BalancedJacobi {
                matrix: current,
                level: n,
                deltas,
            });
        }
        previous = current;
    }
    unreachable!()
}

/// Pointwise `|b_j(x) - b_j(y)|` and its running maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub diff: Vec<f64>,
    pub running_max: Vec<f64>,
}

impl ErrorProfile {
    /// Largest `l` with `running_max[l-1] <= eps` (0 if even `b_1` differs more).
    pub fn stable_prefix(&self, eps: f64) -> usize {
        self.running_max.partition_point(|&v| v <= eps)
    }
}

pub fn compare_sequences(x: &JacobiMatrix, y: &JacobiMatrix) -> ErrorProfile {
    compare_slices(&x.b, &y.b)
}

pub fn compare_slices(x: &[f64], y: &[f64]) -> ErrorProfile {
    let diff: Vec<f64> = x.iter().zip(y).map(|(p, q)| (p - q).abs()).collect();
    let mut running = 0.0f64;
    let running_max = diff
        .iter()
        .map(|&d| {
            running = running.max(d);
            running
        })
        .collect();
    ErrorProfile { diff, running_max }
}

//! End-to-end computations behind the command-line tool: geometry in birth
//! order, torus spectra, convergence of IFS measures toward the torus and
//! the infinite-gap limit.

use serde::Serialize;

use crate::equilibrium::{solve_zeta, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::harmonic::{
    build_lattice, default_lags, default_window_len, dolph_window, extract_spectrum, lag_extrapolate, synthesize,
    FrequencyLattice, HarmonicSpectrum, Window,
};
use crate::ifs::{AffineIfs, IntervalUnion};
use crate::jacobi::{compare_sequences, compare_slices, jacobi_from_discrete, jacobi_mu_n, BaseMeasure, ErrorProfile, JacobiMatrix};
use crate::numeric::{correlation, linear_fit};
use crate::torus::{
    torus_from_tail, torus_jacobi, torus_limit_sequence, torus_measure, PointRule, TorusLimit, TorusPoint, TorusSpec,
};

/// Tolerance of the equilibrium solves run here.
pub const EQUILIBRIUM_TOL: f64 = 1e-13;

/// Bands of `E^n` with equilibrium data rearranged into birth order.
#[derive(Debug, Clone)]
pub struct OrderedGeometry {
    pub n: usize,
    pub bands: IntervalUnion,
    pub equilibrium: EquilibriumSolution,
    /// `order[g]` is the birth-order position of real-line gap `g`.
    pub order: Vec<usize>,
    /// Fundamental frequencies in birth order.
    pub fundamentals: Vec<f64>,
    /// Gap widths in birth order.
    pub gap_widths: Vec<f64>,
}

pub fn ordered_geometry(ifs: &AffineIfs, n: usize) -> Result<OrderedGeometry> {
    let bands = ifs.iterate_bands(n)?;
    let equilibrium = solve_zeta(&bands, EQUILIBRIUM_TOL)?;
    let order = ifs.ordered_gap_permutation(n)?;
    let mut fundamentals = vec![0.0; order.len()];
    let mut gap_widths = vec![0.0; order.len()];
    for (g, &o) in order.iter().enumerate() {
        fundamentals[o] = equilibrium.frequencies()[g];
        gap_widths[o] = bands.gap(g).width();
    }
    Ok(OrderedGeometry {
        n,
        bands,
        equilibrium,
        order,
        fundamentals,
        gap_widths,
    })
}

/// Sequence length, lattice radius and window of a harmonic extraction.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumConfig {
    pub len: usize,
    pub radius: u32,
    pub sidelobe_db: f64,
    /// `None` picks the default length for the lattice.
    pub window_len: Option<usize>,
}

impl SpectrumConfig {
    pub fn new(len: usize, radius: u32) -> Self {
        Self {
            len,
            radius,
            sidelobe_db: crate::harmonic::DEFAULT_SIDELOBE_DB,
            window_len: None,
        }
    }

    fn window(&self, lattice: &FrequencyLattice, available: usize) -> Result<Window> {
        let len = match self.window_len {
            Some(l) if l > available => {
                return Err(Error::invalid(format!(
                    "window length {l} exceeds the {available} available samples"
                )))
            }
            Some(l) => l,
            None => default_window_len(lattice, available),
        };
        dolph_window(len, self.sidelobe_db)
    }
}

/// Entries of the frequency lattice of `dim` fundamentals and radius `radius`:
/// half of the `ℓ¹` ball plus the origin.
pub fn lattice_size(dim: usize, radius: u32) -> u128 {
    let binom = |n: u128, k: u128| (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1));
    let (d, r) = (dim as u128, u128::from(radius));
    let ball: u128 = (0..=d.min(r)).map(|i| (1u128 << i) * binom(d, i) * binom(r, i)).sum();
    ball.div_ceil(2)
}

/// Largest radius `<= max_radius` whose lattice has at most `cap` entries,
/// never below 1.
pub fn fit_radius(dim: usize, max_radius: u32, cap: usize) -> u32 {
    (1..=max_radius)
        .rev()
        .find(|&r| lattice_size(dim, r) <= cap as u128)
        .unwrap_or(1)
}

/// Spectrum of one torus sequence.
#[derive(Debug, Clone)]
pub struct TorusSpectrumRun {
    pub geometry: OrderedGeometry,
    pub point: TorusPoint,
    pub jacobi: JacobiMatrix,
    pub spectrum: HarmonicSpectrum,
}

pub fn torus_spectrum(ifs: &AffineIfs, n: usize, point: &TorusSpec, cfg: &SpectrumConfig) -> Result<TorusSpectrumRun> {
    if n == 0 {
        return Err(Error::invalid("a single band has no fundamental frequencies; use n >= 1"));
    }
    let geometry = ordered_geometry(ifs, n)?;
    let lattice = build_lattice(&geometry.fundamentals, cfg.radius)?;
    let window = cfg.window(&lattice, cfg.len)?;
    let (bands, point) = point.resolve(ifs, n)?;
    let jacobi = torus_jacobi(&bands, &point, cfg.len)?;
    let spectrum = extract_spectrum(&jacobi.b, &lattice, &window, 0)?;
    Ok(TorusSpectrumRun {
        geometry,
        point,
        jacobi,
        spectrum,
    })
}

/// Harmonic `e_i` of one gap: `|C|` and `2|C|`, the peak amplitude of the
/// cosine it contributes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PrincipalLine {
    pub n: usize,
    /// Birth-order gap index, from 0.
    pub gap: usize,
    pub gap_width: f64,
    pub frequency: f64,
    pub angular_frequency: f64,
    pub amplitude: f64,
    pub peak_amplitude: f64,
}

impl TorusSpectrumRun {
    pub fn principal_lines(&self) -> Vec<PrincipalLine> {
        let g = &self.geometry;
        (0..g.fundamentals.len())
            .filter_map(|i| {
                let amplitude = self.spectrum.principal_amplitude(i)?;
                Some(PrincipalLine {
                    n: g.n,
                    gap: i,
                    gap_width: g.gap_widths[i],
                    frequency: g.fundamentals[i],
                    angular_frequency: 2.0 * std::f64::consts::PI * g.fundamentals[i],
                    amplitude,
                    peak_amplitude: 2.0 * amplitude,
                })
            })
            .collect()
    }

    /// `|C|` along the axis `k = m e_i`, `m = 1..=radius`.
    pub fn axis_amplitudes(&self, i: usize) -> Vec<(u32, f64)> {
        let lattice = self.spectrum.lattice();
        let mut k = vec![0i32; lattice.dim()];
        (1..=lattice.radius())
            .filter_map(|m| {
                k[i] = m as i32;
                lattice.find(&k).map(|e| (m, self.spectrum.amplitude(e)))
            })
            .collect()
    }
}

/// Least-squares line `y = A x` through the origin plus Pearson correlation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProportionalFit {
    pub slope: f64,
    pub correlation: f64,
    pub points: usize,
}

pub fn proportional_fit(x: &[f64], y: &[f64]) -> ProportionalFit {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    ProportionalFit {
        slope: sxy / sxx,
        correlation: correlation(x, y),
        points: x.len(),
    }
}

/// Largest relative difference of `|C_k|` between two spectra over the
/// entries with `‖k‖₁ <= max_norm` and amplitude above `floor`.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub compared: usize,
    pub worst_relative: f64,
    pub worst_k: Vec<i32>,
}

pub fn amplitude_invariance(a: &HarmonicSpectrum, b: &HarmonicSpectrum, max_norm: u32, floor: f64) -> Result<InvarianceReport> {
    if a.lattice().entries() != b.lattice().entries() {
        return Err(Error::invalid("spectra live on different lattices"));
    }
    let mut report = InvarianceReport {
        compared: 0,
        worst_relative: 0.0,
        worst_k: Vec::new(),
    };
    for (i, e) in a.lattice().entries().iter().enumerate() {
        let (x, y) = (a.amplitude(i), b.amplitude(i));
        if e.norm() > max_norm || x.max(y) <= floor {
            continue;
        }
        report.compared += 1;
        let rel = (x - y).abs() / x.max(y);
        if rel > report.worst_relative {
            report.worst_relative = rel;
            report.worst_k = e.k.clone();
        }
    }
    Ok(report)
}

/// Parameters of the comparison between `mu_n` and its torus limit.
#[derive(Debug, Clone)]
pub struct IsoConfig {
    pub case: BaseMeasure,
    pub n: usize,
    pub spectrum: SpectrumConfig,
    pub lags: usize,
    /// Torus point whose spectrum supplies the amplitudes.
    pub point: TorusSpec,
}

#[derive(Debug, Clone)]
pub struct IsoRun {
    pub mu: JacobiMatrix,
    /// `b_j(theta_n)` synthesised from torus amplitudes and `mu_n` phases.
    pub theta: Vec<f64>,
    pub diff: Vec<f64>,
    pub spectrum: HarmonicSpectrum,
    /// Lattice groups whose lag fit was flagged.
    pub unreliable: usize,
}

/// `b_j(mu_n)` against the torus sequence that shares its asymptotic
/// phases: amplitudes come from a torus point, phases from a lag
/// extrapolation of the `mu_n` spectrum.
pub fn converge_iso(ifs: &AffineIfs, cfg: &IsoConfig) -> Result<IsoRun> {
    let len = cfg.spectrum.len;
    let amplitudes = torus_spectrum(ifs, cfg.n, &cfg.point, &cfg.spectrum)?;
    let lattice = amplitudes.spectrum.lattice().clone();
    let window = cfg.spectrum.window(&lattice, len / 2)?;
    let mu = jacobi_mu_n(ifs, cfg.case, cfg.n, len)?;
    let lags = default_lags(len, window.len(), cfg.lags)?;
    let fit = lag_extrapolate(&mu.b, &lattice, &window, &lags)?;
    let spectrum = amplitudes.spectrum.with_phases_of(&fit.spectrum)?;
    let theta = synthesize(&spectrum, 1..len + 1);
    let diff = mu.b.iter().zip(&theta).map(|(x, y)| (x - y).abs()).collect();
    Ok(IsoRun {
        mu,
        theta,
        diff,
        spectrum,
        unreliable: fit.unreliable.len(),
    })
}

/// `A` from the leading stretch `[lo, lead]` of `j |d_j|`, and the share of
/// `j in [lo, hi]` where `d_j > A / j`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerLawBound {
    pub a: f64,
    pub fraction_above: f64,
    pub loglog_slope: f64,
}

pub fn power_law_bound(diff: &[f64], lo: usize, lead: usize, hi: usize) -> Result<PowerLawBound> {
    if !(1 <= lo && lo < lead && lead <= hi && hi <= diff.len()) {
        return Err(Error::invalid(format!("bad index window {lo}..{lead}..{hi} for {} values", diff.len())));
    }
    let at = |j: usize| diff[j - 1];
    let a = (lo..=lead).map(|j| j as f64 * at(j)).fold(0.0, f64::max);
    let above = (lo..=hi).filter(|&j| at(j) > a / j as f64).count();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi)
        .filter(|&j| at(j) > 0.0)
        .map(|j| ((j as f64).ln(), at(j).ln()))
        .unzip();
    Ok(PowerLawBound {
        a,
        fraction_above: above as f64 / (hi - lo + 1) as f64,
        loglog_slope: linear_fit(&xs, &ys).1,
    })
}

/// Fit `c e^{-d j}` to `|d_j|` between `start` and the first `j` where the
/// suffix maximum drops below ten times the noise floor. The floor is the
/// median of `|d_j|` over the second half of `[1, limit]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    pub c: f64,
    pub d: f64,
    pub start: usize,
    pub end: usize,
    pub plateau: f64,
}

pub fn exponential_fit(diff: &[f64], start: usize, limit: usize) -> Result<ExpFit> {
    let limit = limit.min(diff.len());
    if start < 1 || limit < 2 * start + 2 {
        return Err(Error::invalid(format!("cannot fit an exponential on j in [{start}, {limit}]")));
    }
    let mut tail: Vec<f64> = diff[limit / 2..limit].to_vec();
    tail.sort_by(f64::total_cmp);
    let plateau = tail[tail.len() / 2];
    let end = (start..=limit).find(|&j| diff[j - 1] < 10.0 * plateau).unwrap_or(limit);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (start..end)
        .filter(|&j| diff[j - 1] > 0.0)
        .map(|j| (j as f64, diff[j - 1].ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::NotStabilized(format!(
            "only {} points above the noise floor {plateau:.2e}",
            xs.len()
        )));
    }
    let (ln_c, slope) = linear_fit(&xs, &ys);
    Ok(ExpFit {
        c: ln_c.exp(),
        d: -slope,
        start,
        end,
        plateau,
    })
}

/// Parameters of the `theta_n` versus `mu_n` slope table.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeConfig {
    pub n_max: usize,
    /// Rows of `J(mu_n)`.
    pub len: usize,
    /// Row from which the torus point is matched to `mu_n`.
    pub match_start: usize,
    pub match_depth: usize,
}

impl SlopeConfig {
    pub fn new(n_max: usize, len: usize) -> Self {
        let match_start = (len * 3 / 10).max(1);
        Self {
            n_max,
            len,
            match_start,
            match_depth: 400.min(len - match_start),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlopeRow {
    pub n: usize,
    pub fit: ExpFit,
    /// `|b_j(theta_n) - b_j(mu_n)|` for `j = 1..=match_start`.
    pub diff: Vec<f64>,
    pub match_residual: f64,
}

/// `d_n` from `|b_j(theta_n) - b_j(mu_n)|`, case b, with `theta_n` the
/// torus point whose Jacobi matrix continues the tail of `J(mu_n)`.
pub fn slope_table(ifs: &AffineIfs, cfg: &SlopeConfig) -> Result<Vec<SlopeRow>> {
    (1..=cfg.n_max)
        .map(|n| {
            let mu = jacobi_mu_n(ifs, BaseMeasure::ChebyshevB, n, cfg.len)?;
            let bands = ifs.iterate_bands(n)?;
            let (theta, matched) = torus_from_tail(&bands, &mu, cfg.match_start, cfg.match_depth, cfg.match_start)?;
            let diff: Vec<f64> = mu.b.iter().zip(&theta.b).map(|(x, y)| (x - y).abs()).collect();
            let fit = exponential_fit(&diff, 5, cfg.match_start)?;
            log::info!("slope n = {n}: d = {:.6}, window {}..{}", fit.d, fit.start, fit.end);
            Ok(SlopeRow {
                n,
                fit,
                diff,
                match_residual: matched.residual,
            })
        })
        .collect()
}

/// `delta` in `d_n ≈ e^{-delta n}` by least squares on `log d_n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaFit {
    pub delta: f64,
    pub intercept: f64,
}

pub fn delta_fit(rows: &[SlopeRow]) -> Result<DeltaFit> {
    if rows.len() < 2 {
        return Err(Error::invalid("delta needs d_n at two or more levels"));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.fit.d.ln()).collect();
    let (intercept, slope) = linear_fit(&xs, &ys);
    Ok(DeltaFit {
        delta: -slope,
        intercept,
    })
}

/// Torus stabilisation gauge for a point rule; re-exported for the CLI.
pub fn torus_stabilization(ifs: &AffineIfs, rule: PointRule, n_max: usize, len: usize, eps: &[f64]) -> Result<TorusLimit> {
    torus_limit_sequence(ifs, rule, n_max, len, eps)
}

/// `|b_j(mu_n) - b_j(mu_ref)|` for `n = 1..=n_max`, `mu_ref` standing in for
/// the balanced measure.
#[derive(Debug, Clone)]
pub struct BalancedSurface {
    pub reference_level: usize,
    /// Distance between the reference and the level below it.
    pub reference_error: ErrorProfile,
    pub rows: Vec<BalancedRow>,
}

#[derive(Debug, Clone)]
pub struct BalancedRow {
    pub n: usize,
    pub diff: Vec<f64>,
    /// `N(eps, n)` per requested `eps`.
    pub prefix: Vec<usize>,
}

pub fn balanced_surface(
    ifs: &AffineIfs,
    case: BaseMeasure,
    n_max: usize,
    len: usize,
    reference_level: usize,
    eps: &[f64],
) -> Result<BalancedSurface> {
    if reference_level <= n_max {
        return Err(Error::invalid("the reference level must exceed n_max"));
    }
    let reference = jacobi_mu_n(ifs, case, reference_level, len)?;
    let below = jacobi_mu_n(ifs, case, reference_level - 1, len)?;
    let rows = (1..=n_max)
        .map(|n| {
            let mu = jacobi_mu_n(ifs, case, n, len)?;
            let prof = compare_sequences(&mu, &reference);
            Ok(BalancedRow {
                n,
                prefix: eps.iter().map(|&e| prof.stable_prefix(e)).collect(),
                diff: prof.diff,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BalancedSurface {
        reference_level,
        reference_error: compare_sequences(&below, &reference),
        rows,
    })
}

/// Error of a discretised torus Jacobi matrix, gauged against a rerun with
/// four times the nodes per band.
#[derive(Debug, Clone)]
pub struct DiscretizationProfile {
    pub nodes: usize,
    pub jacobi: JacobiMatrix,
    pub profile: ErrorProfile,
    /// Log-log slope of the running maximum over the fit window.
    pub growth: f64,
    pub fit_window: (usize, usize),
}

pub fn discretization_profile(bands: &IntervalUnion, point: &TorusPoint, len: usize, nodes: usize) -> Result<DiscretizationProfile> {
    let measure = torus_measure(bands, point)?;
    let coarse = jacobi_from_discrete(&measure.discretize(nodes)?, len)?;
    let fine = jacobi_from_discrete(&measure.discretize(4 * nodes)?, len)?;
    let profile = compare_slices(&coarse.b, &fine.b);
    let fit_window = (100.min(len), len);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (fit_window.0..=fit_window.1)
        .filter(|&j| profile.running_max[j - 1] > 0.0)
        .map(|j| ((j as f64).ln(), profile.running_max[j - 1].ln()))
        .unzip();
    let growth = if xs.len() >= 2 { linear_fit(&xs, &ys).1 } else { 0.0 };
    Ok(DiscretizationProfile {
        nodes,
        jacobi: coarse,
        profile,
        growth,
        fit_window,
    })
}

//! Harmonic analysis of almost-periodic sequences with known frequencies.
//!
//! A real sequence is modelled as
//! `b_m = C_0 + Σ_k 2|C_k| cos(ω_k m + ψ_k)` over a [`FrequencyLattice`].
//! Windowed transforms at the lattice frequencies couple through the
//! window transform, giving two banded real systems (cosine and sine parts)
//! that are solved and then refined against the data in the time domain.
//! Indices `m` are 1-based: slice element `i` holds `b_{i+1}`.

mod banded;
mod lattice;
mod window;

pub use banded::{Envelope, Ldl};
pub use lattice::{build_lattice, FrequencyLattice, LatticeEntry, COLLISION_TOL};
pub use window::{dolph_window, Window};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, phasor, PhasorStream};

pub const DEFAULT_SIDELOBE_DB: f64 = 120.0;
const MIN_WINDOW: usize = 4001;

/// Knobs of [`extract_spectrum`].
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Entries closer than this fraction of the main-lobe half-width share
    /// one unknown.
    pub merge_fraction: f64,
    /// Time-domain refinement sweeps after the first banded solve.
    pub refine_sweeps: usize,
    /// Largest accepted pivot ratio of either kernel block.
    pub condition_cap: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            merge_fraction: 0.02,
            refine_sweeps: 3,
            condition_cap: 1e12,
        }
    }
}

/// Window length used when none is given: odd, at least 4001 and
/// 16 / min-spacing, capped by the available samples.
pub fn default_window_len(lattice: &FrequencyLattice, available: usize) -> usize {
    let spacing = lattice.min_spacing();
    let wanted = if spacing.is_finite() {
        ((16.0 / spacing).ceil() as usize).max(MIN_WINDOW)
    } else {
        MIN_WINDOW
    };
    let len = wanted.min(available);
    if len % 2 == 0 {
        len - 1
    } else {
        len
    }
}

/// `Σ_j b_{l+j} w_j e^{-iω(l+j)}` over the window support, with `m = l + j`
/// the 1-based sequence index of the `j`-th window slot.
pub fn windowed_dft(b: &[f64], window: &Window, lag: usize, omega: f64) -> Result<Complex64> {
    if lag + window.len() > b.len() {
        return Err(Error::invalid(format!(
            "window of length {} at lag {lag} runs past the {} available samples",
            window.len(),
            b.len()
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let stream = PhasorStream::new(-omega, (lag + 1) as f64);
    for ((v, w), p) in b[lag..lag + window.len()].iter().zip(window.weights()).zip(stream) {
        acc += p * (v * w);
    }
    Ok(acc)
}

/// Lattice entries sharing one unknown.
#[derive(Debug, Clone)]
pub struct Group {
    /// Entry indices, lowest ℓ¹ norm first.
    pub members: Vec<usize>,
    pub omega: f64,
    /// Only a cosine component is identifiable (frequency at 0 or π).
    pub real_only: bool,
}

/// Per-group amplitude `|C|` and phase `ψ ∈ (-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
pub struct HarmonicSpectrum {
    lattice: FrequencyLattice,
    groups: Vec<Group>,
    /// Group of each lattice entry.
    entry_group: Vec<usize>,
    coefficients: Vec<Coefficient>,
    pub window_len: usize,
    pub lag: usize,
    /// Largest pivot ratio met in the kernel solves.
    pub condition: f64,
}

impl HarmonicSpectrum {
    /// Spectrum with given coefficients per lattice entry (no merging).
    pub fn from_entries(lattice: FrequencyLattice, coefficients: Vec<Coefficient>) -> Result<Self> {
        if coefficients.len() != lattice.len() {
            return Err(Error::invalid("one coefficient per lattice entry is required"));
        }
        let groups: Vec<Group> = lattice
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| Group {
                members: vec![i],
                omega: e.omega,
                real_only: e.is_dc(),
            })
            .collect();
        let entry_group = (0..lattice.len()).collect();
        Ok(Self {
            lattice,
            groups,
            entry_group,
            coefficients,
            window_len: 0,
            lag: 0,
            condition: 1.0,
        })
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_coefficients(&self) -> &[Coefficient] {
        &self.coefficients
    }

    /// Coefficient attributed to lattice entry `i` (shared across a merged group).
    pub fn coefficient(&self, i: usize) -> Coefficient {
        self.coefficients[self.entry_group[i]]
    }

    pub fn amplitude(&self, i: usize) -> f64 {
        self.coefficient(i).amplitude
    }

    /// Number of lattice entries merged with entry `i`, itself included.
    pub fn multiplicity(&self, i: usize) -> usize {
        self.groups[self.entry_group[i]].members.len()
    }

    /// Amplitude of the principal entry `e_i`.
    pub fn principal_amplitude(&self, i: usize) -> Option<f64> {
        self.lattice.principal(i).map(|e| self.amplitude(e))
    }

    /// Mean value `C_0`.
    pub fn mean(&self) -> f64 {
        let c = self.coefficients[self.entry_group[0]];
        c.amplitude * c.phase.cos()
    }
}

impl HarmonicSpectrum {
    /// Amplitudes and mean of `self` with the phases of `other`, which must
    /// come from the same lattice and window.
    pub fn with_phases_of(&self, other: &HarmonicSpectrum) -> Result<Self> {
        let same = self.groups.len() == other.groups.len()
            && self.groups.iter().zip(&other.groups).all(|(a, b)| a.members == b.members);
        if !same {
            return Err(Error::invalid("spectra were extracted on different lattice groupings"));
        }
        let mut out = self.clone();
        for ((c, g), o) in out.coefficients.iter_mut().zip(&self.groups).zip(&other.coefficients) {
            if g.omega != 0.0 {
                c.phase = o.phase;
            }
        }
        Ok(out)
    }
}

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = p.rem_euclid(two_pi);
    if v > std::f64::consts::PI {
        v -= two_pi;
    }
    v
}

fn make_groups(lattice: &FrequencyLattice, merge_tol: f64) -> (Vec<Group>, Vec<usize>) {
    let entries = lattice.entries();
    let pi = std::f64::consts::PI;
    let mut groups: Vec<Group> = Vec::new();
    let mut entry_group = vec![0; entries.len()];
    let mut start = 0;
    for i in 1..=entries.len() {
        if i < entries.len() && entries[i].omega - entries[i - 1].omega < merge_tol {
            continue;
        }
        let mut members: Vec<usize> = (start..i).collect();
        members.sort_by_key(|&m| (entries[m].norm(), m));
        let rep = &entries[members[0]];
        let omega = rep.omega;
        let real_only = members.iter().any(|&m| entries[m].is_dc()) || omega <= 0.5 * merge_tol || pi - omega <= 0.5 * merge_tol;
        for &m in &members {
            entry_group[m] = groups.len();
        }
        groups.push(Group {
            members,
            omega: if omega <= 0.5 * merge_tol { 0.0 } else { omega },
            real_only,
        });
        start = i;
    }
    (groups, entry_group)
}

/// Cosine and sine parts of the window-centred transform at each group
/// frequency: `Σ_t w_t b_{c+t} e^{-iωt}`.
fn centred_transform(b: &[f64], window: &Window, lag: usize, groups: &[Group]) -> Vec<Complex64> {
    let h = window.half();
    let c = lag + h; // slice index of the window centre
    let w = window.weights();
    let sum: Vec<f64> = (1..=h).map(|t| w[h + t] * (b[c + t] + b[c - t])).collect();
    let diff: Vec<f64> = (1..=h).map(|t| w[h + t] * (b[c + t] - b[c - t])).collect();
    let centre = w[h] * b[c];
    groups
        .iter()
        .map(|g| {
            let (mut re, mut im) = (centre, 0.0);
            let stream = PhasorStream::new(g.omega, 1.0);
            for ((s, d), p) in sum.iter().zip(&diff).zip(stream) {
                re += s * p.re;
                im -= d * p.im;
            }
            Complex64::new(re, im)
        })
        .collect()
}

struct Kernel {
    plus: Ldl,
    minus: Option<Ldl>,
    /// Groups carrying a sine unknown, in order.
    sine: Vec<usize>,
    condition: f64,
}

fn build_kernel(window: &Window, groups: &[Group], tau: f64, opts: &ExtractOptions) -> Result<Kernel> {
    let lobe = window.main_lobe_half_width();
    let omegas: Vec<f64> = groups.iter().map(|g| g.omega).collect();
    let entry = |a: f64, b: f64, sign: f64| {
        let v = window.transform(a - b) + sign * window.transform(a + b);
        if v.abs() <= tau {
            0.0
        } else {
            v
        }
    };
    let first: Vec<usize> = omegas.iter().map(|&w| omegas.partition_point(|&v| v < w - lobe)).collect();
    let plus = Envelope::from_fn(first, |i, j| entry(omegas[i], omegas[j], 1.0)).factor()?;
    let sine: Vec<usize> = (0..groups.len()).filter(|&g| !groups[g].real_only).collect();
    let so: Vec<f64> = sine.iter().map(|&g| omegas[g]).collect();
    let minus = if sine.is_empty() {
        None
    } else {
        let first: Vec<usize> = so.iter().map(|&w| so.partition_point(|&v| v < w - lobe)).collect();
        Some(Envelope::from_fn(first, |i, j| entry(so[i], so[j], -1.0)).factor()?)
    };
    let condition = plus.pivot_ratio().max(minus.as_ref().map_or(1.0, |m| m.pivot_ratio()));
    if condition > opts.condition_cap {
        return Err(Error::IllConditioned { estimate: condition });
    }
    Ok(Kernel {
        plus,
        minus,
        sine,
        condition,
    })
}

impl Kernel {
    /// Centred complex amplitudes `E_g` from the centred transform values.
    fn solve(&self, f: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = f.iter().map(|v| v.re).collect();
        let x = self.plus.solve(&re);
        let mut e: Vec<Complex64> = x.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        if let Some(minus) = &self.minus {
            let im: Vec<f64> = self.sine.iter().map(|&g| f[g].im).collect();
            for (&g, y) in self.sine.iter().zip(minus.solve(&im)) {
                e[g].im = y;
            }
        }
        e
    }
}

/// Evaluates the centred model `Σ_g 2 Re(E_g e^{iω_g t})` over the window.
fn centred_model(groups: &[Group], e: &[Complex64], half: usize) -> Vec<f64> {
    let len = 2 * half + 1;
    let mut out = vec![0.0; len];
    for (g, eg) in groups.iter().zip(e) {
        if *eg == Complex64::new(0.0, 0.0) {
            continue;
        }
        let stream = PhasorStream::new(g.omega, -(half as f64));
        for (o, p) in out.iter_mut().zip(stream) {
            *o += 2.0 * (eg * p).re;
        }
    }
    out
}

/// Amplitudes and phases of `b` on the lattice from one window placed at `lag`.
pub fn extract_spectrum(b: &[f64], lattice: &FrequencyLattice, window: &Window, lag: usize) -> Result<HarmonicSpectrum> {
    extract_spectrum_with(b, lattice, window, lag, &ExtractOptions::default())
}

pub fn extract_spectrum_with(
    b: &[f64],
    lattice: &FrequencyLattice,
    window: &Window,
    lag: usize,
    opts: &ExtractOptions,
) -> Result<HarmonicSpectrum> {
    if lag + window.len() > b.len() {
        return Err(Error::invalid(format!(
            "window of length {} at lag {lag} needs {} samples, only {} available",
            window.len(),
            lag + window.len(),
            b.len()
        )));
    }
    let lobe = window.main_lobe_half_width();
    let spacing = lattice.min_spacing();
    if spacing.is_finite() && 2.0 * lobe > 8.0 * spacing {
        log::warn!(
            "main lobe width {:.3e} is much wider than the smallest lattice spacing {spacing:.3e}; use a longer window",
            2.0 * lobe
        );
    }
    let (groups, entry_group) = make_groups(lattice, opts.merge_fraction * lobe);
    let merged = lattice.len() - groups.len();
    if merged > 0 {
        log::info!("{merged} lattice entries merged into neighbouring unknowns");
    }
    let kernel = build_kernel(window, &groups, window.sidelobe_level() * (1.0 + 1e-9), opts)?;

    let h = window.half();
    let data = &b[lag..lag + window.len()];
    let mut e = kernel.solve(&centred_transform(b, window, lag, &groups));
    for _ in 0..opts.refine_sweeps {
        let model = centred_model(&groups, &e, h);
        let resid: Vec<f64> = data.iter().zip(&model).map(|(x, y)| x - y).collect();
        let delta = kernel.solve(&centred_transform(&resid, window, 0, &groups));
        let size = delta.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for (x, d) in e.iter_mut().zip(&delta) {
            *x += d;
        }
        if size < 1e-17 {
            break;
        }
    }

    // centre of the window as a 1-based sequence index
    let centre = (lag + h + 1) as f64;
    let coefficients = groups
        .iter()
        .zip(&e)
        .map(|(g, eg)| {
            if g.omega == 0.0 {
                let mean = 2.0 * eg.re;
                return Coefficient {
                    amplitude: mean.abs(),
                    phase: if mean < 0.0 { std::f64::consts::PI } else { 0.0 },
                };
            }
            let d = eg * phasor(-g.omega, centre);
            Coefficient {
                amplitude: d.norm(),
                phase: wrap_phase(d.arg()),
            }
        })
        .collect();
    Ok(HarmonicSpectrum {
        lattice: lattice.clone(),
        groups,
        entry_group,
        coefficients,
        window_len: window.len(),
        lag,
        condition: kernel.condition,
    })
}

/// `b̂_j = C_0 + Σ 2|C_g| cos(ω_g j + ψ_g)` for `j` in `range` (1-based).
pub fn synthesize(spectrum: &HarmonicSpectrum, range: std::ops::Range<usize>) -> Vec<f64> {
    let mut out = vec![0.0; range.len()];
    for (g, c) in spectrum.groups.iter().zip(&spectrum.coefficients) {
        if c.amplitude == 0.0 {
            continue;
        }
        if g.omega == 0.0 {
            let v = c.amplitude * c.phase.cos();
            out.iter_mut().for_each(|o| *o += v);
            continue;
        }
        let rot = Complex64::from_polar(2.0 * c.amplitude, c.phase);
        let stream = PhasorStream::new(g.omega, range.start as f64);
        for (o, p) in out.iter_mut().zip(stream) {
            *o += (rot * p).re;
        }
    }
    out
}

/// Lags used by [`lag_extrapolate`] when none are given: `count` lags spaced
/// geometrically from `len/16` to `min(len/2, len - window)`.
pub fn default_lags(len: usize, window_len: usize, count: usize) -> Result<Vec<usize>> {
    let lo = (len / 16).max(1);
    let hi = (len / 2).min(len.saturating_sub(window_len));
    if hi <= lo || count < 3 {
        return Err(Error::invalid(format!(
            "a sequence of length {len} leaves no room for {count} lags of a {window_len}-sample window"
        )));
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (count - 1) as f64);
    let mut lags: Vec<usize> = (0..count).map(|i| (lo as f64 * ratio.powi(i as i32)).round() as usize).collect();
    lags.dedup();
    Ok(lags)
}

/// Result of a lag extrapolation, one value per lattice group.
#[derive(Debug, Clone)]
pub struct LagFit {
    /// Spectrum at `l → ∞`.
    pub spectrum: HarmonicSpectrum,
    /// Coefficient of the `1/l` term in the amplitude fit.
    pub amplitude_slope: Vec<f64>,
    /// RMS residual of the amplitude fit.
    pub residual: Vec<f64>,
    /// Groups whose fit residual exceeds the reliability threshold.
    pub unreliable: Vec<usize>,
    /// Window centres used as abscissae.
    pub centres: Vec<f64>,
}

/// Extracts at each lag and fits `v(l) = v_∞ + c / l` per amplitude and
/// (unwrapped) phase, `l` being the window centre.
pub fn lag_extrapolate(b: &[f64], lattice: &FrequencyLattice, window: &Window, lags: &[usize]) -> Result<LagFit> {
    if lags.len() < 3 || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lag extrapolation needs at least three increasing lags"));
    }
    let spectra = lags
        .iter()
        .map(|&l| extract_spectrum(b, lattice, window, l))
        .collect::<Result<Vec<_>>>()?;
    let centres: Vec<f64> = lags.iter().map(|&l| (l + window.half() + 1) as f64).collect();
    let inv: Vec<f64> = centres.iter().map(|c| 1.0 / c).collect();
    let groups = spectra[0].groups.len();
    let mut out = spectra.last().unwrap().clone();
    let mut slope = vec![0.0; groups];
    let mut residual = vec![0.0; groups];
    let mut unreliable = Vec::new();
    for g in 0..groups {
        let amps: Vec<f64> = spectra.iter().map(|s| s.coefficients[g].amplitude).collect();
        let (a_inf, a_slope) = linear_fit(&inv, &amps);
        let mut phases: Vec<f64> = spectra.iter().map(|s| s.coefficients[g].phase).collect();
        for i in 1..phases.len() {
            phases[i] = phases[i - 1] + wrap_phase(phases[i] - phases[i - 1]);
        }
        let (p_inf, _) = linear_fit(&inv, &phases);
        let rms = (amps
            .iter()
            .zip(&inv)
            .map(|(a, x)| (a - a_inf - a_slope * x).powi(2))
            .sum::<f64>()
            / amps.len() as f64)
            .sqrt();
        if rms > 1e-10_f64.max(1e-3 * a_inf.abs()) {
            unreliable.push(g);
        }
        slope[g] = a_slope;
        residual[g] = rms;
        out.coefficients[g] = if out.groups[g].omega == 0.0 {
            // signed mean keeps its sign through the fit
            let means: Vec<f64> = spectra.iter().map(|s| s.coefficients[g].amplitude * s.coefficients[g].phase.cos()).collect();
            let (m_inf, _) = linear_fit(&inv, &means);
            Coefficient {
                amplitude: m_inf.abs(),
                phase: if m_inf < 0.0 { std::f64::consts::PI } else { 0.0 },
            }
        } else {
            Coefficient {
                amplitude: a_inf.max(0.0),
                phase: wrap_phase(p_inf),
            }
        };
    }
    Ok(LagFit {
        spectrum: out,
        amplitude_slope: slope,
        residual,
        unreliable,
        centres,
    })
}

//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Reference values are either recomputed here by independent means
//! (classical recurrences, Hankel determinants of quadrature moments,
//! synthetic signals) or are reference figures for Example 1. The process
//! exits non-zero only if a criterion cannot be evaluated at all.

use std::f64::consts::{PI, SQRT_2};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isotorus::equilibrium::solve_zeta;
use isotorus::experiments::{
    amplitude_invariance, converge_iso, delta_fit, discretization_profile, exponential_fit, power_law_bound,
    proportional_fit, slope_table, torus_spectrum, torus_stabilization, IsoConfig, SlopeConfig, SpectrumConfig,
};
use isotorus::harmonic::{build_lattice, default_window_len, dolph_window, extract_spectrum};
use isotorus::ifs::{AffineIfs, IntervalUnion};
use isotorus::jacobi::{jacobi_from_discrete, BaseMeasure};
use isotorus::torus::{branch_sign, torus_measure, PointRule, TorusPoint, TorusSpec};

type Outcome = Result<(bool, String), String>;

fn example1() -> AffineIfs {
    AffineIfs::example1().with_weights(vec![0.6, 0.4]).unwrap()
}

fn midpoint() -> TorusSpec {
    TorusSpec::Rule {
        rule: "midpoint-plus".into(),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c1_single_interval() -> Outcome {
    let start = Instant::now();
    let bands = IntervalUnion::from_pairs(&[(-1.0, 1.0)]).map_err(err)?;
    let eq = solve_zeta(&bands, 1e-14).map_err(err)?;
    let jm = jacobi_from_discrete(&eq.discretize(200).map_err(err)?, 64).map_err(err)?;
    let a_max = jm.a.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    // first-kind Chebyshev recurrence: T_1 = x T_0, 2x T_k = T_{k+1} + T_{k-1}
    let b_err = jm
        .b
        .iter()
        .enumerate()
        .map(|(i, b)| (b - if i == 0 { 1.0 / SQRT_2 } else { 0.5 }).abs())
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    let pass = within(eq.capacity(), 0.5, 1e-10) && a_max < 1e-10 && b_err < 1e-9 && elapsed < Duration::from_secs(1);
    Ok((
        pass,
        format!("capacity={:.15} max|a_j|={a_max:.1e} max|b_j-ref|={b_err:.1e} ({elapsed:.2?})", eq.capacity()),
    ))
}

fn c2_symmetry() -> Outcome {
    let start = Instant::now();
    let bands = IntervalUnion::from_pairs(&[(-1.0, -0.3), (0.3, 1.0)]).map_err(err)?;
    let eq = solve_zeta(&bands, 1e-14).map_err(err)?;
    let (zeta, omega) = (eq.zeta()[0], eq.frequencies()[0]);
    let elapsed = start.elapsed();
    let pass = zeta.abs() <= 1e-10 && within(omega, 0.5, 1e-10) && elapsed < Duration::from_secs(1);
    Ok((pass, format!("zeta_1={zeta:.1e} omega_1={omega:.15} ({elapsed:.2?})")))
}

fn c3_principal_lines() -> Outcome {
    let ifs = example1();
    let mut pass = true;
    let mut detail = Vec::new();
    for (n, amp_ref) in [(2, 2.43e-2), (3, 2.44e-2)] {
        let run = torus_spectrum(&ifs, n, &midpoint(), &SpectrumConfig::new(100_000, 6)).map_err(err)?;
        let line = run.principal_lines()[1];
        let ok = within(line.angular_frequency, 1.5543, 0.002) && within(line.peak_amplitude, amp_ref, 0.05 * amp_ref);
        pass &= ok;
        detail.push(format!(
            "n={n}: freq={:.8} amp={:.8e}",
            line.angular_frequency, line.peak_amplitude
        ));
    }
    Ok((pass, format!("{} (reference n=2: 1.55434055, 2.42975661e-2)", detail.join("; "))))
}

fn c4_harmonic_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let fundamentals: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.45)).collect();
    let lattice = build_lattice(&fundamentals, 4).map_err(err)?;
    let mut candidates: Vec<usize> = (1..lattice.len()).collect();
    let mut chosen = Vec::new();
    for _ in 0..25 {
        chosen.push(candidates.swap_remove(rng.random_range(0..candidates.len())));
    }
    let mean = 0.37;
    let truth: Vec<(usize, f64, f64)> = chosen
        .iter()
        .map(|&e| (e, 10f64.powf(rng.random_range(-4.0..0.0)), rng.random_range(-PI..PI)))
        .collect();
    let len = default_window_len(&lattice, usize::MAX);
    let signal: Vec<f64> = (1..=len)
        .map(|m| {
            let m = m as f64;
            mean + truth
                .iter()
                .map(|&(e, amp, phase)| {
                    let k = &lattice.entries()[e].k;
                    let w: f64 = k.iter().zip(&fundamentals).map(|(&ki, f)| f64::from(ki) * f).sum();
                    2.0 * amp * (2.0 * PI * (w * m).rem_euclid(1.0) + phase).cos()
                })
                .sum::<f64>()
        })
        .collect();
    let window = dolph_window(len, 120.0).map_err(err)?;
    let spec = extract_spectrum(&signal, &lattice, &window, 0).map_err(err)?;
    let mut worst: f64 = (spec.mean() - mean).abs();
    for &(e, amp, phase) in &truth {
        let c = spec.coefficient(e);
        let expected = if lattice.entries()[e].conjugate { -phase } else { phase };
        let dphase = (c.phase - expected + PI).rem_euclid(2.0 * PI) - PI;
        worst = worst.max((c.amplitude - amp).abs()).max(dphase.abs());
    }
    let silent = (1..lattice.len())
        .filter(|e| !chosen.contains(e))
        .map(|e| spec.amplitude(e))
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    let pass = worst < 1e-8 && silent < 1e-8 && elapsed < Duration::from_secs(30);
    Ok((
        pass,
        format!(
            "max error {worst:.1e}, largest spurious amplitude {silent:.1e}, window {len} ({elapsed:.2?})"
        ),
    ))
}

fn c5_invariance() -> Outcome {
    let ifs = example1();
    let cfg = SpectrumConfig::new(100_000, 6);
    let a = torus_spectrum(&ifs, 2, &midpoint(), &cfg).map_err(err)?;
    let third = TorusSpec::Rule {
        rule: "third-alternating".into(),
    };
    let b = torus_spectrum(&ifs, 2, &third, &cfg).map_err(err)?;
    let r = amplitude_invariance(&a.spectrum, &b.spectrum, 4, 1e-5).map_err(err)?;
    Ok((
        r.compared > 0 && r.worst_relative < 1e-3,
        format!("{} entries compared, worst relative {:.2e} at k={:?}", r.compared, r.worst_relative, r.worst_k),
    ))
}

fn c6_gap_amplitude() -> Outcome {
    let ifs = example1();
    let mut widths = Vec::new();
    let mut amps = Vec::new();
    for n in [2, 3] {
        let run = torus_spectrum(&ifs, n, &midpoint(), &SpectrumConfig::new(100_000, 6)).map_err(err)?;
        for line in run.principal_lines() {
            widths.push(line.gap_width);
            amps.push(line.amplitude);
        }
    }
    let fit = proportional_fit(&widths, &amps);
    Ok((
        fit.correlation >= 0.99,
        format!("r={:.6} slope={:.5} over {} gaps", fit.correlation, fit.slope, fit.points),
    ))
}

fn c7_rates() -> Outcome {
    let ifs = example1();
    let run = |case| {
        let cfg = IsoConfig {
            case,
            n: 2,
            spectrum: SpectrumConfig::new(60_000, 12),
            lags: 8,
            point: midpoint(),
        };
        converge_iso(&ifs, &cfg).map_err(err)
    };
    let a = run(BaseMeasure::LebesgueA)?;
    let bound = power_law_bound(&a.diff, 10, 20, 1000).map_err(err)?;
    let b = run(BaseMeasure::ChebyshevB)?;
    let fit = exponential_fit(&b.diff, 5, 1000).map_err(err)?;
    // log-drop over the case-b pre-plateau window: exponential vs the case-a power law
    let (js, je) = (fit.start as f64, fit.end as f64);
    let drop_b = fit.d * (je - js);
    let drop_a = bound.loglog_slope.abs() * (je / js).ln();
    let ratio = drop_b / drop_a;
    let pass_a = bound.fraction_above <= 0.05;
    let pass_b = ratio >= 5.0;
    Ok((
        pass_a && pass_b,
        format!(
            "case a: A={:.4} above={:.1}% loglog slope={:.3} [{}]; case b: d={:.4} window {}..{} plateau {:.1e}, drop ratio {ratio:.2} [{}]",
            bound.a,
            100.0 * bound.fraction_above,
            bound.loglog_slope,
            if pass_a { "ok" } else { "fail" },
            fit.d,
            fit.start,
            fit.end,
            fit.plateau,
            if pass_b { "ok" } else { "fail" },
        ),
    ))
}

fn c8_slopes() -> Outcome {
    let rows = slope_table(&example1(), &SlopeConfig::new(4, 10_000)).map_err(err)?;
    let d: Vec<f64> = rows.iter().map(|r| r.fit.d).collect();
    let delta = delta_fit(&rows).map_err(err)?.delta;
    let pass = within(d[0], 0.300994, 0.15 * 0.300994) && within(d[1], 0.164903, 0.15 * 0.164903) && within(delta, 0.644, 0.1);
    Ok((
        pass,
        format!(
            "d = [{}] delta={delta:.4} (reference 0.300994, 0.164903, 0.080720, 0.044511; 0.644)",
            d.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn c9_stabilization() -> Outcome {
    let eps = [1e-3, 1e-1];
    let lim = torus_stabilization(&example1(), PointRule::MidpointPlus, 4, 4000, &eps).map_err(err)?;
    let at = |k: usize| -> Vec<usize> { lim.rows.iter().map(|r| r.prefix[k]).collect() };
    let (n3, n1) = (at(0), at(1));
    let nondecreasing = n3.windows(2).all(|w| w[0] <= w[1]);
    let doubles = n3[0] > 0 && n3[n3.len() - 1] >= 2 * n3[0];
    let first: Vec<String> = lim.rows.iter().map(|r| format!("{:.1e}", r.running_max[0])).collect();
    Ok((
        nondecreasing && doubles,
        format!(
            "N(1e-3, n=2..4) = {n3:?}; |b_1(theta_n) - b_1(theta_n-1)| = [{}]; N(1e-1, n=2..4) = {n1:?}",
            first.join(", ")
        ),
    ))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn legendre_rule(p: usize) -> Vec<(f64, f64)> {
    (0..p)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (p as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=p {
                    let k = k as f64;
                    (p0, p1) = (p1, ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k);
                }
                let dp = p as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    return (x, w);
                }
            }
        })
        .collect()
}

fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    d
}

fn c10_hankel() -> Outcome {
    let bands = IntervalUnion::from_pairs(&[(-1.0, -0.25), (0.15, 1.0)]).map_err(err)?;
    let flip = -branch_sign(&bands, 0);
    let point = TorusPoint::new(&bands, vec![-0.1], vec![flip]).map_err(err)?;
    let measure = torus_measure(&bands, &point).map_err(err)?;
    let jm = jacobi_from_discrete(&measure.discretize(400).map_err(err)?, 8).map_err(err)?;

    // moments: s = c + r cos t on each band turns the square-root edges smooth
    let rule = legendre_rule(200);
    let mut moments = vec![0.0; 17];
    for band in bands.bands() {
        let (c, r) = (band.center(), band.half_width());
        for &(u, w) in &rule {
            let t = 0.5 * PI * (u + 1.0);
            let s = c + r * t.cos();
            let weight = 0.5 * PI * w * measure.density(s) * r * t.sin();
            let mut power = 1.0;
            for m in moments.iter_mut() {
                *m += weight * power;
                power *= s;
            }
        }
    }
    for &(s, w) in measure.atoms() {
        let mut power = 1.0;
        for m in moments.iter_mut() {
            *m += w * power;
            power *= s;
        }
    }
    let mass = moments[0];
    moments.iter_mut().for_each(|m| *m /= mass);

    let hankel = |k: usize, shift_last: bool| -> f64 {
        if k == 0 {
            return if shift_last { 0.0 } else { 1.0 };
        }
        let rows = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| moments[i + j + usize::from(shift_last && j == k - 1)])
                    .collect()
            })
            .collect();
        det(rows)
    };
    let d: Vec<f64> = (0..=9).map(|k| hankel(k, false)).collect();
    let s: Vec<f64> = (0..=8).map(|k| hankel(k, true)).collect();
    let mut worst = 0.0f64;
    for k in 1..=8 {
        let a = s[k] / d[k] - s[k - 1] / d[k - 1];
        let b = (d[k + 1] * d[k - 1] / (d[k] * d[k])).sqrt();
        worst = worst.max((a - jm.a[k - 1]).abs()).max((b - jm.b[k - 1]).abs());
    }
    Ok((
        worst < 1e-8,
        format!("max |coefficient - Hankel| = {worst:.1e} (mass {mass:.12}, {} atom)", measure.atoms().len()),
    ))
}

fn c11_error_profile() -> Outcome {
    let ifs = example1();
    let (bands, point) = PointRule::MidpointPlus.apply(&ifs, 4).map_err(err)?;
    let nodes = 10_001;
    let prof = discretization_profile(&bands, &point, 10_000, nodes).map_err(err)?;
    let max = prof.profile.running_max.last().copied().unwrap_or(0.0);
    Ok((
        prof.growth < 1.0,
        format!(
            "log-log slope {:.3} over j in [{}, {}], P={nodes} per band, max error {max:.1e}",
            prof.growth, prof.fit_window.0, prof.fit_window.1
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("C1 single-interval closed forms", c1_single_interval),
        ("C2 symmetric two-band solve", c2_symmetry),
        ("C3 principal-line tracking", c3_principal_lines),
        ("C4 harmonic round trip", c4_harmonic_round_trip),
        ("C5 amplitude torus-invariance", c5_invariance),
        ("C6 gap-amplitude proportionality", c6_gap_amplitude),
        ("C7 convergence rates", c7_rates),
        ("C8 slope table and delta", c8_slopes),
        ("C9 torus stabilization", c9_stabilization),
        ("C10 Hankel moment oracle", c10_hankel),
        ("C11 error-profile growth", c11_error_profile),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut broken = 0;
    let mut failed = 0;
    for (name, check) in criteria {
        let id = name.split_whitespace().next().unwrap();
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        match check() {
            Ok((pass, detail)) => {
                failed += usize::from(!pass);
                println!(
                    "{} {name}: {detail} [{:.1?}]",
                    if pass { "PASS" } else { "FAIL" },
                    start.elapsed()
                );
            }
            Err(e) => {
                broken += 1;
                println!("FAIL {name}: error: {e}");
            }
        }
    }
    println!("acceptance: {failed} criteria failed, {broken} could not be evaluated");
    if broken > 0 {
        std::process::exit(1);
    }
}

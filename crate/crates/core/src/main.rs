use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use isotorus::experiments::{
    balanced_surface, converge_iso, delta_fit, discretization_profile, exponential_fit, fit_radius, lattice_size,
    ordered_geometry, power_law_bound, proportional_fit, slope_table, torus_spectrum, torus_stabilization, IsoConfig,
    PrincipalLine, SlopeConfig, SpectrumConfig,
};
use isotorus::harmonic::DEFAULT_SIDELOBE_DB;
use isotorus::ifs::{AffineIfs, IntervalUnion};
use isotorus::io::{read_ifs, read_point, write_bands, write_jacobi, write_json, write_profile, Cell, Table};
use isotorus::jacobi::BaseMeasure;
use isotorus::torus::{torus_jacobi, PointRule, TorusSpec};
use isotorus::{Error, Result};

/// Largest lattice accepted for the main spectrum of a run.
const LATTICE_CAP: usize = 50_000;
/// Lattice cap for the per-level principal-amplitude sweep.
const SWEEP_LATTICE_CAP: usize = 12_000;
/// Last index used by the decay fits of converge-iso.
const FIT_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Bands and gaps of E^1..E^n.
    Bands,
    /// Equilibrium zeros, harmonic measures of the bands, frequencies, capacity.
    Equilibrium,
    /// Jacobi matrix of a torus point and its discretisation error profile.
    TorusJacobi,
    /// Almost-periodic spectrum of a torus sequence.
    Spectrum,
    /// b_j of an IFS measure against the torus sequence sharing its phases.
    ConvergeIso,
    /// Slope table, delta, torus stabilisation and the balanced-measure surface.
    ConvergeInfty,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Case {
    A,
    B,
}

impl From<Case> for BaseMeasure {
    fn from(c: Case) -> Self {
        match c {
            Case::A => BaseMeasure::LebesgueA,
            Case::B => BaseMeasure::ChebyshevB,
        }
    }
}

/// Isospectral-torus experiments for IFS interval unions.
#[derive(Debug, Parser)]
#[command(name = "isotorus", version)]
struct Args {
    command: Command,
    /// IFS document: {"maps": [{"delta": .., "gamma": ..}], "weights": [..]}.
    #[arg(long)]
    ifs: PathBuf,
    /// IFS level, 0 for the hull (maximum level for converge-infty).
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Number of Jacobi coefficients.
    #[arg(long = "J", default_value_t = 4096)]
    j: usize,
    /// Lattice radius in the l1 norm.
    #[arg(long = "L", default_value_t = 6)]
    l: u32,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Base measure: a = Lebesgue, b = second-kind Chebyshev.
    #[arg(long, value_enum, default_value_t = Case::B)]
    case: Case,
    /// Thresholds for N(eps, n).
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SIDELOBE_DB)]
    sidelobe_db: f64,
    /// Odd window length; defaults to the length that resolves the lattice.
    #[arg(long)]
    window_len: Option<usize>,
    /// Accepted for interface compatibility; every command is deterministic.
    #[arg(long)]
    seedless: bool,
    /// Torus point: midpoint-plus, third-alternating, or a JSON file.
    #[arg(long, default_value = "midpoint-plus")]
    point: String,
    /// Nodes per band of the coarse discretisation in torus-jacobi; defaults to J + 1.
    #[arg(long)]
    nodes: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn validate(args: &Args) -> Result<()> {
    if args.j < 2 {
        return Err(invalid("--J must be at least 2"));
    }
    if args.l == 0 {
        return Err(invalid("--L must be at least 1"));
    }
    if let Some(e) = args.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(invalid(format!("--eps values must be positive, got {e}")));
    }
    if !(args.sidelobe_db > 0.0 && args.sidelobe_db.is_finite()) {
        return Err(invalid("--sidelobe-db must be positive"));
    }
    if let Some(w) = args.window_len {
        if w < 3 || w % 2 == 0 {
            return Err(invalid(format!("--window-len must be odd and at least 3, got {w}")));
        }
        if w > args.j {
            return Err(invalid(format!("--window-len {w} exceeds --J {}", args.j)));
        }
    }
    Ok(())
}

fn run(args: &Args) -> Result<()> {
    validate(args)?;
    let ifs = read_ifs(&args.ifs)?;
    let point = read_point(&args.point)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| invalid(format!("cannot create output directory {}: {e}", args.out.display())))?;
    let out = args.out.as_path();
    match args.command {
        Command::Bands => cmd_bands(&ifs, args.n, out),
        Command::Equilibrium => cmd_equilibrium(&ifs, args.n, out),
        Command::TorusJacobi => cmd_torus_jacobi(&ifs, args, &point, out),
        Command::Spectrum => cmd_spectrum(&ifs, args, &point, out),
        Command::ConvergeIso => cmd_converge_iso(&ifs, args, &point, out),
        Command::ConvergeInfty => cmd_converge_infty(&ifs, args, &point, out),
    }
}

fn spectrum_config(args: &Args, radius: u32) -> SpectrumConfig {
    SpectrumConfig {
        window_len: args.window_len,
        sidelobe_db: args.sidelobe_db,
        ..SpectrumConfig::new(args.j, radius)
    }
}

fn cmd_bands(ifs: &AffineIfs, n: usize, out: &Path) -> Result<()> {
    let hull = ifs.hull();
    let mut levels = vec![IntervalUnion::from_pairs(&[(hull.lo, hull.hi)])?];
    for level in 1..=n {
        levels.push(ifs.iterate_bands(level)?);
    }
    let refs: Vec<(usize, &IntervalUnion)> = levels.iter().enumerate().collect();
    write_bands(&out.join("bands.csv"), &refs)?;
    let mut t = Table::create(&out.join("gaps.csv"), &["order", "level", "lo", "hi", "width"])?;
    for (i, g) in ifs.ordered_gaps(n)?.gaps.iter().enumerate() {
        t.row(&[i.into(), g.birth_level.unwrap_or(0).into(), g.lo.into(), g.hi.into(), g.width().into()])?;
    }
    t.finish()
}

#[derive(Serialize)]
struct EquilibriumSummary {
    n: usize,
    bands: usize,
    capacity: f64,
    energy: f64,
    residual: f64,
}

fn cmd_equilibrium(ifs: &AffineIfs, n: usize, out: &Path) -> Result<()> {
    let geo = ordered_geometry(ifs, n)?;
    let eq = &geo.equilibrium;
    let mut t = Table::create(&out.join("frequencies.csv"), &["gap", "order", "zeta", "omega", "angular_frequency"])?;
    for (g, &o) in geo.order.iter().enumerate() {
        let w = eq.frequencies()[g];
        t.row(&[g.into(), o.into(), eq.zeta()[g].into(), w.into(), (2.0 * std::f64::consts::PI * w).into()])?;
    }
    t.finish()?;
    let mut t = Table::create(&out.join("masses.csv"), &["band", "mass"])?;
    for (i, m) in eq.band_masses().iter().enumerate() {
        t.row(&[i.into(), (*m).into()])?;
    }
    t.finish()?;
    write_json(
        &out.join("summary.json"),
        &EquilibriumSummary {
            n,
            bands: geo.bands.num_bands(),
            capacity: eq.capacity(),
            energy: eq.energy(),
            residual: eq.residual(),
        },
    )
}

#[derive(Serialize)]
struct ProfileSummary {
    n: usize,
    len: usize,
    nodes_per_band: usize,
    fine_nodes_per_band: usize,
    loglog_slope: f64,
    fit_window: (usize, usize),
    max_error: f64,
}

fn cmd_torus_jacobi(ifs: &AffineIfs, args: &Args, point: &TorusSpec, out: &Path) -> Result<()> {
    let (bands, pt) = point.resolve(ifs, args.n)?;
    let nodes = args
        .nodes
        .unwrap_or(args.j + 1);
    if nodes * bands.num_bands() <= args.j {
        return Err(invalid(format!(
            "--nodes {nodes} gives {} atoms; at least --J + 1 = {} are needed",
            nodes * bands.num_bands(),
            args.j + 1
        )));
    }
    let jm = torus_jacobi(&bands, &pt, args.j)?;
    write_jacobi(&out.join("jacobi.csv"), &jm)?;
    let prof = discretization_profile(&bands, &pt, args.j, nodes)?;
    write_profile(&out.join("error_profile.csv"), &prof.profile)?;
    write_json(
        &out.join("summary.json"),
        &ProfileSummary {
            n: args.n,
            len: args.j,
            nodes_per_band: nodes,
            fine_nodes_per_band: 4 * nodes,
            loglog_slope: prof.growth,
            fit_window: prof.fit_window,
            max_error: prof.profile.running_max.last().copied().unwrap_or(0.0),
        },
    )
}

#[derive(Serialize)]
struct SpectrumSummary {
    n: usize,
    radius: u32,
    lattice_entries: usize,
    window_len: usize,
    condition: f64,
    mean: f64,
    gap_amplitude_slope: f64,
    gap_amplitude_correlation: f64,
    gap_amplitude_points: usize,
}

fn cmd_spectrum(ifs: &AffineIfs, args: &Args, point: &TorusSpec, out: &Path) -> Result<()> {
    let dim = ifs.ordered_gaps(args.n)?.len();
    let size = lattice_size(dim, args.l);
    if size > LATTICE_CAP as u128 {
        return Err(invalid(format!(
            "a radius-{} lattice over {dim} fundamentals has {size} entries (limit {LATTICE_CAP}); lower --L",
            args.l
        )));
    }
    let run = torus_spectrum(ifs, args.n, point, &spectrum_config(args, args.l))?;
    let spec = &run.spectrum;
    let lattice = spec.lattice();

    let mut header: Vec<String> = (1..=dim).map(|i| format!("k_{i}")).collect();
    header.extend(["omega_k", "amplitude", "phase"].map(String::from));
    let mut t = Table::create(&out.join("spectrum.csv"), &header)?;
    for (i, e) in lattice.entries().iter().enumerate() {
        let c = spec.coefficient(i);
        let mut row: Vec<Cell> = e.k.iter().map(|&v| v.into()).collect();
        row.extend([Cell::from(e.omega), Cell::from(c.amplitude), Cell::from(c.phase)]);
        t.row(&row)?;
    }
    t.finish()?;

    let mut t = Table::create(&out.join("axes.csv"), &["gap", "m", "amplitude"])?;
    for i in 0..dim {
        for (m, a) in run.axis_amplitudes(i) {
            t.row(&[i.into(), m.into(), a.into()])?;
        }
    }
    t.finish()?;

    let mut lines: Vec<PrincipalLine> = Vec::new();
    for level in 1..args.n {
        let radius = fit_radius(ifs.ordered_gaps(level)?.len(), args.l, SWEEP_LATTICE_CAP);
        lines.extend(torus_spectrum(ifs, level, point, &spectrum_config(args, radius))?.principal_lines());
    }
    lines.extend(run.principal_lines());
    let mut t = Table::create(
        &out.join("principal.csv"),
        &["n", "gap", "gap_width", "frequency", "angular_frequency", "amplitude", "peak_amplitude"],
    )?;
    for p in &lines {
        t.row(&[
            p.n.into(),
            p.gap.into(),
            p.gap_width.into(),
            p.frequency.into(),
            p.angular_frequency.into(),
            p.amplitude.into(),
            p.peak_amplitude.into(),
        ])?;
    }
    t.finish()?;

    let pooled: Vec<&PrincipalLine> = lines.iter().filter(|p| p.n >= 2 || args.n == 1).collect();
    let widths: Vec<f64> = pooled.iter().map(|p| p.gap_width).collect();
    let amps: Vec<f64> = pooled.iter().map(|p| p.amplitude).collect();
    let fit = proportional_fit(&widths, &amps);
    write_json(
        &out.join("summary.json"),
        &SpectrumSummary {
            n: args.n,
            radius: args.l,
            lattice_entries: lattice.len(),
            window_len: spec.window_len,
            condition: spec.condition,
            mean: spec.mean(),
            gap_amplitude_slope: fit.slope,
            gap_amplitude_correlation: fit.correlation,
            gap_amplitude_points: fit.points,
        },
    )
}

#[derive(Serialize)]
struct IsoSummary {
    case: String,
    n: usize,
    len: usize,
    unreliable_groups: usize,
    power_law: Option<isotorus::experiments::PowerLawBound>,
    exponential: Option<isotorus::experiments::ExpFit>,
}

fn cmd_converge_iso(ifs: &AffineIfs, args: &Args, point: &TorusSpec, out: &Path) -> Result<()> {
    let cfg = IsoConfig {
        case: args.case.into(),
        n: args.n,
        spectrum: spectrum_config(args, args.l),
        lags: 8,
        point: point.clone(),
    };
    let run = converge_iso(ifs, &cfg)?;
    let mut t = Table::create(&out.join("iso.csv"), &["j", "b_mu", "b_theta", "diff"])?;
    for (j, ((m, th), d)) in run.mu.b.iter().zip(&run.theta).zip(&run.diff).enumerate() {
        t.row(&[(j + 1).into(), (*m).into(), (*th).into(), (*d).into()])?;
    }
    t.finish()?;
    let len = run.diff.len();
    write_json(
        &out.join("summary.json"),
        &IsoSummary {
            case: format!("{:?}", args.case).to_lowercase(),
            n: args.n,
            len,
            unreliable_groups: run.unreliable,
            power_law: (len >= 40).then(|| power_law_bound(&run.diff, 10, 20, len.min(FIT_LIMIT))).transpose()?,
            exponential: exponential_fit(&run.diff, 5, len.min(FIT_LIMIT)).ok(),
        },
    )
}

#[derive(Serialize)]
struct InftySummary {
    n_max: usize,
    len: usize,
    eps: Vec<f64>,
    d: Vec<f64>,
    delta: Option<f64>,
    balanced_reference_level: usize,
}

fn cmd_converge_infty(ifs: &AffineIfs, args: &Args, point: &TorusSpec, out: &Path) -> Result<()> {
    let rule = match point {
        TorusSpec::Rule { rule } => PointRule::parse(rule)?,
        TorusSpec::Explicit { .. } => return Err(invalid("converge-infty needs a point rule, not explicit values")),
    };
    let n_max = args.n;
    let len = args.j;
    if n_max == 0 {
        return Err(invalid("converge-infty needs --n of at least 1"));
    }
    if len < 40 {
        return Err(invalid("converge-infty needs --J of at least 40 for the slope fits"));
    }

    let rows = slope_table(ifs, &SlopeConfig::new(n_max, len))?;
    let mut t = Table::create(&out.join("slopes.csv"), &["n", "d", "c", "start", "end", "plateau", "match_residual"])?;
    for r in &rows {
        t.row(&[
            r.n.into(),
            r.fit.d.into(),
            r.fit.c.into(),
            r.fit.start.into(),
            r.fit.end.into(),
            r.fit.plateau.into(),
            r.match_residual.into(),
        ])?;
    }
    t.finish()?;
    let mut t = Table::create(&out.join("slope_diff.csv"), &["n", "j", "diff"])?;
    for r in &rows {
        for (j, d) in r.diff.iter().enumerate() {
            t.row(&[r.n.into(), (j + 1).into(), (*d).into()])?;
        }
    }
    t.finish()?;
    let delta = if rows.len() >= 2 { Some(delta_fit(&rows)?.delta) } else { None };

    let limit = torus_stabilization(ifs, rule, n_max, len, &args.eps)?;
    let mut t = Table::create(&out.join("stabilization.csv"), &["n", "eps", "N"])?;
    for r in &limit.rows {
        for (e, p) in args.eps.iter().zip(&r.prefix) {
            t.row(&[r.n.into(), (*e).into(), (*p).into()])?;
        }
    }
    t.finish()?;

    let surface = balanced_surface(ifs, args.case.into(), n_max, len, n_max + 1, &args.eps)?;
    let mut t = Table::create(&out.join("balanced.csv"), &["n", "eps", "N"])?;
    for r in &surface.rows {
        for (e, p) in args.eps.iter().zip(&r.prefix) {
            t.row(&[r.n.into(), (*e).into(), (*p).into()])?;
        }
    }
    t.finish()?;
    let mut t = Table::create(&out.join("surface.csv"), &["n", "j", "diff"])?;
    for r in &surface.rows {
        for (j, d) in r.diff.iter().enumerate() {
            t.row(&[r.n.into(), (j + 1).into(), (*d).into()])?;
        }
    }
    t.finish()?;
    if let Some(delta) = delta {
        let mut t = Table::create(&out.join("reference.csv"), &["n", "exp_delta_n"])?;
        for n in 1..=n_max {
            t.row(&[n.into(), (delta * n as f64).exp().into()])?;
        }
        t.finish()?;
    }

    write_json(
        &out.join("summary.json"),
        &InftySummary {
            n_max,
            len,
            eps: args.eps.clone(),
            d: rows.iter().map(|r| r.fit.d).collect(),
            delta,
            balanced_reference_level: surface.reference_level,
        },
    )
}

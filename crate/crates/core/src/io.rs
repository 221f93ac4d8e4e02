//! File formats: IFS and torus-point JSON in, CSV and JSON summaries out.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! every value round-trips exactly and identical runs give identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{AffineIfs, IntervalUnion};
use crate::jacobi::{ErrorProfile, JacobiMatrix};
use crate::torus::{PointRule, TorusSpec};

/// Cell of a CSV row.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => f.write_str(&format_float(*v)),
        }
    }
}

/// Header-first CSV writer.
pub struct Table {
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl Table {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        writer.write_record(header.iter().map(AsRef::as_ref))?;
        Ok(Self {
            writer,
            width: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<()> {
        debug_assert_eq!(cells.len(), self.width);
        self.writer.write_record(cells.iter().map(ToString::to_string))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_ifs(path: &Path) -> Result<AffineIfs> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read IFS file {}: {e}", path.display())))?;
    AffineIfs::from_json(&text)
}

/// A torus point given as a rule name or a path to a JSON point document.
pub fn read_point(arg: &str) -> Result<TorusSpec> {
    if PointRule::parse(arg).is_ok() {
        return Ok(TorusSpec::Rule { rule: arg.to_string() });
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::Invalid(format!(
            "`{arg}` is neither a point rule (midpoint-plus, third-alternating) nor an existing file"
        )));
    }
    let spec: TorusSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if let TorusSpec::Rule { rule } = &spec {
        PointRule::parse(rule)?;
    }
    Ok(spec)
}

/// `level,index,alpha,beta` rows for each given union.
pub fn write_bands(path: &Path, levels: &[(usize, &IntervalUnion)]) -> Result<()> {
    let mut t = Table::create(path, &["level", "index", "alpha", "beta"])?;
    for &(level, bands) in levels {
        for (i, band) in bands.bands().iter().enumerate() {
            t.row(&[level.into(), i.into(), band.lo.into(), band.hi.into()])?;
        }
    }
    t.finish()
}

/// Reads `level,index,alpha,beta` back, keeping the rows of one level.
pub fn read_bands(path: &Path, level: usize) -> Result<IntervalUnion> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).ok_or_else(|| Error::invalid(format!("short row in {}", path.display())));
        let parse_err = |e: std::num::ParseFloatError| Error::invalid(format!("bad number in {}: {e}", path.display()));
        let lvl: usize = field(0)?
            .trim()
            .parse()
            .map_err(|e| Error::invalid(format!("bad level in {}: {e}", path.display())))?;
        if lvl == level {
            pairs.push((field(2)?.trim().parse().map_err(parse_err)?, field(3)?.trim().parse().map_err(parse_err)?));
        }
    }
    IntervalUnion::from_pairs(&pairs)
}

pub fn write_jacobi(path: &Path, jm: &JacobiMatrix) -> Result<()> {
    let mut t = Table::create(path, &["j", "a_j", "b_j"])?;
    for (j, (a, b)) in jm.a.iter().zip(&jm.b).enumerate() {
        t.row(&[(j + 1).into(), (*a).into(), (*b).into()])?;
    }
    t.finish()
}

pub fn read_jacobi(path: &Path) -> Result<JacobiMatrix> {
    let mut reader = csv::Reader::from_path(path)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad row in {}", path.display())))
        };
        a.push(num(1)?);
        b.push(num(2)?);
    }
    JacobiMatrix::new(a, b)
}

pub fn write_profile(path: &Path, prof: &ErrorProfile) -> Result<()> {
    let mut t = Table::create(path, &["j", "diff_b", "running_max"])?;
    for (j, (d, m)) in prof.diff.iter().zip(&prof.running_max).enumerate() {
        t.row(&[(j + 1).into(), (*d).into(), (*m).into()])?;
    }
    t.finish()
}

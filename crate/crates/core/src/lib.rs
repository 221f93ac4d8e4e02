//! Equilibrium measures, isospectral-torus Jacobi matrices and harmonic
//! analysis for interval unions generated by affine iterated function
//! systems.
//!
//! The modules follow the pipeline: [`ifs`] builds the bands, [`equilibrium`]
//! solves for the equilibrium measure and its frequencies, [`torus`] produces
//! exact coefficient sequences of torus points, [`jacobi`] handles IFS
//! measures and discrete orthogonalisation, and [`harmonic`] fits
//! almost-periodic models. [`experiments`] strings them together for the
//! command-line tool; [`io`] holds the file formats.
//!
//! ```
//! use isotorus::equilibrium::solve_zeta;
//! use isotorus::ifs::AffineIfs;
//!
//! let bands = AffineIfs::example1().iterate_bands(1).unwrap();
//! let eq = solve_zeta(&bands, 1e-13).unwrap();
//! assert_eq!(eq.frequencies().len(), 1);
//! ```

pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod harmonic;
pub mod ifs;
pub mod io;
pub mod jacobi;
pub mod numeric;
pub mod torus;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        };
    }
    chapter!(introduction, "introduction.md");
    chapter!(geometry, "geometry.md");
    chapter!(equilibrium, "equilibrium.md");
    chapter!(torus, "torus.md");
    chapter!(jacobi, "jacobi.md");
    chapter!(harmonic, "harmonic.md");
    chapter!(experiments, "experiments.md");
}

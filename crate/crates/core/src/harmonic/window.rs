//! Dolph–Chebyshev window with an exact closed-form transform.

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};

/// Symmetric window `w_{-h..=h}` normalised so `Ŵ(0) = Σ w_j = 1`.
///
/// The transform `Ŵ(ν) = Σ w_j e^{-iνj}` equals
/// `T_{2h}(x0 cos(ν/2)) / T_{2h}(x0)`, a trigonometric polynomial of degree
/// `h`, so sampling it at the `2h+1` DFT frequencies recovers the weights
/// exactly.
#[derive(Debug, Clone)]
pub struct Window {
    half: usize,
    sidelobe_db: f64,
    /// `acosh(x0)`.
    y: f64,
    /// `T_{2h}(x0) = 10^{sidelobe_db / 20}`.
    peak: f64,
    weights: Vec<f64>,
}

pub fn dolph_window(length: usize, sidelobe_db: f64) -> Result<Window> {
    if length < 3 || length % 2 == 0 {
        return Err(Error::invalid(format!("window length must be odd and at least 3, got {length}")));
    }
    if !(sidelobe_db > 0.0 && sidelobe_db.is_finite()) {
        return Err(Error::invalid(format!("sidelobe level must be a positive number of dB, got {sidelobe_db}")));
    }
    let half = (length - 1) / 2;
    let peak = 10f64.powf(sidelobe_db / 20.0);
    let y = peak.acosh() / (2 * half) as f64;
    let mut win = Window {
        half,
        sidelobe_db,
        y,
        peak,
        weights: Vec::new(),
    };
    // Ŵ has degree h, so any grid of at least 2h + 1 points resolves it;
    // a power of two keeps the FFT at radix-2 accuracy
    let grid = length.next_power_of_two();
    let mut buf: Vec<Complex64> = (0..grid)
        .map(|k| Complex64::new(win.transform(2.0 * std::f64::consts::PI * k as f64 / grid as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_inverse(grid).process(&mut buf);
    let scale = 1.0 / grid as f64;
    let at = |j: isize| buf[j.rem_euclid(grid as isize) as usize].re * scale;
    win.weights = (0..length)
        .map(|i| {
            let j = i as isize - half as isize;
            0.5 * (at(j) + at(-j))
        })
        .collect();
    Ok(win)
}

impl Window {
    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn sidelobe_db(&self) -> f64 {
        self.sidelobe_db
    }

    /// Sidelobe ceiling `10^{-sidelobe_db/20}`.
    pub fn sidelobe_level(&self) -> f64 {
        1.0 / self.peak
    }

    /// Weights `w_{-h}, ..., w_h`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w_j` for `-h <= j <= h`.
    pub fn weight(&self, j: isize) -> f64 {
        self.weights[(j + self.half as isize) as usize]
    }

    /// Closed-form `Ŵ(ν)`.
    pub fn transform(&self, nu: f64) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut nu = nu.rem_euclid(two_pi);
        if nu > std::f64::consts::PI {
            nu = two_pi - nu;
        }
        let n = (2 * self.half) as f64;
        // x0 cos(ν/2) - 1 without cancellation
        let s = (0.25 * nu).sin();
        let x0 = self.y.cosh();
        let delta = 2.0 * (0.5 * self.y).sinh().powi(2) - 2.0 * x0 * s * s;
        let t = if delta >= 0.0 {
            let a = (delta + (delta * (delta + 2.0)).sqrt()).ln_1p();
            (n * a).cosh()
        } else {
            (n * 2.0 * (-0.5 * delta).sqrt().asin()).cos()
        };
        t / self.peak
    }

    /// Half-width of the main lobe: the first zero of `Ŵ`.
    pub fn main_lobe_half_width(&self) -> f64 {
        let n = (2 * self.half) as f64;
        let first_zero = (std::f64::consts::PI / (2.0 * n)).cos();
        2.0 * (first_zero / self.y.cosh()).acos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn direct(w: &Window, nu: f64) -> f64 {
        let h = w.half() as isize;
        (-h..=h).map(|j| w.weight(j) * (nu * j as f64).cos()).sum()
    }

    #[test]
    fn weights_symmetric_and_normalised() {
        let w = dolph_window(101, 120.0).unwrap();
        assert_abs_diff_eq!(w.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.transform(0.0), 1.0, epsilon = 1e-15);
        for j in 1..=50 {
            assert_abs_diff_eq!(w.weight(j), w.weight(-j), epsilon = 1e-17);
        }
        assert!(w.weights().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn closed_form_matches_weights() {
        for (len, db) in [(11, 60.0), (101, 120.0), (4001, 120.0)] {
            let w = dolph_window(len, db).unwrap();
            for i in 0..400 {
                let nu = 2.0 * std::f64::consts::PI * i as f64 / 399.0;
                assert_abs_diff_eq!(w.transform(nu), direct(&w, nu), epsilon = 2e-14);
            }
        }
    }

    #[test]
    fn sidelobes_below_ceiling() {
        let w = dolph_window(201, 100.0).unwrap();
        let lobe = w.main_lobe_half_width();
        assert_abs_diff_eq!(w.transform(lobe), 0.0, epsilon = 1e-12);
        let ceiling = w.sidelobe_level();
        for i in 0..5000 {
            let nu = lobe + (std::f64::consts::PI - lobe) * i as f64 / 4999.0;
            assert!(w.transform(nu).abs() <= ceiling * (1.0 + 1e-9));
        }
        assert!(w.transform(0.5 * lobe) > ceiling);
    }

    #[test]
    fn rejects_even_length() {
        assert!(dolph_window(100, 120.0).is_err());
        assert!(dolph_window(1, 120.0).is_err());
        assert!(dolph_window(11, -3.0).is_err());
    }
}

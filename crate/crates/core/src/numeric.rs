//! Small numerical building blocks shared by the other modules: compensated
//! summation, classical Gauss rules, an adaptive Gauss–Kronrod integrator for
//! complex-valued integrands, and accurate phasors for long trigonometric sums.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Kahan–Babuška (Neumaier) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Nodes and weights of a quadrature rule on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Chebyshev rule of the first kind: weight `1/sqrt(1-x^2)`, weights `pi/P`.
pub fn chebyshev_first(p: usize) -> Rule {
    let w = PI / p as f64;
    let nodes = (1..=p)
        .rev()
        .map(|k| ((2 * k - 1) as f64 * PI / (2 * p) as f64).cos())
        .collect();
    Rule {
        nodes,
        weights: vec![w; p],
    }
}

/// Gauss–Chebyshev rule of the second kind: weight `sqrt(1-x^2)`.
pub fn chebyshev_second(p: usize) -> Rule {
    let h = PI / (p + 1) as f64;
    let mut nodes = Vec::with_capacity(p);
    let mut weights = Vec::with_capacity(p);
    for k in (1..=p).rev() {
        let t = k as f64 * h;
        nodes.push(t.cos());
        weights.push(h * t.sin().powi(2));
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule with `p` nodes.
///
/// Newton iteration on the three-term recurrence, run for all nodes of one
/// half at once so the inner loop vectorises. Cost is `O(p^2)`, which keeps
/// rules with a few times `10^4` nodes within a second.
pub fn gauss_legendre(p: usize) -> Rule {
    assert!(p >= 1);
    if p == 1 {
        return Rule {
            nodes: vec![0.0],
            weights: vec![2.0],
        };
    }
    let n = p as f64;
    let half = p.div_ceil(2);
    // Tricomi initial guesses for the positive roots, largest first.
    let mut x: Vec<f64> = (1..=half)
        .map(|k| {
            let theta = PI * (k as f64 - 0.25) / (n + 0.5);
            (1.0 - (n - 1.0) / (8.0 * n * n * n)) * theta.cos()
        })
        .collect();
    let mut p0 = vec![0.0; half];
    let mut p1 = vec![0.0; half];
    let mut dp = vec![0.0; half];
    for _ in 0..100 {
        legendre_with_derivative(p, &x, &mut p0, &mut p1, &mut dp);
        let mut max_step: f64 = 0.0;
        for i in 0..half {
            let step = p1[i] / dp[i];
            x[i] -= step;
            max_step = max_step.max(step.abs());
        }
        if max_step < 1e-15 {
            break;
        }
    }
    legendre_with_derivative(p, &x, &mut p0, &mut p1, &mut dp);
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    for i in 0..half {
        let w = 2.0 / ((1.0 - x[i] * x[i]) * dp[i] * dp[i]);
        nodes[p - 1 - i] = x[i];
        weights[p - 1 - i] = w;
        nodes[i] = -x[i];
        weights[i] = w;
    }
    if p % 2 == 1 {
        nodes[half - 1] = 0.0;
    }
    Rule { nodes, weights }
}

/// Evaluates `P_p(x)` into `val` and `P_p'(x)` into `der` for a batch of points.
fn legendre_with_derivative(p: usize, x: &[f64], prev: &mut [f64], val: &mut [f64], der: &mut [f64]) {
    prev.fill(1.0);
    val.copy_from_slice(x);
    for j in 1..p {
        let a = (2 * j + 1) as f64 / (j + 1) as f64;
        let b = j as f64 / (j + 1) as f64;
        for i in 0..x.len() {
            let next = a * x[i] * val[i] - b * prev[i];
            prev[i] = val[i];
            val[i] = next;
        }
    }
    let n = p as f64;
    for i in 0..x.len() {
        der[i] = n * (x[i] * val[i] - prev[i]) / (x[i] * x[i] - 1.0);
    }
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        kron += s * GK_WK[i];
        if i % 2 == 1 {
            gauss += s * GK_WG[i / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).norm())
}

/// Globally adaptive 15-point Gauss–Kronrod integration of a complex-valued
/// function over `[a, b]`. Returns the integral and the final error estimate.
pub fn integrate_adaptive<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (Complex64, f64) {
    let mut segments: Vec<(f64, f64, Complex64, f64)> = Vec::new();
    let (v, e) = gk15(&f, a, b);
    segments.push((a, b, v, e));
    for _ in 0..2000 {
        let total: Complex64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.norm()) {
            return (total, err);
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
    let total: Complex64 = segments.iter().map(|s| s.2).sum();
    let err: f64 = segments.iter().map(|s| s.3).sum();
    (total, err)
}

/// Real-valued convenience wrapper around [`integrate_adaptive`].
pub fn integrate_adaptive_real<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate_adaptive(|x| Complex64::new(f(x), 0.0), a, b, abs_tol, rel_tol).0.re
}

/// `exp(i * omega * t)` for an integer `t`, with the product `omega * t`
/// carried to double-double accuracy before the libm call.
#[inline]
pub fn phasor(omega: f64, t: f64) -> Complex64 {
    let p = omega * t;
    let e = omega.mul_add(t, -p);
    let (s, c) = p.sin_cos();
    Complex64::new(c - e * s, s + e * c)
}

/// Streams `exp(i * omega * t)` for `t = start, start + 1, ...` by repeated
/// rotation, resynchronising against [`phasor`] every 512 steps.
pub struct PhasorStream {
    omega: f64,
    t: f64,
    current: Complex64,
    step: Complex64,
    count: u32,
}

impl PhasorStream {
    pub fn new(omega: f64, start: f64) -> Self {
        Self {
            omega,
            t: start,
            current: phasor(omega, start),
            step: phasor(omega, 1.0),
            count: 0,
        }
    }
}

impl Iterator for PhasorStream {
    type Item = Complex64;

    #[inline]
    fn next(&mut self) -> Option<Complex64> {
        let out = self.current;
        self.t += 1.0;
        self.count += 1;
        if self.count == 512 {
            self.count = 0;
            self.current = phasor(self.omega, self.t);
        } else {
            self.current *= self.step;
        }
        Some(out)
    }
}

/// Ordinary least squares of `y` on `x`: returns `(intercept, slope)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    sxy / (sxx * syy).sqrt()
}

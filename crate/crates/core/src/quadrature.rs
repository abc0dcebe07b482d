//! Adaptive Gauss–Kronrod (7, 15) quadrature on finite intervals, plus fixed
//! Gauss–Legendre rules for tensor grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

// Kronrod abscissae on [0, 1]; odd indices are the embedded Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One GK15 panel: Kronrod value, `|K − G|`, and `∫|f|` estimate.
#[derive(Clone, Copy, Debug)]
pub struct Panel<T> {
    pub a: T,
    pub b: T,
    pub value: T,
    pub error: T,
    pub abs: T,
}

pub fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    let mut abs = fc.abs() * T::lit(WGK[7]);
    for j in 0..7 {
        let dx = radius * T::lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let w = T::lit(WGK[j]);
        kron = kron + w * (f1 + f2);
        abs = abs + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = kron * radius;
    Panel { a, b, value, error: ((kron - gauss) * radius).abs(), abs: abs * radius.abs() }
}

/// Settings for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct Adaptive<T> {
    pub rel_tol: T,
    /// Absolute error floor; keeps underflowing integrands from looping.
    pub abs_floor: T,
    /// Largest width of an initial panel, `None` for a single panel.
    pub max_width: Option<T>,
    /// Total panel budget including initial panels.
    pub max_panels: usize,
}

impl<T: Real> Adaptive<T> {
    pub fn new(rel_tol: T) -> Self {
        Adaptive { rel_tol, abs_floor: T::min_positive_value().max(T::lit(1e-300)), max_width: None, max_panels: 20_000 }
    }

    pub fn max_width(mut self, w: T) -> Self {
        self.max_width = Some(w);
        self
    }

    pub fn abs_floor(mut self, floor: T) -> Self {
        self.abs_floor = floor;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
    /// `∫|f|`, the scale against which rounding is judged.
    pub abs: T,
    pub panels: usize,
}

struct Ranked<T>(Panel<T>);

impl<T: Real> PartialEq for Ranked<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Ranked<T> {}
impl<T: Real> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Ranked<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        // Ties broken by position so bisection order is deterministic.
        self.0
            .error
            .partial_cmp(&o.0.error)
            .unwrap_or(Ordering::Equal)
            .then_with(|| o.0.a.partial_cmp(&self.0.a).unwrap_or(Ordering::Equal))
    }
}

/// Globally adaptive bisection until the summed error estimate falls below
/// `max(rel_tol·|I|, abs_floor, rounding floor)`.
///
/// The rounding floor is `50·ε·∫|f|`: for strongly cancelling integrands no
/// amount of bisection gets below it, so it counts as converged.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, cfg: &Adaptive<T>) -> Result<Integral<T>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::input("integration bounds must be finite"));
    }
    if a == b {
        return Ok(Integral { value: T::zero(), error: T::zero(), abs: T::zero(), panels: 0 });
    }
    let pieces = match cfg.max_width {
        Some(w) if w > T::zero() => ((b - a).abs() / w).ceil().to_usize().unwrap_or(usize::MAX).max(1),
        _ => 1,
    };
    if pieces > cfg.max_panels {
        return Err(Error::numeric(
            format!("panel width cap needs {pieces} panels, budget is {}", cfg.max_panels),
            f64::NAN,
        ));
    }
    let step = (b - a) / T::from_count(pieces);
    let mut heap = BinaryHeap::with_capacity(pieces * 2);
    for k in 0..pieces {
        let lo = a + step * T::from_count(k);
        let hi = if k + 1 == pieces { b } else { a + step * T::from_count(k + 1) };
        heap.push(Ranked(gk15(&mut f, lo, hi)));
    }
    let mut count = pieces;
    let eps50 = T::lit(50.0) * T::epsilon();
    loop {
        let (mut value, mut error, mut abs) = (T::zero(), T::zero(), T::zero());
        // Summation in heap order is deterministic for a fixed heap history.
        for p in heap.iter() {
            value = value + p.0.value;
            error = error + p.0.error;
            abs = abs + p.0.abs;
        }
        let target = (cfg.rel_tol * value.abs()).max(cfg.abs_floor).max(eps50 * abs);
        if error <= target {
            return Ok(Integral { value, error, abs, panels: count });
        }
        if count >= cfg.max_panels {
            return Err(Error::numeric(
                format!("quadrature did not converge within {} panels (estimate {value})", cfg.max_panels),
                error.as_f64(),
            ));
        }
        let worst = heap.pop().expect("non-empty").0;
        let mid = T::lit(0.5) * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            // Interval cannot be split further in this precision.
            return Err(Error::numeric("quadrature interval collapsed", error.as_f64()));
        }
        heap.push(Ranked(gk15(&mut f, worst.a, mid)));
        heap.push(Ranked(gk15(&mut f, mid, worst.b)));
        count += 1;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of
/// `order` nodes each.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + h * (p as f64 + 0.5);
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(c + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        // GK15 integrates degree-29 polynomials exactly.
        let p = gk15(&mut |x: f64| x.powi(20) + 3.0 * x.powi(7), -1.0, 1.0);
        assert!((p.value - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_smooth_and_peaked() {
        let r = integrate(|x: f64| x.exp(), 0.0, 1.0, &Adaptive::new(1e-12)).unwrap();
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-14);
        // Narrow peak forces bisection.
        let r = integrate(|x: f64| 1e-3 / (x * x + 1e-6), -1.0, 1.0, &Adaptive::new(1e-10)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-3).atan();
        assert!((r.value - exact).abs() / exact < 1e-9, "{} vs {exact}", r.value);
        assert!(r.panels > 1);
    }

    #[test]
    fn oscillatory_with_width_cap() {
        let k = 40.0;
        let cfg = Adaptive::new(1e-12).max_width(std::f64::consts::PI / (8.0 * k));
        let r = integrate(|x: f64| (k * x).cos() * (-x).exp(), 0.0, 30.0, &cfg).unwrap();
        let exact = 1.0 / (1.0 + k * k); // up to e^{-30}
        assert!((r.value - exact).abs() < 1e-13, "{}", r.value);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let cfg = Adaptive { rel_tol: 1e-14, abs_floor: 0.0, max_width: None, max_panels: 3 };
        assert!(integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn gauss_legendre_rules() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
        let (x, w) = composite_gl(0.0, 3.0, 5, 6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((s - (1.0 - 3f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn generic_over_f32() {
        let r = integrate(|x: f32| x * x, 0.0f32, 3.0, &Adaptive::new(1e-5)).unwrap();
        assert!((r.value - 9.0).abs() < 1e-4);
    }
}

//! The hypoelliptic heat kernel `p_t^ω(v, z)`.
//!
//! After reducing the Fourier-type representation to its even real part,
//!
//! ```text
//! p_t(v, z) = 2(2πt)^{-(n+1)} ∫₀^∞ cos(2zs/t)
//!             · exp(−(1/t) Σ_j (α_j s/2) coth(α_j s) |v_j|²)
//!             · Π_j α_j s / sinh(α_j s) ds.
//! ```
//!
//! The integrand is bounded by `Π_j 2α_j s e^{−α_j s}`, which fixes the
//! truncation point, and the cosine fixes the largest panel width.
//!
//! For `z ≠ 0` the cosine integral cancels down to a tiny fraction of
//! `∫|integrand|` far from the origin, so it is evaluated on the line
//! `Im s = c` through the saddle point instead. The integrand is analytic for
//! `|Im s| < π/α_max` and even with real values on the real axis, so
//!
//! ```text
//! ∫₀^∞ cos(ks) F(s) ds = ∫₀^∞ Re[e^{ik(u+ic)} F(u+ic)] du,   k = 2|z|/t.
//! ```

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupContext, GroupElement};
use crate::io::CheckReport;
use crate::quadrature::{self, composite_gl, integrate, Adaptive};
use crate::sampler::{self, BrownianConfig};
use crate::scalar::{pairwise_sum, Real};
use crate::stats;

pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Below this `|α s|` the removable singularities are evaluated by series.
const SERIES_CUTOFF: f64 = 1e-4;
/// Nats of slack below `log(rel_tol)` for the truncation point.
const TRUNCATION_SLACK: f64 = 20.0;
/// Gaussian tail cut-off in each horizontal coordinate, in units of `√t`.
const V_TAIL: f64 = 12.0;

/// A request for `p_t^ω(g)`.
#[derive(Clone, Debug)]
pub struct KernelQuery<T> {
    pub ctx: GroupContext<T>,
    pub t: T,
    pub g: GroupElement<T>,
    pub rel_tol: T,
}

impl<T: Real> KernelQuery<T> {
    pub fn new(ctx: GroupContext<T>, t: T, g: GroupElement<T>, rel_tol: T) -> Result<Self> {
        if !(t > T::zero() && t.is_finite()) {
            return Err(Error::input(format!("heat kernel time must be positive, got {t}")));
        }
        if !(rel_tol > T::zero() && rel_tol <= T::lit(1e-2)) {
            return Err(Error::input(format!("rel_tol must lie in (0, 1e-2], got {rel_tol}")));
        }
        if g.v.len() != 2 * ctx.n() {
            return Err(Error::input(format!("point has {} horizontal coordinates, group has {}", g.v.len(), 2 * ctx.n())));
        }
        Ok(KernelQuery { ctx, t, g, rel_tol })
    }

    pub fn with_default_tol(ctx: GroupContext<T>, t: T, g: GroupElement<T>) -> Result<Self> {
        Self::new(ctx, t, g, T::lit(DEFAULT_REL_TOL))
    }
}

/// Value of the kernel together with quadrature diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct KernelValue<T> {
    pub value: T,
    /// Error estimate of the value (same scale).
    pub error: T,
    /// Upper end of the truncated `s`-range.
    pub cutoff: T,
    pub panels: usize,
}

/// `ln(x/sinh x)` and `x·coth x` for `x ≥ 0`, stable near 0 and for large `x`.
#[inline]
fn log_x_over_sinh_and_x_coth<T: Real>(x: T) -> (T, T) {
    if x < T::lit(SERIES_CUTOFF) {
        let x2 = x * x;
        // ln(1 − x²/6 + …) ≈ −x²/6;  x coth x ≈ 1 + x²/3.
        (-x2 / T::lit(6.0), T::one() + x2 / T::lit(3.0))
    } else if x < T::lit(20.0) {
        ((x / x.sinh()).ln(), x / x.tanh())
    } else {
        let e2 = (-(x + x)).exp();
        ((x + x).ln() - x - (-e2).ln_1p(), x)
    }
}

/// Real integrand at `s ≥ 0` given `|v_j|²` per horizontal pair.
#[inline]
fn integrand<T: Real>(alphas: &[T], r2: &[T], z: T, t: T, s: T) -> T {
    let mut log_amp = T::zero();
    let mut gauss = T::zero();
    for (&a, &r) in alphas.iter().zip(r2) {
        let (lr, xc) = log_x_over_sinh_and_x_coth(a * s);
        log_amp = log_amp + lr;
        gauss = gauss + xc * r;
    }
    let phase = (z + z) * s / t;
    phase.cos() * (log_amp - T::lit(0.5) * gauss / t).exp()
}

/// `ln(w/sinh w)` and `w·coth w` for `Re w ≥ 0`.
#[inline]
fn log_w_over_sinh_and_w_coth<T: Real>(w: Complex<T>) -> (Complex<T>, Complex<T>) {
    if w.norm() < T::lit(SERIES_CUTOFF) {
        let w2 = w * w;
        (-w2 / T::lit(6.0), w2 / T::lit(3.0) + T::one())
    } else {
        // sinh w = e^w (1 − e^{−2w}) / 2; only exp of the log is used, so the
        // branch does not matter.
        let e2 = (-(w + w)).exp();
        let one = Complex::new(T::one(), T::zero());
        let lr = w.ln() - w + T::LN_2() - (one - e2).ln();
        (lr, w * (one + e2) / (one - e2))
    }
}

/// `ln F(u + ic) − kc + iku`; its exponential is the shifted integrand.
#[inline]
fn shifted_log<T: Real>(alphas: &[T], r2: &[T], k: T, t: T, c: T, u: T) -> Complex<T> {
    let s = Complex::new(u, c);
    let mut acc = Complex::new(-k * c, k * u);
    for (&a, &r) in alphas.iter().zip(r2) {
        let (lr, wc) = log_w_over_sinh_and_w_coth(s * a);
        acc = acc + lr - wc * (T::lit(0.5) * r / t);
    }
    acc
}

/// Height of the saddle: the minimizer over `(0, π/α_max)` of the convex
/// `φ(c) = −kc + Σ ln(α_j c / sin α_j c) − (1/2t) Σ α_j c cot(α_j c) |v_j|²`.
fn saddle_height<T: Real>(alphas: &[T], r2: &[T], k: T, t: T) -> T {
    let phi = |c: T| -> T {
        let mut v = -k * c;
        for (&a, &r) in alphas.iter().zip(r2) {
            let x = a * c;
            let (lr, xc) = if x < T::lit(SERIES_CUTOFF) {
                (x * x / T::lit(6.0), T::one() - x * x / T::lit(3.0))
            } else {
                ((x / x.sin()).ln(), x / x.tan())
            };
            v = v + lr - T::lit(0.5) * xc * r / t;
        }
        if v.is_nan() { T::infinity() } else { v }
    };
    let amax = alphas.iter().copied().fold(T::zero(), T::max);
    let (mut lo, mut hi) = (T::zero(), T::PI() / amax);
    let g = T::lit(0.618_033_988_749_894_9);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = phi(x2);
        }
    }
    T::lit(0.5) * (lo + hi)
}

/// Smallest `S` with `Σ_j (ln(2α_j S) − α_j S) < ln(rel_tol) − 20`.
pub fn truncation_point<T: Real>(alphas: &[T], rel_tol: T) -> T {
    let target = rel_tol.ln() - T::lit(TRUNCATION_SLACK);
    let h = |s: T| alphas.iter().map(|&a| (T::lit(2.0) * a * s).ln() - a * s).sum::<T>();
    let amin = alphas.iter().copied().fold(T::infinity(), T::min);
    // h decreases for S beyond 1/α_min.
    let mut lo = T::one() / amin;
    let mut hi = lo + lo;
    while h(hi) >= target {
        lo = hi;
        hi = hi + hi;
    }
    for _ in 0..60 {
        let mid = T::lit(0.5) * (lo + hi);
        if h(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn prefactor<T: Real>(n: usize, t: T) -> T {
    let two_pi_t = T::lit(2.0) * T::PI() * t;
    T::lit(2.0) / two_pi_t.powi(n as i32 + 1)
}

fn panel_cap<T: Real>(alphas: &[T], t: T, z_abs: T, cutoff: T) -> T {
    let mut w = cutoff / T::lit(16.0);
    if z_abs > T::zero() {
        w = w.min(T::PI() * t / (T::lit(8.0) * z_abs));
    }
    let amax = alphas.iter().copied().fold(T::zero(), T::max);
    w.min(T::one() / amax)
}

/// The cosine integral evaluated on `Im s = c` at the saddle height, with
/// the truncation point it used.
fn saddle_integral<T: Real>(alphas: &[T], r2: &[T], z: T, t: T, rel_tol: T) -> Result<(Integral<T>, T)> {
    let k = T::lit(2.0) * z.abs() / t;
    let c = saddle_height(alphas, r2, k, t);
    let env = |u: T| shifted_log(alphas, r2, k, t, c, u).re;
    // Extend the range until the envelope is negligible next to its peak.
    let floor = env(T::zero()) + rel_tol.ln() - T::lit(TRUNCATION_SLACK);
    let mut cutoff = truncation_point(alphas, rel_tol);
    let mut grow = 0;
    while env(cutoff) > floor && grow < 64 {
        cutoff = cutoff * T::lit(1.5);
        grow += 1;
    }
    let amax = alphas.iter().copied().fold(T::zero(), T::max);
    let cap = panel_cap(alphas, t, z.abs(), cutoff).min(T::PI() / amax - c);
    let mut cfg = Adaptive::new(rel_tol).max_width(cap);
    cfg.max_panels = cfg.max_panels.max(4 * (cutoff / cap).ceil().to_usize().unwrap_or(0));
    let res = integrate(|u| shifted_log(alphas, r2, k, t, c, u).exp().re, T::zero(), cutoff, &cfg)?;
    Ok((res, cutoff))
}

fn kernel_from_r2<T: Real>(alphas: &[T], r2: &[T], z: T, t: T, rel_tol: T) -> Result<KernelValue<T>> {
    let n = alphas.len();
    let mut cutoff = truncation_point(alphas, rel_tol);
    let cap = panel_cap(alphas, t, z.abs(), cutoff);
    let mut cfg = Adaptive::new(rel_tol).max_width(cap);
    cfg.max_panels = cfg.max_panels.max(4 * (cutoff / cap).ceil().to_usize().unwrap_or(0));
    let mut res = integrate(|s| integrand(alphas, r2, z, t, s), T::zero(), cutoff, &cfg)?;
    // Rounding in the cancelling sum is about eps·∫|f|; past the tolerance,
    // redo the integral on the saddle line.
    if z != T::zero() && T::lit(1e3) * T::epsilon() * res.abs > rel_tol * res.value.abs() {
        (res, cutoff) = saddle_integral(alphas, r2, z, t, rel_tol)?;
    }
    let pre = prefactor::<T>(n, t);
    let mut value = pre * res.value;
    let error = pre * res.error;
    if value < T::zero() {
        // ∫|integrand| is bounded by the identity-point integral, so this is
        // a tolerance relative to the p_t(e) scale.
        let scale = pre * res.abs;
        if -value <= rel_tol * scale + error {
            log::warn!("heat kernel quadrature returned {value:e}; clamped to 0");
            value = T::zero();
        } else {
            return Err(Error::numeric(
                format!("heat kernel quadrature is negative beyond tolerance ({value:e})"),
                value.as_f64(),
            ));
        }
    }
    Ok(KernelValue { value, error, cutoff, panels: res.panels })
}

fn pair_norms<T: Real>(g: &GroupElement<T>) -> Vec<T> {
    g.v.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect()
}

pub fn density_detailed<T: Real>(q: &KernelQuery<T>) -> Result<KernelValue<T>> {
    kernel_from_r2(q.ctx.alphas(), &pair_norms(&q.g), q.g.z, q.t, q.rel_tol)
}

/// `p_t^ω(g)`.
pub fn density<T: Real>(q: &KernelQuery<T>) -> Result<T> {
    density_detailed(q).map(|k| k.value)
}

/// Shorthand for [`density`] at the default tolerance.
pub fn p<T: Real>(ctx: &GroupContext<T>, t: T, g: &GroupElement<T>) -> Result<T> {
    density(&KernelQuery::with_default_tol(ctx.clone(), t, g.clone())?)
}

/// `p_t(δ_λ g)` against `λ^{−2(n+1)} p_{t/λ²}(g)`.
pub fn scaling_check<T: Real>(ctx: &GroupContext<T>, t: T, lambda: T, g: &GroupElement<T>, tol: T) -> Result<CheckReport> {
    let dg = ctx.dilate(lambda, g)?;
    let lhs = p(ctx, t, &dg)?;
    let rhs = lambda.powi(-2 * (ctx.n() as i32 + 1)) * p(ctx, t / (lambda * lambda), g)?;
    Ok(CheckReport::relative(lhs.as_f64(), rhs.as_f64(), tol.as_f64()))
}

/// `p_t` on the tensor grid `radii × heights` for `n = 1`, all sharing one
/// fixed composite Gauss–Legendre rule in `s`.
///
/// The rule resolves every cosine period with at least 16 panels of 10 nodes
/// for the largest `|z|`, which keeps it far below `rel_tol` wherever the
/// adaptive rule would be; used for multi-dimensional integrals where
/// adaptive evaluation per node is too slow.
#[derive(Clone, Debug)]
pub struct RadialTable {
    pub radii: Vec<f64>,
    pub heights: Vec<f64>,
    /// `values[i][k] = p_t(r_i, z_k)`.
    pub values: Vec<Vec<f64>>,
}

impl RadialTable {
    pub fn new(ctx: &GroupContext<f64>, t: f64, radii: &[f64], heights: &[f64], rel_tol: f64) -> Result<Self> {
        if ctx.n() != 1 {
            return Err(Error::input("radial tables are defined for n = 1"));
        }
        if !(t > 0.0) {
            return Err(Error::input("heat kernel time must be positive"));
        }
        let alpha = ctx.alpha(0);
        let cutoff = truncation_point(ctx.alphas(), rel_tol);
        let zmax = heights.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        let width = panel_cap(ctx.alphas(), t, zmax, cutoff);
        let panels = (cutoff / width).ceil() as usize;
        let (s, w) = composite_gl(0.0, cutoff, panels, 10);
        // Radial factor per s-node, reused for every radius.
        let (amp, xc): (Vec<f64>, Vec<f64>) = s
            .iter()
            .zip(&w)
            .map(|(&si, &wi)| {
                let (lr, xc) = log_x_over_sinh_and_x_coth(alpha * si);
                (wi * lr.exp(), xc)
            })
            .unzip();
        let pre = prefactor::<f64>(1, t);
        let cos_rows: Vec<Vec<f64>> =
            heights.par_iter().map(|&z| s.iter().map(|&si| (2.0 * z * si / t).cos()).collect()).collect();
        let values = radii
            .par_iter()
            .map(|&r| {
                let k: Vec<f64> = amp.iter().zip(&xc).map(|(&a, &x)| a * (-0.5 * x * r * r / t).exp()).collect();
                cos_rows
                    .iter()
                    .map(|c| {
                        let terms: Vec<f64> = c.iter().zip(&k).map(|(a, b)| a * b).collect();
                        (pre * pairwise_sum(&terms)).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Ok(RadialTable { radii: radii.to_vec(), heights: heights.to_vec(), values })
    }
}

/// Iterated tensor-grid value of `∫ p_t dg` over `R³` for `n = 1`.
///
/// `panels` sets the resolution in `r` and `z`; the returned error is the
/// difference to the half-resolution value.
pub fn total_mass(ctx: &GroupContext<f64>, t: f64, panels: usize) -> Result<(f64, f64)> {
    let mass = |panels: usize| -> Result<f64> {
        let alpha = ctx.alpha(0);
        let rmax = V_TAIL * t.sqrt() * std::f64::consts::SQRT_2;
        let zmax = height_range(alpha, t);
        let (r, wr) = composite_gl(0.0, rmax, panels, 10);
        let (z, wz) = composite_gl(0.0, zmax, 2 * panels, 10);
        let table = RadialTable::new(ctx, t, &r, &z, DEFAULT_REL_TOL)?;
        let mut terms = Vec::with_capacity(r.len() * z.len());
        for (i, ri) in r.iter().enumerate() {
            for (k, wk) in wz.iter().enumerate() {
                terms.push(2.0 * std::f64::consts::PI * ri * wr[i] * wk * table.values[i][k]);
            }
        }
        // Even in z.
        Ok(2.0 * pairwise_sum(&terms))
    };
    let fine = mass(panels)?;
    let coarse = mass(panels.div_ceil(2))?;
    Ok((fine, (fine - coarse).abs()))
}

/// Half-width of the height range holding all but ~e^{-40} of the mass; the
/// `z`-marginal decays like `e^{−π|z|/(αt)}`.
pub fn height_range(alpha: f64, t: f64) -> f64 {
    40.0 * alpha * t / std::f64::consts::PI
}

/// Estimate of `∫ p_t dg` (expected to be 1 for a probability density).
pub fn normalization_check(ctx: &GroupContext<f64>, t: f64, tol: f64) -> Result<CheckReport> {
    if ctx.n() != 1 {
        return Err(Error::input("normalization check is implemented for n = 1"));
    }
    let (mass, err) = total_mass(ctx, t, 16)?;
    if err > 0.1 * tol {
        return Err(Error::numeric("normalization integral not resolved", err));
    }
    Ok(CheckReport::absolute(mass, 1.0, tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct SemigroupReport {
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z_score: f64,
    pub pass: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of `E_{h∼μ_t}[p_s(h⁻¹⋆g)]` against `p_{t+s}(g)`.
pub fn semigroup_check(
    ctx: &GroupContext<f64>,
    t: f64,
    s: f64,
    g: &GroupElement<f64>,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Result<SemigroupReport> {
    if samples < 1000 {
        return Err(Error::input("semigroup check needs at least 1000 samples"));
    }
    let cfg = BrownianConfig::new(ctx.clone(), t, steps, samples, seed)?;
    let batch = sampler::sample_measure(&cfg);
    let rel_tol = 1e-8;
    let values = batch
        .endpoints
        .par_iter()
        .map(|h| {
            let x = ctx.multiply(&h.inverse(), g)?;
            density(&KernelQuery::new(ctx.clone(), s, x, rel_tol)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let summary = stats::Summary::of(&values);
    let target = density(&KernelQuery::new(ctx.clone(), t + s, g.clone(), rel_tol)?)?;
    let z_score = (summary.mean - target) / summary.std_error;
    Ok(SemigroupReport {
        estimate: summary.mean,
        std_error: summary.std_error,
        target,
        z_score,
        pass: z_score.abs() <= 3.0,
        n: samples,
        m: steps,
        seed,
    })
}

/// Coordinate axis for [`density_profile`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Horizontal coordinate by flat index into `v`.
    Horizontal(usize),
    Vertical,
}

/// `(coordinate, density)` at `count` evenly spaced points of `[lo, hi]` on
/// one axis through the identity.
pub fn density_profile<T: Real>(
    ctx: &GroupContext<T>,
    t: T,
    axis: Axis,
    range: (T, T),
    count: usize,
) -> Result<Vec<(T, T)>> {
    if count < 2 {
        return Err(Error::input("a profile needs at least two points"));
    }
    if let Axis::Horizontal(i) = axis {
        if i >= 2 * ctx.n() {
            return Err(Error::input(format!("axis {i} out of range for n = {}", ctx.n())));
        }
    }
    let (lo, hi) = range;
    let step = (hi - lo) / T::from_count(count - 1);
    (0..count)
        .into_par_iter()
        .map(|k| {
            let c = if k + 1 == count { hi } else { lo + step * T::from_count(k) };
            let mut g = ctx.identity();
            match axis {
                Axis::Horizontal(i) => g.v[i] = c,
                Axis::Vertical => g.z = c,
            }
            Ok((c, p(ctx, t, &g)?))
        })
        .collect()
}

/// `p_t(0, 0, z)` for `n = 1` in closed form, `sech²(πz/(αt)) / (8αt²)`.
pub fn vertical_closed_form(alpha: f64, t: f64, z: f64) -> f64 {
    let c = 1.0 / (std::f64::consts::PI * z / (alpha * t)).cosh();
    c * c / (8.0 * alpha * t * t)
}

/// `∫ p_t` restricted to heights, i.e. the `z`-marginal density at each
/// height for `n = 1`, by radial quadrature of [`RadialTable`] values.
pub fn vertical_marginal(ctx: &GroupContext<f64>, t: f64, heights: &[f64]) -> Result<Vec<f64>> {
    let rmax = V_TAIL * t.sqrt() * std::f64::consts::SQRT_2;
    let (r, wr) = composite_gl(0.0, rmax, 24, 10);
    let table = RadialTable::new(ctx, t, &r, heights, DEFAULT_REL_TOL)?;
    Ok((0..heights.len())
        .map(|k| {
            let terms: Vec<f64> =
                r.iter().enumerate().map(|(i, ri)| 2.0 * std::f64::consts::PI * ri * wr[i] * table.values[i][k]).collect();
            pairwise_sum(&terms)
        })
        .collect())
}

#[doc(hidden)]
pub use quadrature::Integral;


#[cfg(test)]
mod contour_tests {
    use super::*;

    fn direct(alphas: &[f64], r2: &[f64], z: f64, t: f64) -> f64 {
        let cfg = Adaptive::new(1e-12).max_width(panel_cap(alphas, t, z.abs(), 60.0));
        let cut = truncation_point(alphas, 1e-12);
        prefactor::<f64>(alphas.len(), t) * integrate(|s| integrand(alphas, r2, z, t, s), 0.0, cut, &cfg).unwrap().value
    }

    #[test]
    fn shifted_contour_matches_real_axis() {
        for (alphas, r2, z, t) in [
            (vec![1.0], vec![0.3], 0.4, 1.0),
            (vec![0.5, 2.0], vec![0.1, 0.7], -0.8, 0.7),
            (vec![0.3, 1.0, 3.0], vec![0.0, 0.2, 0.4], 0.25, 1.5),
            (vec![2.0], vec![0.0], 1.5, 1.0),
        ] {
            let a = prefactor::<f64>(alphas.len(), t) * saddle_integral(&alphas, &r2, z, t, 1e-12).unwrap().0.value;
            let b = direct(&alphas, &r2, z, t);
            assert!((a - b).abs() <= 1e-10 * b, "{alphas:?} {z}: {a} vs {b}");
        }
    }

    #[test]
    fn far_tail_keeps_relative_accuracy() {
        // p_1(0, z) = sech²(πz)/8 down to values far below the p_1(e) scale
        let ctx = GroupContext::new(vec![1.0]).unwrap();
        for z in [3.0, 6.0, 9.0] {
            let v = p(&ctx, 1.0, &GroupElement::new(vec![0.0, 0.0], z).unwrap()).unwrap();
            let exact = 1.0 / (8.0 * (std::f64::consts::PI * z).cosh().powi(2));
            assert!((v - exact).abs() <= 1e-9 * exact, "z = {z}: {v} vs {exact}");
        }
    }
}

//! Upper bounds on the Carnot–Carathéodory distance from the identity.
//!
//! A horizontal path is a polygon `0 = A₀, A₁, …, A_K` in `R^{2n}`; its
//! vertical end point is the exact holonomy `½Σ ω(A_k, A_{k+1})`. We minimize
//! the discrete energy `K·Σ|A_{k+1} − A_k|²` with `A_K = v` fixed and the
//! holonomy pinned to `z` by an augmented Lagrangian. At the optimum the
//! segments have equal length, so `√energy` is the polygon length.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupContext, GroupElement};
use crate::io::{self, CheckReport};
use crate::rng;
use crate::scalar::Real;

/// Piecewise-linear horizontal curve with breakpoints `A₀ = 0, …, A_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalPath<T> {
    pub ctx: GroupContext<T>,
    points: Vec<Vec<T>>,
}

impl<T: Real> HorizontalPath<T> {
    pub fn new(ctx: GroupContext<T>, points: Vec<Vec<T>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::input("a path needs at least two breakpoints"));
        }
        let d = 2 * ctx.n();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::input(format!("breakpoints must have {d} coordinates")));
        }
        if points[0].iter().any(|c| *c != T::zero()) {
            return Err(Error::input("paths start at the identity, A₀ = 0"));
        }
        Ok(HorizontalPath { ctx, points })
    }

    /// Straight segment `0 → v` with `k` equal pieces.
    pub fn straight(ctx: GroupContext<T>, v: &[T], k: usize) -> Result<Self> {
        let pts = (0..=k).map(|i| v.iter().map(|&c| c * T::from_count(i) / T::from_count(k)).collect()).collect();
        Self::new(ctx, pts)
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    /// Number of segments `K`.
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    /// Holonomy after each breakpoint; the last entry is [`vertical_gain`].
    pub fn holonomy(&self) -> Vec<T> {
        let half = T::lit(0.5);
        let mut acc = T::zero();
        let mut out = vec![T::zero()];
        for w in self.points.windows(2) {
            acc = acc + half * self.ctx.omega_unchecked(&w[0], &w[1]);
            out.push(acc);
        }
        out
    }

    /// End point in the group.
    pub fn endpoint(&self) -> GroupElement<T> {
        GroupElement { v: self.points.last().expect("nonempty").clone(), z: vertical_gain(self) }
    }
}

impl HorizontalPath<f64> {
    /// `k,x1,y1,…,xn,yn,a` with `a` the accumulated holonomy.
    pub fn to_csv(&self) -> String {
        let mut s = format!("k,{}\n", io::coord_header(self.ctx.n(), "a"));
        for (k, (p, a)) in self.points.iter().zip(self.holonomy()).enumerate() {
            let row: Vec<String> = p.iter().chain(std::iter::once(&a)).map(|&x| io::fmt(x)).collect();
            let _ = writeln!(s, "{k},{}", row.join(","));
        }
        s
    }
}

/// `½ Σ ω(A_k, A_{k+1})`, exact for polygons.
pub fn vertical_gain<T: Real>(path: &HorizontalPath<T>) -> T {
    *path.holonomy().last().expect("nonempty")
}

/// `(Σ|A_{k+1} − A_k|, K·Σ|A_{k+1} − A_k|²)`.
pub fn path_length<T: Real>(path: &HorizontalPath<T>) -> (T, T) {
    let mut len = T::zero();
    let mut energy = T::zero();
    for w in path.points.windows(2) {
        let sq: T = w[0].iter().zip(&w[1]).map(|(&a, &b)| (b - a) * (b - a)).sum();
        len = len + sq.sqrt();
        energy = energy + sq;
    }
    (len, energy * T::from_count(path.segments()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Steepest descent with Armijo backtracking.
    SteepestDescent,
    /// Limited-memory BFGS direction with the same backtracking.
    Lbfgs,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub penalty: f64,
    pub penalty_growth: f64,
    pub armijo: f64,
    pub grad_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Constraint tolerance relative to `(‖v‖ + √|z|)²`.
    pub constraint_tol: f64,
    pub solver: InnerSolver,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            starts: 8,
            penalty: 10.0,
            penalty_growth: 10.0,
            armijo: 1e-4,
            grad_tol: 1e-8,
            max_inner: 10_000,
            max_outer: 40,
            constraint_tol: 1e-8,
            solver: InnerSolver::Lbfgs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistanceEstimate {
    pub d_hat: f64,
    pub constraint_residual: f64,
    pub starts: usize,
    pub k: usize,
    /// Index of the selected start.
    pub best_start: usize,
    /// Index of the `(x_i, y_i)` pair carrying the loop in the default start.
    pub pump_pair: usize,
    pub path: HorizontalPath<f64>,
}

#[derive(Serialize)]
struct DistanceJson {
    d_hat: f64,
    constraint_residual: f64,
    starts: usize,
    #[serde(rename = "K")]
    k: usize,
    best_start: usize,
    pump_pair: usize,
}

impl DistanceEstimate {
    /// `{d_hat, constraint_residual, starts, K, …}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(DistanceJson {
            d_hat: self.d_hat,
            constraint_residual: self.constraint_residual,
            starts: self.starts,
            k: self.k,
            best_start: self.best_start,
            pump_pair: self.pump_pair,
        })
        .expect("serializable")
    }
}

/// Normalized problem: free breakpoints `A₁…A_{K−1}` stacked in `x`.
struct Problem<'a> {
    ctx: &'a GroupContext<f64>,
    k: usize,
    d: usize,
    v: Vec<f64>,
    z: f64,
}

impl Problem<'_> {
    fn point<'b>(&'b self, x: &'b [f64], i: usize) -> &'b [f64] {
        static ZERO: [f64; 64] = [0.0; 64];
        if i == 0 {
            if self.d <= 64 {
                &ZERO[..self.d]
            } else {
                unreachable!("zero block sized on construction")
            }
        } else if i == self.k {
            &self.v
        } else {
            &x[(i - 1) * self.d..i * self.d]
        }
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.k {
            let (a, b) = (self.point(x, i), self.point(x, i + 1));
            e += a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>();
        }
        e * self.k as f64
    }

    fn gain(&self, x: &[f64]) -> f64 {
        (0..self.k).map(|i| 0.5 * self.ctx.omega_unchecked(self.point(x, i), self.point(x, i + 1))).sum()
    }

    /// `Ω w` with `Ω = ⊕ α_j J₂`.
    fn omega_mul(&self, w: &[f64], out: &mut [f64]) {
        for j in 0..self.d / 2 {
            let a = self.ctx.alpha(j);
            out[2 * j] = a * w[2 * j + 1];
            out[2 * j + 1] = -a * w[2 * j];
        }
    }

    /// Augmented Lagrangian `E − λc + (μ/2)c²` and its gradient.
    fn lagrangian(&self, x: &[f64], lambda: f64, mu: f64, grad: &mut [f64]) -> f64 {
        let c = self.gain(x) - self.z;
        let coef = -lambda + mu * c;
        let kf = self.k as f64;
        let mut diff = vec![0.0; self.d];
        let mut om = vec![0.0; self.d];
        for i in 1..self.k {
            let (p, a, n) = (self.point(x, i - 1), self.point(x, i), self.point(x, i + 1));
            for j in 0..self.d {
                diff[j] = n[j] - p[j];
            }
            self.omega_mul(&diff, &mut om);
            let g = &mut grad[(i - 1) * self.d..i * self.d];
            for j in 0..self.d {
                g[j] = 2.0 * kf * (2.0 * a[j] - p[j] - n[j]) + coef * 0.5 * om[j];
            }
        }
        self.energy(x) - lambda * c + 0.5 * mu * c * c
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the augmented Lagrangian in place; returns whether the gradient
/// tolerance was met.
fn inner_solve(p: &Problem, x: &mut [f64], lambda: f64, mu: f64, cfg: &OptimizerConfig) -> bool {
    let nvar = x.len();
    let mut g = vec![0.0; nvar];
    let mut f = p.lagrangian(x, lambda, mu, &mut g);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    const MEMORY: usize = 10;
    let mut trial = vec![0.0; nvar];
    let mut gt = vec![0.0; nvar];
    for _ in 0..cfg.max_inner {
        if dot(&g, &g).sqrt() <= cfg.grad_tol {
            return true;
        }
        // Search direction.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        if cfg.solver == InnerSolver::Lbfgs && !hist.is_empty() {
            let mut q = g.clone();
            let mut alphas = Vec::with_capacity(hist.len());
            for (s, y, rho) in hist.iter().rev() {
                let a = rho * dot(s, &q);
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                alphas.push(a);
            }
            let (s, y, _) = hist.last().expect("nonempty");
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
            for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(y, &q);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
            }
            dir = q.iter().map(|v| -v).collect();
            if dot(&dir, &g) >= 0.0 {
                hist.clear();
                dir = g.iter().map(|v| -v).collect();
            }
        }
        let slope = dot(&dir, &g);
        let mut step = if cfg.solver == InnerSolver::Lbfgs && !hist.is_empty() {
            1.0
        } else {
            1.0 / dot(&g, &g).sqrt().max(1.0)
        };
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..nvar {
                trial[i] = x[i] + step * dir[i];
            }
            let ft = p.lagrangian(&trial, lambda, mu, &mut gt);
            // Near the minimum the decrease drops below the rounding of f;
            // then fall back to the approximate Wolfe test on the slope.
            let sufficient = ft <= f + cfg.armijo * step * slope;
            let approximate = ft <= f + 1e-13 * f.abs() && dot(&dir, &gt).abs() <= 0.9 * slope.abs();
            if sufficient || approximate {
                let s: Vec<f64> = (0..nvar).map(|i| trial[i] - x[i]).collect();
                let y: Vec<f64> = (0..nvar).map(|i| gt[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    hist.push((s, y, 1.0 / sy));
                    if hist.len() > MEMORY {
                        hist.remove(0);
                    }
                }
                x.copy_from_slice(&trial);
                g.copy_from_slice(&gt);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No decrease representable: stationary to rounding.
            return dot(&g, &g).sqrt() <= cfg.grad_tol.sqrt();
        }
    }
    dot(&g, &g).sqrt() <= cfg.grad_tol
}

struct Outcome {
    x: Vec<f64>,
    energy: f64,
    residual: f64,
    converged: bool,
}

fn augmented_lagrangian(p: &Problem, mut x: Vec<f64>, cfg: &OptimizerConfig) -> Outcome {
    let mut lambda = 0.0;
    let mut mu = cfg.penalty;
    let mut c_prev = f64::INFINITY;
    let mut inner_ok = false;
    for _ in 0..cfg.max_outer {
        inner_ok = inner_solve(p, &mut x, lambda, mu, cfg);
        let c = p.gain(&x) - p.z;
        if c.abs() <= cfg.constraint_tol && inner_ok {
            break;
        }
        lambda -= mu * c;
        if c.abs() > cfg.constraint_tol && c.abs() > 0.25 * c_prev {
            mu *= cfg.penalty_growth;
        }
        c_prev = c.abs();
    }
    let residual = (p.gain(&x) - p.z).abs();
    Outcome { energy: p.energy(&x), residual, converged: inner_ok && residual <= cfg.constraint_tol, x }
}

/// Initial breakpoints: the straight line to `v` plus a closed circle in the
/// pair `pair`, sized so that it alone supplies the holonomy `z`.
fn initial_path(p: &Problem, pair: usize, phase: f64, orientation: f64) -> Vec<f64> {
    let a = p.ctx.alpha(pair);
    let r = (p.z.abs() / (a * std::f64::consts::PI)).sqrt();
    let sign = if p.z < 0.0 { -orientation } else { orientation };
    let mut x = vec![0.0; (p.k - 1) * p.d];
    for i in 1..p.k {
        let s = i as f64 / p.k as f64;
        let th = phase + sign * 2.0 * std::f64::consts::PI * s;
        let blk = &mut x[(i - 1) * p.d..i * p.d];
        for j in 0..p.d {
            blk[j] = s * p.v[j];
        }
        blk[2 * pair] += r * (th.cos() - phase.cos());
        blk[2 * pair + 1] += r * (th.sin() - phase.sin());
    }
    x
}

/// `d̂ ≥ d_CC(e, g)` from the best of `cfg.starts` optimized polygons.
pub fn estimate_distance(
    ctx: &GroupContext<f64>,
    target: &GroupElement<f64>,
    k: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<DistanceEstimate> {
    if k < 8 {
        return Err(Error::input(format!("need K ≥ 8 segments, got {k}")));
    }
    if cfg.starts == 0 {
        return Err(Error::input("need at least one start"));
    }
    let d = 2 * ctx.n();
    if target.v.len() != d || !target.z.is_finite() || target.v.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("target does not belong to the group"));
    }
    if d > 64 {
        return Err(Error::input("distance estimation supports n ≤ 32"));
    }
    // Cheapest area per length sits in the pair with the largest α.
    let pump_pair = ctx.n() - 1;
    let vnorm = target.v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let scale = vnorm + target.z.abs().sqrt();
    if scale == 0.0 {
        let path = HorizontalPath::straight(ctx.clone(), &target.v, k)?;
        return Ok(DistanceEstimate { d_hat: 0.0, constraint_residual: 0.0, starts: cfg.starts, k, best_start: 0, pump_pair, path });
    }
    let problem = Problem {
        ctx,
        k,
        d,
        v: target.v.iter().map(|c| c / scale).collect(),
        z: target.z / (scale * scale),
    };
    let outcomes: Vec<Outcome> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let (pair, phase, orientation) = if s == 0 {
                (pump_pair, 0.0, 1.0)
            } else {
                let mut r = rng::stream(seed, s as u64);
                let pair = r.random_range(0..ctx.n());
                let phase = r.random_range(0.0..2.0 * std::f64::consts::PI);
                let orientation = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                (pair, phase, orientation)
            };
            augmented_lagrangian(&problem, initial_path(&problem, pair, phase, orientation), cfg)
        })
        .collect();
    let best = |only_converged: bool| {
        outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.converged || !only_converged)
            .min_by(|a, b| {
                let key = |o: &Outcome| if only_converged { o.energy } else { o.residual };
                key(a.1).total_cmp(&key(b.1)).then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i)
    };
    let to_path = |o: &Outcome| -> Result<HorizontalPath<f64>> {
        let mut pts = vec![vec![0.0; d]];
        pts.extend(o.x.chunks_exact(d).map(|c| c.iter().map(|v| v * scale).collect()));
        pts.push(target.v.clone());
        HorizontalPath::new(ctx.clone(), pts)
    };
    match best(true) {
        Some(i) => {
            let o = &outcomes[i];
            Ok(DistanceEstimate {
                d_hat: o.energy.sqrt() * scale,
                constraint_residual: o.residual * scale * scale,
                starts: cfg.starts,
                k,
                best_start: i,
                pump_pair,
                path: to_path(o)?,
            })
        }
        None => {
            let i = best(false).expect("at least one start");
            let o = &outcomes[i];
            Err(Error::NotConverged {
                residual: o.residual * scale * scale,
                best_d_hat: o.energy.sqrt() * scale,
                best_path: to_path(o)?.points,
            })
        }
    }
}

/// `√(4π|z|/α)`: the circle bounding area `|z|/α`.
pub fn vertical_distance(alpha: f64, z: f64) -> f64 {
    (4.0 * std::f64::consts::PI * z.abs() / alpha).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityReport {
    pub d_hat: f64,
    pub d_inverse: f64,
    pub symmetry: CheckReport,
    /// One entry per `λ`: `d̂(δ_λ g)` against `λ·d̂(g)`.
    pub dilations: Vec<(f64, CheckReport)>,
    pub pass: bool,
}

/// Homogeneity `d(δ_λ g) = λ d(g)` and symmetry `d(g⁻¹) = d(g)`, each within 2%.
pub fn homogeneity_check(
    ctx: &GroupContext<f64>,
    g: &GroupElement<f64>,
    lambdas: &[f64],
    k: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<HomogeneityReport> {
    const TOL: f64 = 0.02;
    let base = estimate_distance(ctx, g, k, cfg, seed)?.d_hat;
    let inv = estimate_distance(ctx, &g.inverse(), k, cfg, seed)?.d_hat;
    let symmetry = CheckReport::relative(inv, base, TOL);
    let dilations = lambdas
        .iter()
        .map(|&l| {
            let dl = estimate_distance(ctx, &ctx.dilate(l, g)?, k, cfg, seed)?.d_hat;
            Ok((l, CheckReport::relative(dl, l * base, TOL)))
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = symmetry.pass && dilations.iter().all(|(_, r)| r.pass);
    Ok(HomogeneityReport { d_hat: base, d_inverse: inv, symmetry, dilations, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEquivalence {
    pub quotients: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Both bounds finite and positive.
    pub pass: bool,
}

/// Band of `d̂ / (‖v‖ + √|z|)` over a sample of points.
pub fn norm_equivalence_scan(
    ctx: &GroupContext<f64>,
    points: &[GroupElement<f64>],
    k: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<NormEquivalence> {
    let quotients = points
        .iter()
        .map(|g| {
            let h = g.v.iter().map(|c| c * c).sum::<f64>().sqrt() + g.z.abs().sqrt();
            if h == 0.0 {
                return Err(Error::input("the identity has no quotient"));
            }
            Ok(estimate_distance(ctx, g, k, cfg, seed)?.d_hat / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    let min = quotients.iter().copied().fold(f64::INFINITY, f64::min);
    let max = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = min.is_finite() && max.is_finite() && min > 0.0;
    Ok(NormEquivalence { quotients, min, max, pass })
}

//! Entropy, Dirichlet energy and log-Sobolev quotients under `μ_t^ω`.
//!
//! For `f` and a measure `μ` the quotient is
//!
//! ```text
//! Ent_μ(f²) / ∫|∇_H f|² dμ,   Ent_μ(g) = ∫g log g dμ − (∫g dμ) log ∫g dμ,
//! ```
//!
//! estimated either from a Monte Carlo batch or, for `n = 1`, from a polar
//! quadrature grid weighted by the heat kernel.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{self, ScalarField};
use crate::error::{Error, Result};
use crate::group::{GroupContext, ProductGroup};
use crate::heatkernel::{self, RadialTable};
use crate::quadrature::composite_gl;
use crate::rng;
use crate::sampler::{self, BrownianConfig, SampleBatch};
use crate::scalar::pairwise_sum;
use crate::stats;

/// Blocks of the jackknife cross-check.
pub const JACKKNIFE_BLOCKS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "MC")]
    MonteCarlo,
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Zero for quadrature estimates.
    pub std_error: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub method: Method,
    /// Quadrature tolerance; `None` for Monte Carlo.
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRecord {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub t: f64,
    pub field: String,
    pub entropy: Estimate,
    pub energy: Estimate,
    pub ratio: f64,
    pub ratio_se: f64,
}

/// Where the gradient lives.
#[derive(Clone, Debug)]
pub enum Space {
    Group(GroupContext<f64>),
    /// Product of `H¹` factors, coordinates `(x₁, y₁, z₁, …)`.
    Product(ProductGroup<f64>),
}

impl Space {
    fn dim(&self) -> usize {
        match self {
            Space::Group(c) => c.dim(),
            Space::Product(p) => 3 * p.factors().len(),
        }
    }

    fn grad_sq(&self, f: &ScalarField<f64>, x: &[f64]) -> Result<f64> {
        let g = match self {
            Space::Group(c) => calculus::horizontal_gradient(c, f, x)?,
            Space::Product(p) => calculus::product_horizontal_gradient(p, f, x)?,
        };
        Ok(g.iter().map(|v| v * v).sum())
    }

    fn describe(&self) -> (usize, Vec<f64>) {
        match self {
            Space::Group(c) => (c.n(), c.alphas().to_vec()),
            Space::Product(p) => (p.factors().len(), p.factors().iter().map(|c| c.alpha(0)).collect()),
        }
    }
}

/// An empirical or quadrature surrogate of `μ_t`.
#[derive(Clone, Debug)]
pub struct Measure {
    pub space: Space,
    pub t: f64,
    /// Flat coordinates, `dim` per point.
    coords: Vec<f64>,
    /// Normalized weights; `None` means equal weights (Monte Carlo).
    weights: Option<Vec<f64>>,
    tol: Option<f64>,
}

/// Polar grid resolution of the `n = 1` quadrature measure.
#[derive(Clone, Copy, Debug)]
pub struct QuadGrid {
    pub r_panels: usize,
    pub z_panels: usize,
    pub angles: usize,
}

impl Default for QuadGrid {
    fn default() -> Self {
        QuadGrid { r_panels: 12, z_panels: 12, angles: 48 }
    }
}

impl Measure {
    pub fn monte_carlo(ctx: &GroupContext<f64>, batch: &SampleBatch<f64>) -> Self {
        let coords = batch.endpoints.iter().flat_map(|g| g.coords()).collect();
        Measure { space: Space::Group(ctx.clone()), t: batch.t, coords, weights: None, tol: None }
    }

    /// Pairs the `i`-th endpoints of per-factor batches into product samples.
    pub fn product(product: &ProductGroup<f64>, batches: &[SampleBatch<f64>]) -> Result<Self> {
        if batches.len() != product.factors().len() || batches.is_empty() {
            return Err(Error::input("need one batch per factor"));
        }
        let n = batches[0].len();
        if batches.iter().any(|b| b.len() != n || b.t != batches[0].t) {
            return Err(Error::input("factor batches must share size and time"));
        }
        let mut coords = Vec::with_capacity(3 * n * batches.len());
        for i in 0..n {
            for b in batches {
                coords.extend(b.endpoints[i].coords());
            }
        }
        Ok(Measure { space: Space::Product(product.clone()), t: batches[0].t, coords, weights: None, tol: None })
    }

    /// Heat kernel weights on a polar grid `(r cos θ, r sin θ, z)` for `n = 1`,
    /// normalized by their total mass.
    pub fn quadrature(ctx: &GroupContext<f64>, t: f64, grid: QuadGrid) -> Result<Self> {
        if ctx.n() != 1 {
            return Err(Error::input("the quadrature measure is implemented for n = 1"));
        }
        let rmax = 12.0 * (2.0 * t).sqrt();
        let zmax = heatkernel::height_range(ctx.alpha(0), t);
        let (r, wr) = composite_gl(0.0, rmax, grid.r_panels, 10);
        let (z, wz) = composite_gl(0.0, zmax, grid.z_panels, 10);
        let table = RadialTable::new(ctx, t, &r, &z, heatkernel::DEFAULT_REL_TOL)?;
        let dtheta = 2.0 * std::f64::consts::PI / grid.angles as f64;
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (i, &ri) in r.iter().enumerate() {
            for (k, &zk) in z.iter().enumerate() {
                let w = ri * wr[i] * wz[k] * dtheta * table.values[i][k];
                if w <= 0.0 {
                    continue;
                }
                for a in 0..grid.angles {
                    let th = dtheta * a as f64;
                    let (s, c) = th.sin_cos();
                    for zz in [zk, -zk] {
                        coords.extend_from_slice(&[ri * c, ri * s, zz]);
                        weights.push(w);
                    }
                }
            }
        }
        let total = pairwise_sum(&weights);
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Measure { space: Space::Group(ctx.clone()), t, coords, weights: Some(weights), tol: Some(1e-8) })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.space.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn method(&self) -> Method {
        if self.weights.is_some() {
            Method::Quadrature
        } else {
            Method::MonteCarlo
        }
    }

    fn check(&self, f: &ScalarField<f64>) -> Result<()> {
        if f.dim() != self.space.dim() {
            return Err(Error::input(format!("field {} takes {} coordinates, measure has {}", f.name(), f.dim(), self.space.dim())));
        }
        Ok(())
    }

    fn points(&self) -> impl IndexedParallelIterator<Item = &[f64]> {
        self.coords.par_chunks_exact(self.space.dim())
    }

    /// `f²` at every point, in order.
    fn squares(&self, f: &ScalarField<f64>) -> Result<Vec<f64>> {
        self.check(f)?;
        let b: Vec<f64> = self.points().map(|x| f.value(x).powi(2)).collect();
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("f² not finite on the support of the measure ({})", f.name()), f64::NAN));
        }
        Ok(b)
    }

    /// `|∇_H f|²` at every point, in order.
    fn grad_squares(&self, f: &ScalarField<f64>) -> Result<Vec<f64>> {
        self.check(f)?;
        self.points().map(|x| self.space.grad_sq(f, x)).collect()
    }

    fn mean(&self, xs: &[f64]) -> f64 {
        match &self.weights {
            None => pairwise_sum(xs) / xs.len() as f64,
            Some(w) => {
                let t: Vec<f64> = xs.iter().zip(w).map(|(a, b)| a * b).collect();
                pairwise_sum(&t)
            }
        }
    }

    /// Standard error of the mean of `xs` (0 for quadrature).
    fn se(&self, xs: &[f64]) -> f64 {
        if self.weights.is_some() {
            0.0
        } else {
            stats::Summary::of(xs).std_error
        }
    }

    fn estimate(&self, value: f64, se: f64) -> Estimate {
        Estimate { value, std_error: se, n: self.len(), method: self.method(), tol: self.tol }
    }
}

/// Per-point entropy contributions `φ_i = b_i ln(b_i/m) − b_i + m`; their
/// mean is the plug-in entropy and their spread its delta-method SE.
fn entropy_terms(b: &[f64], m: f64) -> Vec<f64> {
    b.iter().map(|&bi| if bi > 0.0 { bi * (bi / m).ln() - bi + m } else { m }).collect()
}

fn entropy_parts(mu: &Measure, b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = mu.mean(b);
    if !(m > 0.0) {
        return Err(Error::UndefinedEntropy);
    }
    if b.iter().all(|&v| v == b[0]) {
        return Ok((0.0, vec![0.0; b.len()]));
    }
    let phi = entropy_terms(b, m);
    Ok((mu.mean(&phi), phi))
}

/// `Ent_μ(f²)`.
pub fn entropy(mu: &Measure, f: &ScalarField<f64>) -> Result<Estimate> {
    let b = mu.squares(f)?;
    let (value, phi) = entropy_parts(mu, &b)?;
    Ok(mu.estimate(value, mu.se(&phi)))
}

/// Delete-a-block jackknife of the plug-in entropy on contiguous blocks.
pub fn entropy_jackknife(mu: &Measure, f: &ScalarField<f64>, blocks: usize) -> Result<(f64, f64)> {
    if mu.method() != Method::MonteCarlo {
        return Err(Error::input("jackknife applies to Monte Carlo measures"));
    }
    let b = mu.squares(f)?;
    let n = b.len();
    if n < blocks {
        return Err(Error::input("fewer samples than jackknife blocks"));
    }
    if !b.iter().any(|&v| v > 0.0) {
        return Err(Error::UndefinedEntropy);
    }
    let bl: Vec<f64> = b.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).collect();
    // Per-block sums so each leave-one-out estimate is O(blocks).
    let mut sb = vec![0.0; blocks];
    let mut sbl = vec![0.0; blocks];
    let mut cnt = vec![0usize; blocks];
    for i in 0..n {
        let k = stats::block_of(i, n, blocks);
        sb[k] += b[i];
        sbl[k] += bl[i];
        cnt[k] += 1;
    }
    let (tb, tbl) = (pairwise_sum(&sb), pairwise_sum(&sbl));
    Ok(stats::jackknife(blocks, |skip| {
        let (s1, s2, c) = match skip {
            None => (tb, tbl, n),
            Some(k) => (tb - sb[k], tbl - sbl[k], n - cnt[k]),
        };
        let m = s1 / c as f64;
        s2 / c as f64 - m * m.ln()
    }))
}

/// `∫|∇_H f|² dμ`.
pub fn dirichlet_energy(mu: &Measure, f: &ScalarField<f64>) -> Result<Estimate> {
    let e = mu.grad_squares(f)?;
    Ok(mu.estimate(mu.mean(&e), mu.se(&e)))
}

fn record(mu: &Measure, f: &ScalarField<f64>, entropy: Estimate, energy: Estimate, ratio: f64, ratio_se: f64) -> RatioRecord {
    let (n, alphas) = mu.space.describe();
    RatioRecord { n, alphas, t: mu.t, field: f.name().to_string(), entropy, energy, ratio, ratio_se }
}

/// `Ent(f²) / E|∇_H f|²` with delta-method SE
/// from `ψ_i = (φ_i − Ent − R(e_i − E)) / E`.
pub fn lsi_ratio(mu: &Measure, f: &ScalarField<f64>) -> Result<RatioRecord> {
    let b = mu.squares(f)?;
    let e = mu.grad_squares(f)?;
    let energy = mu.mean(&e);
    if !(energy > 0.0) {
        return Err(Error::input(format!("field {} has zero Dirichlet energy", f.name())));
    }
    let (ent, phi) = entropy_parts(mu, &b)?;
    let ratio = ent / energy;
    let psi: Vec<f64> = phi.iter().zip(&e).map(|(p, ei)| (p - ent - ratio * (ei - energy)) / energy).collect();
    let entropy = mu.estimate(ent, mu.se(&phi));
    let energy_est = mu.estimate(energy, mu.se(&e));
    Ok(record(mu, f, entropy, energy_est, ratio, mu.se(&psi)))
}

/// `Var(φ) / E|∇_H φ|²`, informational.
pub fn poincare_ratio(mu: &Measure, phi: &ScalarField<f64>) -> Result<RatioRecord> {
    mu.check(phi)?;
    let v: Vec<f64> = mu.points().map(|x| phi.value(x)).collect();
    let e = mu.grad_squares(phi)?;
    let energy = mu.mean(&e);
    if !(energy > 0.0) {
        return Err(Error::input(format!("field {} has zero Dirichlet energy", phi.name())));
    }
    let mean = mu.mean(&v);
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = mu.mean(&dev);
    let ratio = var / energy;
    let psi: Vec<f64> = dev.iter().zip(&e).map(|(d, ei)| (d - var - ratio * (ei - energy)) / energy).collect();
    let a = mu.estimate(var, mu.se(&dev));
    let b = mu.estimate(energy, mu.se(&e));
    Ok(record(mu, phi, a, b, ratio, mu.se(&psi)))
}

/// Scan parameters shared by every cell.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanConfig {
    #[serde(rename = "N")]
    pub samples: usize,
    pub m: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SupRecord {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub t: f64,
    pub field: String,
    pub sup_ratio: f64,
    pub sup_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanFailure {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub t: f64,
    pub field: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub pass: bool,
    /// Largest violation in units of the allowed band (≤ 1 passes).
    pub worst: f64,
    pub detail: String,
}

impl Assertion {
    fn from_scores(scores: impl IntoIterator<Item = (f64, String)>) -> Self {
        let mut worst = 0.0f64;
        let mut detail = String::new();
        for (s, d) in scores {
            if s > worst || !s.is_finite() {
                worst = s;
                detail = d;
            }
        }
        Assertion { pass: worst <= 1.0, worst, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub records: Vec<RatioRecord>,
    pub sups: Vec<SupRecord>,
    pub failures: Vec<ScanFailure>,
    /// (a) sup ratio at t bounded by the t = 1 sup times t.
    pub time_scaling: Option<Assertion>,
    /// (b) sups over `(x₁, y₁, z)` fields agree across contexts.
    pub dimension_free: Assertion,
    /// (c) `exp(λx₁/2)` has ratio `2t`.
    pub exponential_law: Assertion,
    /// ratio/t constant in t per field and context, over the fields for
    /// which this is an identity (see [`dilation_covariant`]).
    pub t_linearity: Assertion,
    pub config: ScanConfig,
}

impl ScanResult {
    pub fn pass(&self) -> bool {
        self.time_scaling.as_ref().is_none_or(|a| a.pass)
            && self.dimension_free.pass
            && self.exponential_law.pass
            && self.t_linearity.pass
            && self.failures.is_empty()
    }

    /// `n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se`,
    /// alphas joined by `;`.
    pub fn to_csv(&self) -> String {
        let f = crate::io::fmt;
        let mut s = String::from("n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se\n");
        for r in &self.records {
            let alphas: Vec<String> = r.alphas.iter().map(|a| f(*a)).collect();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                alphas.join(";"),
                f(r.t),
                r.field,
                f(r.entropy.value),
                f(r.entropy.std_error),
                f(r.energy.value),
                f(r.energy.std_error),
                f(r.ratio),
                f(r.ratio_se)
            ));
        }
        s
    }
}

/// Whether a catalog field depends only on `(x₁, y₁, z)`.
pub fn depends_on_first_pair(spec: &str) -> bool {
    let Some((kind, arg)) = spec.split_once(':') else { return false };
    match kind {
        "const" | "exp_x1" | "linear_z" => true,
        "coord" => matches!(arg.trim(), "x1" | "y1" | "z"),
        "poly" => arg.split('*').all(|f| {
            let v = f.split('^').next().unwrap_or("").trim();
            v.parse::<f64>().is_ok() || matches!(v, "x1" | "y1" | "z")
        }),
        _ => false,
    }
}

/// Fields whose ratio satisfies `ratio_t(f) = t·ratio_1(f)` exactly:
/// coordinates and monomials (homogeneous, so `f∘δ_λ` is a multiple of `f`)
/// and the exponential family (ratio `2t` for every `λ`). Fields with a
/// built-in length scale such as `1 + εz` or `bump:r` are excluded.
pub fn dilation_covariant(spec: &str) -> bool {
    matches!(spec.split_once(':'), Some(("coord" | "poly" | "exp_x1", _)))
}

fn exp_lambda(spec: &str) -> Option<f64> {
    spec.strip_prefix("exp_x1:")?.trim().parse().ok()
}

fn cell_key(alphas: &[f64]) -> Vec<u64> {
    alphas.iter().map(|a| a.to_bits()).collect()
}

/// Ratios of every catalog field on every `(ctx, t)` cell, each cell from
/// its own Monte Carlo batch.
pub fn lsi_scan(fields: &[String], ctxs: &[GroupContext<f64>], ts: &[f64], cfg: ScanConfig) -> Result<ScanResult> {
    if fields.is_empty() || ctxs.is_empty() || ts.is_empty() {
        return Err(Error::input("scan needs fields, contexts and times"));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut sups = Vec::new();
    for (ci, ctx) in ctxs.iter().enumerate() {
        for (ti, &t) in ts.iter().enumerate() {
            let seed = rng::derive_seed(cfg.seed, (ci * ts.len() + ti) as u64);
            let bc = BrownianConfig::new(ctx.clone(), t, cfg.m, cfg.samples, seed)?;
            let mu = Measure::monte_carlo(ctx, &sampler::sample_measure(&bc));
            let mut cell: Vec<RatioRecord> = Vec::new();
            for spec in fields {
                let outcome = calculus::catalog::<f64>(spec, ctx.n()).and_then(|f| lsi_ratio(&mu, &f));
                match outcome {
                    Ok(r) => cell.push(r),
                    Err(e) => failures.push(ScanFailure {
                        n: ctx.n(),
                        alphas: ctx.alphas().to_vec(),
                        t,
                        field: spec.clone(),
                        error: e.to_string(),
                    }),
                }
            }
            // Sup over the (x₁, y₁, z) family; ties keep the first field.
            let best = cell
                .iter()
                .filter(|r| depends_on_first_pair(&r.field))
                .fold(None::<&RatioRecord>, |acc, r| match acc {
                    Some(a) if a.ratio >= r.ratio => Some(a),
                    _ => Some(r),
                });
            if let Some(b) = best {
                sups.push(SupRecord {
                    n: ctx.n(),
                    alphas: ctx.alphas().to_vec(),
                    t,
                    field: b.field.clone(),
                    sup_ratio: b.ratio,
                    sup_se: b.ratio_se,
                });
            }
            records.extend(cell);
        }
    }

    let time_scaling = if ts.contains(&1.0) {
        let unit: BTreeMap<Vec<u64>, &SupRecord> =
            sups.iter().filter(|s| s.t == 1.0).map(|s| (cell_key(&s.alphas), s)).collect();
        Some(Assertion::from_scores(sups.iter().filter_map(|s| {
            let u = unit.get(&cell_key(&s.alphas))?;
            let rel = ((s.sup_se / s.sup_ratio).powi(2) + (u.sup_se / u.sup_ratio).powi(2)).sqrt();
            let bound = u.sup_ratio * s.t * (1.0 + 4.0 * rel);
            Some((s.sup_ratio / bound, format!("alphas {:?}, t = {}", s.alphas, s.t)))
        })))
    } else {
        None
    };

    let dimension_free = Assertion::from_scores(ts.iter().flat_map(|&t| {
        let at: Vec<&SupRecord> = sups.iter().filter(|s| s.t == t).collect();
        let mut out = Vec::new();
        for i in 0..at.len() {
            for j in i + 1..at.len() {
                let band = 4.0 * (at[i].sup_se.powi(2) + at[j].sup_se.powi(2)).sqrt();
                out.push((
                    (at[i].sup_ratio - at[j].sup_ratio).abs() / band,
                    format!("t = {t}: alphas {:?} vs {:?}", at[i].alphas, at[j].alphas),
                ));
            }
        }
        out
    }));

    let exponential_law = Assertion::from_scores(records.iter().filter(|r| exp_lambda(&r.field).is_some()).map(|r| {
        ((r.ratio - 2.0 * r.t).abs() / (3.0 * r.ratio_se), format!("{} alphas {:?} t = {}", r.field, r.alphas, r.t))
    }));

    let t_linearity = {
        let mut groups: BTreeMap<(String, Vec<u64>), Vec<&RatioRecord>> = BTreeMap::new();
        for r in records.iter().filter(|r| dilation_covariant(&r.field)) {
            groups.entry((r.field.clone(), cell_key(&r.alphas))).or_default().push(r);
        }
        Assertion::from_scores(groups.into_values().flat_map(|g| {
            let base = g[0];
            g.into_iter().skip(1).map(move |r| {
                let band = 4.0 * ((r.ratio_se / r.t).powi(2) + (base.ratio_se / base.t).powi(2)).sqrt();
                (
                    (r.ratio / r.t - base.ratio / base.t).abs() / band,
                    format!("{} alphas {:?}: t = {} vs t = {}", r.field, r.alphas, r.t, base.t),
                )
            })
        }))
    };

    Ok(ScanResult { records, sups, failures, time_scaling, dimension_free, exponential_law, t_linearity, config: cfg })
}

#[derive(Clone, Debug, Serialize)]
pub struct Additivity {
    pub lhs: f64,
    pub rhs: f64,
    pub difference: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorReport {
    pub entropy: Additivity,
    pub energy: Additivity,
    pub product_ratio: f64,
    pub product_ratio_se: f64,
    pub factor_ratios: [Option<f64>; 2],
    /// product ratio ≤ max factor ratio + 3 SE.
    pub ratio_bound: bool,
    pub pass: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// Entropy and energy additivity for `f ⊗ h` on `H¹_{α} × H¹_{α'}`,
/// estimated on paired samples with a 20-block jackknife for the difference.
#[allow(clippy::too_many_arguments)]
pub fn tensorization_check(
    first: &GroupContext<f64>,
    second: &GroupContext<f64>,
    t: f64,
    f: &ScalarField<f64>,
    h: &ScalarField<f64>,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Result<TensorReport> {
    if first.n() != 1 || second.n() != 1 {
        return Err(Error::input("tensorization check takes two H¹ factors"));
    }
    if f.dim() != 3 || h.dim() != 3 {
        return Err(Error::input("product field factors must each depend on one H¹ factor only"));
    }
    if samples < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::input("too few samples for the jackknife"));
    }
    let b1 = sampler::sample_measure(&BrownianConfig::new(first.clone(), t, steps, samples, rng::derive_seed(seed, 0))?);
    let b2 = sampler::sample_measure(&BrownianConfig::new(second.clone(), t, steps, samples, rng::derive_seed(seed, 1))?);
    let mu1 = Measure::monte_carlo(first, &b1);
    let mu2 = Measure::monte_carlo(second, &b2);
    let (f2, h2) = (mu1.squares(f)?, mu2.squares(h)?);
    let (gf, gh) = (mu1.grad_squares(f)?, mu2.grad_squares(h)?);
    let product = ProductGroup::new(vec![first.clone(), second.clone()])?;
    let pm = Measure::product(&product, &[b1, b2])?;
    let (fc, hc) = (f.clone(), h.clone());
    let (fd, hd) = (f.clone(), h.clone());
    let fh = ScalarField::new(format!("{}⊗{}", f.name(), h.name()), 6, move |x| fc.value(&x[..3]) * hc.value(&x[3..]))
        .with_partials(move |x| {
            let (a, b) = (&x[..3], &x[3..]);
            let (fa, hb) = (fd.value(a), hd.value(b));
            let mut d: Vec<f64> = fd.partials(a).expect("partials").iter().map(|v| v * hb).collect();
            d.extend(hd.partials(b).expect("partials").iter().map(|v| v * fa));
            d
        });
    let prod_ratio = lsi_ratio(&pm, &fh)?;

    let n = samples;
    let idx = |skip: Option<usize>| -> Vec<usize> {
        (0..n).filter(|&i| skip != Some(stats::block_of(i, n, JACKKNIFE_BLOCKS))).collect()
    };
    let mean = |xs: &[f64], ix: &[usize]| -> f64 { pairwise_sum(&ix.iter().map(|&i| xs[i]).collect::<Vec<_>>()) / ix.len() as f64 };
    let ent = |xs: &[f64], ix: &[usize]| -> f64 {
        let m = mean(xs, ix);
        let t: Vec<f64> = ix.iter().map(|&i| if xs[i] > 0.0 { xs[i] * xs[i].ln() } else { 0.0 }).collect();
        pairwise_sum(&t) / ix.len() as f64 - m * m.ln()
    };
    let joint: Vec<f64> = f2.iter().zip(&h2).map(|(a, b)| a * b).collect();
    let joint_grad: Vec<f64> = (0..n).map(|i| h2[i] * gf[i] + f2[i] * gh[i]).collect();
    let ent_sides = |ix: &[usize]| (ent(&joint, ix), mean(&h2, ix) * ent(&f2, ix) + mean(&f2, ix) * ent(&h2, ix));
    let en_sides = |ix: &[usize]| (mean(&joint_grad, ix), mean(&h2, ix) * mean(&gf, ix) + mean(&f2, ix) * mean(&gh, ix));
    let additivity = |sides: &dyn Fn(&[usize]) -> (f64, f64)| -> Additivity {
        let (lhs, rhs) = sides(&idx(None));
        let (difference, std_error) = stats::jackknife(JACKKNIFE_BLOCKS, |skip| {
            let (a, b) = sides(&idx(skip));
            a - b
        });
        // Identical sides (a degenerate factor) give zero spread.
        let pass = difference.abs() <= 3.0 * std_error || difference.abs() <= 1e-12 * lhs.abs().max(1e-300);
        Additivity { lhs, rhs, difference, std_error, pass }
    };
    let entropy = additivity(&ent_sides);
    let energy = additivity(&en_sides);
    let factor_ratios = [lsi_ratio(&mu1, f).ok().map(|r| r.ratio), lsi_ratio(&mu2, h).ok().map(|r| r.ratio)];
    let max_factor = factor_ratios.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratio_bound = prod_ratio.ratio <= max_factor + 3.0 * prod_ratio.ratio_se;
    let pass = entropy.pass && energy.pass && ratio_bound;
    Ok(TensorReport {
        entropy,
        energy,
        product_ratio: prod_ratio.ratio,
        product_ratio_se: prod_ratio.ratio_se,
        factor_ratios,
        ratio_bound,
        pass,
        n: samples,
        m: steps,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(spec: &str, n: usize) -> ScalarField<f64> {
        calculus::catalog(spec, n).unwrap()
    }

    fn mc(alphas: Vec<f64>, t: f64, samples: usize, m: usize, seed: u64) -> Measure {
        let ctx = GroupContext::new(alphas).unwrap();
        let b = sampler::sample_measure(&BrownianConfig::new(ctx.clone(), t, m, samples, seed).unwrap());
        Measure::monte_carlo(&ctx, &b)
    }

    #[test]
    fn constant_field() {
        let mu = mc(vec![1.0], 1.0, 500, 10, 1);
        let c = field("const:3", 1);
        let e = entropy(&mu, &c).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(dirichlet_energy(&mu, &c).unwrap().value, 0.0);
        assert!(matches!(lsi_ratio(&mu, &c), Err(Error::Input(_))));
        assert!(matches!(entropy(&mu, &field("const:0", 1)), Err(Error::UndefinedEntropy)));
    }

    #[test]
    fn exponential_field_small_batch() {
        let mu = mc(vec![1.0], 1.0, 20_000, 20, 2);
        let f = field("exp_x1:1", 1);
        let ent = entropy(&mu, &f).unwrap();
        let expect = 0.5 * 0.5f64.exp();
        assert!((ent.value - expect).abs() < 4.0 * ent.std_error, "{ent:?}");
        let en = dirichlet_energy(&mu, &f).unwrap();
        assert!((en.value - 0.25 * 0.5f64.exp()).abs() < 4.0 * en.std_error);
        let r = lsi_ratio(&mu, &f).unwrap();
        assert!((r.ratio - 2.0).abs() < 4.0 * r.ratio_se, "{r:?}");
        let (jv, jse) = entropy_jackknife(&mu, &f, JACKKNIFE_BLOCKS).unwrap();
        assert!((jv - ent.value).abs() < 1e-12);
        assert!(jse > 0.3 * ent.std_error && jse < 3.0 * ent.std_error);
    }

    #[test]
    fn quadrature_measure_exponential_field() {
        let ctx = GroupContext::new(vec![1.0]).unwrap();
        let mu = Measure::quadrature(&ctx, 1.0, QuadGrid::default()).unwrap();
        let f = field("exp_x1:1", 1);
        let e = entropy(&mu, &f).unwrap();
        assert_eq!(e.method, Method::Quadrature);
        assert!((e.value - 0.5 * 0.5f64.exp()).abs() < 1e-8, "{e:?}");
        let r = lsi_ratio(&mu, &f).unwrap();
        assert!((r.ratio - 2.0).abs() < 1e-8);
        assert_eq!(r.ratio_se, 0.0);
        // φ = z: Var/E = t/2
        let p = poincare_ratio(&mu, &field("coord:z", 1)).unwrap();
        assert!((p.ratio - 0.5).abs() < 1e-8, "{p:?}");
    }

    #[test]
    fn first_pair_family() {
        assert!(depends_on_first_pair("exp_x1:2"));
        assert!(depends_on_first_pair("poly:2*x1^2*z"));
        assert!(!depends_on_first_pair("poly:x2*z"));
        assert!(!depends_on_first_pair("coord:y3"));
        assert!(!depends_on_first_pair("bump:1"));
    }

    #[test]
    fn small_scan_shape() {
        let ctxs = vec![GroupContext::new(vec![1.0]).unwrap(), GroupContext::new(vec![1.0, 2.0]).unwrap()];
        let fields = vec!["exp_x1:1".to_string(), "linear_z:0.05".to_string(), "const:1".to_string()];
        let r = lsi_scan(&fields, &ctxs, &[1.0, 2.0], ScanConfig { samples: 4000, m: 20, seed: 3 }).unwrap();
        assert_eq!(r.records.len(), 2 * 2 * 2);
        assert_eq!(r.failures.len(), 4);
        assert_eq!(r.sups.len(), 4);
        let csv = r.to_csv();
        assert!(csv.starts_with("n,alphas,t,field,entropy"));
        assert!(csv.contains(",1;2,"));
    }
}

//! Hypoelliptic Brownian motion `g_t = (B_t, ½∫ω(B_s, dB_s))`.
//!
//! The horizontal part is a sum of Gaussian increments, so it is exact. The
//! Lévy area is accumulated with the midpoint rule, which for this
//! antisymmetric integrand coincides with the left-point sum and has `O(1/m)`
//! moment bias.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{self, GroupContext, GroupElement, ProductGroup};
use crate::heatkernel;
use crate::io::{self, TestRecord};
use crate::quadrature::composite_gl;
use crate::rng;
use crate::scalar::Real;
use crate::stats::{self, Summary};

/// Upper bound on `Σα_j²` accepted by the projection cascade.
pub const HS_GUARD: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct BrownianConfig<T> {
    pub ctx: GroupContext<T>,
    pub t: T,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl<T: Real> BrownianConfig<T> {
    pub fn new(ctx: GroupContext<T>, t: T, steps: usize, batch: usize, seed: u64) -> Result<Self> {
        if !(t > T::zero() && t.is_finite()) {
            return Err(Error::input(format!("time must be positive, got {t}")));
        }
        if steps < 2 {
            return Err(Error::input(format!("need at least 2 steps, got {steps}")));
        }
        if batch < 1 {
            return Err(Error::input("batch must be nonempty"));
        }
        Ok(BrownianConfig { ctx, t, steps, batch, seed })
    }
}

/// Where a batch came from: stream `i` of `seed` produced endpoint `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub steps: usize,
    pub seed: u64,
    pub streams: std::ops::Range<u64>,
}

#[derive(Clone, Debug)]
pub struct SampleBatch<T> {
    pub endpoints: Vec<GroupElement<T>>,
    pub t: T,
    pub provenance: Provenance,
}

impl<T: Real> SampleBatch<T> {
    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    /// Flat coordinate `k` (`2n` is the vertical one) of every endpoint, as `f64`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.endpoints.iter().map(|g| if k < g.v.len() { g.v[k] } else { g.z }.as_f64()).collect()
    }
}

impl SampleBatch<f64> {
    pub fn to_csv(&self) -> String {
        let n = self.endpoints.first().map_or(0, |g| g.v.len() / 2);
        io::elements_to_csv(n, &self.endpoints)
    }
}

/// Endpoint of sample `index`; deterministic in `(cfg, index)`.
pub fn sample_endpoint<T: Real>(cfg: &BrownianConfig<T>, index: u64) -> GroupElement<T> {
    let mut rng = rng::stream(cfg.seed, index);
    let alphas = cfg.ctx.alphas();
    let sd = (cfg.t / T::from_count(cfg.steps)).sqrt();
    let half = T::lit(0.5);
    let mut v = vec![T::zero(); 2 * alphas.len()];
    // Per-pair area, summed at the end so small α are not swamped.
    let mut area = vec![T::zero(); alphas.len()];
    for _ in 0..cfg.steps {
        for (i, a) in area.iter_mut().enumerate() {
            let dx = sd * T::lit(StandardNormal.sample(&mut rng));
            let dy = sd * T::lit(StandardNormal.sample(&mut rng));
            let (x, y) = (v[2 * i], v[2 * i + 1]);
            let (mx, my) = (x + half * dx, y + half * dy);
            *a = *a + (mx * dy - my * dx);
            v[2 * i] = x + dx;
            v[2 * i + 1] = y + dy;
        }
    }
    let z = alphas.iter().zip(&area).map(|(&al, &a)| half * al * a).sum();
    GroupElement { v, z }
}

/// `N` endpoints in index order; identical for any number of workers.
pub fn sample_measure<T: Real>(cfg: &BrownianConfig<T>) -> SampleBatch<T> {
    let n = cfg.batch as u64;
    let endpoints = (0..n).into_par_iter().map(|i| sample_endpoint(cfg, i)).collect();
    SampleBatch { endpoints, t: cfg.t, provenance: Provenance { steps: cfg.steps, seed: cfg.seed, streams: 0..n } }
}

/// `Var(z_t) = t²Σα_i²/4`.
pub fn levy_variance(ctx: &GroupContext<f64>, t: f64) -> f64 {
    t * t * ctx.alpha_sq_sum() / 4.0
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub mean_z: f64,
    pub mean_z_se: f64,
    pub var_z: f64,
    pub var_z_se: f64,
    pub target: f64,
    /// Largest `|v_k|` variance deviation from `t`, in standard errors.
    pub v_var_z_score: f64,
    pub pass: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// Mean and variance of the Lévy area (3 SE) and horizontal variances (4 SE).
pub fn moment_check(cfg: &BrownianConfig<f64>) -> Result<MomentReport> {
    if cfg.batch < 2 {
        return Err(Error::input("moment check needs at least two samples"));
    }
    let batch = sample_measure(cfg);
    Ok(moment_report(cfg, &batch))
}

pub fn moment_report(cfg: &BrownianConfig<f64>, batch: &SampleBatch<f64>) -> MomentReport {
    let n2 = 2 * cfg.ctx.n();
    let z = batch.column(n2);
    let zs = Summary::of(&z);
    let sq: Vec<f64> = z.iter().map(|x| x * x).collect();
    let var = Summary::of(&sq);
    let target = levy_variance(&cfg.ctx, cfg.t);
    let v_var_z_score = (0..n2)
        .map(|k| {
            let c: Vec<f64> = batch.column(k).iter().map(|x| x * x).collect();
            Summary::of(&c).z_score(cfg.t)
        })
        .fold(0.0, f64::max);
    let pass = zs.z_score(0.0) <= 3.0 && var.z_score(target) <= 3.0 && v_var_z_score <= 4.0;
    MomentReport {
        mean_z: zs.mean,
        mean_z_se: zs.std_error,
        var_z: var.mean,
        var_z_se: var.std_error,
        target,
        v_var_z_score,
        pass,
        n: cfg.batch,
        m: cfg.steps,
        seed: cfg.seed,
    }
}

/// A group of KS tests; passes when every member does.
#[derive(Clone, Debug, Serialize)]
pub struct KsReport {
    pub tests: Vec<TestRecord>,
    pub pass: bool,
}

impl KsReport {
    fn new(tests: Vec<TestRecord>) -> Self {
        let pass = tests.iter().all(|r| r.pass);
        KsReport { tests, pass }
    }

    pub fn max_statistic(&self) -> f64 {
        self.tests.iter().map(|r| r.statistic).fold(0.0, f64::max)
    }
}

fn coord_name(n: usize, k: usize) -> String {
    if k == 2 * n {
        "z".into()
    } else {
        format!("{}{}", if k % 2 == 0 { 'x' } else { 'y' }, k / 2 + 1)
    }
}

/// Tabulated CDF of the vertical marginal with cubic Hermite interpolation.
#[derive(Clone, Debug)]
pub struct MarginalCdf {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl MarginalCdf {
    /// Vertical marginal of `p_t` for `n = 1` on `[0, Z]`, obtained by
    /// integrating the kernel over `v` on a polar grid, then made symmetric
    /// and normalized by its total mass.
    pub fn vertical(ctx: &GroupContext<f64>, t: f64, panels: usize) -> Result<Self> {
        let zmax = heatkernel::height_range(ctx.alpha(0), t);
        let h = zmax / panels as f64;
        let knots_pos: Vec<f64> = (0..=panels).map(|k| k as f64 * h).collect();
        let (gz, gw) = composite_gl(0.0, zmax, panels, 4);
        let mut heights = knots_pos.clone();
        heights.extend_from_slice(&gz);
        let dens = heatkernel::vertical_marginal(ctx, t, &heights)?;
        let (at_knots, at_nodes) = dens.split_at(knots_pos.len());
        // Cumulative mass on [0, z_k].
        let mut cum = vec![0.0; panels + 1];
        for k in 0..panels {
            let seg: f64 = (0..4).map(|q| gw[4 * k + q] * at_nodes[4 * k + q]).sum();
            cum[k + 1] = cum[k] + seg;
        }
        let half = cum[panels];
        if !(half > 0.0) {
            return Err(Error::numeric("vertical marginal has no mass", half));
        }
        let mut knots = Vec::with_capacity(2 * panels + 1);
        let mut cdf = Vec::with_capacity(2 * panels + 1);
        let mut pdf = Vec::with_capacity(2 * panels + 1);
        for k in (1..=panels).rev() {
            knots.push(-knots_pos[k]);
            cdf.push(0.5 * (half - cum[k]) / half);
            pdf.push(0.5 * at_knots[k] / half);
        }
        for k in 0..=panels {
            knots.push(knots_pos[k]);
            cdf.push(0.5 + 0.5 * cum[k] / half);
            pdf.push(0.5 * at_knots[k] / half);
        }
        Ok(MarginalCdf { knots, cdf, pdf })
    }

    pub fn eval(&self, z: f64) -> f64 {
        let last = self.knots.len() - 1;
        if z <= self.knots[0] {
            return 0.0;
        }
        if z >= self.knots[last] {
            return 1.0;
        }
        let k = self.knots.partition_point(|&x| x <= z) - 1;
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let h = x1 - x0;
        let s = (z - x0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * self.cdf[k] + h10 * h * self.pdf[k] + h01 * self.cdf[k + 1] + h11 * h * self.pdf[k + 1]).clamp(0.0, 1.0)
    }
}

/// One-sample KS of an `n = 1` batch against the quadrature law: the
/// vertical marginal and each horizontal coordinate against `N(0, t)`.
pub fn mc_vs_quadrature(cfg: &BrownianConfig<f64>, bins: usize) -> Result<KsReport> {
    if cfg.ctx.n() != 1 {
        return Err(Error::input("mc_vs_quadrature is defined for n = 1"));
    }
    if bins < 8 {
        return Err(Error::input("need at least 8 bins for the marginal table"));
    }
    let batch = sample_measure(cfg);
    let marginal = MarginalCdf::vertical(&cfg.ctx, cfg.t, bins)?;
    let base = stats::one_sample_threshold(cfg.batch);
    let mut tests = Vec::new();
    let record = |name: String, statistic: f64, threshold: f64| TestRecord {
        name,
        statistic,
        threshold,
        pass: statistic < threshold,
        n: cfg.batch,
        m: cfg.steps,
        seed: cfg.seed,
    };
    let dz = stats::ks_one_sample(&batch.column(2), |z| marginal.eval(z));
    tests.push(record("z".into(), dz, base + stats::DISCRETIZATION_ALLOWANCE));
    let sd = cfg.t.sqrt();
    for k in 0..2 {
        let d = stats::ks_one_sample(&batch.column(k), |x| stats::normal_cdf(x / sd));
        tests.push(record(coord_name(1, k), d, base));
    }
    Ok(KsReport::new(tests))
}

fn two_sample_tests(name: &str, n: usize, a: &SampleBatch<f64>, b: &SampleBatch<f64>, m: usize, seed: u64) -> Vec<TestRecord> {
    let threshold = stats::two_sample_threshold(a.len(), b.len());
    (0..=2 * n)
        .map(|k| {
            let statistic = stats::ks_two_sample(&a.column(k), &b.column(k));
            TestRecord {
                name: format!("{name}:{}", coord_name(n, k)),
                statistic,
                threshold,
                pass: statistic < threshold,
                n: a.len(),
                m,
                seed,
            }
        })
        .collect()
}

/// `F_# μ_t^{ω₀}` (pushed with `alpha_map`) against a direct batch on
/// `H¹` with `alpha_target`. The check proper uses equal parameters; unequal
/// ones are the negative control.
pub fn pushforward_f_compare(
    alpha_map: f64,
    alpha_target: f64,
    t: f64,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Result<KsReport> {
    let iso = BrownianConfig::new(GroupContext::isotropic(1)?, t, steps, samples, rng::derive_seed(seed, 0))?;
    let direct = BrownianConfig::new(GroupContext::new(vec![alpha_target])?, t, steps, samples, rng::derive_seed(seed, 1))?;
    let pushed = sample_measure(&iso);
    let endpoints =
        pushed.endpoints.iter().map(|g| group::map_f(alpha_map, g)).collect::<Result<Vec<_>>>()?;
    let pushed = SampleBatch { endpoints, ..pushed };
    let direct = sample_measure(&direct);
    Ok(KsReport::new(two_sample_tests("F", 1, &pushed, &direct, steps, seed)))
}

pub fn pushforward_f_check(alpha: f64, t: f64, samples: usize, steps: usize, seed: u64) -> Result<KsReport> {
    pushforward_f_compare(alpha, alpha, t, samples, steps, seed)
}

/// Which lifting map to push the product measure through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lift {
    /// `π` from `Π H¹_{α_i}`.
    Pi,
    /// `π_ω` from `n` isotropic copies of `H¹`.
    PiOmega,
}

/// Pushforward of the product heat kernel measure by `π` or `π_ω`, compared
/// with a direct batch on `H^n_ω`.
pub fn pushforward_pi_check(
    ctx: &GroupContext<f64>,
    lift: Lift,
    t: f64,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Result<KsReport> {
    let factors = match lift {
        Lift::Pi => ProductGroup::factors_of(ctx),
        Lift::PiOmega => ProductGroup::isotropic(ctx.n()),
    };
    let batches = factors
        .factors()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cfg = BrownianConfig::new(f.clone(), t, steps, samples, rng::derive_seed(seed, 10 + i as u64))?;
            Ok(sample_measure(&cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let endpoints = (0..samples)
        .map(|s| {
            let gs: Vec<GroupElement<f64>> = batches.iter().map(|b| b.endpoints[s].clone()).collect();
            match lift {
                Lift::Pi => group::project_pi(ctx, &factors, &gs),
                Lift::PiOmega => group::project_pi_omega(ctx, &gs),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let lifted = SampleBatch { endpoints, t, provenance: batches[0].provenance.clone() };
    let direct = sample_measure(&BrownianConfig::new(ctx.clone(), t, steps, samples, rng::derive_seed(seed, 1))?);
    let name = match lift {
        Lift::Pi => "pi",
        Lift::PiOmega => "pi_omega",
    };
    Ok(KsReport::new(two_sample_tests(name, ctx.n(), &lifted, &direct, steps, seed)))
}

/// `α_j = 2^{−j}` for `j = 1..=n`.
pub fn dyadic_alphas(n: usize) -> Vec<f64> {
    (1..=n).map(|j| 0.5f64.powi(j as i32)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeRow {
    pub n: usize,
    pub gap: f64,
    pub gap_se: f64,
    /// `Σ_{j>n} α_j²`.
    pub tail_hs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeTable {
    pub rows: Vec<CascadeRow>,
    /// Gaps strictly decrease in `n`.
    pub monotone: bool,
    #[serde(rename = "N")]
    pub samples: usize,
    pub m: usize,
    pub seed: u64,
}

impl CascadeTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,gap,gap_se,tail_hs\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.n, io::fmt(r.gap), io::fmt(r.gap_se), io::fmt(r.tail_hs)));
        }
        s
    }
}

/// `E[sup_τ ‖g^{P_n}_τ − g^{P_N}_τ‖]` for `n = 1..=N` on one shared driver.
///
/// The horizontal norm is the `α`-weighted one, `‖w‖² = Σ α_j²(x_j² + y_j²)`,
/// a finite-rank stand-in for the Wiener-space norm under which the driver
/// has finite variance. Coordinates of `g^{P_n}` and `g^{P_N}` agree on the
/// first `n` pairs, so the gap only involves the tail pairs; its sup is
/// streamed step by step, no path is stored.
pub fn projection_cascade(alphas: &[f64], t: f64, samples: usize, steps: usize, seed: u64) -> Result<CascadeTable> {
    let nmax = alphas.len();
    if nmax == 0 || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::input("cascade parameters must be positive and finite"));
    }
    let hs: f64 = alphas.iter().map(|a| a * a).sum();
    if hs > HS_GUARD {
        return Err(Error::input(format!("Σα_j² = {hs} exceeds the finite Hilbert–Schmidt guard")));
    }
    if samples < 2 || steps < 2 {
        return Err(Error::input("cascade needs at least two samples and two steps"));
    }
    let sd = (t / steps as f64).sqrt();
    let sups: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = rng::stream(seed, index);
            let mut v = vec![0.0f64; 2 * nmax];
            let mut area = vec![0.0f64; nmax];
            let mut sup = vec![0.0f64; nmax];
            for _ in 0..steps {
                for j in 0..nmax {
                    let dx: f64 = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    let dy: f64 = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    let (x, y) = (v[2 * j], v[2 * j + 1]);
                    area[j] += 0.5 * alphas[j] * ((x + 0.5 * dx) * dy - (y + 0.5 * dy) * dx);
                    v[2 * j] = x + dx;
                    v[2 * j + 1] = y + dy;
                }
                let (mut w2, mut c) = (0.0, 0.0);
                for n in (0..nmax).rev() {
                    // sup[n] tracks the gap of P_{n+1}.
                    let gap = (w2 + f64::abs(c)).sqrt();
                    if gap > sup[n] {
                        sup[n] = gap;
                    }
                    let a2 = alphas[n] * alphas[n];
                    w2 += a2 * (v[2 * n] * v[2 * n] + v[2 * n + 1] * v[2 * n + 1]);
                    c += area[n];
                }
            }
            sup
        })
        .collect();
    let rows: Vec<CascadeRow> = (0..nmax)
        .map(|n| {
            let col: Vec<f64> = sups.iter().map(|s| s[n]).collect();
            let s = Summary::of(&col);
            CascadeRow { n: n + 1, gap: s.mean, gap_se: s.std_error, tail_hs: alphas[n + 1..].iter().map(|a| a * a).sum() }
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].gap < w[0].gap || w[0].gap == 0.0);
    Ok(CascadeTable { rows, monotone, samples, m: steps, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alphas: Vec<f64>, t: f64, steps: usize, batch: usize, seed: u64) -> BrownianConfig<f64> {
        BrownianConfig::new(GroupContext::new(alphas).unwrap(), t, steps, batch, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        let ctx = GroupContext::isotropic(1).unwrap();
        assert!(BrownianConfig::new(ctx.clone(), 0.0, 10, 10, 1).is_err());
        assert!(BrownianConfig::new(ctx.clone(), 1.0, 1, 10, 1).is_err());
        assert!(BrownianConfig::new(ctx, 1.0, 2, 0, 1).is_err());
    }

    #[test]
    fn endpoints_are_deterministic() {
        let c = cfg(vec![1.0, 2.0], 1.0, 50, 4, 9);
        assert_eq!(sample_endpoint(&c, 3), sample_endpoint(&c, 3));
        assert_ne!(sample_endpoint(&c, 3), sample_endpoint(&c, 2));
        let b = sample_measure(&c);
        assert_eq!(b.endpoints[3], sample_endpoint(&c, 3));
        assert_eq!(b.provenance.streams, 0..4);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let c = cfg(vec![1.0, 3.0], 0.7, 64, 300, 5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sample_measure(&c));
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| sample_measure(&c));
        assert_eq!(one.to_csv(), three.to_csv());
    }

    #[test]
    fn midpoint_area_for_a_fixed_path() {
        // Two steps (1,0) then (0,1): ½α·(x̄Δy − ȳΔx) = ½α·1.
        let (mut x, mut y, mut a) = (0.0f64, 0.0f64, 0.0f64);
        for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
            a += (x + 0.5 * dx) * dy - (y + 0.5 * dy) * dx;
            x += dx;
            y += dy;
        }
        assert_eq!(0.5 * 2.0 * a, 1.0);
    }

    #[test]
    fn small_batch_moments() {
        let c = cfg(vec![1.0], 1.0, 200, 20_000, 11);
        let r = moment_check(&c).unwrap();
        // discretized law: Var = (t²α²/4)(1 − 1/m)
        assert!(((r.var_z - 0.25 * (1.0 - 1.0 / 200.0)) / r.var_z_se).abs() < 3.0, "{r:?}");
        assert!(r.mean_z.abs() < 3.0 * r.mean_z_se);
        assert!(r.v_var_z_score < 4.0);
    }

    #[test]
    fn dilation_in_law() {
        // endpoints at λ²t against δ_λ(endpoints at t)
        let lambda: f64 = 1.5;
        let a = sample_measure(&cfg(vec![1.0], lambda * lambda, 100, 20_000, 3));
        let ctx = GroupContext::isotropic(1).unwrap();
        let b = sample_measure(&cfg(vec![1.0], 1.0, 100, 20_000, 4));
        let endpoints = b.endpoints.iter().map(|g| ctx.dilate(lambda, g).unwrap()).collect();
        let b = SampleBatch { endpoints, ..b };
        for r in two_sample_tests("dilation", 1, &a, &b, 100, 0) {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn hermite_cdf_of_marginal() {
        let ctx = GroupContext::isotropic(1).unwrap();
        let m = MarginalCdf::vertical(&ctx, 1.0, 256).unwrap();
        // z-marginal of the Lévy area: density (1/t)sech(πz/t), CDF (2/π)atan(e^{πz/t}).
        for z in [-1.3, -0.2, 0.0, 0.45, 2.0] {
            let exact = 2.0 / std::f64::consts::PI * (std::f64::consts::PI * z).exp().atan();
            assert!((m.eval(z) - exact).abs() < 1e-7, "z = {z}: {} vs {exact}", m.eval(z));
        }
        assert_eq!(m.eval(-100.0), 0.0);
        assert_eq!(m.eval(100.0), 1.0);
    }

    #[test]
    fn cascade_small() {
        let table = projection_cascade(&dyadic_alphas(6), 1.0, 200, 100, 1).unwrap();
        assert_eq!(table.rows.last().unwrap().gap, 0.0);
        assert!(table.rows[0].gap > table.rows[4].gap);
        assert!(projection_cascade(&[2000.0], 1.0, 10, 10, 1).is_err());
    }
}

//! Horizontal gradient and sub-Laplacian of scalar fields.
//!
//! Derivatives are taken in coordinates first (analytic when supplied,
//! central differences otherwise) and then contracted with the frame
//! `X_i = ∂x_i − (α_i/2)y_i∂z`, `Y_i = ∂y_i + (α_i/2)x_i∂z`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{GroupContext, ProductGroup};
use crate::scalar::Real;

pub type EvalFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
/// First partials, one per coordinate.
pub type PartialsFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
/// Second partials, row-major `(2n+1)²`.
pub type HessianFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// Self-check flag level for analytic against finite-difference partials.
pub const SELFCHECK_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    /// Infinitely differentiable everywhere.
    Smooth,
    /// Twice continuously differentiable.
    C2,
}

/// A real function of the flat coordinates `(x₁, y₁, …, x_n, y_n, z)`.
#[derive(Clone)]
pub struct ScalarField<T> {
    name: String,
    dim: usize,
    eval: EvalFn<T>,
    partials: Option<PartialsFn<T>>,
    second: Option<HessianFn<T>>,
    smoothness: Smoothness,
    finite_differences: bool,
}

impl<T> fmt::Debug for ScalarField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("partials", &self.partials.is_some())
            .field("second_partials", &self.second.is_some())
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl<T: Real> ScalarField<T> {
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        ScalarField {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            partials: None,
            second: None,
            smoothness: Smoothness::Smooth,
            finite_differences: true,
        }
    }

    pub fn with_partials(mut self, p: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.partials = Some(Arc::new(p));
        self
    }

    pub fn with_second_partials(mut self, h: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.second = Some(Arc::new(h));
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    /// Disallows the finite-difference fallback.
    pub fn without_finite_differences(mut self) -> Self {
        self.finite_differences = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of coordinates the field takes.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn has_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn value(&self, x: &[T]) -> T {
        (self.eval)(x)
    }

    /// First partials, analytic when available.
    pub fn partials(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.partials {
            Some(p) => Ok(p(x)),
            None if self.finite_differences => Ok(self.fd_partials(x)),
            None => Err(Error::Capability(format!("field {} has no partials and finite differences are off", self.name))),
        }
    }

    /// Second partials, analytic when available.
    pub fn second_partials(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.second {
            Some(h) => Ok(h(x)),
            None if self.finite_differences => Ok(self.fd_second_partials(x)),
            None => Err(Error::Capability(format!(
                "field {} has no second partials and finite differences are off",
                self.name
            ))),
        }
    }

    /// Central differences with `h = ε^{1/3}·max(1, |x_k|)`.
    pub fn fd_partials(&self, x: &[T]) -> Vec<T> {
        let h0 = T::epsilon().cbrt();
        let mut p = x.to_vec();
        (0..x.len())
            .map(|k| {
                let h = h0 * x[k].abs().max(T::one());
                p[k] = x[k] + h;
                let fp = self.value(&p);
                p[k] = x[k] - h;
                let fm = self.value(&p);
                p[k] = x[k];
                (fp - fm) / (h + h)
            })
            .collect()
    }

    /// Central differences with `h = ε^{1/4}·max(1, |x_k|)`.
    pub fn fd_second_partials(&self, x: &[T]) -> Vec<T> {
        let d = x.len();
        let h0 = T::epsilon().sqrt().sqrt();
        let h: Vec<T> = x.iter().map(|c| h0 * c.abs().max(T::one())).collect();
        let f0 = self.value(x);
        let mut p = x.to_vec();
        let mut out = vec![T::zero(); d * d];
        for i in 0..d {
            p[i] = x[i] + h[i];
            let fp = self.value(&p);
            p[i] = x[i] - h[i];
            let fm = self.value(&p);
            p[i] = x[i];
            out[i * d + i] = (fp - f0 - f0 + fm) / (h[i] * h[i]);
            for j in 0..i {
                let mut corner = |si: T, sj: T| {
                    p[i] = x[i] + si * h[i];
                    p[j] = x[j] + sj * h[j];
                    let v = self.value(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let one = T::one();
                let v = (corner(one, one) - corner(one, -one) - corner(-one, one) + corner(-one, -one))
                    / (T::lit(4.0) * h[i] * h[j]);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        out
    }
}

fn check_dim<T: Real>(ctx: &GroupContext<T>, f: &ScalarField<T>, g: &[T]) -> Result<()> {
    if f.dim != ctx.dim() || g.len() != ctx.dim() {
        return Err(Error::input(format!(
            "field {} takes {} coordinates, point has {}, group has {}",
            f.name,
            f.dim,
            g.len(),
            ctx.dim()
        )));
    }
    Ok(())
}

fn frame_apply<T: Real>(ctx: &GroupContext<T>, g: &[T], d: &[T]) -> Result<Vec<T>> {
    let n = ctx.n();
    let dz = d[2 * n];
    let half = T::lit(0.5);
    let mut out = vec![T::zero(); 2 * n];
    for i in 0..n {
        let a = ctx.alpha(i);
        let (x, y) = (g[2 * i], g[2 * i + 1]);
        out[i] = d[2 * i] - half * a * y * dz;
        out[n + i] = d[2 * i + 1] + half * a * x * dz;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite horizontal derivative at {g:?}"), f64::NAN));
    }
    Ok(out)
}

/// `(X₁f, …, X_nf, Y₁f, …, Y_nf)` at `g`.
pub fn horizontal_gradient<T: Real>(ctx: &GroupContext<T>, f: &ScalarField<T>, g: &[T]) -> Result<Vec<T>> {
    check_dim(ctx, f, g)?;
    frame_apply(ctx, g, &f.partials(g)?)
}

/// `|∇_H f|² = Σ (X_if)² + (Y_if)²`.
pub fn horizontal_grad_sq<T: Real>(ctx: &GroupContext<T>, f: &ScalarField<T>, g: &[T]) -> Result<T> {
    Ok(horizontal_gradient(ctx, f, g)?.iter().map(|&c| c * c).sum())
}

/// `Δ_H f = Σ X_i²f + Y_i²f`, with
/// `X_i²f = f_xx − α y f_xz + (α²/4)y² f_zz` and
/// `Y_i²f = f_yy + α x f_yz + (α²/4)x² f_zz`.
pub fn sub_laplacian<T: Real>(ctx: &GroupContext<T>, f: &ScalarField<T>, g: &[T]) -> Result<T> {
    check_dim(ctx, f, g)?;
    let d = ctx.dim();
    let h = f.second_partials(g)?;
    let zi = d - 1;
    let at = |i: usize, j: usize| h[i * d + j];
    let q = T::lit(0.25);
    let mut acc = T::zero();
    for i in 0..ctx.n() {
        let a = ctx.alpha(i);
        let (xi, yi) = (2 * i, 2 * i + 1);
        let (x, y) = (g[xi], g[yi]);
        acc = acc + at(xi, xi) - a * y * at(xi, zi) + q * a * a * y * y * at(zi, zi);
        acc = acc + at(yi, yi) + a * x * at(yi, zi) + q * a * a * x * x * at(zi, zi);
    }
    if !acc.is_finite() {
        return Err(Error::numeric("non-finite sub-Laplacian", f64::NAN));
    }
    Ok(acc)
}

/// Result of comparing analytic partials with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfCheck {
    /// `max |analytic − fd| / max(1, |analytic|)` over points and coordinates.
    pub max_deviation: f64,
    pub flagged: bool,
}

pub fn gradient_selfcheck<T: Real>(f: &ScalarField<T>, points: &[Vec<T>]) -> Result<SelfCheck> {
    let p = f
        .partials
        .as_ref()
        .ok_or_else(|| Error::Capability(format!("field {} has no analytic partials", f.name)))?;
    let mut worst = 0.0f64;
    for x in points {
        let a = p(x);
        let fd = f.fd_partials(x);
        for (ak, fk) in a.iter().zip(&fd) {
            let dev = (*ak - *fk).abs().as_f64() / ak.abs().as_f64().max(1.0);
            worst = worst.max(dev);
        }
    }
    Ok(SelfCheck { max_deviation: worst, flagged: !(worst <= SELFCHECK_TOL) })
}

/// `f ∘ F` on the isotropic `H¹`, where `F(x, y, z) = (x, y, αz)`.
pub fn pullback_f<T: Real>(alpha: T, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    if f.dim != 3 {
        return Err(Error::input("F acts on H¹; field must take 3 coordinates"));
    }
    let map = move |x: &[T]| vec![x[0], x[1], alpha * x[2]];
    let scale = [T::one(), T::one(), alpha];
    Ok(linear_pullback(format!("{}∘F", f.name), 3, f, map, scale.to_vec()))
}

/// `f ∘ π` on `Π H¹_{α_i}` with coordinates `(x₁, y₁, z₁, …, x_n, y_n, z_n)`;
/// `weights` are the vertical coefficients (all 1 for `π`, `α_i` for `π_ω`).
fn pullback_lift<T: Real>(name: String, f: &ScalarField<T>, weights: Vec<T>) -> Result<ScalarField<T>> {
    let n = weights.len();
    if f.dim != 2 * n + 1 {
        return Err(Error::input(format!("field takes {} coordinates, lift targets {}", f.dim, 2 * n + 1)));
    }
    let w = weights.clone();
    let map = move |x: &[T]| {
        let mut out = Vec::with_capacity(2 * n + 1);
        let mut z = T::zero();
        for i in 0..n {
            out.push(x[3 * i]);
            out.push(x[3 * i + 1]);
            z = z + w[i] * x[3 * i + 2];
        }
        out.push(z);
        out
    };
    // Jacobian: target coordinate k depends on source coordinates listed here.
    let jac = move |src: usize| -> (usize, T) {
        let (i, r) = (src / 3, src % 3);
        if r == 2 {
            (2 * n, weights[i])
        } else {
            (2 * i + r, T::one())
        }
    };
    Ok(sparse_pullback(name, 3 * n, f, map, jac))
}

/// `f ∘ π` for the product of the factors of `product`.
pub fn pullback_pi<T: Real>(product: &ProductGroup<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    let w = vec![T::one(); product.factors().len()];
    pullback_lift(format!("{}∘π", f.name), f, w)
}

/// `f ∘ π_ω` on `n` isotropic copies of `H¹`.
pub fn pullback_pi_omega<T: Real>(target: &GroupContext<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    pullback_lift(format!("{}∘π_ω", f.name), f, target.alphas().to_vec())
}

/// Pullback by a diagonal linear map with coordinate scales `scale`.
fn linear_pullback<T: Real>(
    name: String,
    dim: usize,
    f: &ScalarField<T>,
    map: impl Fn(&[T]) -> Vec<T> + Send + Sync + Clone + 'static,
    scale: Vec<T>,
) -> ScalarField<T> {
    let jac = move |src: usize| (src, scale[src]);
    sparse_pullback(name, dim, f, map, jac)
}

/// Pullback by a linear map where each source coordinate feeds exactly one
/// target coordinate `jac(src) = (target, coefficient)`.
fn sparse_pullback<T: Real>(
    name: String,
    dim: usize,
    f: &ScalarField<T>,
    map: impl Fn(&[T]) -> Vec<T> + Send + Sync + Clone + 'static,
    jac: impl Fn(usize) -> (usize, T) + Send + Sync + Clone + 'static,
) -> ScalarField<T> {
    let inner = f.clone();
    let (m1, m2, m3) = (map.clone(), map.clone(), map);
    let (j1, j2) = (jac.clone(), jac);
    let fd = f.clone();
    let hd = f.clone();
    let td = f.dim;
    let mut out = ScalarField::new(name, dim, move |x| inner.value(&m1(x))).with_smoothness(f.smoothness);
    out.finite_differences = f.finite_differences;
    if f.partials.is_some() {
        out = out.with_partials(move |x| {
            let d = fd.partials(&m2(x)).expect("partials present");
            (0..dim).map(|s| {
                let (k, c) = j1(s);
                c * d[k]
            }).collect()
        });
    }
    if f.second.is_some() {
        out = out.with_second_partials(move |x| {
            let h = hd.second_partials(&m3(x)).expect("second partials present");
            let mut o = vec![T::zero(); dim * dim];
            for a in 0..dim {
                let (ka, ca) = j2(a);
                for b in 0..dim {
                    let (kb, cb) = j2(b);
                    o[a * dim + b] = ca * cb * h[ka * td + kb];
                }
            }
            o
        });
    }
    out
}

/// `(X, Y)` gradient on a product of `H¹` factors, factor by factor:
/// `(X^{(1)}f, Y^{(1)}f, …, X^{(n)}f, Y^{(n)}f)`.
pub fn product_horizontal_gradient<T: Real>(product: &ProductGroup<T>, f: &ScalarField<T>, x: &[T]) -> Result<Vec<T>> {
    let n = product.factors().len();
    if f.dim != 3 * n || x.len() != 3 * n {
        return Err(Error::input("product field and point must have 3n coordinates"));
    }
    let d = f.partials(x)?;
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(2 * n);
    for (i, c) in product.factors().iter().enumerate() {
        let a = c.alpha(0);
        let (px, py, pz) = (x[3 * i], x[3 * i + 1], d[3 * i + 2]);
        out.push(d[3 * i] - half * a * py * pz);
        out.push(d[3 * i + 1] + half * a * px * pz);
    }
    Ok(out)
}

/// Names accepted by [`catalog`].
pub const CATALOG: &[&str] = &["const:c", "coord:x1", "exp_x1:λ", "linear_z:ε", "poly:x1^2*z", "bump:r"];

/// Builds a named field on `H^n`:
/// - `const:c`: the constant `c`
/// - `coord:x1`, `coord:y3`, `coord:z`: a coordinate
/// - `exp_x1:λ`: `exp(λx₁/2)`
/// - `linear_z:ε`: `1 + εz`
/// - `poly:c*x1^2*z`: a monomial with optional numeric factor
/// - `bump:r`: `exp(1 − 1/(1 − ρ²/r²))` inside the Euclidean ball `ρ < r`
pub fn catalog<T: Real>(spec: &str, n: usize) -> Result<ScalarField<T>> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Error::input(format!("field spec {spec:?} must look like kind:argument")))?;
    let dim = 2 * n + 1;
    let num = |s: &str| -> Result<T> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(T::lit)
            .ok_or_else(|| Error::input(format!("bad number {s:?} in field spec {spec:?}")))
    };
    let field = match kind {
        "const" => {
            let c = num(arg)?;
            ScalarField::new(spec, dim, move |_| c)
                .with_partials(move |_| vec![T::zero(); dim])
                .with_second_partials(move |_| vec![T::zero(); dim * dim])
        }
        "coord" => {
            let k = coordinate_index(arg, n)?;
            ScalarField::new(spec, dim, move |x| x[k])
                .with_partials(move |_| {
                    let mut d = vec![T::zero(); dim];
                    d[k] = T::one();
                    d
                })
                .with_second_partials(move |_| vec![T::zero(); dim * dim])
        }
        "exp_x1" => {
            let l = num(arg)?;
            let h = T::lit(0.5) * l;
            ScalarField::new(spec, dim, move |x| (h * x[0]).exp())
                .with_partials(move |x| {
                    let mut d = vec![T::zero(); dim];
                    d[0] = h * (h * x[0]).exp();
                    d
                })
                .with_second_partials(move |x| {
                    let mut d = vec![T::zero(); dim * dim];
                    d[0] = h * h * (h * x[0]).exp();
                    d
                })
        }
        "linear_z" => {
            let e = num(arg)?;
            ScalarField::new(spec, dim, move |x| T::one() + e * x[dim - 1])
                .with_partials(move |_| {
                    let mut d = vec![T::zero(); dim];
                    d[dim - 1] = e;
                    d
                })
                .with_second_partials(move |_| vec![T::zero(); dim * dim])
        }
        "poly" => monomial(spec, arg, n)?,
        "bump" => {
            let r = num(arg)?;
            if !(r > T::zero()) {
                return Err(Error::input("bump radius must be positive"));
            }
            bump(spec, dim, r)
        }
        _ => return Err(Error::input(format!("unknown field kind {kind:?}; known: {}", CATALOG.join(", ")))),
    };
    Ok(field)
}

fn coordinate_index(name: &str, n: usize) -> Result<usize> {
    let name = name.trim();
    if name == "z" {
        return Ok(2 * n);
    }
    let bad = || Error::input(format!("unknown coordinate {name:?} for n = {n}"));
    let (head, idx) = name.split_at(1.min(name.len()));
    let i: usize = idx.parse().map_err(|_| bad())?;
    if i == 0 || i > n {
        return Err(bad());
    }
    match head {
        "x" => Ok(2 * (i - 1)),
        "y" => Ok(2 * (i - 1) + 1),
        _ => Err(bad()),
    }
}

/// `c·Π x_k^{p_k}` with exact first and second partials.
fn monomial<T: Real>(spec: &str, arg: &str, n: usize) -> Result<ScalarField<T>> {
    let dim = 2 * n + 1;
    let mut coeff = 1.0f64;
    let mut pow = vec![0i32; dim];
    for factor in arg.split('*') {
        let factor = factor.trim();
        if let Ok(c) = factor.parse::<f64>() {
            coeff *= c;
            continue;
        }
        let (var, p) = match factor.split_once('^') {
            Some((v, p)) => (v, p.trim().parse::<i32>().map_err(|_| Error::input(format!("bad exponent in {factor:?}")))?),
            None => (factor, 1),
        };
        if p < 0 {
            return Err(Error::input("monomial exponents must be nonnegative"));
        }
        pow[coordinate_index(var, n)?] += p;
    }
    let c = T::lit(coeff);
    let eval_pow = pow.clone();
    let value = move |x: &[T], p: &[i32]| -> T { x.iter().zip(p).fold(c, |acc, (&xi, &pi)| acc * xi.powi(pi)) };
    let d_pow = pow.clone();
    let h_pow = pow;
    Ok(ScalarField::new(spec, dim, move |x| value(x, &eval_pow))
        .with_partials(move |x| {
            (0..dim)
                .map(|k| {
                    if d_pow[k] == 0 {
                        return T::zero();
                    }
                    let mut p = d_pow.clone();
                    p[k] -= 1;
                    T::from_count(d_pow[k] as usize) * value(x, &p)
                })
                .collect()
        })
        .with_second_partials(move |x| {
            let mut out = vec![T::zero(); dim * dim];
            for a in 0..dim {
                for b in 0..dim {
                    let mut p = h_pow.clone();
                    let mut k = T::one();
                    for idx in [a, b] {
                        if p[idx] == 0 {
                            k = T::zero();
                            break;
                        }
                        k = k * T::from_count(p[idx] as usize);
                        p[idx] -= 1;
                    }
                    if k != T::zero() {
                        out[a * dim + b] = k * value(x, &p);
                    }
                }
            }
            out
        }))
}

fn bump<T: Real>(spec: &str, dim: usize, r: T) -> ScalarField<T> {
    let r2 = r * r;
    // With u = ρ²/r², f = exp(1 − 1/(1 − u)) and ∂_k f = f·φ'(u)·2x_k/r²,
    // φ(u) = 1 − 1/(1 − u), φ'(u) = −1/(1 − u)².
    let value = move |x: &[T]| -> (T, T) {
        let u = x.iter().map(|&c| c * c).sum::<T>() / r2;
        if u >= T::one() {
            (T::zero(), u)
        } else {
            ((T::one() - T::one() / (T::one() - u)).exp(), u)
        }
    };
    ScalarField::new(spec, dim, move |x| value(x).0)
        .with_partials(move |x| {
            let (f, u) = value(x);
            if f == T::zero() {
                return vec![T::zero(); dim];
            }
            let w = T::one() - u;
            let g = -f / (w * w) * T::lit(2.0) / r2;
            x.iter().map(|&c| g * c).collect()
        })
}

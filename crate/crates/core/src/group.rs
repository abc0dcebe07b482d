//! Exact algebra of `H^n_ω`.
//!
//! Coordinates are always ordered `(x₁, y₁, …, x_n, y_n, z)`. The exponential
//! and logarithm are the identity in these coordinates, so [`AlgebraElement`]
//! carries the same data as [`GroupElement`]; the two types exist so that a
//! bracket result is never fed to the group law by accident.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dimension `n` and the sorted positive parameters `α₁ ≤ … ≤ α_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContextRepr<T>", into = "ContextRepr<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct GroupContext<T> {
    alphas: Vec<T>,
    /// `permutation[k]` is the caller's index of the k-th sorted parameter.
    permutation: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ContextRepr<T> {
    alphas: Vec<T>,
}

impl<T: Real> TryFrom<ContextRepr<T>> for GroupContext<T> {
    type Error = Error;
    fn try_from(repr: ContextRepr<T>) -> Result<Self> {
        GroupContext::new(repr.alphas)
    }
}

impl<T: Real> From<GroupContext<T>> for ContextRepr<T> {
    fn from(ctx: GroupContext<T>) -> Self {
        ContextRepr { alphas: ctx.alphas }
    }
}

impl<T: Real> GroupContext<T> {
    /// Sorts the parameters ascending and remembers where each came from.
    pub fn new(alphas: Vec<T>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::input("a Heisenberg group needs n ≥ 1"));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > T::zero())) {
            return Err(Error::input(format!("alpha parameters must be positive and finite, got {a}")));
        }
        let mut permutation: Vec<usize> = (0..alphas.len()).collect();
        permutation.sort_by(|&i, &j| alphas[i].partial_cmp(&alphas[j]).expect("finite"));
        let sorted = permutation.iter().map(|&i| alphas[i]).collect();
        Ok(GroupContext { alphas: sorted, permutation })
    }

    /// The isotropic group `H^n` with every `αᵢ = 1`.
    pub fn isotropic(n: usize) -> Result<Self> {
        Self::new(vec![T::one(); n])
    }

    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    /// Number of coordinates, `2n + 1`.
    pub fn dim(&self) -> usize {
        2 * self.alphas.len() + 1
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn alpha(&self, i: usize) -> T {
        self.alphas[i]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn alpha_sq_sum(&self) -> T {
        self.alphas.iter().map(|&a| a * a).sum()
    }

    pub fn identity(&self) -> GroupElement<T> {
        GroupElement { v: vec![T::zero(); 2 * self.n()], z: T::zero() }
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != 2 * self.n() {
            return Err(Error::input(format!(
                "expected a horizontal vector of length {}, got {}",
                2 * self.n(),
                v.len()
            )));
        }
        Ok(())
    }

    fn check(&self, g: &GroupElement<T>) -> Result<()> {
        self.check_len(&g.v)
    }

    /// `ω(v, v') = Σ αᵢ(xᵢy'ᵢ − x'ᵢyᵢ)`.
    pub fn omega(&self, v: &[T], w: &[T]) -> Result<T> {
        self.check_len(v)?;
        self.check_len(w)?;
        Ok(self.omega_unchecked(v, w))
    }

    #[inline]
    pub(crate) fn omega_unchecked(&self, v: &[T], w: &[T]) -> T {
        let mut acc = T::zero();
        for (i, &a) in self.alphas.iter().enumerate() {
            acc = acc + a * (v[2 * i] * w[2 * i + 1] - w[2 * i] * v[2 * i + 1]);
        }
        acc
    }

    pub fn multiply(&self, g: &GroupElement<T>, h: &GroupElement<T>) -> Result<GroupElement<T>> {
        self.check(g)?;
        self.check(h)?;
        let half = T::lit(0.5);
        Ok(GroupElement {
            v: g.v.iter().zip(&h.v).map(|(&a, &b)| a + b).collect(),
            z: g.z + h.z + half * self.omega_unchecked(&g.v, &h.v),
        })
    }

    /// `δ_λ(v, z) = (λv, λ²z)`.
    pub fn dilate(&self, lambda: T, g: &GroupElement<T>) -> Result<GroupElement<T>> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::input(format!("dilation factor must be positive, got {lambda}")));
        }
        self.check(g)?;
        Ok(GroupElement { v: g.v.iter().map(|&x| lambda * x).collect(), z: lambda * lambda * g.z })
    }

    /// `[(a₁,c₁),(a₂,c₂)] = (0, ω(a₁,a₂))`.
    pub fn lie_bracket(&self, a: &AlgebraElement<T>, b: &AlgebraElement<T>) -> Result<AlgebraElement<T>> {
        self.check_len(&a.a)?;
        self.check_len(&b.a)?;
        Ok(AlgebraElement { a: vec![T::zero(); 2 * self.n()], c: self.omega_unchecked(&a.a, &b.a) })
    }

    /// Coefficients of the left-invariant frame at `g` in the coordinate basis.
    pub fn frame(&self, g: &GroupElement<T>) -> Result<Frame<T>> {
        self.check(g)?;
        let dim = self.dim();
        let half = T::lit(0.5);
        let mut x = Vec::with_capacity(self.n());
        let mut y = Vec::with_capacity(self.n());
        for (i, &a) in self.alphas.iter().enumerate() {
            let mut xi = vec![T::zero(); dim];
            xi[2 * i] = T::one();
            xi[dim - 1] = -half * a * g.v[2 * i + 1];
            let mut yi = vec![T::zero(); dim];
            yi[2 * i + 1] = T::one();
            yi[dim - 1] = half * a * g.v[2 * i];
            x.push(xi);
            y.push(yi);
        }
        let mut z = vec![T::zero(); dim];
        z[dim - 1] = T::one();
        Ok(Frame { x, y, z })
    }
}

/// A point `(v, z)` of the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement<T> {
    pub v: Vec<T>,
    pub z: T,
}

impl<T: Real> GroupElement<T> {
    pub fn new(v: Vec<T>, z: T) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::input("horizontal part must have even length"));
        }
        if !(v.iter().all(|x| x.is_finite()) && z.is_finite()) {
            return Err(Error::input("group element has non-finite coordinates"));
        }
        Ok(GroupElement { v, z })
    }

    /// Builds an element from flat coordinates `(x₁, y₁, …, z)`.
    pub fn from_coords(coords: &[T]) -> Result<Self> {
        match coords.split_last() {
            Some((&z, v)) => Self::new(v.to_vec(), z),
            None => Err(Error::input("empty coordinate vector")),
        }
    }

    pub fn coords(&self) -> Vec<T> {
        let mut c = self.v.clone();
        c.push(self.z);
        c
    }

    /// `(v, z)⁻¹ = (−v, −z)`.
    pub fn inverse(&self) -> Self {
        GroupElement { v: self.v.iter().map(|&x| -x).collect(), z: -self.z }
    }

    /// Horizontal block `(x_j, y_j)`.
    pub fn pair(&self, j: usize) -> (T, T) {
        (self.v[2 * j], self.v[2 * j + 1])
    }

    pub fn log(&self) -> AlgebraElement<T> {
        AlgebraElement { a: self.v.clone(), c: self.z }
    }
}

/// A Lie algebra element `(a, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement<T> {
    pub a: Vec<T>,
    pub c: T,
}

impl<T: Real> AlgebraElement<T> {
    pub fn exp(&self) -> GroupElement<T> {
        GroupElement { v: self.a.clone(), z: self.c }
    }
}

/// Coordinate coefficients of `X_i`, `Y_i` and `Z` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<Vec<T>>,
    pub z: Vec<T>,
}

fn check_h1<T: Real>(g: &GroupElement<T>) -> Result<()> {
    if g.v.len() != 2 {
        return Err(Error::input(format!(
            "expected an element of a three-dimensional group, got {} horizontal coordinates",
            g.v.len()
        )));
    }
    Ok(())
}

/// `F(x, y, z) = (x, y, αz)` from the isotropic `H¹` onto `H¹` with parameter `α`.
pub fn map_f<T: Real>(alpha: T, g: &GroupElement<T>) -> Result<GroupElement<T>> {
    if !(alpha > T::zero() && alpha.is_finite()) {
        return Err(Error::input("F needs a positive parameter"));
    }
    check_h1(g)?;
    Ok(GroupElement { v: g.v.clone(), z: alpha * g.z })
}

/// Product `H¹_{ω₁} × … × H¹_{ω_n}` used by the lifting maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductGroup<T> {
    factors: Vec<GroupContext<T>>,
}

impl<T: Real> ProductGroup<T> {
    pub fn new(factors: Vec<GroupContext<T>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::input("empty product group"));
        }
        if factors.iter().any(|f| f.n() != 1) {
            return Err(Error::input("every factor of the product must be three-dimensional"));
        }
        Ok(ProductGroup { factors })
    }

    /// The factors `H¹_{αᵢ}` for the parameters of `ctx`, in sorted order.
    pub fn factors_of(ctx: &GroupContext<T>) -> Self {
        ProductGroup {
            factors: ctx.alphas().iter().map(|&a| GroupContext::new(vec![a]).expect("valid alpha")).collect(),
        }
    }

    /// `n` copies of the isotropic `H¹`.
    pub fn isotropic(n: usize) -> Self {
        ProductGroup { factors: vec![GroupContext::isotropic(1).expect("n = 1"); n] }
    }

    pub fn factors(&self) -> &[GroupContext<T>] {
        &self.factors
    }

    fn check(&self, gs: &[GroupElement<T>]) -> Result<()> {
        if gs.len() != self.factors.len() {
            return Err(Error::input(format!(
                "product of {} factors received {} components",
                self.factors.len(),
                gs.len()
            )));
        }
        gs.iter().try_for_each(check_h1)
    }

    pub fn multiply(&self, g: &[GroupElement<T>], h: &[GroupElement<T>]) -> Result<Vec<GroupElement<T>>> {
        self.check(g)?;
        self.check(h)?;
        self.factors.iter().zip(g.iter().zip(h)).map(|(ctx, (a, b))| ctx.multiply(a, b)).collect()
    }
}

/// `π(g₁, …, g_n) = (x₁, y₁, …, x_n, y_n, Σ zᵢ)`.
///
/// The factor parameters must coincide with the (sorted) parameters of `target`.
pub fn project_pi<T: Real>(
    target: &GroupContext<T>,
    product: &ProductGroup<T>,
    gs: &[GroupElement<T>],
) -> Result<GroupElement<T>> {
    if product.factors.len() != target.n() {
        return Err(Error::input(format!(
            "π needs {} factors for the target group, got {}",
            target.n(),
            product.factors.len()
        )));
    }
    for (i, f) in product.factors.iter().enumerate() {
        if f.alpha(0) != target.alpha(i) {
            return Err(Error::input(format!(
                "factor {i} has parameter {} but the target expects {}",
                f.alpha(0),
                target.alpha(i)
            )));
        }
    }
    product.check(gs)?;
    Ok(lift(gs, |_, z| z))
}

/// `π_ω(g₁, …, g_n) = (x₁, y₁, …, x_n, y_n, Σ αᵢzᵢ)` from `n` isotropic copies.
pub fn project_pi_omega<T: Real>(target: &GroupContext<T>, gs: &[GroupElement<T>]) -> Result<GroupElement<T>> {
    if gs.len() != target.n() {
        return Err(Error::input(format!("π_ω needs {} components, got {}", target.n(), gs.len())));
    }
    gs.iter().try_for_each(check_h1)?;
    Ok(lift(gs, |i, z| target.alpha(i) * z))
}

fn lift<T: Real>(gs: &[GroupElement<T>], weight: impl Fn(usize, T) -> T) -> GroupElement<T> {
    let mut v = Vec::with_capacity(2 * gs.len());
    let mut z = T::zero();
    for (i, g) in gs.iter().enumerate() {
        v.extend_from_slice(&g.v);
        z = z + weight(i, g.z);
    }
    GroupElement { v, z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn el(c: &[f64]) -> GroupElement<f64> {
        GroupElement::from_coords(c).unwrap()
    }

    #[test]
    fn omega_examples() {
        let ctx = GroupContext::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(ctx.omega(&[1.0, 0.0, 0.0, 1.0], &[0.0, 1.0, 1.0, 0.0]).unwrap(), -2.0);
        let ctx2 = GroupContext::new(vec![2.0]).unwrap();
        assert_eq!(ctx2.omega(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(ctx.omega(&[0.3, -1.2, 4.0, 2.0], &[0.3, -1.2, 4.0, 2.0]).unwrap(), 0.0);
        assert!(ctx.omega(&[1.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn context_sorts_and_records_permutation() {
        let ctx = GroupContext::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(ctx.alphas(), &[1.0, 2.0]);
        assert_eq!(ctx.permutation(), &[1, 0]);
        assert!(GroupContext::new(vec![1.0, 0.0]).is_err());
        assert!(GroupContext::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn context_json_round_trip() {
        let ctx: GroupContext<f64> = serde_json::from_str(r#"{"alphas":[3.0,1.0]}"#).unwrap();
        assert_eq!(ctx.alphas(), &[1.0, 3.0]);
        assert_eq!(serde_json::to_string(&ctx).unwrap(), r#"{"alphas":[1.0,3.0]}"#);
        assert!(serde_json::from_str::<GroupContext<f64>>(r#"{"alphas":[-1.0]}"#).is_err());
        let g: GroupElement<f64> = serde_json::from_str(r#"{"v":[1.0,2.0],"z":3.0}"#).unwrap();
        assert_eq!(g, el(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn multiply_examples() {
        let ctx = GroupContext::new(vec![2.0]).unwrap();
        assert_eq!(ctx.multiply(&el(&[1.0, 0.0, 0.0]), &el(&[0.0, 1.0, 0.0])).unwrap(), el(&[1.0, 1.0, 1.0]));
        let g = el(&[0.7, -1.1, 2.5]);
        assert_eq!(ctx.multiply(&g, &ctx.identity()).unwrap(), g);
        assert_eq!(ctx.multiply(&g, &g.inverse()).unwrap(), ctx.identity());
        assert!(ctx.multiply(&g, &el(&[1.0, 2.0, 3.0, 4.0, 5.0])).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(el(&[1.0, 2.0, 3.0]).inverse(), el(&[-1.0, -2.0, -3.0]));
        let g = el(&[0.3, 0.1, -5.0]);
        assert_eq!(g.inverse().inverse(), g);
    }

    #[test]
    fn dilation_examples() {
        let ctx = GroupContext::new(vec![1.0]).unwrap();
        assert_eq!(ctx.dilate(2.0, &el(&[1.0, 1.0, 1.0])).unwrap(), el(&[2.0, 2.0, 4.0]));
        let g = el(&[0.3, -0.8, 1.9]);
        assert_eq!(ctx.dilate(1.0, &g).unwrap(), g);
        assert!(ctx.dilate(0.0, &g).is_err());
        assert!(ctx.dilate(-1.0, &g).is_err());
    }

    #[test]
    fn bracket_examples() {
        for alpha in [0.5, 1.0, 4.0] {
            let ctx = GroupContext::new(vec![alpha]).unwrap();
            let x = AlgebraElement { a: vec![1.0, 0.0], c: 0.0 };
            let y = AlgebraElement { a: vec![0.0, 1.0], c: 0.0 };
            assert_eq!(ctx.lie_bracket(&x, &y).unwrap(), AlgebraElement { a: vec![0.0, 0.0], c: alpha });
            assert_eq!(ctx.lie_bracket(&x, &x).unwrap().c, 0.0);
            let central = AlgebraElement { a: vec![0.0, 0.0], c: 1.0 };
            assert_eq!(ctx.lie_bracket(&central, &y).unwrap(), AlgebraElement { a: vec![0.0, 0.0], c: 0.0 });
        }
    }

    #[test]
    fn frame_examples() {
        let ctx = GroupContext::new(vec![1.0]).unwrap();
        let f = ctx.frame(&ctx.identity()).unwrap();
        assert_eq!(f.x[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(f.y[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(f.z, vec![0.0, 0.0, 1.0]);
        let f = ctx.frame(&el(&[2.0, 4.0, 0.0])).unwrap();
        assert_eq!(f.x[0], vec![1.0, 0.0, -2.0]);
        assert_eq!(f.y[0], vec![0.0, 1.0, 1.0]);
    }

    /// `[X_i, Y_i] = α_i Z` checked by applying the frame, as first-order
    /// operators with polynomial coefficients, to coordinate monomials.
    #[test]
    fn frame_bracket_on_monomials() {
        // Monomials x^a y^b z^c as exponent triples with a coefficient; the
        // operators act exactly on this representation.
        type Poly = Vec<(f64, [i32; 3])>;
        fn d(p: &Poly, k: usize) -> Poly {
            p.iter()
                .filter(|(_, e)| e[k] > 0)
                .map(|(c, e)| {
                    let mut e2 = *e;
                    e2[k] -= 1;
                    (c * e[k] as f64, e2)
                })
                .collect()
        }
        fn mul(p: &Poly, c: f64, k: usize) -> Poly {
            p.iter()
                .map(|(a, e)| {
                    let mut e2 = *e;
                    e2[k] += 1;
                    (a * c, e2)
                })
                .collect()
        }
        fn add(a: &Poly, b: &Poly) -> Poly {
            let mut out = a.clone();
            out.extend(b.iter().cloned());
            out
        }
        fn canon(p: &Poly) -> std::collections::BTreeMap<[i32; 3], f64> {
            let mut m = std::collections::BTreeMap::new();
            for (c, e) in p {
                *m.entry(*e).or_insert(0.0) += c;
            }
            m.retain(|_, c| c.abs() > 1e-12);
            m
        }
        let alpha = 3.0;
        let xop = |p: &Poly| add(&d(p, 0), &mul(&d(p, 2), -alpha / 2.0, 1));
        let yop = |p: &Poly| add(&d(p, 1), &mul(&d(p, 2), alpha / 2.0, 0));
        for e in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 1, 3], [1, 2, 2], [0, 0, 4]] {
            let p: Poly = vec![(1.0, e)];
            let xy = yop(&p);
            let xy = xop(&xy);
            let yx = yop(&xop(&p));
            let comm: Poly = add(&xy, &yx.iter().map(|(c, e)| (-c, *e)).collect());
            let expected: Poly = d(&p, 2).iter().map(|(c, e)| (alpha * c, *e)).collect();
            assert_eq!(canon(&comm), canon(&expected), "monomial {e:?}");
        }
    }

    #[test]
    fn structural_map_examples() {
        assert_eq!(map_f(3.0, &el(&[1.0, 2.0, 5.0])).unwrap(), el(&[1.0, 2.0, 15.0]));
        assert_eq!(map_f(3.0, &el(&[0.0, 0.0, 0.0])).unwrap(), el(&[0.0, 0.0, 0.0]));
        assert!(map_f(3.0, &el(&[0.0, 0.0, 0.0, 0.0, 0.0])).is_err());

        let target = GroupContext::new(vec![1.0, 1.0]).unwrap();
        let prod = ProductGroup::factors_of(&target);
        let g = project_pi(&target, &prod, &[el(&[1.0, 0.0, 1.0]), el(&[0.0, 1.0, 2.0])]).unwrap();
        assert_eq!(g, el(&[1.0, 0.0, 0.0, 1.0, 3.0]));
        let e = project_pi(&target, &prod, &[el(&[0.0; 3]), el(&[0.0; 3])]).unwrap();
        assert_eq!(e, target.identity());
        assert!(project_pi(&target, &prod, &[el(&[0.0; 3])]).is_err());

        let t25 = GroupContext::new(vec![2.0, 5.0]).unwrap();
        let g = project_pi_omega(&t25, &[el(&[0.0, 0.0, 1.0]), el(&[0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(g, el(&[0.0, 0.0, 0.0, 0.0, 7.0]));
        assert_eq!(project_pi_omega(&t25, &[el(&[0.0; 3]), el(&[0.0; 3])]).unwrap(), t25.identity());
        assert!(project_pi(&t25, &ProductGroup::isotropic(2), &[el(&[0.0; 3]), el(&[0.0; 3])]).is_err());
    }

    #[test]
    fn exp_log_are_identity() {
        let g = el(&[1.0, -2.0, 0.5]);
        assert_eq!(g.log().exp(), g);
    }

    #[test]
    fn generic_over_f32() {
        let ctx = GroupContext::<f32>::new(vec![2.0]).unwrap();
        let g = GroupElement::from_coords(&[1.0f32, 0.0, 0.0]).unwrap();
        let h = GroupElement::from_coords(&[0.0f32, 1.0, 0.0]).unwrap();
        assert_eq!(ctx.multiply(&g, &h).unwrap().z, 1.0f32);
    }

    fn close(a: &GroupElement<f64>, b: &GroupElement<f64>, rel: f64) -> bool {
        let scale = a.coords().iter().chain(b.coords().iter()).fold(1.0f64, |m, x| m.max(x.abs()));
        a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= rel * scale)
    }

    fn alphas_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..8.0, 1..5)
    }

    fn element(n: usize) -> impl Strategy<Value = GroupElement<f64>> {
        (prop::collection::vec(-5.0f64..5.0, 2 * n), -5.0f64..5.0).prop_map(|(v, z)| GroupElement { v, z })
    }

    fn ctx_and_elements(k: usize) -> impl Strategy<Value = (GroupContext<f64>, Vec<GroupElement<f64>>)> {
        alphas_strategy().prop_flat_map(move |a| {
            let n = a.len();
            (Just(GroupContext::new(a).unwrap()), prop::collection::vec(element(n), k))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn associativity((ctx, gs) in ctx_and_elements(3)) {
            let l = ctx.multiply(&ctx.multiply(&gs[0], &gs[1]).unwrap(), &gs[2]).unwrap();
            let r = ctx.multiply(&gs[0], &ctx.multiply(&gs[1], &gs[2]).unwrap()).unwrap();
            prop_assert!(close(&l, &r, 1e-12));
        }

        #[test]
        fn dilation_is_automorphism((ctx, gs) in ctx_and_elements(2), lam in 0.1f64..10.0, mu in 0.1f64..10.0) {
            let lhs = ctx.dilate(lam, &ctx.multiply(&gs[0], &gs[1]).unwrap()).unwrap();
            let rhs = ctx.multiply(&ctx.dilate(lam, &gs[0]).unwrap(), &ctx.dilate(lam, &gs[1]).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
            let comp = ctx.dilate(lam, &ctx.dilate(mu, &gs[0]).unwrap()).unwrap();
            prop_assert!(close(&comp, &ctx.dilate(lam * mu, &gs[0]).unwrap(), 1e-12));
            let back = ctx.dilate(1.0 / lam, &ctx.dilate(lam, &gs[0]).unwrap()).unwrap();
            prop_assert!(close(&back, &gs[0], 1e-12));
        }

        #[test]
        fn jacobi_and_antisymmetry((ctx, gs) in ctx_and_elements(3)) {
            let [a, b, c] = [gs[0].log(), gs[1].log(), gs[2].log()];
            let ab = ctx.lie_bracket(&a, &b).unwrap();
            let ba = ctx.lie_bracket(&b, &a).unwrap();
            prop_assert_eq!(ab.c, -ba.c);
            let bc = ctx.lie_bracket(&b, &c).unwrap();
            let ca = ctx.lie_bracket(&c, &a).unwrap();
            // Step two: every double bracket vanishes identically.
            for (x, y) in [(&a, &bc), (&b, &ca), (&c, &ab)] {
                let d = ctx.lie_bracket(x, y).unwrap();
                prop_assert_eq!(d.c, 0.0);
                prop_assert!(d.a.iter().all(|&t| t == 0.0));
            }
        }

        #[test]
        fn f_is_homomorphism(alpha in 0.05f64..8.0, g in element(1), h in element(1)) {
            let iso = GroupContext::isotropic(1).unwrap();
            let tgt = GroupContext::new(vec![alpha]).unwrap();
            let lhs = map_f(alpha, &iso.multiply(&g, &h).unwrap()).unwrap();
            let rhs = tgt.multiply(&map_f(alpha, &g).unwrap(), &map_f(alpha, &h).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn pi_and_pi_omega_are_homomorphisms(
            (ctx, gs) in alphas_strategy().prop_flat_map(|a| {
                let n = a.len();
                (Just(GroupContext::new(a).unwrap()), prop::collection::vec(element(1), 2 * n))
            })
        ) {
            let n = ctx.n();
            let (g, h) = gs.split_at(n);
            let prod = ProductGroup::factors_of(&ctx);
            let gh = prod.multiply(g, h).unwrap();
            let lhs = project_pi(&ctx, &prod, &gh).unwrap();
            let rhs = ctx.multiply(&project_pi(&ctx, &prod, g).unwrap(), &project_pi(&ctx, &prod, h).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));

            let iso = ProductGroup::isotropic(n);
            let gh = iso.multiply(g, h).unwrap();
            let lhs = project_pi_omega(&ctx, &gh).unwrap();
            let rhs = ctx.multiply(&project_pi_omega(&ctx, g).unwrap(), &project_pi_omega(&ctx, h).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }
    }
}

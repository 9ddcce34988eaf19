//! Manifold functions, the triple score and its analytic gradients.
//!
//! For a triple the score is `f = (M(h, r, t) − D_r²)²` where `M` is one of
//!
//! * sphere: `‖φ(h) + φ(r) − φ(t)‖²`, expanded through the kernel as
//!   `K(h,h) + K(t,t) + K(r,r) − 2K(h,t) − 2K(r,t) + 2K(r,h)`;
//! * hyperplane: `K(h + r_head, t + r_tail)`;
//! * absolute hyperplane (linear only): `|h + r_head|ᵀ|t + r_tail|`.
//!
//! The TransE baseline scores `M_sphere` directly, with no `D_r`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::Kernel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Manifold {
    Sphere,
    Hyperplane { absolute: bool },
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Sphere => f.write_str("sphere"),
            Manifold::Hyperplane { absolute: false } => f.write_str("hyperplane"),
            Manifold::Hyperplane { absolute: true } => f.write_str("hyperplane-absolute"),
        }
    }
}

/// Which score a model computes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub manifold: Manifold,
    pub kernel: Kernel,
    /// TransE baseline: score is the (kernel) sphere value itself.
    pub baseline: bool,
}

impl ModelSpec {
    pub const fn sphere(kernel: Kernel) -> Self {
        ModelSpec {
            manifold: Manifold::Sphere,
            kernel,
            baseline: false,
        }
    }

    pub const fn hyperplane(kernel: Kernel, absolute: bool) -> Self {
        ModelSpec {
            manifold: Manifold::Hyperplane { absolute },
            kernel,
            baseline: false,
        }
    }

    pub const fn transe() -> Self {
        ModelSpec {
            manifold: Manifold::Sphere,
            kernel: Kernel::Linear,
            baseline: true,
        }
    }

    pub const fn transe_kernel(kernel: Kernel) -> Self {
        ModelSpec {
            manifold: Manifold::Sphere,
            kernel,
            baseline: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        match self.manifold {
            Manifold::Hyperplane { absolute: true } if !self.kernel.is_linear() => {
                Err(Error::Config(
                    "the absolute hyperplane is only defined for the linear kernel".into(),
                ))
            }
            Manifold::Hyperplane { .. } if self.baseline => Err(Error::Config(
                "the TransE baseline uses the sphere manifold".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Hyperplane models carry a second relation matrix (`r_tail`).
    pub fn has_tail_relation(&self) -> bool {
        matches!(self.manifold, Manifold::Hyperplane { .. })
    }

    pub fn uses_manifold_param(&self) -> bool {
        !self.baseline
    }

    #[inline]
    pub fn manifold_value(&self, v: &TripleVectors<'_>) -> f64 {
        match self.manifold {
            Manifold::Sphere => sphere_value(&self.kernel, v.head, v.relation, v.tail),
            Manifold::Hyperplane { absolute } => hyperplane_value(
                &self.kernel,
                v.head,
                v.relation,
                v.tail,
                v.tail_relation(),
                absolute,
            ),
        }
    }

    #[inline]
    pub fn score_vectors(&self, v: &TripleVectors<'_>) -> f64 {
        let m = self.manifold_value(v);
        if self.baseline {
            m
        } else {
            let residual = m - v.manifold_param * v.manifold_param;
            residual * residual
        }
    }

    /// Writes `∂f/∂·` for every participating vector into `out` and returns `f`.
    pub fn score_gradients_vectors(&self, v: &TripleVectors<'_>, out: &mut GradientBundle) -> f64 {
        out.resize(v.head.len(), self.has_tail_relation());
        let m = match self.manifold {
            Manifold::Sphere => sphere_gradients(&self.kernel, v.head, v.relation, v.tail, out),
            Manifold::Hyperplane { absolute } => hyperplane_gradients(
                &self.kernel,
                v.head,
                v.relation,
                v.tail,
                v.tail_relation(),
                absolute,
                out,
            ),
        };
        if self.baseline {
            out.manifold_param = 0.0;
            return m;
        }
        let rho = v.manifold_param;
        let residual = m - rho * rho;
        let outer = 2.0 * residual;
        out.scale(outer);
        out.manifold_param = -outer * 2.0 * rho;
        residual * residual
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.baseline {
            write!(f, "transe/{}", self.kernel)
        } else {
            write!(f, "{}/{}", self.manifold, self.kernel)
        }
    }
}

/// Borrowed parameter rows for one triple.
#[derive(Debug, Clone, Copy)]
pub struct TripleVectors<'a> {
    pub head: &'a [f64],
    /// `r` for the sphere, `r_head` for the hyperplane.
    pub relation: &'a [f64],
    pub relation_tail: Option<&'a [f64]>,
    pub tail: &'a [f64],
    /// Unconstrained `D_r`; enters the score as `D_r²`.
    pub manifold_param: f64,
}

impl<'a> TripleVectors<'a> {
    fn tail_relation(&self) -> &'a [f64] {
        self.relation_tail.expect("hyperplane scoring needs r_tail")
    }
}

/// Partial derivatives of one triple's score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientBundle {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    /// Empty unless the manifold has a tail relation vector.
    pub relation_tail: Vec<f64>,
    pub tail: Vec<f64>,
    pub manifold_param: f64,
}

impl GradientBundle {
    pub fn new(dim: usize, tail_relation: bool) -> Self {
        let mut g = GradientBundle::default();
        g.resize(dim, tail_relation);
        g
    }

    fn resize(&mut self, dim: usize, tail_relation: bool) {
        self.head.resize(dim, 0.0);
        self.relation.resize(dim, 0.0);
        self.tail.resize(dim, 0.0);
        self.relation_tail
            .resize(if tail_relation { dim } else { 0 }, 0.0);
    }

    fn scale(&mut self, s: f64) {
        for x in self
            .head
            .iter_mut()
            .chain(&mut self.relation)
            .chain(&mut self.relation_tail)
            .chain(&mut self.tail)
        {
            *x *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.manifold_param.is_finite()
            && self
                .head
                .iter()
                .chain(&self.relation)
                .chain(&self.relation_tail)
                .chain(&self.tail)
                .all(|x| x.is_finite())
    }
}

/// The six-term kernel expansion of `‖φ(h) + φ(r) − φ(t)‖²`, evaluated
/// literally for every kernel.
pub fn kernel_sphere_expansion(kernel: &Kernel, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    kernel.eval(h, h) + kernel.eval(t, t) + kernel.eval(r, r)
        - 2.0 * kernel.eval(h, t)
        - 2.0 * kernel.eval(r, t)
        + 2.0 * kernel.eval(r, h)
}

#[inline]
fn sphere_value(kernel: &Kernel, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| {
                let e = h + r - t;
                e * e
            })
            .sum(),
        _ => kernel_sphere_expansion(kernel, h, r, t),
    }
}

fn check_dims(lens: &[usize]) -> Result<()> {
    let first = lens[0];
    match lens.iter().find(|&&l| l != first) {
        Some(&other) => Err(Error::DimensionMismatch {
            left: first,
            right: other,
        }),
        None => Ok(()),
    }
}

/// Sphere manifold value `M(h, r, t)`.
pub fn manifold_sphere(h: &[f64], r: &[f64], t: &[f64], kernel: &Kernel) -> Result<f64> {
    check_dims(&[h.len(), r.len(), t.len()])?;
    kernel.validate()?;
    Ok(sphere_value(kernel, h, r, t))
}

/// Hyperplane manifold value `M(h, r_head, t, r_tail)`.
pub fn manifold_hyperplane(
    h: &[f64],
    r_head: &[f64],
    t: &[f64],
    r_tail: &[f64],
    kernel: &Kernel,
    absolute: bool,
) -> Result<f64> {
    check_dims(&[h.len(), r_head.len(), t.len(), r_tail.len()])?;
    ModelSpec::hyperplane(*kernel, absolute).validate()?;
    Ok(hyperplane_value(kernel, h, r_head, t, r_tail, absolute))
}

#[inline]
fn hyperplane_value(
    kernel: &Kernel,
    h: &[f64],
    rh: &[f64],
    t: &[f64],
    rt: &[f64],
    absolute: bool,
) -> f64 {
    let pairs = h
        .iter()
        .zip(rh)
        .zip(t.iter().zip(rt))
        .map(|((h, rh), (t, rt))| (h + rh, t + rt));
    match *kernel {
        Kernel::Linear if absolute => pairs.map(|(u, v)| u.abs() * v.abs()).sum(),
        Kernel::Linear => pairs.map(|(u, v)| u * v).sum(),
        Kernel::Gaussian { sigma } => {
            let d2: f64 = pairs.map(|(u, v)| (u - v) * (u - v)).sum();
            (-d2 / (sigma * sigma)).exp()
        }
        Kernel::Polynomial { degree, offset } => {
            let inner: f64 = pairs.map(|(u, v)| u * v).sum();
            (inner + offset).powi(degree as i32)
        }
    }
}

/// Fills `out` with `∂M/∂·` and returns `M`.
fn sphere_gradients(
    kernel: &Kernel,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    out: &mut GradientBundle,
) -> f64 {
    if let Kernel::Linear = kernel {
        let mut m = 0.0;
        for i in 0..h.len() {
            let e = h[i] + r[i] - t[i];
            m += e * e;
            out.head[i] = 2.0 * e;
            out.relation[i] = 2.0 * e;
            out.tail[i] = -2.0 * e;
        }
        return m;
    }
    let (khh, sh) = kernel.self_coefficient(h);
    let (ktt, st) = kernel.self_coefficient(t);
    let (krr, sr) = kernel.self_coefficient(r);
    let (kht, a_ht, b_ht) = kernel.grad_coefficients(h, t);
    let (krt, a_rt, b_rt) = kernel.grad_coefficients(r, t);
    let (krh, a_rh, b_rh) = kernel.grad_coefficients(r, h);
    // ∂K(a,b)/∂a = α a + β b and ∂K(a,b)/∂b = α b + β a.
    for i in 0..h.len() {
        let (hi, ri, ti) = (h[i], r[i], t[i]);
        out.head[i] = sh * hi - 2.0 * (a_ht * hi + b_ht * ti) + 2.0 * (a_rh * hi + b_rh * ri);
        out.tail[i] = st * ti - 2.0 * (a_ht * ti + b_ht * hi) - 2.0 * (a_rt * ti + b_rt * ri);
        out.relation[i] = sr * ri - 2.0 * (a_rt * ri + b_rt * ti) + 2.0 * (a_rh * ri + b_rh * hi);
    }
    khh + ktt + krr - 2.0 * kht - 2.0 * krt + 2.0 * krh
}

fn hyperplane_gradients(
    kernel: &Kernel,
    h: &[f64],
    rh: &[f64],
    t: &[f64],
    rt: &[f64],
    absolute: bool,
    out: &mut GradientBundle,
) -> f64 {
    let d = h.len();
    let u = |i: usize| h[i] + rh[i];
    let v = |i: usize| t[i] + rt[i];
    let (m, alpha, beta) = match *kernel {
        Kernel::Linear if absolute => {
            let mut m = 0.0;
            for i in 0..d {
                let (ui, vi) = (u(i), v(i));
                m += ui.abs() * vi.abs();
                out.head[i] = sign(ui) * vi.abs();
                out.tail[i] = sign(vi) * ui.abs();
            }
            out.relation.copy_from_slice(&out.head);
            out.relation_tail.copy_from_slice(&out.tail);
            return m;
        }
        Kernel::Linear => ((0..d).map(|i| u(i) * v(i)).sum(), 0.0, 1.0),
        Kernel::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            let d2: f64 = (0..d).map(|i| (u(i) - v(i)) * (u(i) - v(i))).sum();
            let k = (-d2 / s2).exp();
            (k, -2.0 * k / s2, 2.0 * k / s2)
        }
        Kernel::Polynomial { degree, offset } => {
            let base: f64 = (0..d).map(|i| u(i) * v(i)).sum::<f64>() + offset;
            let p = degree as i32;
            (base.powi(p), 0.0, f64::from(degree) * base.powi(p - 1))
        }
    };
    for i in 0..d {
        let (ui, vi) = (u(i), v(i));
        out.head[i] = alpha * ui + beta * vi;
        out.tail[i] = alpha * vi + beta * ui;
    }
    out.relation.copy_from_slice(&out.head);
    out.relation_tail.copy_from_slice(&out.tail);
    m
}

/// Subgradient sign with `sign(0) = 0`.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

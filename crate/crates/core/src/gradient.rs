//! X-partial gradients of the structural function, symbolic where possible.

use serde::Serialize;

use crate::error::PeaceError;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientKind {
    Symbolic,
    FiniteDifference,
}

/// Gradient of `g` with respect to its first `nx` variables.
#[derive(Debug, Clone)]
pub struct Gradient {
    g: Expr,
    partials: Vec<Option<Expr>>,
}

/// Runs `f` on `x ++ z` without touching the heap for small inputs.
#[inline]
pub fn with_xz<R>(x: &[f64], z: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
    let n = x.len() + z.len();
    if n <= 16 {
        let mut buf = [0.0; 16];
        buf[..x.len()].copy_from_slice(x);
        buf[x.len()..n].copy_from_slice(z);
        f(&buf[..n])
    } else {
        let mut v = Vec::with_capacity(n);
        v.extend_from_slice(x);
        v.extend_from_slice(z);
        f(&v)
    }
}

impl Gradient {
    pub fn new(g: &Expr, nx: usize) -> Self {
        let partials = g.vars()[..nx]
            .iter()
            .map(|v| match g.differentiate(v) {
                Ok(d) => Some(d),
                Err(PeaceError::NonDifferentiable { .. }) => None,
                Err(e) => panic!("differentiating a declared variable failed: {e}"),
            })
            .collect();
        Gradient { g: g.clone(), partials }
    }

    pub fn nx(&self) -> usize {
        self.partials.len()
    }

    pub fn kind(&self) -> GradientKind {
        if self.partials.iter().all(Option::is_some) {
            GradientKind::Symbolic
        } else {
            GradientKind::FiniteDifference
        }
    }

    pub fn partial_exprs(&self) -> &[Option<Expr>] {
        &self.partials
    }

    /// True if any partial can vary with a variable at index `>= nx`.
    pub fn depends_on_z(&self) -> bool {
        let nv = self.g.vars().len();
        let nx = self.nx();
        self.partials.iter().any(|p| match p {
            Some(e) => (nx..nv).any(|i| e.depends_on(i)),
            None => (nx..nv).any(|i| self.g.depends_on(i)),
        })
    }

    /// `∂g/∂x_i` at `xz`; central differences with step `1e-5 (1 + |x_i|)`
    /// when the symbolic form is unavailable.
    #[inline]
    pub fn partial(&self, i: usize, xz: &[f64]) -> f64 {
        match &self.partials[i] {
            Some(e) => e.eval(xz),
            None => {
                let h = 1e-5 * (1.0 + xz[i].abs());
                let mut buf = xz.to_vec();
                buf[i] = xz[i] + h;
                let up = self.g.eval(&buf);
                buf[i] = xz[i] - h;
                let dn = self.g.eval(&buf);
                (up - dn) / (2.0 * h)
            }
        }
    }

    #[inline]
    pub fn norm(&self, xz: &[f64]) -> f64 {
        if self.partials.len() == 1 {
            return self.partial(0, xz).abs();
        }
        (0..self.nx()).map(|i| self.partial(i, xz).powi(2)).sum::<f64>().sqrt()
    }

    pub fn eval_into(&self, xz: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.partial(i, xz);
        }
    }
}

//! Built-in worked examples with closed-form answers.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::continuous::peace;
use crate::discrete::grid_refine_peace;
use crate::error::{PeaceError, Result};
use crate::model::{Degree, DiscreteGrid, DomainBox, StructuralModel};

pub const EXAMPLES: [&str; 5] = ["uniform", "newton", "joint", "linear-product", "dis-con"];

/// `∫ N(x; μ, σ²)^{2d} dx = 1 / (√d 2^d π^{d-1/2} σ^{2d-1})`.
pub fn gaussian_power_integral(sigma: f64, d: f64) -> f64 {
    1.0 / (d.sqrt() * 2f64.powf(d) * PI.powf(d - 0.5) * sigma.powf(2.0 * d - 1.0))
}

/// Effect of the applied force on acceleration, `A = (F - F0) / m`.
pub fn newton_closed_form(m: f64, sigma: f64, d: f64) -> f64 {
    gaussian_power_integral(sigma, d) / m
}

/// Joint effect of `(F, F0)` on `A`.
pub fn joint_closed_form(m: f64, sigma: f64, sigma0: f64, d: f64) -> f64 {
    1.0 / (m * 2f64.powf(2.0 * d - 0.5) * d * PI.powf(2.0 * d - 1.0) * (sigma * sigma0).powf(2.0 * d - 1.0))
}

/// `4^d Π(n_i - 1) |α| / (Π n_i)^{2d}` for `Y = Xα` with X uniform on
/// `{1..n_1} × … × {1..n_m}`.
pub fn uniform_closed_form(ns: &[usize], alpha: &[f64], d: f64) -> f64 {
    let cells: f64 = ns.iter().map(|&n| (n - 1) as f64).product();
    let total: f64 = ns.iter().map(|&n| n as f64).product();
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    4f64.powf(d) * cells * norm / total.powf(2.0 * d)
}

fn gaussian(var: &str, mu: f64, sigma: f64) -> String {
    let s2 = sigma * sigma;
    format!("exp(-({var} - ({mu}))^2/(2*{s2}))/sqrt(2*{PI}*{s2})")
}

fn from_json(v: serde_json::Value) -> StructuralModel {
    StructuralModel::from_json_value(&v, Path::new(".")).expect("built-in model is valid")
}

/// `A = (F - F0)/m` with `F ~ N(10, σ²)` independent of `F0 ~ N(1, 0.05²)`;
/// the effect of F given F0, without the `4^d` factor.
pub fn newton_model(m: f64, sigma: f64) -> StructuralModel {
    from_json(serde_json::json!({
        "name": "newton",
        "x_vars": ["F"],
        "z_vars": ["F0"],
        "g_in": format!("(F - F0)/{m}"),
        "density": gaussian("F", 10.0, sigma),
        "domain": {"F": ["-inf", "inf"], "F0": ["-inf", "inf"]},
        "z_dist": gaussian("F0", 1.0, 0.05),
        "normalizer": "none",
    }))
}

/// Joint cause `(F, F0)` of `A = (F - F0)/m` with independent Gaussians.
pub fn joint_model(m: f64, sigma: f64, sigma0: f64) -> StructuralModel {
    from_json(serde_json::json!({
        "name": "joint",
        "x_vars": ["F", "F0"],
        "g_in": format!("(F - F0)/{m}"),
        "density": format!("{} * {}", gaussian("F", 10.0, sigma), gaussian("F0", 1.0, sigma0)),
        "domain": {"F": ["-inf", "inf"], "F0": ["-inf", "inf"]},
    }))
}

/// `Y = Σ α_i X_i` with X uniform on `{1..n_i}` per axis.
pub fn uniform_discrete_model(ns: &[usize], alpha: &[f64]) -> Result<StructuralModel> {
    if ns.len() != alpha.len() || ns.iter().any(|&n| n < 1) {
        return Err(PeaceError::InvalidArgument(
            "one coefficient and a positive size per axis".into(),
        ));
    }
    let supports: Vec<Vec<f64>> = ns.iter().map(|&n| (1..=n).map(|k| k as f64).collect()).collect();
    let p = 1.0 / ns.iter().map(|&n| n as f64).product::<f64>();
    let a = alpha.to_vec();
    let grid = DiscreteGrid::from_fn(supports, |_| p, move |x| x.iter().zip(&a).map(|(x, a)| x * a).sum())?;
    let names: Vec<String> = (1..=ns.len()).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    StructuralModel::discrete(&refs, grid)
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleCheck {
    pub label: String,
    pub expected: f64,
    pub computed: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ExampleCheck {
    pub fn new(label: impl Into<String>, expected: f64, computed: f64, tol: f64) -> Self {
        let rel_err = if expected == 0.0 {
            computed.abs()
        } else {
            ((computed - expected) / expected).abs()
        };
        ExampleCheck {
            label: label.into(),
            expected,
            computed,
            rel_err,
            tol,
            pass: rel_err <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub value: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub name: String,
    pub checks: Vec<ExampleCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub convergence: Vec<ConvergenceRow>,
}

impl ExampleReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for ExampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "example: {}", self.name)?;
        if !self.convergence.is_empty() {
            writeln!(f, "{:>8}  {:>18}  {:>10}", "cells", "value", "rel_err")?;
            for r in &self.convergence {
                writeln!(f, "{:>8}  {:>18.12}  {:>10.3e}", r.cells, r.value, r.rel_err)?;
            }
        }
        for c in &self.checks {
            writeln!(
                f,
                "{}: expected {:.12}, computed {:.12}, rel_err {:.3e} (tol {:.1e}) {}",
                c.label,
                c.expected,
                c.computed,
                c.rel_err,
                c.tol,
                if c.pass { "PASS" } else { "FAIL" }
            )?;
        }
        write!(f, "result: {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

fn deg(d: f64) -> Degree {
    Degree::new(d).expect("built-in degree is valid")
}

fn uniform() -> Result<ExampleReport> {
    let cases: [(&[usize], &[f64], f64); 3] = [
        (&[2], &[1.0], 0.0),
        (&[3, 4], &[2.0, -1.0], 0.5),
        (&[5, 2, 3], &[1.5, -0.5, 2.0], 1.0),
    ];
    let mut checks = Vec::new();
    for (ns, alpha, d) in cases {
        let m = uniform_discrete_model(ns, alpha)?;
        let v = peace(&m, deg(d))?.value;
        checks.push(ExampleCheck::new(
            format!("n={ns:?} alpha={alpha:?} d={d}"),
            uniform_closed_form(ns, alpha, d),
            v,
            1e-12,
        ));
    }
    Ok(ExampleReport {
        name: "uniform".into(),
        checks,
        convergence: vec![],
    })
}

fn newton() -> Result<ExampleReport> {
    let m = newton_model(1.0, 0.1);
    let mut checks = Vec::new();
    for d in [0.25, 0.5, 1.0] {
        let v = peace(&m, deg(d))?.value;
        checks.push(ExampleCheck::new(
            format!("m=1 sigma=0.1 d={d}"),
            newton_closed_form(1.0, 0.1, d),
            v,
            1e-4,
        ));
    }
    Ok(ExampleReport {
        name: "newton".into(),
        checks,
        convergence: vec![],
    })
}

fn joint() -> Result<ExampleReport> {
    let m = joint_model(1.0, 0.1, 0.05);
    let v = peace(&m, deg(1.0))?.value;
    Ok(ExampleReport {
        name: "joint".into(),
        checks: vec![ExampleCheck::new(
            "m=1 sigma=0.1 sigma0=0.05 d=1",
            joint_closed_form(1.0, 0.1, 0.05, 1.0),
            v,
            1e-3,
        )],
        convergence: vec![],
    })
}

fn linear_product() -> Result<ExampleReport> {
    let (a1, a2) = (1.5, -2.0);
    let (s1, s2) = (0.5, 0.8);
    let d = 0.75;
    let single = |var: &str, a: f64, mu: f64, s: f64| {
        from_json(serde_json::json!({
            "x_vars": [var],
            "g_in": format!("({a})*{var}"),
            "density": gaussian(var, mu, s),
            "domain": {var: ["-inf", "inf"]},
        }))
    };
    let both = from_json(serde_json::json!({
        "x_vars": ["x1", "x2"],
        "g_in": format!("({a1})*x1 + ({a2})*x2"),
        "density": format!("{} * {}", gaussian("x1", 0.0, s1), gaussian("x2", 0.3, s2)),
        "domain": {"x1": ["-inf", "inf"], "x2": ["-inf", "inf"]},
    }));
    let p1 = peace(&single("x1", a1, 0.0, s1), deg(d))?.value;
    let p2 = peace(&single("x2", a2, 0.3, s2), deg(d))?.value;
    let joint = peace(&both, deg(d))?.value;
    let norm = (a1 * a1 + a2 * a2).sqrt();
    let checks = vec![
        ExampleCheck::new("X1 alone", a1.abs() * gaussian_power_integral(s1, d), p1, 1e-6),
        ExampleCheck::new("X2 alone", a2.abs() * gaussian_power_integral(s2, d), p2, 1e-6),
        ExampleCheck::new(
            "joint = |alpha| * product / |a1 a2|",
            norm * p1 * p2 / (a1 * a2).abs(),
            joint,
            1e-6,
        ),
    ];
    Ok(ExampleReport {
        name: "linear-product".into(),
        checks,
        convergence: vec![],
    })
}

fn dis_con() -> Result<ExampleReport> {
    let m = StructuralModel::continuous(&["x1"], "x1", "2*x1", DomainBox::unit(1))?;
    let d = deg(1.0);
    let exact = 4.0 / 3.0;
    let res: Vec<usize> = (2..=10).map(|k| 1usize << k).collect();
    let rows = grid_refine_peace(&m, &res, d)?;
    let convergence: Vec<ConvergenceRow> = rows
        .iter()
        .map(|&(cells, value)| ConvergenceRow {
            cells,
            value,
            rel_err: ((value - exact) / exact).abs(),
        })
        .collect();
    let last = rows.last().expect("non-empty").1;
    let mut checks = vec![ExampleCheck::new("g=x f=2x d=1 at 1024 cells", exact, last, 1e-2)];
    let plane = StructuralModel::continuous(&["x", "y"], "x + y", "1", DomainBox::unit(2))?;
    for (cells, v) in grid_refine_peace(&plane, &[2, 4, 8, 16, 32], d)? {
        checks.push(ExampleCheck::new(
            format!("g=x+y uniform at {cells} cells"),
            2f64.sqrt(),
            v,
            1e-12,
        ));
    }
    Ok(ExampleReport {
        name: "dis-con".into(),
        checks,
        convergence,
    })
}

/// Runs a named example; unknown names are an error.
pub fn run_example(name: &str) -> Result<ExampleReport> {
    match name {
        "uniform" => uniform(),
        "newton" => newton(),
        "joint" => joint(),
        "linear-product" => linear_product(),
        "dis-con" => dis_con(),
        other => Err(PeaceError::InvalidArgument(format!(
            "unknown example `{other}`; available: {}",
            EXAMPLES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_at_reference_parameters() {
        assert!((newton_closed_form(1.0, 0.1, 1.0) - 2.820947917738781).abs() < 1e-12);
        assert!((joint_closed_form(1.0, 0.1, 0.05, 1.0) - 22.507907903927652).abs() < 1e-9);
        assert_eq!(uniform_closed_form(&[2], &[1.0], 0.0), 1.0);
    }

    #[test]
    fn every_example_passes() {
        for name in EXAMPLES {
            let r = run_example(name).unwrap();
            assert!(r.pass(), "{r}");
        }
        assert!(run_example("nosuch").is_err());
    }
}

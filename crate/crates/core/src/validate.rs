//! Numeric validation of a loaded model.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expect::PMF_TOL;
use crate::gradient::{with_xz, Gradient, GradientKind};
use crate::model::{ConditionalDensity, DensitySpec, DomainBox, StructuralModel, ZDistribution};
use crate::quad::{integrate_box, QuadratureSpec};
use crate::truncate::truncate_weight;

/// Conditioning values probed for continuous models.
pub const Z_PROBES: usize = 5;
/// Interior points sampled per box and probe for sign and domain checks.
pub const POINT_PROBES: usize = 256;
pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const ESTIMATED_NORMALIZATION_TOL: f64 = 0.02;
const MAX_LISTED: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationCheck {
    pub z: Vec<f64>,
    pub integral: f64,
    /// `|integral - 1|`.
    pub residual: f64,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub name: String,
    /// `None` for discrete models.
    pub gradient: Option<GradientKind>,
    pub normalization: Vec<NormalizationCheck>,
    /// Points where the density was negative.
    pub negative_density: Vec<Vec<f64>>,
    /// ln/sqrt arguments outside their domain.
    pub domain_violations: Vec<String>,
    /// Structural problems and failed computations.
    pub errors: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
            && self.negative_density.is_empty()
            && self.domain_violations.is_empty()
            && self.normalization.iter().all(|n| n.ok)
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["ok"] = serde_json::Value::Bool(self.ok());
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "model: {}",
            if self.name.is_empty() { "(unnamed)" } else { &self.name }
        )?;
        match self.gradient {
            Some(GradientKind::Symbolic) => writeln!(f, "gradient: symbolic")?,
            Some(GradientKind::FiniteDifference) => writeln!(f, "gradient: finite-difference")?,
            None => writeln!(f, "gradient: n/a (discrete)")?,
        }
        for n in &self.normalization {
            writeln!(
                f,
                "normalization at z={:?}: integral {:.9}, residual {:.3e} [{}]",
                n.z,
                n.integral,
                n.residual,
                if n.ok { "ok" } else { "FAIL" }
            )?;
        }
        for p in &self.negative_density {
            writeln!(f, "negative density at {p:?}")?;
        }
        for v in &self.domain_violations {
            writeln!(f, "domain violation: {v}")?;
        }
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        write!(f, "status: {}", if self.ok() { "valid" } else { "INVALID" })
    }
}

fn probe_zs(model: &StructuralModel, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, String> {
    Ok(match &model.z_dist {
        ZDistribution::None => vec![vec![]],
        ZDistribution::Discrete { values, .. } => {
            if values.len() <= Z_PROBES {
                values.clone()
            } else {
                let idx = rand::seq::index::sample(rng, values.len(), Z_PROBES).into_vec();
                idx.into_iter().map(|i| values[i].clone()).collect()
            }
        }
        ZDistribution::Samples(s) => {
            if s.is_empty() {
                return Err("z sample list is empty".into());
            }
            (0..Z_PROBES.min(s.len()))
                .map(|_| s[rng.gen_range(0..s.len())].clone())
                .collect()
        }
        ZDistribution::Density { density, domain } => {
            let fz = |z: &[f64]| density.eval(z).max(0.0);
            let b = truncate_weight(&fz, domain, &model.trunc)
                .map_err(|e| e.to_string())?
                .ok_or("z density vanishes everywhere")?;
            let mut out = Vec::new();
            // rejection on f_Z > 0 keeps probes inside the support
            for _ in 0..Z_PROBES * 200 {
                if out.len() == Z_PROBES {
                    break;
                }
                let z: Vec<f64> = b.intervals().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect();
                if fz(&z) > 0.0 {
                    out.push(z);
                }
            }
            if out.is_empty() {
                return Err("no z probe with positive density was found".into());
            }
            out
        }
    })
}

fn sample_box(b: &DomainBox, rng: &mut ChaCha8Rng) -> Vec<f64> {
    b.intervals().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect()
}

/// Checks normalization per probed z, density sign, ln/sqrt domains and the
/// gradient path. Deterministic for a fixed seed.
pub fn validate_model(model: &StructuralModel, seed: u64) -> ValidationReport {
    let mut report = ValidationReport {
        name: model.name.clone().unwrap_or_default(),
        gradient: None,
        normalization: Vec::new(),
        negative_density: Vec::new(),
        domain_violations: Vec::new(),
        errors: Vec::new(),
    };
    if let Err(e) = model.check() {
        report.errors.push(e.to_string());
        return report;
    }
    match &model.density {
        DensitySpec::Discrete(grid) => {
            for (zi, z) in grid.z_values().iter().enumerate() {
                let total: f64 = grid.pmf_table(zi).iter().sum();
                let residual = (total - 1.0).abs();
                report.normalization.push(NormalizationCheck {
                    z: z.clone(),
                    integral: total,
                    residual,
                    tolerance: PMF_TOL,
                    ok: residual <= PMF_TOL,
                });
            }
            check_z_table(model, &mut report);
        }
        DensitySpec::Continuous(density) => {
            let g = model.g_in.as_ref().expect("checked above");
            report.gradient = Some(Gradient::new(g, model.nx()).kind());
            check_z_table(model, &mut report);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let zs = match probe_zs(model, &mut rng) {
                Ok(zs) => zs,
                Err(e) => {
                    report.errors.push(e);
                    return report;
                }
            };
            let tol = match density {
                ConditionalDensity::Estimated(_) => ESTIMATED_NORMALIZATION_TOL,
                ConditionalDensity::Expr(_) => NORMALIZATION_TOL,
            };
            let nx = model.nx();
            for z in &zs {
                let f = |x: &[f64]| with_xz(x, z, |xz| density.eval(xz, nx));
                let fpos = |x: &[f64]| f(x).max(0.0);
                let mut integral = 0.0;
                let mut failed = false;
                for b in &model.x_domain {
                    let bounded = match truncate_weight(&fpos, b, &model.trunc) {
                        Ok(Some(bb)) => bb,
                        Ok(None) => continue,
                        Err(e) => {
                            report.errors.push(format!("z={z:?}: {e}"));
                            failed = true;
                            continue;
                        }
                    };
                    match integrate_box(f, &bounded, &quad_for(model, &bounded)) {
                        Ok(e) => integral += e.value,
                        Err(e) => {
                            report.errors.push(format!("z={z:?}: {e}"));
                            failed = true;
                        }
                    }
                    for _ in 0..POINT_PROBES {
                        let x = sample_box(&bounded, &mut rng);
                        let v = f(&x);
                        let xz: Vec<f64> = x.iter().chain(z).copied().collect();
                        if v < 0.0 && report.negative_density.len() < MAX_LISTED {
                            report.negative_density.push(xz.clone());
                        }
                        if report.domain_violations.len() < MAX_LISTED {
                            if let Some(msg) = g.domain_violation(&xz) {
                                report.domain_violations.push(format!("g_in: {msg}"));
                            }
                            if let ConditionalDensity::Expr(e) = density {
                                if let Some(msg) = e.domain_violation(&xz) {
                                    report.domain_violations.push(format!("density: {msg}"));
                                }
                            }
                        }
                    }
                }
                if !failed {
                    let residual = (integral - 1.0).abs();
                    report.normalization.push(NormalizationCheck {
                        z: z.clone(),
                        integral,
                        residual,
                        tolerance: tol,
                        ok: residual <= tol,
                    });
                }
            }
        }
    }
    report
}

fn quad_for(model: &StructuralModel, b: &DomainBox) -> QuadratureSpec {
    if model.quad.check_budget(b.dim()).is_ok() {
        model.quad
    } else {
        QuadratureSpec::new(8, 2)
    }
}

fn check_z_table(model: &StructuralModel, report: &mut ValidationReport) {
    match &model.z_dist {
        ZDistribution::Discrete { probs, .. } => {
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > PMF_TOL {
                report
                    .errors
                    .push(format!("z table probabilities sum to {total}, not 1"));
            }
        }
        ZDistribution::Samples(s) if s.is_empty() => report.errors.push("z sample list is empty".into()),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(g: &str, f: &str) -> StructuralModel {
        StructuralModel::continuous(&["x1"], g, f, DomainBox::unit(1)).unwrap()
    }

    #[test]
    fn uniform_model_is_valid_and_symbolic() {
        let r = validate_model(&model("x1", "1"), 42);
        assert!(r.ok(), "{r}");
        assert_eq!(r.gradient, Some(GradientKind::Symbolic));
        assert!(r.normalization[0].residual < 1e-12);
    }

    #[test]
    fn unnormalized_density_is_flagged() {
        let r = validate_model(&model("x1", "2"), 42);
        assert!(!r.ok());
        assert!((r.normalization[0].residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn abs_selects_finite_differences() {
        let r = validate_model(&model("abs(x1 - 0.5)", "1"), 42);
        assert_eq!(r.gradient, Some(GradientKind::FiniteDifference));
    }

    #[test]
    fn negative_density_and_bad_log_are_reported() {
        let r = validate_model(&model("ln(x1 - 0.5)", "1"), 1);
        assert!(!r.domain_violations.is_empty());
        let r = validate_model(&model("x1", "4*x1 - 1"), 1);
        assert!(!r.negative_density.is_empty());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = StructuralModel::from_json_str(
            r#"{"x_vars": ["x1"], "z_vars": ["z1"], "g_in": "x1*z1", "density": "1",
                "domain": {"x1": [0, 1]}, "z_dist": "exp(-z1^2/2)/sqrt(2*3.141592653589793)"}"#,
            std::path::Path::new("."),
        )
        .unwrap();
        let a = validate_model(&m, 9);
        let b = validate_model(&m, 9);
        assert_eq!(a, b);
        assert_eq!(a.normalization.len(), Z_PROBES);
        assert!(a.ok(), "{a}");
    }
}

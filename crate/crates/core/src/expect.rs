//! Expectation over the conditioning variables Z.

use rayon::prelude::*;

use crate::error::{PeaceError, Result};
use crate::expr::pow;
use crate::model::ZDistribution;
use crate::quad::{pairwise_sum, Grid, QuadratureSpec};
use crate::truncate::{truncate_weight, TruncationPolicy};

/// Tolerance on the total probability of a discrete Z table.
pub const PMF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    /// Propagated quadrature error of the inner values.
    pub err: f64,
    /// Standard error of the mean (sample path only).
    pub stderr: Option<f64>,
}

/// `E_Z[inner(Z)]` (for `r = 1`), or more generally `∫ inner(z) f_Z(z)^r dz`
/// (`Σ inner(z) P(z)^r` for tables). `inner` returns a value and its error.
pub fn expect_over_z<F>(
    inner: F,
    z_dist: &ZDistribution,
    spec: &QuadratureSpec,
    policy: &TruncationPolicy,
    r: f64,
) -> Result<Expectation>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    if !(r.is_finite() && r >= 0.0) {
        return Err(PeaceError::InvalidArgument(format!(
            "weight exponent r = {r} must be non-negative"
        )));
    }
    match z_dist {
        ZDistribution::None => {
            let (value, err) = inner(&[])?;
            Ok(Expectation {
                value,
                err,
                stderr: None,
            })
        }
        ZDistribution::Discrete { values, probs } => {
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > PMF_TOL {
                return Err(PeaceError::NotNormalized { sum: total });
            }
            let inner_vals = values
                .par_iter()
                .map(|z| inner(z))
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let (mut value, mut err) = (0.0, 0.0);
            for ((v, e), &p) in inner_vals.iter().zip(probs) {
                let w = pow(p, r);
                value += v * w;
                err += e * w;
            }
            Ok(Expectation {
                value,
                err,
                stderr: None,
            })
        }
        ZDistribution::Samples(samples) => {
            if samples.is_empty() {
                return Err(PeaceError::EmptySamples);
            }
            if r != 1.0 {
                return Err(PeaceError::Unsupported(
                    "a weight exponent other than 1 needs a Z density or table, not samples".into(),
                ));
            }
            let vals = samples
                .par_iter()
                .map(|z| inner(z))
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let n = vals.len() as f64;
            let xs: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let mean = pairwise_sum(&xs) / n;
            let var = if vals.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let err = vals.iter().map(|v| v.1).sum::<f64>() / n;
            Ok(Expectation {
                value: mean,
                err,
                stderr: Some((var / n).sqrt()),
            })
        }
        ZDistribution::Density { density, domain } => {
            let fz = |z: &[f64]| density.eval(z).max(0.0);
            let bounded = if domain.is_bounded() {
                domain.clone()
            } else {
                if r == 0.0 {
                    return Err(PeaceError::Unsupported(
                        "r = 0 over an unbounded z domain has no finite weight".into(),
                    ));
                }
                let wz = |z: &[f64]| pow(fz(z), r);
                truncate_weight(&wz, domain, policy)?.ok_or_else(|| PeaceError::TruncationFailed {
                    axis: 0,
                    reason: "z density vanishes on every probed point".into(),
                })?
            };
            spec.validate()?;
            spec.check_budget(bounded.dim())?;
            let bounds: Vec<(f64, f64)> = bounded.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect();
            let grid = Grid::new(&bounds, spec);
            let dim = bounds.len();
            let nodes: Vec<(Vec<f64>, f64)> = (0..grid.len())
                .map(|k| {
                    let mut pt = vec![0.0; dim];
                    let w = grid.node(k, &mut pt);
                    (pt, w)
                })
                .collect();
            let terms = nodes
                .par_iter()
                .map(|(z, w)| {
                    let wz = w * pow(fz(z), r);
                    if wz == 0.0 {
                        return Ok((0.0, 0.0));
                    }
                    let (v, e) = inner(z)?;
                    if !v.is_finite() {
                        return Err(PeaceError::NonFinite { coords: z.clone() });
                    }
                    Ok((wz * v, wz * e))
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let vs: Vec<f64> = terms.iter().map(|t| t.0).collect();
            let es: Vec<f64> = terms.iter().map(|t| t.1).collect();
            Ok(Expectation {
                value: pairwise_sum(&vs),
                err: pairwise_sum(&es),
                stderr: None,
            })
        }
    }
}

/// Integral of `f_Z^r` (or `Σ P^r`), i.e. the expectation of the constant one.
pub fn z_weight_mass(z_dist: &ZDistribution, spec: &QuadratureSpec, policy: &TruncationPolicy, r: f64) -> Result<f64> {
    Ok(expect_over_z(|_| Ok((1.0, 0.0)), z_dist, spec, policy, r)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::DomainBox;

    fn std_normal() -> ZDistribution {
        ZDistribution::Density {
            density: Expr::parse("exp(-z^2/2)/sqrt(2*3.141592653589793)", &["z"]).unwrap(),
            domain: DomainBox::real_space(1),
        }
    }

    fn run(inner: impl Fn(&[f64]) -> f64 + Sync, z: &ZDistribution) -> Result<Expectation> {
        expect_over_z(
            |z| Ok((inner(z), 0.0)),
            z,
            &QuadratureSpec::default(),
            &TruncationPolicy::default(),
            1.0,
        )
    }

    #[test]
    fn constant_has_its_own_expectation() {
        let e = run(|_| 3.5, &std_normal()).unwrap();
        assert!((e.value - 3.5).abs() < 1e-9);
        let table = ZDistribution::Discrete {
            values: vec![vec![0.0], vec![1.0]],
            probs: vec![0.5, 0.5],
        };
        assert_eq!(run(|_| 3.5, &table).unwrap().value, 3.5);
    }

    #[test]
    fn discrete_mean_is_exact() {
        let table = ZDistribution::Discrete {
            values: vec![vec![0.0], vec![1.0]],
            probs: vec![0.5, 0.5],
        };
        assert_eq!(run(|z| z[0], &table).unwrap().value, 0.5);
        let table = ZDistribution::Discrete {
            values: vec![vec![1.0], vec![2.0], vec![7.0]],
            probs: vec![0.2, 0.3, 0.5],
        };
        let want = 1.0 * 0.2 + 2.0 * 0.3 + 7.0 * 0.5;
        assert!((run(|z| z[0], &table).unwrap().value - want).abs() <= 1e-15);
    }

    #[test]
    fn normal_second_moment() {
        let e = run(|z| z[0] * z[0], &std_normal()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-6, "{}", e.value);
    }

    #[test]
    fn samples_report_standard_error() {
        let s = ZDistribution::Samples(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let e = run(|z| z[0], &s).unwrap();
        assert_eq!(e.value, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.stderr.unwrap() - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_samples_and_bad_tables_are_errors() {
        assert!(matches!(
            run(|_| 1.0, &ZDistribution::Samples(vec![])),
            Err(PeaceError::EmptySamples)
        ));
        let table = ZDistribution::Discrete {
            values: vec![vec![0.0], vec![1.0]],
            probs: vec![0.5, 0.6],
        };
        assert!(matches!(run(|_| 1.0, &table), Err(PeaceError::NotNormalized { .. })));
    }

    #[test]
    fn weighted_variants() {
        // r = 0 on a bounded domain is the plain integral
        let unif = ZDistribution::Density {
            density: Expr::parse("0.5", &["z"]).unwrap(),
            domain: DomainBox::from_bounds(&[(0.0, 2.0)]).unwrap(),
        };
        let e = expect_over_z(
            |z| Ok((z[0], 0.0)),
            &unif,
            &QuadratureSpec::default(),
            &TruncationPolicy::default(),
            0.0,
        )
        .unwrap();
        assert!((e.value - 2.0).abs() < 1e-13);
        // ∫ φ(z)^2 dz = 1/(2√π)
        let m = z_weight_mass(
            &std_normal(),
            &QuadratureSpec::default(),
            &TruncationPolicy::default(),
            2.0,
        )
        .unwrap();
        assert!((m - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-9);
        let s = ZDistribution::Samples(vec![vec![1.0]]);
        assert!(expect_over_z(
            |_| Ok((1.0, 0.0)),
            &s,
            &QuadratureSpec::default(),
            &TruncationPolicy::default(),
            2.0
        )
        .is_err());
    }
}

//! Randomized self-checks of the measure-theoretic and structural properties
//! of the engines. Deterministic for a fixed seed.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::continuous::{is_zero_effect, piev, signed_piev, transform_model, Sign};
use crate::discrete::{
    aligned_phi, cube_terms, flux_tv, grid_refine_signed, peace_discrete, phi_peace, random_phi, DifMap,
};
use crate::error::Result;
use crate::model::{Degree, DiscreteGrid, DomainBox, StructuralModel};

/// Deliberate defects used to confirm that the suite detects them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of every mean difference in the grid-refinement engine.
    DifSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidateOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { seed: 42, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub pass: bool,
    /// Largest deviation seen, in the property's own units.
    pub worst: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub properties: Vec<PropertyOutcome>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.properties {
            write!(
                f,
                "{} {:<24} cases={:<4} worst={:.3e} tol={:.1e}",
                if p.pass { "PASS" } else { "FAIL" },
                p.name,
                p.cases,
                p.worst,
                p.tolerance
            )?;
            if let Some(c) = &p.counterexample {
                write!(f, "  counterexample: {c}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "{}",
            if self.pass() {
                "all properties hold"
            } else {
                "property violations found"
            }
        )
    }
}

/// Accumulates per-case deviations for one property.
struct Tally {
    name: &'static str,
    tol: f64,
    cases: usize,
    worst: f64,
    counterexample: Option<String>,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Tally {
            name,
            tol,
            cases: 0,
            worst: 0.0,
            counterexample: None,
        }
    }

    /// Records a case whose deviation should not exceed the tolerance.
    fn case(&mut self, deviation: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        let dev = if deviation.is_nan() { f64::INFINITY } else { deviation };
        if dev > self.worst {
            self.worst = dev;
        }
        if dev > self.tol && self.counterexample.is_none() {
            self.counterexample = Some(describe());
        }
    }

    fn fail(&mut self, msg: String) {
        self.cases += 1;
        self.worst = f64::INFINITY;
        if self.counterexample.is_none() {
            self.counterexample = Some(msg);
        }
    }

    fn finish(self) -> PropertyOutcome {
        PropertyOutcome {
            name: self.name,
            cases: self.cases,
            pass: self.counterexample.is_none(),
            worst: self.worst,
            tolerance: self.tol,
            counterexample: self.counterexample,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn deg(d: f64) -> Degree {
    Degree::new(d).expect("valid degree")
}

/// A random smooth g on one or two variables with a non-trivial gradient.
fn random_g(rng: &mut ChaCha8Rng, vars: &[&str]) -> String {
    vars.iter()
        .map(|v| {
            let (a, b, c) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
            );
            format!("({a})*{v} + ({b})*{v}^2 + ({c})*sin(3*{v})")
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn one_d(g: &str, f: &str, boxes: Vec<DomainBox>) -> Result<StructuralModel> {
    let mut m = StructuralModel::continuous(&["x1"], g, f, DomainBox::unit(1))?;
    m.x_domain = boxes;
    Ok(m)
}

fn interval(lo: f64, hi: f64) -> DomainBox {
    DomainBox::from_bounds(&[(lo, hi)]).expect("ordered bounds")
}

fn additivity(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("additivity", 1e-9);
    for _ in 0..10 {
        let g = random_g(rng, &["x1"]);
        let c = rng.gen_range(0.1..0.9);
        let d = deg(rng.gen_range(0.0..1.5));
        let r = (|| -> Result<(f64, f64)> {
            let union = piev(
                &one_d(&g, "1 + 0.5*x1", vec![interval(0.0, c), interval(c, 1.0)])?,
                &[],
                d,
            )?
            .value;
            let a = piev(&one_d(&g, "1 + 0.5*x1", vec![interval(0.0, c)])?, &[], d)?.value;
            let b = piev(&one_d(&g, "1 + 0.5*x1", vec![interval(c, 1.0)])?, &[], d)?.value;
            Ok((union, a + b))
        })();
        match r {
            Ok((u, s)) => t.case(rel(u, s), || format!("g={g} split={c}: {u} vs {s}")),
            Err(e) => t.fail(format!("g={g}: {e}")),
        }
    }
    t.finish()
}

fn monotonicity(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("monotonicity", 1e-12);
    for _ in 0..10 {
        let g = random_g(rng, &["x1"]);
        let (a, b) = (rng.gen_range(0.0..0.5), rng.gen_range(0.5..1.0));
        let d = deg(rng.gen_range(0.0..1.5));
        let r = (|| -> Result<(f64, f64)> {
            let sub = piev(&one_d(&g, "1", vec![interval(a, b)])?, &[], d)?.value;
            let full = piev(&one_d(&g, "1", vec![interval(0.0, 1.0)])?, &[], d)?.value;
            Ok((sub, full))
        })();
        match r {
            Ok((s, f)) => t.case((s - f).max(0.0) / f.max(1e-300), || {
                format!("g={g} sub=({a},{b}): {s} > {f}")
            }),
            Err(e) => t.fail(format!("g={g}: {e}")),
        }
    }
    t.finish()
}

fn subadditivity(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("subadditivity", 1e-12);
    for _ in 0..10 {
        let g = random_g(rng, &["x1"]);
        let (a, b) = (rng.gen_range(0.2..0.5), rng.gen_range(0.5..0.8));
        let d = deg(rng.gen_range(0.0..1.5));
        let r = (|| -> Result<(f64, f64)> {
            let left = piev(&one_d(&g, "1", vec![interval(0.0, b)])?, &[], d)?.value;
            let right = piev(&one_d(&g, "1", vec![interval(a, 1.0)])?, &[], d)?.value;
            let whole = piev(&one_d(&g, "1", vec![interval(0.0, 1.0)])?, &[], d)?.value;
            Ok((whole, left + right))
        })();
        match r {
            Ok((w, s)) => t.case((w - s).max(0.0) / s.max(1e-300), || {
                format!("g={g} overlap=({a},{b}): {w} > {s}")
            }),
            Err(e) => t.fail(format!("g={g}: {e}")),
        }
    }
    t.finish()
}

fn isometry(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("isometry", 1e-6);
    let th = PI / 6.0;
    let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    for _ in 0..3 {
        let (a1, a2) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let g = format!("({a1})*x1 + ({a2})*x2 + 0.3*x1*x2");
        let f = "exp(-(x1^2/0.5 + x2^2/0.32))/(2*3.141592653589793*0.4)";
        let d = deg(rng.gen_range(0.25..1.0));
        let r = (|| -> Result<(f64, f64)> {
            let mut m = StructuralModel::continuous(&["x1", "x2"], &g, f, DomainBox::real_space(2))?;
            m.x_domain = vec![DomainBox::real_space(2)];
            let w = transform_model(&m, &rot, &[0.0, 0.0])?;
            Ok((piev(&m, &[], d)?.value, piev(&w, &[], d)?.value))
        })();
        match r {
            Ok((x, w)) => t.case(rel(w, x), || format!("g={g}: rotated {w} vs {x}")),
            Err(e) => t.fail(format!("g={g}: {e}")),
        }
    }
    t.finish()
}

fn zero_effect(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("zero-effect", 0.0);
    for _ in 0..5 {
        let c = rng.gen_range(-3.0..3.0);
        let d = deg(rng.gen_range(0.0..1.5));
        let r = (|| -> Result<(f64, bool, bool)> {
            let flat = one_d(&format!("{c}"), "1", vec![interval(0.0, 1.0)])?;
            let sloped = one_d(&format!("{c}*x1 + x1"), "1", vec![interval(0.0, 1.0)])?;
            Ok((
                piev(&flat, &[], d)?.value,
                is_zero_effect(&flat, &[], 0.0)?,
                is_zero_effect(&sloped, &[], 1e-9)?,
            ))
        })();
        match r {
            Ok((v, z1, z2)) => {
                let bad = v.abs() + if z1 { 0.0 } else { 1.0 } + if z2 && c != -1.0 { 1.0 } else { 0.0 };
                t.case(bad, || format!("g={c}: piev {v}, flat zero {z1}, sloped zero {z2}"));
            }
            Err(e) => t.fail(format!("c={c}: {e}")),
        }
    }
    t.finish()
}

fn identity(x: f64) -> f64 {
    x
}

fn negate(x: f64) -> f64 {
    -x
}

fn signed(rng: &mut ChaCha8Rng, map: DifMap) -> (PropertyOutcome, PropertyOutcome) {
    let mut refine = Tally::new("signed-refinement", 1e-2);
    let mut sum = Tally::new("signed-sum", 1e-9);
    for _ in 0..4 {
        // a x^2 + b x with a turning point inside (0, 1) away from the middle
        let a = rng.gen_range(1.0..3.0);
        let b = -a * rng.gen_range(0.2..0.5);
        let g = format!("({a})*x1^2 + ({b})*x1");
        let d = deg(rng.gen_range(0.25..1.0));
        let r = (|| -> Result<[f64; 5]> {
            let m = one_d(&g, "2*x1", vec![interval(0.0, 1.0)])?;
            let total = piev(&m, &[], d)?.value;
            let plus = signed_piev(&m, &[], d, Sign::Plus)?.value;
            let minus = signed_piev(&m, &[], d, Sign::Minus)?.value;
            let gp = grid_refine_signed(&m, &[1024], d, Sign::Plus, map)?[0].1;
            let gm = grid_refine_signed(&m, &[1024], d, Sign::Minus, map)?[0].1;
            Ok([total, plus, minus, gp, gm])
        })();
        match r {
            Ok([total, plus, minus, gp, gm]) => {
                sum.case(rel(plus + minus, total), || {
                    format!("g={g}: {plus} + {minus} vs {total}")
                });
                // scaled by the total so a near-empty half does not dominate
                let dev = ((gp - plus).abs() + (gm - minus).abs()) / total.abs().max(1e-300);
                refine.case(dev, || {
                    format!("g={g}: grid (+{gp}, -{gm}) vs continuous (+{plus}, -{minus})")
                });
            }
            Err(e) => {
                sum.fail(format!("g={g}: {e}"));
                refine.fail(format!("g={g}: {e}"));
            }
        }
    }
    (refine.finish(), sum.finish())
}

/// Random grid with uneven spacing, a normalized PMF and arbitrary g values.
fn random_grid(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<DiscreteGrid> {
    let supports: Vec<Vec<f64>> = shape
        .iter()
        .map(|&n| {
            let mut x = 0.0;
            (0..n)
                .map(|_| {
                    x += rng.gen_range(0.5..2.0);
                    x
                })
                .collect()
        })
        .collect();
    let len: usize = shape.iter().product();
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let pmf: Vec<f64> = raw.iter().map(|p| p / s).collect();
    let g: Vec<f64> = (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect();
    DiscreteGrid::new(supports, vec![], vec![pmf], vec![g])
}

fn random_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dim = rng.gen_range(1..=3);
    (0..dim).map(|_| rng.gen_range(2..=4)).collect()
}

fn discrete_checks(rng: &mut ChaCha8Rng) -> Vec<PropertyOutcome> {
    let mut cs = Tally::new("cauchy-schwarz", 1e-12);
    let mut bound = Tally::new("phi-bound", 1e-12);
    let mut reduction = Tally::new("one-d-reduction", 1e-12);
    let mut perm = Tally::new("axis-permutation", 1e-12);
    let mut tv = Tally::new("degree-zero-flux-tv", 1e-12);
    for _ in 0..10 {
        let shape = random_shape(rng);
        let d = deg(rng.gen_range(0.0..1.5));
        let grid = match random_grid(rng, &shape) {
            Ok(g) => g,
            Err(e) => {
                cs.fail(e.to_string());
                continue;
            }
        };
        let names: Vec<String> = (1..=shape.len()).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let r = (|| -> Result<()> {
            let model = StructuralModel::discrete(&refs, grid.clone())?;
            let closed = peace_discrete(&model, d)?.value;
            let terms = cube_terms(&grid, d, &[])?;
            let aligned = phi_peace(&terms, &aligned_phi(&terms));
            cs.case(rel(aligned, closed), || {
                format!("shape {shape:?}: aligned {aligned} vs {closed}")
            });
            for _ in 0..50 {
                let v = phi_peace(&terms, &random_phi(&terms, rng));
                bound.case((v - closed).max(0.0) / closed.max(1e-300), || {
                    format!("shape {shape:?}: random phi {v} > {closed}")
                });
            }

            let mut p: Vec<usize> = (0..shape.len()).collect();
            p.reverse();
            let permuted = StructuralModel::discrete(&refs, grid.permute_axes(&p)?)?;
            let pv = peace_discrete(&permuted, d)?.value;
            perm.case(rel(pv, closed), || {
                format!("shape {shape:?}: permuted {pv} vs {closed}")
            });

            let d0 = peace_discrete(&model, deg(0.0))?.value;
            let f = flux_tv(&grid, &[])?;
            tv.case(rel(d0, f), || format!("shape {shape:?}: d=0 {d0} vs flux tv {f}"));
            Ok(())
        })();
        if let Err(e) = r {
            cs.fail(format!("shape {shape:?}: {e}"));
        }

        // one axis: Σ 4^d (p_j p_{j-1})^d |g_j - g_{j-1}|
        let n = rng.gen_range(2..=12);
        let r = (|| -> Result<(f64, f64)> {
            let line = random_grid(rng, &[n])?;
            let p = line.pmf_table(0);
            let g = line.g_table(0);
            let direct: f64 = (1..n)
                .map(|j| d.four_pow() * d.pmf_weight(p[j]) * d.pmf_weight(p[j - 1]) * (g[j] - g[j - 1]).abs())
                .sum();
            let v = peace_discrete(&StructuralModel::discrete(&["x1"], line)?, d)?.value;
            Ok((v, direct))
        })();
        match r {
            Ok((v, direct)) => reduction.case(rel(v, direct), || format!("n={n}: {v} vs direct {direct}")),
            Err(e) => reduction.fail(format!("n={n}: {e}")),
        }
    }
    vec![
        cs.finish(),
        bound.finish(),
        reduction.finish(),
        perm.finish(),
        tv.finish(),
    ]
}

fn degree_monotone(rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("degree-monotone", 1e-12);
    for _ in 0..5 {
        let g = random_g(rng, &["x1"]);
        let (d1, d2) = (rng.gen_range(0.0..1.0), rng.gen_range(1.0..2.0));
        let r = (|| -> Result<(f64, f64)> {
            let m = one_d(&g, "0.5 + 0.25*sin(x1)", vec![interval(0.0, 2.0)])?;
            Ok((piev(&m, &[], deg(d1))?.value, piev(&m, &[], deg(d2))?.value))
        })();
        match r {
            Ok((lo, hi)) => t.case((hi - lo).max(0.0) / lo.max(1e-300), || {
                format!("g={g}: d={d2} gives {hi} > d={d1} gives {lo}")
            }),
            Err(e) => t.fail(format!("g={g}: {e}")),
        }
    }
    t.finish()
}

/// Runs every property with an independent stream per property.
pub fn run_property_suite(opts: &ValidateOptions) -> SuiteReport {
    let map: DifMap = match opts.fault {
        Some(Fault::DifSign) => negate,
        None => identity,
    };
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(k));
    let mut properties = vec![
        additivity(&mut stream(1)),
        monotonicity(&mut stream(2)),
        subadditivity(&mut stream(3)),
        isometry(&mut stream(4)),
        zero_effect(&mut stream(5)),
    ];
    let (refine, sum) = signed(&mut stream(6), map);
    properties.push(refine);
    properties.push(sum);
    properties.extend(discrete_checks(&mut stream(7)));
    properties.push(degree_monotone(&mut stream(8)));
    SuiteReport {
        seed: opts.seed,
        properties,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_deterministic() {
        let a = run_property_suite(&ValidateOptions::default());
        assert!(a.pass(), "{a}");
        let b = run_property_suite(&ValidateOptions::default());
        assert_eq!(a.to_string(), b.to_string());
    }

    #[test]
    fn sign_fault_is_detected() {
        let r = run_property_suite(&ValidateOptions {
            seed: 42,
            fault: Some(Fault::DifSign),
        });
        assert!(!r.pass());
        let refine = r.properties.iter().find(|p| p.name == "signed-refinement").unwrap();
        assert!(!refine.pass && refine.counterexample.is_some());
    }
}

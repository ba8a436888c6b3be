//! Fixture models shared by the benchmarks.

use peace_core::builtin::{joint_model, newton_model, uniform_discrete_model};
use peace_core::estimation::SampleTable;
use peace_core::{DomainBox, StructuralModel};

pub fn newton() -> StructuralModel {
    newton_model(1.0, 0.1)
}

pub fn joint() -> StructuralModel {
    joint_model(1.0, 0.1, 0.05)
}

pub fn cubic() -> StructuralModel {
    StructuralModel::continuous(
        &["x"],
        "x^3 + x",
        "1.5707963267948966*sin(3.141592653589793*x)",
        DomainBox::unit(1),
    )
    .expect("valid fixture")
}

/// `n^dim` uniform grid with a linear outcome.
pub fn uniform_grid(n: usize, dim: usize) -> StructuralModel {
    let alpha: Vec<f64> = (1..=dim).map(|i| i as f64 * 0.5).collect();
    uniform_discrete_model(&vec![n; dim], &alpha).expect("valid fixture")
}

/// `Y = 2X + Z + noise` on a deterministic low-discrepancy design.
pub fn linear_samples(n: usize) -> SampleTable {
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let xi = (i as f64 + 0.5) / n as f64;
        let zi = (i as f64 * 0.618_033_988_749_895).fract();
        let noise = 0.1 * ((i as f64 * 0.754_877_666_246_693).fract() - 0.5);
        x.push(xi);
        z.push(zi);
        y.push(2.0 * xi + zi + noise);
    }
    SampleTable::from_columns(vec!["x".into(), "z".into(), "y".into()], vec![x, z, y])
        .and_then(|t| t.select(&["x"], &["z"], Some("y")))
        .expect("valid fixture")
}

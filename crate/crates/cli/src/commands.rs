use std::fmt::Write as _;
use std::path::Path;

use peace_core::discrete::{grid_refine_peace, phi_oracle_discrete, signed_discrete};
use peace_core::model::DensitySpec;
use peace_core::{
    flux_tv, oracle_peace, peace, peace_from_data, peace_from_data_sweep, run_example, run_property_suite,
    signed_peace, tv_ani, tv_classic, validate_model, DataOptions, Degree, Fault, Method, OracleOptions, PeaceError,
    PeaceResult, QuadratureSpec, SampleTable, Sign, StructuralModel, TruncationPolicy, ValidateOptions,
};
use serde_json::json;

use crate::{Command, Common, FaultArg, Format, MethodArg, MethodArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<PeaceError> for CliError {
    fn from(e: PeaceError) -> Self {
        use PeaceError::*;
        let code = match e {
            InvalidDegree(_) | InvalidArgument(_) | Unsupported(_) | Io(_) => EXIT_USAGE,
            Syntax { .. }
            | UnknownIdentifier { .. }
            | Arity { .. }
            | NonDifferentiable { .. }
            | InvalidDomain(_)
            | InvalidModel(_)
            | NotNormalized { .. }
            | Json(_)
            | Csv(_) => EXIT_INVALID,
            _ => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> CliResult<u8> {
    match command {
        Command::Compute {
            model,
            degree,
            method,
            common,
        } => compute(&model, &[degree], &method, &common, false),
        Command::Sweep {
            model,
            degrees,
            method,
            common,
        } => compute(&model, &parse_degrees(&degrees)?, &method, &common, true),
        Command::Signed { model, degree, common } => signed(&model, degree, &common),
        Command::Tv { model, at, common } => tv(&model, &at, &common),
        Command::FromData {
            data,
            x,
            z,
            y,
            degree,
            degrees,
            z_subsample,
            common,
        } => from_data(&data, &x, &z, &y, degree, degrees.as_deref(), z_subsample, &common),
        Command::Validate {
            model,
            inject_fault,
            common,
        } => validate(model.as_deref(), inject_fault, &common),
        Command::Example { name, common } => example(&name, &common),
    }
}

/// Inclusive range `start:stop:step`; a step beyond the range yields `start` alone.
pub fn parse_degrees(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::usage(format!("degree range `{spec}` must look like start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<Vec<f64>>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || start > stop || step <= 0.0 {
        return Err(CliError::usage(format!(
            "degree range `{spec}` needs start <= stop and a positive step"
        )));
    }
    // the small slack keeps `stop` when the division lands just below an integer
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| round12(start + k as f64 * step)).collect())
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn degree(d: f64) -> CliResult<Degree> {
    Degree::new(d).map_err(|e| CliError::usage(e.to_string()))
}

fn emit(common: &Common, text: &str) -> CliResult<()> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match &common.out {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_model(path: &Path, common: &Common) -> CliResult<StructuralModel> {
    if !path.exists() {
        return Err(CliError::usage(format!("model file {} not found", path.display())));
    }
    let mut model = StructuralModel::from_json_file(path)?;
    apply_numerics(&mut model.quad, &mut model.trunc, common)?;
    Ok(model)
}

fn apply_numerics(quad: &mut QuadratureSpec, trunc: &mut TruncationPolicy, common: &Common) -> CliResult<()> {
    if let Some(p) = common.quad_points {
        quad.points = p;
    }
    if let Some(p) = common.quad_panels {
        quad.panels = p;
    }
    if let Some(b) = common.quad_budget {
        quad.budget = b;
    }
    quad.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(eps) = common.trunc_eps {
        *trunc = TruncationPolicy::new(eps).map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

/// Validates the model; on failure the report is written and `Some(exit)` returned.
fn gate(model: &StructuralModel, common: &Common) -> CliResult<Option<u8>> {
    let report = validate_model(model, common.seed);
    if report.ok() {
        return Ok(None);
    }
    let text = match common.format {
        Some(Format::Json) => report.to_json(),
        _ => report.to_string(),
    };
    emit(common, &text)?;
    Ok(Some(EXIT_INVALID))
}

fn is_discrete(model: &StructuralModel) -> bool {
    matches!(model.density, DensitySpec::Discrete(_))
}

fn compute_one(model: &StructuralModel, d: Degree, method: &MethodArgs, seed: u64) -> CliResult<PeaceResult> {
    let discrete = is_discrete(model);
    Ok(match method.method {
        None => peace(model, d)?,
        Some(MethodArg::Continuous) => {
            if discrete {
                return Err(CliError::usage("the continuous method needs a model with a density"));
            }
            peace(model, d)?
        }
        Some(MethodArg::Discrete) => {
            if discrete {
                peace(model, d)?
            } else {
                if method.cells < 2 {
                    return Err(CliError::usage("--cells must be at least 2"));
                }
                let (_, v) = grid_refine_peace(model, &[method.cells], d)?[0];
                PeaceResult::new(v, d, Method::GridRefinement)
            }
        }
        Some(MethodArg::Oracle) => {
            if discrete {
                phi_oracle_discrete(model, d, method.oracle_budget, seed)?
            } else {
                let opts = OracleOptions {
                    knots: method.oracle_knots,
                    sweeps: method.oracle_sweeps,
                    seed,
                };
                oracle_peace(model, d, &opts)?
            }
        }
    })
}

fn compute(path: &Path, degrees: &[f64], method: &MethodArgs, common: &Common, sweep: bool) -> CliResult<u8> {
    let degrees = degrees.iter().map(|&d| degree(d)).collect::<CliResult<Vec<_>>>()?;
    let model = load_model(path, common)?;
    if let Some(code) = gate(&model, common)? {
        return Ok(code);
    }
    let results = degrees
        .iter()
        .map(|&d| compute_one(&model, d, method, common.seed))
        .collect::<CliResult<Vec<_>>>()?;
    let csv = match common.format {
        Some(Format::Csv) => true,
        Some(Format::Json) => false,
        None => sweep,
    };
    let text = if csv {
        let mut s = String::from("d,value,err\n");
        for r in &results {
            writeln!(s, "{},{},{}", r.degree, r.value, r.err_estimate).expect("write to string");
        }
        s
    } else if sweep {
        serde_json::to_string_pretty(&results).expect("results serialize")
    } else {
        results[0].to_json()
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn signed(path: &Path, d: f64, common: &Common) -> CliResult<u8> {
    let d = degree(d)?;
    let model = load_model(path, common)?;
    if let Some(code) = gate(&model, common)? {
        return Ok(code);
    }
    let (plus, minus) = if is_discrete(&model) {
        (
            signed_discrete(&model, d, Sign::Plus)?,
            signed_discrete(&model, d, Sign::Minus)?,
        )
    } else {
        (
            signed_peace(&model, d, Sign::Plus)?,
            signed_peace(&model, d, Sign::Minus)?,
        )
    };
    let total = peace(&model, d)?;
    let text = match common.format {
        Some(Format::Csv) => format!(
            "d,plus,minus,total\n{},{},{},{}",
            d.value(),
            plus.value,
            minus.value,
            total.value
        ),
        _ => serde_json::to_string_pretty(&json!({
            "degree": d.value(),
            "plus": plus,
            "minus": minus,
            "total": total,
        }))
        .expect("results serialize"),
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn tv(path: &Path, at: &[f64], common: &Common) -> CliResult<u8> {
    let model = load_model(path, common)?;
    let grid = match &model.density {
        DensitySpec::Discrete(g) => g,
        DensitySpec::Continuous(_) => return Err(CliError::usage("tv needs a discrete model")),
    };
    if let Some(code) = gate(&model, common)? {
        return Ok(code);
    }
    let flux = flux_tv(grid, at)?;
    let ani = tv_ani(grid, at).ok();
    let classic = tv_classic(grid, at).ok();
    let text = match common.format {
        Some(Format::Csv) => {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            format!("flux_tv,tv_ani,tv_classic\n{flux},{},{}", opt(ani), opt(classic))
        }
        _ => serde_json::to_string_pretty(&json!({
            "flux_tv": flux,
            "tv_ani": ani,
            "tv_classic": classic,
        }))
        .expect("results serialize"),
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn from_data(
    path: &Path,
    x: &[String],
    z: &[String],
    y: &str,
    d: Option<f64>,
    degrees: Option<&str>,
    z_subsample: usize,
    common: &Common,
) -> CliResult<u8> {
    let sweep = degrees.is_some();
    let ds = match degrees {
        Some(spec) => parse_degrees(spec)?,
        None => vec![d.unwrap_or(1.0)],
    };
    let ds = ds.into_iter().map(degree).collect::<CliResult<Vec<_>>>()?;
    if !path.exists() {
        return Err(CliError::usage(format!("data file {} not found", path.display())));
    }
    let table = SampleTable::from_csv_path(path)?.select(x, z, Some(y))?;
    let mut quad = QuadratureSpec::default();
    let mut trunc = TruncationPolicy::default();
    apply_numerics(&mut quad, &mut trunc, common)?;
    let opts = DataOptions {
        z_subsample,
        seed: common.seed,
        quad: (common.quad_points.is_some() || common.quad_panels.is_some()).then_some(quad),
    };
    let csv = match common.format {
        Some(Format::Csv) => true,
        Some(Format::Json) => false,
        None => sweep,
    };
    let text = if sweep || csv {
        let rows = peace_from_data_sweep(&table, &ds, &opts)?;
        if csv {
            let mut s = String::from("d,value,stderr\n");
            for r in &rows {
                let se = r.result.stderr.map(|v| v.to_string()).unwrap_or_default();
                writeln!(s, "{},{},{}", r.result.degree, r.result.value, se).expect("write to string");
            }
            s
        } else {
            let v: Vec<_> = rows.iter().map(|r| &r.result).collect();
            serde_json::to_string_pretty(&v).expect("results serialize")
        }
    } else {
        let r = peace_from_data(&table, ds[0], &opts)?;
        let mut v = serde_json::to_value(&r.result).expect("result serializes");
        v["mean_abs_gradient"] = json!(r.mean_abs_gradient);
        v["assumptions"] = json!("unverified: Y_(x,z) independent of X given Z");
        serde_json::to_string_pretty(&v).expect("result serializes")
    };
    emit(common, &text)?;
    Ok(EXIT_OK)
}

fn validate(model: Option<&Path>, fault: Option<FaultArg>, common: &Common) -> CliResult<u8> {
    let json = common.format == Some(Format::Json);
    if let Some(path) = model {
        let model = load_model(path, common)?;
        let report = validate_model(&model, common.seed);
        emit(common, &if json { report.to_json() } else { report.to_string() })?;
        return Ok(if report.ok() { EXIT_OK } else { EXIT_INVALID });
    }
    let opts = ValidateOptions {
        seed: common.seed,
        fault: fault.map(|FaultArg::DifSign| Fault::DifSign),
    };
    let report = run_property_suite(&opts);
    let text = if json {
        serde_json::to_string_pretty(&report).expect("report serializes")
    } else {
        report.to_string()
    };
    emit(common, &text)?;
    Ok(if report.pass() { EXIT_OK } else { EXIT_INVALID })
}

fn example(name: &str, common: &Common) -> CliResult<u8> {
    let report = run_example(name).map_err(|e| match e {
        PeaceError::InvalidArgument(m) => CliError::usage(m),
        other => other.into(),
    })?;
    let text = match common.format {
        Some(Format::Json) => serde_json::to_string_pretty(&report).expect("report serializes"),
        _ => report.to_string(),
    };
    emit(common, &text)?;
    Ok(if report.pass() { EXIT_OK } else { EXIT_NUMERIC })
}

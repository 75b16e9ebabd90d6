//! Command handlers: parse inputs, run the library, emit reports.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use mechlab_core::det_border::{
    check_two_buyer, corollary_sequence, three_buyer_check, three_buyer_construct,
};
use mechlab_core::discrete::{
    enumerate_pareto, payment_revenue_interval, AllocationTable, DiscreteMechanism, IcClass,
};
use mechlab_core::num::Scalar;
use mechlab_core::piecewise::{
    deterministic_implement, pair_region, transfer_path, PiecewiseAuction,
};
use mechlab_core::priors::{DiscretePrior, QuantileModel};
use mechlab_core::reduced_form::{
    border_check_asymmetric, border_check_symmetric, curves_from_json_value, InterimCurve,
};
use mechlab_core::sim::{simulate_expost, SimReport, WinnerRule};
use mechlab_core::transform::transform_all;
use mechlab_core::{Error, Rational};

use crate::output::{print_or_write, write_csv, write_report, write_svg, AnyError, Series};
use crate::{
    BorderCheckArgs, ClassifyArgs, CorollaryArgs, Det2Args, Det3Args, IcClassArg, ImplementArgs,
    Mode, ParetoArgs, RegionArgs, SimulateArgs, TransferArgs, TransformParetoArgs,
};

fn load_json(path: &Path) -> Result<Value, AnyError> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed JSON in {}: {e}", path.display())))?;
    Ok(value)
}

fn load_model(path: &Path) -> Result<QuantileModel<f64>, AnyError> {
    Ok(QuantileModel::from_json_value(&load_json(path)?)?)
}

fn load_curves(path: &Path) -> Result<Vec<InterimCurve<f64>>, AnyError> {
    Ok(curves_from_json_value(&load_json(path)?)?)
}

fn load_auction(path: &Path) -> Result<PiecewiseAuction<f64>, AnyError> {
    Ok(PiecewiseAuction::from_json_value(&load_json(path)?)?)
}

fn curves_to_json(curves: &[InterimCurve<f64>]) -> Value {
    json!(curves
        .iter()
        .map(|c| json!({"grid": c.grid(), "values": c.values()}))
        .collect::<Vec<_>>())
}

pub fn discrete_pareto(args: ParetoArgs) -> Result<(), AnyError> {
    match args.mode {
        Mode::Rational => discrete_pareto_t::<Rational>(&args),
        Mode::Float => discrete_pareto_t::<f64>(&args),
    }
}

fn discrete_pareto_t<T: Scalar>(args: &ParetoArgs) -> Result<(), AnyError> {
    let prior_json = load_json(&args.prior)?;
    let prior = DiscretePrior::<T>::from_json_value(&prior_json)?;
    let class = match args.class {
        IcClassArg::Bic => IcClass::Bic,
        IcClassArg::Dsic => IcClass::Dsic,
    };
    let frontier = enumerate_pareto(&prior, 2, class, args.cap)?;

    let rows: Vec<String> = frontier
        .iter()
        .map(|p| {
            format!(
                "{},{},{}",
                p.wel.money_string(),
                p.rev.money_string(),
                p.witnesses.len()
            )
        })
        .collect();
    write_csv(&args.out, "wel,rev,witness_count", &rows)?;

    if let Some(svg) = &args.svg {
        let points: Vec<(f64, f64)> = frontier
            .iter()
            .map(|p| (p.wel.as_f64(), p.rev.as_f64()))
            .collect();
        write_svg(
            svg,
            "welfare",
            "revenue",
            &[Series {
                points: &points,
                polyline: false,
                color: "steelblue",
                label: "Pareto points",
            }],
        )?;
    }

    if let Some(wpath) = &args.witnesses {
        let m = prior.len();
        let points: Vec<Value> = frontier
            .iter()
            .map(|p| -> Result<Value, AnyError> {
                let tables: Vec<Value> = p
                    .witnesses
                    .iter()
                    .map(|&code| -> Result<Value, AnyError> {
                        let table = AllocationTable::from_code(2, m, code);
                        let (lo, hi) = payment_revenue_interval(&prior, &table)?;
                        Ok(json!({
                            "code": code,
                            "winner": table.winner,
                            "payment_rev_interval": [lo.money_string(), hi.money_string()],
                        }))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(json!({
                    "wel": p.wel.money_string(),
                    "rev": p.rev.money_string(),
                    "witnesses": tables,
                }))
            })
            .collect::<Result<_, _>>()?;
        let config = json!({
            "command": "discrete pareto",
            "prior": prior_json,
            "class": match args.class { IcClassArg::Bic => "bic", IcClassArg::Dsic => "dsic" },
            "mode": mode_name(args.mode),
            "cap": args.cap,
        });
        write_report(wpath, config, json!({ "points": points }))?;
    }
    Ok(())
}

pub fn discrete_classify(args: ClassifyArgs) -> Result<(), AnyError> {
    match args.mode {
        Mode::Rational => discrete_classify_t::<Rational>(&args),
        Mode::Float => discrete_classify_t::<f64>(&args),
    }
}

fn discrete_classify_t<T: Scalar>(args: &ClassifyArgs) -> Result<(), AnyError> {
    let prior_json = load_json(&args.prior)?;
    let prior = DiscretePrior::<T>::from_json_value(&prior_json)?;
    let table_json = load_json(&args.table)?;
    let n = table_json
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Config("table needs integer field `n`".into()))? as usize;
    let m = table_json
        .get("m")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Config("table needs integer field `m`".into()))? as usize;
    let winner: Vec<u8> = table_json
        .get("winner")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config("table needs array field `winner`".into()))?
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|x| x as u8)
                .ok_or_else(|| Error::Config("winner entries must be integers".into()))
        })
        .collect::<Result<_, _>>()?;
    let table = AllocationTable::new(n, m, winner)?;
    let code = table.code();
    let mech = DiscreteMechanism::build(&prior, table)?;
    let money_rows = |rows: &[Vec<T>]| -> Vec<Vec<String>> {
        rows.iter()
            .map(|row| row.iter().map(Scalar::money_string).collect())
            .collect()
    };
    let report = json!({
        "code": code,
        "bic": mech.bic,
        "dsic": mech.dsic,
        "interim": money_rows(&mech.interim),
        "payments": mech.payments.as_deref().map(money_rows),
        "rev": mech.rev.as_ref().map(Scalar::money_string),
        "wel": mech.wel.as_ref().map(Scalar::money_string),
    });
    let config = json!({
        "command": "discrete classify",
        "prior": prior_json,
        "table": table_json,
        "mode": mode_name(args.mode),
    });
    print_or_write(args.out.as_deref(), config, report)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Rational => "rational",
        Mode::Float => "float",
    }
}

pub fn border_check(args: BorderCheckArgs) -> Result<(), AnyError> {
    let curves = load_curves(&args.curves)?;
    let model_json = args.model.as_deref().map(load_json).transpose()?;
    let report = if curves.len() == 1 {
        let n = args.n.ok_or_else(|| {
            Error::InvalidInput("the symmetric check needs -n for a single curve".into())
        })?;
        border_check_symmetric(&curves[0], n, None)
    } else {
        if let Some(n) = args.n {
            if n != curves.len() {
                return Err(Error::InvalidInput(format!(
                    "-n {n} does not match {} curves",
                    curves.len()
                ))
                .into());
            }
        }
        border_check_asymmetric(&curves, args.resolution)?
    };
    let config = json!({
        "command": "border check",
        "model": model_json,
        "curves": args.curves.display().to_string(),
        "n": args.n,
        "resolution": args.resolution,
    });
    write_report(&args.out, config, serde_json::to_value(&report)?)
}

pub fn border_det2(args: Det2Args) -> Result<(), AnyError> {
    let curves = load_curves(&args.curves)?;
    if curves.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "det2 needs exactly two curves, got {}",
            curves.len()
        ))
        .into());
    }
    let report = check_two_buyer(&curves[0], &curves[1], args.always_sold)?;
    let config = json!({
        "command": "border det2",
        "curves": args.curves.display().to_string(),
        "always_sold": args.always_sold,
    });
    write_report(&args.out, config, serde_json::to_value(report)?)
}

pub fn border_det3(args: Det3Args) -> Result<(), AnyError> {
    let c = [args.c[0], args.c[1], args.c[2]];
    let check = three_buyer_check(c)?;
    let mut report = json!({ "check": check });
    if check.implementable {
        let triple = three_buyer_construct(c)?;
        report["construction"] = serde_json::to_value(triple)?;
        if let Some(samples) = args.simulate {
            let sim = simulate_expost(
                &QuantileModel::Uniform,
                &triple,
                samples,
                args.seed,
                args.bins,
            )?;
            report["simulation"] = serde_json::to_value(&sim)?;
        }
    }
    let config = json!({
        "command": "border det3",
        "c": args.c,
        "simulate": args.simulate,
        "seed": args.seed,
        "bins": args.bins,
    });
    print_or_write(args.out.as_deref(), config, report)
}

pub fn piecewise_region(args: RegionArgs) -> Result<(), AnyError> {
    if args.grid < 8 || args.gridn < 8 {
        return Err(Error::InvalidInput("grid sizes must be at least 8".into()).into());
    }
    let model_json = load_json(&args.model)?;
    let model = QuantileModel::<f64>::from_json_value(&model_json)?;
    let w_eff = mechlab_core::piecewise::efficient_welfare(&model, args.n)?;
    let welfare_grid: Vec<f64> = (0..args.grid)
        .map(|j| w_eff * j as f64 / (args.grid - 1) as f64)
        .collect();
    let region = pair_region(&model, args.n, &welfare_grid, args.gridn)?;
    if !region.condition1_holds {
        eprintln!(
            "warning: the model violates the curvature condition (v'' >= 0, \
             phihat'' <= 0); the band is still the LP range but piecewise \
             optimality of its endpoints is not guaranteed"
        );
    }
    let rows: Vec<String> = region
        .bands
        .iter()
        .map(|b| format!("{},{},{}", b.c, b.rev_min, b.rev_max))
        .collect();
    write_csv(&args.out, "c,rev_min,rev_max", &rows)?;
    if let Some(svg) = &args.svg {
        let lo: Vec<(f64, f64)> = region.bands.iter().map(|b| (b.c, b.rev_min)).collect();
        let hi: Vec<(f64, f64)> = region.bands.iter().map(|b| (b.c, b.rev_max)).collect();
        write_svg(
            svg,
            "welfare",
            "revenue",
            &[
                Series {
                    points: &hi,
                    polyline: true,
                    color: "firebrick",
                    label: "rev_max",
                },
                Series {
                    points: &lo,
                    polyline: true,
                    color: "steelblue",
                    label: "rev_min",
                },
            ],
        )?;
    }
    Ok(())
}

pub fn piecewise_implement(args: ImplementArgs) -> Result<(), AnyError> {
    let pa = load_auction(&args.params)?;
    let imp = deterministic_implement(&pa)?;
    let model = match &args.model {
        Some(path) => load_model(path)?,
        None => QuantileModel::Uniform,
    };
    let rw = pa.rev_wel(&model)?;
    let analytic: Vec<Vec<f64>> = (0..pa.n)
        .map(|i| {
            (0..=64)
                .map(|j| imp.analytic_interim(i, j as f64 / 64.0))
                .collect()
        })
        .collect();
    let mut report = json!({
        "auction": pa.to_json_value(),
        "lambda": imp.lambda,
        "rev": rw.rev,
        "wel": rw.wel,
        "analytic_interim_grid65": analytic,
    });
    if let Some(samples) = args.simulate {
        let sim = simulate_expost(&model, &imp, samples, args.seed, args.bins)?;
        report["simulation"] = serde_json::to_value(&sim)?;
    }
    let config = json!({
        "command": "piecewise implement",
        "params": args.params.display().to_string(),
        "simulate": args.simulate,
        "seed": args.seed,
        "bins": args.bins,
    });
    print_or_write(args.out.as_deref(), config, report)
}

pub fn transfer(args: TransferArgs) -> Result<(), AnyError> {
    let model = load_model(&args.model)?;
    let pa_a = load_auction(&args.a)?;
    let pa_b = load_auction(&args.b)?;
    let path = transfer_path(&model, &pa_a, &pa_b, args.steps)?;
    let report = json!({
        "welfare_level": path.welfare_level,
        "max_welfare_dev": path.max_welfare_dev,
        "max_param_jump": path.max_param_jump,
        "steps": path.steps.iter().map(|s| s.to_json_value()).collect::<Vec<_>>(),
    });
    let config = json!({
        "command": "transfer",
        "model": args.model.display().to_string(),
        "a": args.a.display().to_string(),
        "b": args.b.display().to_string(),
        "steps": args.steps,
    });
    write_report(&args.out, config, report)
}

pub fn transform_pareto(args: TransformParetoArgs) -> Result<(), AnyError> {
    let model = load_model(&args.model)?;
    let curves = load_curves(&args.curves)?;
    let rep = transform_all(&model, &curves)?;
    fs::write(
        &args.out,
        format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "grid": "per-curve",
                "curves": curves_to_json(&rep.curves),
            }))?
        ),
    )?;
    if let Some(report_path) = &args.report {
        let config = json!({
            "command": "transform pareto",
            "model": args.model.display().to_string(),
            "curves": args.curves.display().to_string(),
        });
        let deltas = json!({
            "wel_delta": rep.wel_delta,
            "rev_delta": rep.rev_delta,
            "mass_delta": rep.mass_delta,
            "border_feasible_before": rep.border_feasible_before,
            "border_feasible_after": rep.border_feasible_after,
            "regular": rep.regular,
        });
        write_report(report_path, config, deltas)?;
    }
    if !rep.regular {
        eprintln!("warning: the model is not regular; the improvement guarantee does not apply");
    }
    Ok(())
}

pub fn sequence_corollary(args: CorollaryArgs) -> Result<(), AnyError> {
    let seq = corollary_sequence(args.p, args.max_n)?;
    let config = json!({
        "command": "sequence corollary",
        "p": args.p,
        "max_n": args.max_n,
    });
    print_or_write(args.out.as_deref(), config, serde_json::to_value(&seq)?)
}

pub fn simulate(args: SimulateArgs) -> Result<(), AnyError> {
    let model = match &args.model {
        Some(path) => load_model(path)?,
        None => QuantileModel::Uniform,
    };
    let config = json!({
        "command": "simulate",
        "rule": args.rule,
        "params": args.params.as_ref().map(|p| p.display().to_string()),
        "c": args.c,
        "n": args.n,
        "samples": args.samples,
        "seed": args.seed,
        "bins": args.bins,
    });
    let report: SimReport<f64> = if let Some(path) = &args.params {
        let pa = load_auction(path)?;
        let imp = deterministic_implement(&pa)?;
        simulate_expost(&model, &imp, args.samples, args.seed, args.bins)?
    } else if let Some(c) = &args.c {
        let triple = three_buyer_construct([c[0], c[1], c[2]])?;
        simulate_expost(&model, &triple, args.samples, args.seed, args.bins)?
    } else {
        match args.rule.as_deref() {
            Some("efficient") => {
                let rule = EfficientRule { n: args.n };
                simulate_expost(&model, &rule, args.samples, args.seed, args.bins)?
            }
            Some("keep") => {
                let rule = (args.n, |_: &[f64]| 0usize);
                simulate_expost(&model, &rule, args.samples, args.seed, args.bins)?
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown rule {other:?}; use --rule efficient|keep, --params or --c"
                ))
                .into())
            }
        }
    };
    print_or_write(args.out.as_deref(), config, serde_json::to_value(&report)?)
}

struct EfficientRule {
    n: usize,
}

impl WinnerRule<f64> for EfficientRule {
    fn buyers(&self) -> usize {
        self.n
    }
    fn winner(&self, q: &[f64]) -> usize {
        let mut best = 0;
        for (i, &x) in q.iter().enumerate() {
            if x > q[best] {
                best = i;
            }
        }
        best + 1
    }
}

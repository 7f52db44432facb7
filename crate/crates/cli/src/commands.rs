use std::fs;
use std::path::Path;

use knockoff::io::{self, fmt_num, CsvTable};
use knockoff::knockoffs::construct_knockoffs_rescaled;
use knockoff::model::LinearModelSpec;
use knockoff::oracles::{gram_check, run_battery};
use knockoff::simulate::{check_method_names, run_experiment, run_method, summarize_method, TrialRecord};
use nalgebra::DVector;

use crate::config::{load_experiment, load_run, Overrides};
use crate::Failure;

fn prepare_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    let path = out.join(name);
    io::write_atomic(&path, bytes)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Drop the leading setting/rho columns, which carry no information for a
/// single data set.
fn without_setting(mut t: CsvTable) -> CsvTable {
    t.header.drain(..2);
    for r in &mut t.rows {
        r.drain(..2);
    }
    t
}

pub fn construct(design: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let x = io::read_design(design)?;
    let pair = construct_knockoffs_rescaled(&x, seed)?;
    let residual = gram_check(&pair).max();
    prepare_out(out)?;
    write(out, "knockoffs.csv", &io::matrix_table(pair.x_tilde().values()))?;
    let s = nalgebra::DMatrix::from_column_slice(pair.p(), 1, pair.s());
    write(out, "s.csv", &io::matrix_table(&s))?;
    println!(
        "constructed knockoffs for {} x {} design, s = {}, gram residual {residual:.3e}",
        x.nrows(),
        x.ncols(),
        fmt_num(pair.s().first().copied().unwrap_or(0.0))
    );
    Ok(())
}

pub fn run(ov: &Overrides, out: &Path) -> Result<(), Failure> {
    let cfg = load_run(ov)?;
    if !cfg.name.is_empty() {
        log::info!("run {}", cfg.name);
    }
    let x = io::read_design(&cfg.data.design)?;
    let y = io::read_response(&cfg.data.response)?;
    y.check_matches(&x)?;
    let (n, p) = (x.nrows(), x.ncols());
    check_method_names(&cfg.methods)?;
    for m in &cfg.methods {
        m.validate(n, p)?;
    }
    let truth = match &cfg.data.beta {
        Some(path) => {
            let beta = io::read_response(path)?.values().iter().copied().collect::<Vec<_>>();
            if beta.len() != p {
                return Err(Failure::Config(format!(
                    "{}: {} coefficients for {p} features",
                    path.display(),
                    beta.len()
                )));
            }
            let spec = LinearModelSpec::new(beta, 0.0)?;
            let spec = match &cfg.data.strong {
                Some(strong) => spec.with_strong(strong.clone())?,
                None => spec,
            };
            let mu = x.values() * DVector::from_column_slice(spec.beta());
            Some((spec, mu))
        }
        None => None,
    };

    let mut records = Vec::new();
    let mut selections = CsvTable::new(["method", "feature", "sign"]);
    for m in &cfg.methods {
        let mut rec = TrialRecord::new(0, 0.0, 0, &m.name);
        let sel = run_method(m, &x, &y, truth.as_ref().map(|(t, mu)| (t, mu)), cfg.seed, &mut rec)?;
        for w in &rec.warnings {
            log::warn!("{}: {w}", m.name);
        }
        println!("{}: {} selected at q = {}", m.name, sel.len(), fmt_num(m.params.q));
        for (&j, &sign) in &sel.signs {
            selections.push(vec![m.name.clone(), j.to_string(), sign.to_string()]);
        }
        records.push(rec);
    }
    let summaries: Vec<_> = cfg
        .methods
        .iter()
        .map(|m| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.method == m.name).collect();
            summarize_method(&mine, 0, 0.0, &m.name)
        })
        .collect();

    prepare_out(out)?;
    write(out, "selections.csv", &selections.to_bytes())?;
    write(out, "trials.csv", &without_setting(io::trials_table(&records)).to_bytes())?;
    write(out, "summary.csv", &without_setting(io::summary_table(&summaries)).to_bytes())?;
    Ok(())
}

pub fn simulate(ov: &Overrides, out: &Path) -> Result<(), Failure> {
    let cfg = load_experiment(ov)?;
    let report = run_experiment(&cfg)?;
    prepare_out(out)?;
    write(out, "trials.csv", &io::trials_table(&report.records).to_bytes())?;
    write(out, "summary.csv", &io::summary_table(&report.summaries).to_bytes())?;
    write(out, "plot.csv", &io::plot_table(&report.summaries).to_bytes())?;

    println!(
        "{:<6} {:<22} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "rho", "method", "FDR", "dirFDR", "power", "rpower", "failures"
    );
    for s in &report.summaries {
        println!(
            "{:<6} {:<22} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9}",
            fmt_num(s.rho),
            s.method,
            s.full.fdr.mean,
            s.full.fdr_dir.mean,
            s.full.power.mean,
            s.full.restricted_power.mean,
            s.failures
        );
    }
    if let Some(s) = report.summaries.iter().find(|s| s.failures == s.trials) {
        return Err(Failure::Numerical(format!(
            "method {} failed on every trial of setting {}",
            s.method, s.setting
        )));
    }
    Ok(())
}

pub fn verify(seed: u64) -> Result<(), Failure> {
    let outcomes = run_battery(seed);
    let mut failed = Vec::new();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.passed {
            failed.push(o.name.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

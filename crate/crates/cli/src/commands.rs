use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use nearfield::config::Scenario;
use nearfield::crb::FisherBundle;
use nearfield::estimator::{aco_localize, LikelihoodContext};
use nearfield::io::{load_complex_csv, save_complex_csv};
use nearfield::montecarlo::{run_sweep, write_sweep_csv};
use nearfield::synth::simulate_received;
use nearfield::{AmplitudeModel, Error, Position3, Result, SignalBlock, Target};

use crate::{Format, ModelArg};

impl From<ModelArg> for AmplitudeModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Exact => AmplitudeModel::Exact,
            ModelArg::Constant => AmplitudeModel::Constant,
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io_at(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Parses `A:B:N` into a list of distances.
pub fn parse_distance_sweep(spec: &str, log_spacing: bool) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("distance sweep must look like A:B:N, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b >= a && b.is_finite()) || n == 0 {
        return Err(Error::InvalidArgument(format!("distance sweep needs 0 < A <= B and N >= 1, got `{spec}`")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let t = |i: usize| i as f64 / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if log_spacing { a * (b / a).powf(t(i)) } else { a + (b - a) * t(i) })
        .collect())
}

pub struct CrbOptions<'a> {
    pub sweep: Option<&'a str>,
    pub log_spacing: bool,
    pub target: usize,
    pub full_matrix: bool,
    pub condition_cap: f64,
    pub format: Format,
}

pub fn crb(path: &Path, model: ModelArg, opts: CrbOptions) -> Result<u8> {
    let CrbOptions {
        sweep,
        log_spacing,
        target,
        full_matrix,
        condition_cap,
        format,
    } = opts;
    if !(condition_cap >= 1.0) {
        return Err(Error::InvalidArgument(format!("--condition-cap must be at least 1, got {condition_cap}")));
    }
    let sc = Scenario::load(path)?;
    let (r_x, snapshots) = sc.tx_covariance()?;
    let scene = &sc.scene;
    if scene.targets.is_empty() {
        return Err(Error::config("targets", "at least one target is required for a bound"));
    }
    if let Some(spec) = sweep {
        if target == 0 || target > scene.targets.len() {
            return Err(Error::InvalidArgument(format!(
                "--target must be in 1..={}, got {target}",
                scene.targets.len()
            )));
        }
        let distances = parse_distance_sweep(spec, log_spacing)?;
        let origin = scene.rx.reference();
        let ray = scene.targets[target - 1].position.sub(&origin);
        if ray.norm() == 0.0 {
            return Err(Error::InvalidArgument("target sits on the Rx reference point; the ray is undefined".into()));
        }
        let dir = ray.scale(1.0 / ray.norm());
        let mut w = output(None)?;
        writeln!(w, "distance_m,crb_exact_m2,crb_constant_m2,ratio")?;
        for d in distances {
            let mut targets = scene.targets.clone();
            targets[target - 1] = Target::new(origin.add(&dir.scale(d)), targets[target - 1].coeff);
            let moved = scene.with_targets(targets)?;
            let exact = FisherBundle::for_scene(&moved, &r_x, snapshots, AmplitudeModel::Exact, condition_cap)?
                .position_crbs()[target - 1];
            let constant = FisherBundle::for_scene(&moved, &r_x, snapshots, AmplitudeModel::Constant, condition_cap)?
                .position_crbs()[target - 1];
            writeln!(w, "{d},{exact},{constant},{}", constant / exact)?;
        }
        w.flush()?;
        return Ok(0);
    }

    let model: AmplitudeModel = model.into();
    let bundle = FisherBundle::for_scene(scene, &r_x, snapshots, model, condition_cap)?;
    let crbs = bundle.position_crbs();
    match format {
        Format::Csv => {
            let mut w = output(None)?;
            writeln!(w, "target_index,crb_m2")?;
            for (k, c) in crbs.iter().enumerate() {
                writeln!(w, "{},{c}", k + 1)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let targets: Vec<_> = crbs
                .iter()
                .zip(&scene.targets)
                .enumerate()
                .map(|(k, (c, t))| {
                    json!({
                        "index": k + 1,
                        "position": t.position,
                        "crb_m2": c,
                        "rmse_bound_m": c.sqrt(),
                    })
                })
                .collect();
            let mut out = json!({
                "amplitude_model": model,
                "snapshots": snapshots,
                "condition": bundle.condition,
                "targets": targets,
            });
            if full_matrix {
                let rows: Vec<Vec<f64>> = bundle.crb.row_iter().map(|r| r.iter().copied().collect()).collect();
                out["matrix"] = json!(rows);
            }
            write_json(None, &out)?;
        }
    }
    Ok(0)
}

pub fn simulate(path: &Path, seed: u64, out: &Path, waveform_out: Option<&Path>) -> Result<u8> {
    let sc = Scenario::load(path)?;
    let x = sc.waveform()?;
    let y = simulate_received(&sc.scene, &x, seed)?;
    save_complex_csv(out, &y.data)?;
    if let Some(p) = waveform_out {
        save_complex_csv(p, &x.data)?;
    }
    Ok(0)
}

pub fn localize(path: &Path, y_path: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<u8> {
    let sc = Scenario::load(path)?;
    let x = sc.waveform()?;
    let y = match (y_path, seed) {
        (Some(p), _) => SignalBlock::receive(load_complex_csv(p)?)?,
        (None, Some(s)) => simulate_received(&sc.scene, &x, s)?,
        (None, None) => return Err(Error::InvalidArgument("either --y or --seed is required".into())),
    };
    let cfg = sc.aco_config()?;
    let ctx = LikelihoodContext::from_scene(&sc.scene, &y, &x, sc.loading())?;
    let loc = aco_localize(&ctx, sc.k_max()?, &cfg)?;
    let q_trace: f64 = loc.noise_cov.diagonal().iter().map(|z| z.re).sum();
    let positions: Vec<Position3> = loc.positions.clone();
    let value = json!({
        "positions": positions,
        "coeffs": loc.coeffs.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        "noise_cov_frobenius": loc.noise_cov.norm(),
        "noise_cov_trace": q_trace,
        "f3": loc.f3,
        "trace": loc.trace,
        "cycles": loc.updates,
        "converged": loc.converged,
        "evaluations": loc.evaluations,
        "final_pitch_m": cfg.grid.final_pitch(),
        "logdet_floor": loc.logdet_floor,
    });
    write_json(out, &value)?;
    if loc.converged {
        Ok(0)
    } else {
        eprintln!("warning: update cap reached before the objective settled");
        Ok(4)
    }
}

pub fn sweep(path: &Path, out: Option<&Path>, json_path: Option<&Path>, trials: Option<usize>) -> Result<u8> {
    let sc = Scenario::load(path)?;
    let x = sc.waveform()?;
    let mut cfg = sc.sweep_config()?;
    if let Some(t) = trials {
        if t == 0 {
            return Err(Error::InvalidArgument("--trials must be at least 1".into()));
        }
        cfg.trials = t;
    }
    let report = run_sweep(&sc.scene, &x, &cfg)?;
    let mut w = output(out)?;
    write_sweep_csv(&mut w, &report.rows)?;
    w.flush()?;
    if let Some(p) = json_path {
        let value = serde_json::to_value(&report).map_err(|e| Error::Io(e.into()))?;
        write_json(Some(p), &value)?;
    }
    Ok(0)
}

use crate::config::{ExperimentConfig, Format, Protocol};
use anyhow::{Context, Result};
use scrambench::asymptotics::predict;
use scrambench::fit::{fit_curve, FitOptions, FitReport};
use scrambench::io::{self, Manifest};
use scrambench::model::ModelParams;
use scrambench::protocols::{
    run_coincidence, run_otoc, run_recovery, run_recovery_scan, FidelityCurve, OtocSpec, RecoverySpec,
};
use scrambench::SeededRng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct Outcome {
    pub data: String,
    pub manifest: String,
    pub summary: Vec<String>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// The part of the config that determines the data. Output location is left
/// out so the same experiment written to two places carries the same hash.
fn hashed_config(cfg: &ExperimentConfig, extra: Value) -> Result<Value> {
    let mut value = serde_json::to_value(cfg)?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    obj.remove("output");
    let (g, p_err) = cfg.model();
    obj.insert("resolved_g".into(), json!(g));
    obj.insert("resolved_p_err".into(), json!(p_err));
    if let Value::Object(extra) = extra {
        obj.extend(extra);
    }
    Ok(value)
}

fn encode<T: Serialize>(cfg: &ExperimentConfig, data: &T, csv: impl FnOnce(&str) -> String, hash: &str) -> Result<String> {
    Ok(match cfg.format() {
        Format::Csv => csv(hash),
        Format::Json => io::to_json(data, hash)?,
    })
}

fn params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    let (g, p_err) = cfg.model();
    Ok(ModelParams::new(cfg.n_qubits, g, p_err)?)
}

fn recovery_spec(cfg: &ExperimentConfig) -> RecoverySpec {
    RecoverySpec {
        target_qubit: cfg.target_qubit,
        perturb_qubit: cfg.perturb_qubit,
        perturbation: cfg.channel.channel(),
        t1_max: cfg.t1_max(),
        t2_max: cfg.t2_max(),
        trajectories: cfg.trajectories,
        fixed_circuit: cfg.fixed_circuit,
    }
}

fn curve_summary(curve: &FidelityCurve) -> Vec<String> {
    let last = curve.len() - 1;
    vec![format!(
        "{} points; F({}) = {:.5} ± {:.5}",
        curve.len(),
        curve.times[last],
        curve.mean[last],
        curve.stderr[last]
    )]
}

fn read_curve(path: &Path) -> Result<(io::Provenance, FidelityCurve)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("input: cannot read {}", path.display()))?;
    let parsed = if text.trim_start().starts_with('{') {
        io::curve_from_json(&text)
    } else {
        io::curve_from_csv(&text)
    };
    parsed.with_context(|| format!("input: {}", path.display()))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    report: &'a FitReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_manifest: Option<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    let rng = SeededRng::new(cfg.seed, 0);
    let mut extra = json!({});
    let (data, summary, manifest);
    macro_rules! finish {
        ($value:expr, $csv:expr, $summary:expr) => {{
            let m = Manifest::new(cfg.protocol.name(), cfg.seed, hashed_config(cfg, extra.clone())?);
            let hash = m.hash();
            data = encode(cfg, &$value, |h| $csv(&$value, h), &hash)?;
            summary = $summary;
            manifest = m;
        }};
    }
    match cfg.protocol {
        Protocol::Recovery => {
            let curve = run_recovery(&params(cfg)?, &recovery_spec(cfg), &rng)?;
            finish!(curve, io::curve_to_csv, curve_summary(&curve));
        }
        Protocol::Coincidence => {
            let curve = run_coincidence(&params(cfg)?, &recovery_spec(cfg), cfg.shots, &rng)?;
            finish!(curve, io::curve_to_csv, curve_summary(&curve));
        }
        Protocol::RecoveryScan => {
            let scan = run_recovery_scan(&params(cfg)?, &recovery_spec(cfg), &rng)?;
            let cells = scan.t1_values.len() * scan.t2_values.len();
            finish!(scan, io::scan_to_csv, vec![format!("{cells} (t1, t2) cells")]);
        }
        Protocol::Otoc => {
            let spec = OtocSpec {
                probe_qubit: cfg.probe_qubit,
                butterfly_qubit: cfg.butterfly_qubit,
                depth_max: cfg.t1_max(),
                trajectories: cfg.trajectories,
                fixed_circuit: cfg.fixed_circuit,
            };
            let curve = run_otoc(&params(cfg)?, &spec, &rng)?;
            let mag = curve.magnitude();
            let line = format!("{} points; |OTOC({})| = {:.5}", mag.len(), mag.len() - 1, mag[mag.len() - 1]);
            finish!(curve, io::otoc_to_csv, vec![line]);
        }
        Protocol::Predict => {
            let pred = predict(&cfg.channel.channel(), cfg.n_qubits)?;
            let mut lines = vec![
                format!("channel = {}", cfg.channel.name()),
                format!("n_qubits = {} (d = {})", cfg.n_qubits, pred.d),
                format!("p_twirl = {:.6}", pred.p_twirl),
                format!("f_as_full = {:.6}", pred.f_as_full),
                format!("f_as_subsystem = {:.6}", pred.f_as_subsystem),
            ];
            if let Some(w) = &pred.warning {
                lines.push(format!("warning: {w}"));
            }
            let csv = |p: &scrambench::asymptotics::TwirlPrediction, h: &str| {
                format!(
                    "# schema_version={} manifest={h}\nn_qubits,d,channel,p_twirl,f_as_full,f_as_subsystem\n{},{},{},{},{},{}\n",
                    io::SCHEMA_VERSION,
                    cfg.n_qubits,
                    p.d,
                    cfg.channel.name(),
                    p.p_twirl,
                    p.f_as_full,
                    p.f_as_subsystem
                )
            };
            finish!(pred, csv, lines);
        }
        Protocol::Fit => {
            let input = cfg.input.as_ref().expect("validated");
            let (prov, curve) = read_curve(input)?;
            extra = json!({ "input_manifest": prov.manifest });
            let opts = FitOptions {
                f_as_d: cfg.f_as_d,
                free_asymptote: cfg.free_asymptote,
                t_min: cfg.fit_start,
                ..FitOptions::default()
            };
            let report = fit_curve(&curve, &opts).context("fit")?;
            let r = &report.result;
            let mut lines = vec![match &report.detection.message {
                Some(m) => format!("{m}; tail_start = {}", r.tail_start),
                None => format!("two-stage structure detected; tail_start = {}", r.tail_start),
            }];
            lines.push(format!("lambda_s = {:.6}  a1 = {:.6}", r.lambda_s, r.a1));
            lines.push(format!("lambda_d = {:.6}  a2 = {:.6}  f_as_d = {:.6}", r.lambda_d, r.a2, r.f_as_d));
            lines.push(format!("residual_rms = {:.3e}  converged = {}", r.residual_rms, r.converged));
            let out = FitOutput {
                report: &report,
                input_manifest: prov.manifest.clone(),
            };
            finish!(out, |_: &FitOutput, _: &str| unreachable!("validated json"), lines);
        }
    }
    let mut doc = serde_json::to_value(&manifest)?;
    let obj = doc.as_object_mut().expect("object");
    obj.insert("hash".into(), json!(manifest.hash()));
    obj.insert("output".into(), json!(cfg.output));
    obj.insert("wall_time_s".into(), json!(started.elapsed().as_secs_f64()));
    Ok(Outcome {
        data,
        manifest: serde_json::to_string_pretty(&doc)? + "\n",
        summary,
    })
}

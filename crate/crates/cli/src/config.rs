use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use scrambench::quantum::ChannelKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Otoc,
    Recovery,
    RecoveryScan,
    Coincidence,
    Predict,
    Fit,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Otoc => "otoc",
            Protocol::Recovery => "recovery",
            Protocol::RecoveryScan => "recovery-scan",
            Protocol::Coincidence => "coincidence",
            Protocol::Predict => "predict",
            Protocol::Fit => "fit",
        }
    }
}

/// Named `(g, p_err)` cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[value(rename_all = "verbatim")]
pub enum Preset {
    S1,
    S2,
    D1,
    D2,
    I,
}

impl Preset {
    pub fn model(self) -> (f64, f64) {
        match self {
            Preset::S1 => (1.0, 0.0),
            Preset::S2 => (2.0, 0.0),
            Preset::D1 => (0.5, 0.025),
            Preset::D2 => (0.5, 0.1),
            Preset::I => (1.0, 0.001),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    ZMeasure,
    Depolarize,
    Identity,
}

impl From<ChannelArg> for ChannelKind {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::ZMeasure => ChannelKind::ZMeasure,
            ChannelArg::Depolarize => ChannelKind::Depolarize,
            ChannelArg::Identity => ChannelKind::Identity,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scrambench", version, about = "Scrambling benchmark simulator and analysis runner")]
pub struct Cli {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
    /// Named (g, p_err) case.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long = "p-err")]
    pub p_err: Option<f64>,
    /// Maximum depth (OTOC) or maximum equal loop time (recovery, coincidence).
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long = "t1-max")]
    pub t1_max: Option<usize>,
    #[arg(long = "t2-max")]
    pub t2_max: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub channel: Option<ChannelArg>,
    #[arg(long = "perturb-qubit")]
    pub perturb_qubit: Option<usize>,
    #[arg(long = "target-qubit")]
    pub target_qubit: Option<usize>,
    #[arg(long = "probe-qubit")]
    pub probe_qubit: Option<usize>,
    #[arg(long = "butterfly-qubit")]
    pub butterfly_qubit: Option<usize>,
    /// Average over error flags of one sampled circuit instead of the ensemble.
    #[arg(long = "fixed-circuit")]
    pub fixed_circuit: bool,
    /// Repeated final measurements per coincidence trajectory.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Curve file to fit (CSV or JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fit the decohered asymptote instead of fixing it.
    #[arg(long = "free-asymptote")]
    pub free_asymptote: bool,
    /// Value of the decohered asymptote (fixed, or starting point when free).
    #[arg(long = "f-as-d")]
    pub f_as_d: Option<f64>,
    /// First layer included in the fit (default 2).
    #[arg(long = "fit-start")]
    pub fit_start: Option<usize>,
    /// Data file; a manifest is written next to it as `<output>.manifest.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (does not affect results).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Fully resolved experiment description. Echoed verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default = "defaults::qubits")]
    pub n_qubits: usize,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub p_err: Option<f64>,
    #[serde(default = "defaults::layers")]
    pub layers: usize,
    #[serde(default)]
    pub t1_max: Option<usize>,
    #[serde(default)]
    pub t2_max: Option<usize>,
    #[serde(default = "defaults::trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::channel")]
    pub channel: ChannelKind,
    #[serde(default = "defaults::perturb")]
    pub perturb_qubit: usize,
    #[serde(default = "defaults::target")]
    pub target_qubit: usize,
    #[serde(default = "defaults::probe")]
    pub probe_qubit: usize,
    #[serde(default = "defaults::butterfly")]
    pub butterfly_qubit: usize,
    #[serde(default)]
    pub fixed_circuit: bool,
    #[serde(default = "defaults::shots")]
    pub shots: usize,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub free_asymptote: bool,
    #[serde(default = "defaults::f_as_d")]
    pub f_as_d: f64,
    #[serde(default = "defaults::fit_start")]
    pub fit_start: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

mod defaults {
    use scrambench::quantum::ChannelKind;

    pub fn qubits() -> usize {
        7
    }
    pub fn layers() -> usize {
        20
    }
    pub fn trajectories() -> usize {
        2000
    }
    pub fn channel() -> ChannelKind {
        ChannelKind::ZMeasure
    }
    pub fn perturb() -> usize {
        2
    }
    pub fn target() -> usize {
        1
    }
    pub fn probe() -> usize {
        1
    }
    pub fn butterfly() -> usize {
        2
    }
    pub fn shots() -> usize {
        1
    }
    pub fn f_as_d() -> f64 {
        0.5
    }
    pub fn fit_start() -> usize {
        scrambench::fit::DEFAULT_T_MIN
    }
}

impl ExperimentConfig {
    fn with_protocol(protocol: Protocol) -> Self {
        serde_json::from_value(serde_json::json!({ "protocol": protocol })).expect("defaults deserialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Combines an optional config file with command-line flags, flags winning.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = match (&cli.config, cli.protocol) {
            (Some(path), _) => Self::load(path)?,
            (None, Some(p)) => Self::with_protocol(p),
            (None, None) => bail!("protocol: one of --protocol or --config is required"),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    cfg.$field = v;
                }
            };
        }
        set!(protocol, cli.protocol);
        set!(n_qubits, cli.qubits);
        set!(layers, cli.layers);
        set!(trajectories, cli.trajectories);
        set!(seed, cli.seed);
        set!(perturb_qubit, cli.perturb_qubit);
        set!(target_qubit, cli.target_qubit);
        set!(probe_qubit, cli.probe_qubit);
        set!(butterfly_qubit, cli.butterfly_qubit);
        set!(shots, cli.shots);
        set!(f_as_d, cli.f_as_d);
        set!(fit_start, cli.fit_start);
        if cli.preset.is_some() {
            cfg.preset = cli.preset;
        }
        if cli.g.is_some() {
            cfg.g = cli.g;
        }
        if cli.p_err.is_some() {
            cfg.p_err = cli.p_err;
        }
        if cli.t1_max.is_some() {
            cfg.t1_max = cli.t1_max;
        }
        if cli.t2_max.is_some() {
            cfg.t2_max = cli.t2_max;
        }
        if let Some(c) = cli.channel {
            cfg.channel = c.into();
        }
        if cli.input.is_some() {
            cfg.input = cli.input.clone();
        }
        if cli.output.is_some() {
            cfg.output = cli.output.clone();
        }
        if cli.format.is_some() {
            cfg.format = cli.format;
        }
        cfg.fixed_circuit |= cli.fixed_circuit;
        cfg.free_asymptote |= cli.free_asymptote;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `(g, p_err)` from explicit values, then the preset, then `(1, 0)`.
    pub fn model(&self) -> (f64, f64) {
        let (g, p) = self.preset.map_or((1.0, 0.0), Preset::model);
        (self.g.unwrap_or(g), self.p_err.unwrap_or(p))
    }

    pub fn t1_max(&self) -> usize {
        self.t1_max.unwrap_or(self.layers)
    }

    pub fn t2_max(&self) -> usize {
        self.t2_max.unwrap_or(self.t1_max())
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(match self.protocol {
            Protocol::Predict | Protocol::Fit => Format::Json,
            _ => Format::Csv,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let simulates = !matches!(self.protocol, Protocol::Predict | Protocol::Fit);
        if simulates && self.trajectories == 0 {
            bail!("trajectories: must be ≥ 1");
        }
        if self.protocol == Protocol::Coincidence && self.shots == 0 {
            bail!("shots: must be ≥ 1");
        }
        if self.protocol == Protocol::Fit && self.input.is_none() {
            bail!("input: the fit protocol needs --input");
        }
        if self.protocol == Protocol::Fit && self.format() == Format::Csv {
            bail!("format: fit results are written as JSON");
        }
        if !self.f_as_d.is_finite() {
            bail!("f_as_d: must be finite");
        }
        if let Some(g) = self.g {
            if !(g.is_finite() && g >= 0.0) {
                bail!("g: must be finite and ≥ 0, got {g}");
            }
        }
        if let Some(p) = self.p_err {
            if !(0.0..=1.0).contains(&p) {
                bail!("p_err: must lie in [0, 1], got {p}");
            }
        }
        if !(2..=24).contains(&self.n_qubits) {
            bail!("n_qubits: must be in 2..=24, got {}", self.n_qubits);
        }
        let n = self.n_qubits;
        for (name, q) in [
            ("target_qubit", self.target_qubit),
            ("perturb_qubit", self.perturb_qubit),
            ("probe_qubit", self.probe_qubit),
            ("butterfly_qubit", self.butterfly_qubit),
        ] {
            if q >= n {
                bail!("{name}: qubit {q} out of range for {n} qubits");
            }
        }
        if self.target_qubit == self.perturb_qubit
            && matches!(self.protocol, Protocol::Recovery | Protocol::RecoveryScan | Protocol::Coincidence)
        {
            bail!("perturb_qubit: must differ from target_qubit");
        }
        if self.probe_qubit == self.butterfly_qubit && self.protocol == Protocol::Otoc {
            bail!("butterfly_qubit: must differ from probe_qubit");
        }
        if self.protocol == Protocol::RecoveryScan && (self.t1_max() == 0 || self.t2_max() == 0) {
            bail!("t1_max: scan needs t1_max and t2_max ≥ 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<ExperimentConfig> {
        let mut argv = vec!["scrambench"];
        argv.extend_from_slice(args);
        ExperimentConfig::from_cli(&Cli::try_parse_from(argv)?)
    }

    #[test]
    fn presets_and_defaults() {
        let cfg = parse(&["--protocol", "recovery", "--preset", "D2"]).unwrap();
        assert_eq!(cfg.model(), (0.5, 0.1));
        assert_eq!((cfg.n_qubits, cfg.trajectories, cfg.target_qubit, cfg.perturb_qubit), (7, 2000, 1, 2));
        assert_eq!(cfg.format(), Format::Csv);
        let cfg = parse(&["--protocol", "recovery", "--preset", "D2", "--g", "3"]).unwrap();
        assert_eq!(cfg.model(), (3.0, 0.1));
        assert_eq!(parse(&["--protocol", "predict"]).unwrap().format(), Format::Json);
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse(&["--protocol", "recovery", "--target-qubit", "2"]).unwrap_err();
        assert!(err.to_string().starts_with("perturb_qubit"));
        let err = parse(&["--protocol", "otoc", "--qubits", "30"]).unwrap_err();
        assert!(err.to_string().starts_with("n_qubits"));
        let err = parse(&["--protocol", "fit"]).unwrap_err();
        assert!(err.to_string().starts_with("input"));
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"protocol": "recovery", "qbits": 5}"#).unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(format!("{err:#}").contains("qbits"));
        std::fs::write(&path, r#"{"protocol": "recovery", "n_qubits": 5, "preset": "S1"}"#).unwrap();
        let cfg = parse(&["--config", path.to_str().unwrap(), "--seed", "3"]).unwrap();
        assert_eq!((cfg.n_qubits, cfg.seed, cfg.model()), (5, 3, (1.0, 0.0)));
    }
}

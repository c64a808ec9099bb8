//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use alpe_core::agent::{AlpeConfig, Horizon};
use alpe_core::baselines::{ForecasterSpec, MlpConfig, ModelId, RbfConfig, DEFAULT_WINDOW};
use alpe_core::eval::{GridConfig, ImportanceConfig};
use alpe_core::features::{FeatureSet, FeatureSpec, KernelParams};
use alpe_core::importance::ImportanceMethod;
use alpe_core::lob::{InvalidRowPolicy, SyntheticStreamConfig};

use crate::CliError;

/// Where the streams come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// One CSV per stock; the stock id is the file stem.
    Files(Vec<PathBuf>),
    /// `n_stocks` generated streams; stock `i` uses seed `cfg.seed + i`.
    Synthetic {
        cfg: SyntheticStreamConfig,
        n_stocks: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    pub invalid_rows: InvalidRowPolicy,
    pub feature_sets: Vec<FeatureSet>,
    /// `None` is the unweighted variant.
    pub importance: Vec<Option<ImportanceMethod>>,
    pub models: Vec<ModelId>,
    pub window: usize,
    pub n_runs: usize,
    pub master_seed: u64,
    pub calibration_prefix: usize,
    pub output_dir: PathBuf,
    pub features: FeatureSpec,
    pub importance_cfg: ImportanceConfig,
    pub alpe: AlpeConfig,
    pub mlp: MlpConfig,
    pub rbf: RbfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputSource::Synthetic {
                cfg: SyntheticStreamConfig::default(),
                n_stocks: 1,
            },
            invalid_rows: InvalidRowPolicy::Reject,
            feature_sets: vec![FeatureSet::Simple, FeatureSet::Extended],
            importance: vec![None, Some(ImportanceMethod::Mdi), Some(ImportanceMethod::Gd)],
            models: ModelId::ALL.to_vec(),
            window: DEFAULT_WINDOW,
            n_runs: 10,
            master_seed: 0,
            calibration_prefix: 500,
            output_dir: PathBuf::from("out"),
            features: FeatureSpec::simple(),
            importance_cfg: ImportanceConfig::default(),
            alpe: AlpeConfig::default(),
            mlp: MlpConfig::default(),
            rbf: RbfConfig::default(),
        }
    }
}

struct Entries {
    values: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split_once('#').map_or(line, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line_no}: expected `section.key = value`")))?;
            let key = key.trim().to_string();
            if !key.contains('.') {
                return Err(CliError::Config(format!("line {line_no}: key `{key}` has no section")));
            }
            if values
                .insert(key.clone(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(CliError::Config(format!("line {line_no}: duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.remove(key) {
            None => Ok(None),
            Some((raw, line)) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("line {line}: invalid value `{raw}` for `{key}`"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), CliError> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_list(&mut self, key: &str) -> Option<(Vec<String>, usize)> {
        self.values.remove(key).map(|(raw, line)| {
            (
                raw.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
                line,
            )
        })
    }

    fn finish(self) -> Result<(), CliError> {
        match self.values.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(CliError::Config(format!("line {line}: unknown key `{key}`"))),
        }
    }
}

fn parse_list<T>(
    items: Vec<String>,
    line: usize,
    key: &str,
    f: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, CliError> {
    if items.is_empty() {
        return Err(CliError::Config(format!("line {line}: `{key}` must not be empty")));
    }
    items
        .iter()
        .map(|s| f(s).ok_or_else(|| CliError::Config(format!("line {line}: unknown entry `{s}` in `{key}`"))))
        .collect()
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut e = Entries::parse(text)?;
        let mut cfg = Self::default();

        let mut source: String = e.take("input.source")?.unwrap_or_else(|| "synthetic".into());
        if let Some((paths, line)) = e.take_list("input.paths") {
            if paths.is_empty() {
                return Err(CliError::Config(format!(
                    "line {line}: `input.paths` must not be empty"
                )));
            }
            if e.values.contains_key("input.source") || source == "synthetic" {
                source = "files".into();
            }
            cfg.input = InputSource::Files(paths.iter().map(|p| base_dir.join(p)).collect());
        }
        e.set("input.invalid_rows", &mut cfg.invalid_rows)?;

        let mut synth = SyntheticStreamConfig::default();
        let mut n_stocks = 1usize;
        e.set("synth.n_events", &mut synth.n_events)?;
        e.set("synth.mid0", &mut synth.mid0)?;
        e.set("synth.reversion_rate", &mut synth.reversion_rate)?;
        e.set("synth.volatility", &mut synth.volatility)?;
        e.set("synth.spread_mean", &mut synth.spread_mean)?;
        e.set("synth.tick_size", &mut synth.tick_size)?;
        e.set("synth.volume_min", &mut synth.volume_range.0)?;
        e.set("synth.volume_max", &mut synth.volume_range.1)?;
        e.set("synth.seed", &mut synth.seed)?;
        e.set("synth.n_stocks", &mut n_stocks)?;
        match source.as_str() {
            "synthetic" => {
                cfg.input = InputSource::Synthetic { cfg: synth, n_stocks };
            }
            "files" => {
                if !matches!(cfg.input, InputSource::Files(_)) {
                    return Err(CliError::Config("`input.source = files` needs `input.paths`".into()));
                }
            }
            other => return Err(CliError::Config(format!("unknown input.source `{other}`"))),
        }

        if let Some((items, line)) = e.take_list("experiment.feature_sets") {
            cfg.feature_sets = parse_list(items, line, "experiment.feature_sets", |s| s.parse().ok())?;
        }
        if let Some((items, line)) = e.take_list("experiment.importance") {
            cfg.importance = parse_list(items, line, "experiment.importance", |s| match s {
                "none" => Some(None),
                other => other.parse().ok().map(Some),
            })?;
        }
        if let Some((items, line)) = e.take_list("experiment.models") {
            cfg.models = items
                .iter()
                .map(|s| {
                    s.parse::<ModelId>()
                        .map_err(|_| CliError::Config(format!("line {line}: unknown model id `{s}`")))
                })
                .collect::<Result<_, _>>()?;
        }
        e.set("experiment.window", &mut cfg.window)?;
        e.set("experiment.n_runs", &mut cfg.n_runs)?;
        e.set("experiment.master_seed", &mut cfg.master_seed)?;
        e.set("experiment.calibration_prefix", &mut cfg.calibration_prefix)?;
        if let Some(dir) = e.take::<String>("output.dir")? {
            cfg.output_dir = base_dir.join(dir);
        }

        let mut kernel = KernelParams::default();
        e.set("kernel.c0", &mut kernel.c0)?;
        e.set("kernel.degree", &mut kernel.degree)?;
        e.set("kernel.gamma", &mut kernel.gamma)?;
        cfg.features.kernel = kernel;
        e.set("kernel.include_raw", &mut cfg.features.include_raw_in_extended)?;

        let ic = &mut cfg.importance_cfg;
        e.set("importance.n_trees", &mut ic.forest.n_trees)?;
        e.set("importance.max_depth", &mut ic.forest.max_depth)?;
        e.set("importance.min_samples_split", &mut ic.forest.min_samples_split)?;
        if let Some(m) = e.take::<usize>("importance.max_features")? {
            ic.forest.max_features = Some(m);
        }
        e.set("importance.gd_eta", &mut ic.gd_eta)?;
        e.set("importance.gd_iterations", &mut ic.gd_iterations)?;

        let a = &mut cfg.alpe;
        e.set("alpe.a_min", &mut a.a_min)?;
        e.set("alpe.a_max", &mut a.a_max)?;
        e.set("alpe.eps0", &mut a.eps0)?;
        e.set("alpe.eps_min", &mut a.eps_min)?;
        e.set("alpe.eps_decay", &mut a.eps_decay)?;
        e.set("alpe.gamma", &mut a.gamma)?;
        e.set("alpe.epochs_per_event", &mut a.epochs_per_event)?;
        e.set::<Horizon>("alpe.horizon", &mut a.horizon)?;
        e.set("alpe.hidden_layers", &mut a.net.hidden_layers)?;
        e.set("alpe.hidden_width", &mut a.net.hidden_width)?;
        e.set("alpe.batch_norm", &mut a.net.batch_norm)?;
        e.set("alpe.zeta", &mut a.net.zeta)?;
        e.set("alpe.bn_momentum", &mut a.net.bn_momentum)?;
        e.set("alpe.lr", &mut a.net.adam.lr)?;

        e.set("mlp.hidden_layers", &mut cfg.mlp.hidden_layers)?;
        e.set("mlp.hidden_width", &mut cfg.mlp.hidden_width)?;
        e.set("mlp.steps", &mut cfg.mlp.steps)?;
        e.set("mlp.lr", &mut cfg.mlp.lr)?;
        e.set("rbfnn.k_centers", &mut cfg.rbf.k_centers)?;
        e.set("rbfnn.max_iterations", &mut cfg.rbf.max_iterations)?;

        e.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.n_runs == 0 {
            return bad("experiment.n_runs must be at least 1");
        }
        if self.window == 0 {
            return bad("experiment.window must be at least 1");
        }
        if self.models.is_empty() {
            return bad("experiment.models must not be empty");
        }
        if self.rbf.k_centers == 0 {
            return bad("rbfnn.k_centers must be at least 1");
        }
        if self.mlp.steps == 0 || self.mlp.lr.is_nan() || self.mlp.lr <= 0.0 {
            return bad("mlp.steps and mlp.lr must be positive");
        }
        if self.importance_cfg.forest.n_trees == 0 {
            return bad("importance.n_trees must be at least 1");
        }
        if let InputSource::Synthetic { cfg, n_stocks } = &self.input {
            if *n_stocks == 0 {
                return bad("synth.n_stocks must be at least 1");
            }
            cfg.validate()?;
        }
        self.features.kernel.validate()?;
        self.alpe.validate()?;
        let mut net = self.alpe.net.clone();
        net.input_dim = 1;
        net.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            feature_sets: self.feature_sets.clone(),
            importance: self.importance.clone(),
            models: self.models.clone(),
            n_runs: self.n_runs,
            master_seed: self.master_seed,
            calibration_prefix: self.calibration_prefix,
            importance_cfg: self.importance_cfg.clone(),
            base: ForecasterSpec {
                features: self.features,
                importance: None,
                window: self.window,
                mlp: self.mlp.clone(),
                rbf: self.rbf.clone(),
                alpe: self.alpe.clone(),
            },
        }
    }

    /// Methods requested for importance estimation (the `none` entry dropped).
    pub fn importance_methods(&self) -> Vec<ImportanceMethod> {
        let mut m: Vec<ImportanceMethod> = self.importance.iter().flatten().copied().collect();
        m.sort();
        m.dedup();
        m
    }
}

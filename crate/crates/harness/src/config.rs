//! Harness configuration: a flat `key = value` file overlaid by command-line
//! flags, resolved into typed settings.
//!
//! Keys match the long flag names, with `-` or `_` accepted interchangeably.
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use saa_core::oracles::Method;
use saa_core::synth::{self, Distribution};
use saa_core::{AttentionSpec, DtaConfig, FeatureMapShape, TokenMatrix};

use crate::HarnessError;

/// Raw settings before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
            map.insert(normalize(key), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalize(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| HarnessError::Usage(format!("invalid {key} `{v}`: {e}"))))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| HarnessError::Usage(format!("invalid {key} entry `{s}`: {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn switch(&self, key: &str) -> Result<Option<bool>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some("on" | "true" | "1") => Ok(Some(true)),
            Some("off" | "false" | "0") => Ok(Some(false)),
            Some(other) => Err(HarnessError::Usage(format!("{key} must be on or off, got `{other}`"))),
        }
    }
}

/// Synthetic input: `N,C,dist` with `dist` one of `gaussian`,
/// `clustered` or `clustered:GROUPS:SPREAD`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub c: usize,
    pub dist: Distribution,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.splitn(3, ',').map(str::trim).collect();
        if parts.len() < 2 {
            return Err("expected N,C[,dist]".into());
        }
        let n: usize = parts[0].parse().map_err(|_| format!("bad N `{}`", parts[0]))?;
        let c: usize = parts[1].parse().map_err(|_| format!("bad C `{}`", parts[1]))?;
        if n == 0 || c == 0 {
            return Err("N and C must be positive".into());
        }
        let dist = match parts.get(2).copied().unwrap_or("gaussian") {
            "gaussian" => Distribution::Gaussian,
            other if other.starts_with("clustered") => {
                let fields: Vec<&str> = other.split(':').collect();
                let groups =
                    fields.get(1).map_or(Ok(4), |g| g.parse().map_err(|_| format!("bad group count `{g}`")))?;
                let spread = fields.get(2).map_or(Ok(0.1), |v| v.parse().map_err(|_| format!("bad spread `{v}`")))?;
                Distribution::Clustered { groups, spread }
            }
            other => return Err(format!("unknown distribution `{other}`")),
        };
        Ok(Self { n, c, dist })
    }
}

impl SyntheticSpec {
    pub fn generate(&self, seed: u64) -> Result<TokenMatrix, HarnessError> {
        Ok(synth::synthetic_tokens(self.n, self.c, self.dist, seed)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenSource {
    Input(PathBuf),
    Synthetic(SyntheticSpec),
}

/// `HxW`
fn parse_map(s: &str) -> Result<(usize, usize), HarnessError> {
    let bad = || HarnessError::Usage(format!("map must be HxW, got `{s}`"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
}

/// Fully resolved settings shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub source: Option<TokenSource>,
    pub map: Option<(usize, usize)>,
    pub seed: u64,
    pub dta: DtaConfig,
    /// FNR exactly as given, so commands can pick their own default.
    pub fnr: Option<bool>,
    pub channel_scale: Option<f64>,
    pub head_dim: Option<usize>,
    pub reps: usize,
    pub warmup: usize,
    pub out: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
    pub instances: usize,
    pub ratios: Option<Vec<f64>>,
    pub seeds: usize,
    pub timing: bool,
    pub clusters: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub window: usize,
    pub iters: usize,
}

impl HarnessConfig {
    pub fn resolve(s: &Settings) -> Result<Self, HarnessError> {
        let input: Option<PathBuf> = s.get("input").map(PathBuf::from);
        let synthetic: Option<SyntheticSpec> = s.typed("synthetic")?;
        let source = match (input, synthetic) {
            (Some(_), Some(_)) => {
                return Err(HarnessError::Usage("give either --input or --synthetic, not both".into()))
            }
            (Some(p), None) => Some(TokenSource::Input(p)),
            (None, Some(spec)) => Some(TokenSource::Synthetic(spec)),
            (None, None) => None,
        };
        let seed = s.typed("seed")?.unwrap_or(0);
        let fnr = s.switch("fnr")?;
        let defaults = DtaConfig::default();
        let dta = DtaConfig {
            keep_ratio: s.typed("keep_ratio")?.unwrap_or(defaults.keep_ratio),
            beta: s.typed("beta")?.unwrap_or(defaults.beta),
            neighbor_count: s.typed("m")?.unwrap_or(defaults.neighbor_count),
            temperature: s.typed("tau")?.unwrap_or(defaults.temperature),
            eps: s.typed("eps")?.unwrap_or(defaults.eps),
            fnr_enabled: fnr.unwrap_or(defaults.fnr_enabled),
            seed,
        };
        dta.validate()?;
        let reps = s.typed("reps")?.unwrap_or(5);
        if reps == 0 {
            return Err(HarnessError::Usage("reps must be at least 1".into()));
        }
        let methods = match s.get("methods") {
            None => None,
            Some(v) => Some(
                v.split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(|m| m.parse::<Method>())
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(Self {
            source,
            map: s.get("map").map(parse_map).transpose()?,
            seed,
            dta,
            fnr,
            channel_scale: s.typed("rc")?,
            head_dim: s.typed("d")?,
            reps,
            warmup: s.typed("warmup")?.unwrap_or(2),
            out: s.get("out").map(PathBuf::from),
            sizes: s.list("sizes")?,
            instances: s.typed("instances")?.unwrap_or(5),
            ratios: s.list("ratios")?,
            seeds: s.typed("seeds")?.unwrap_or(20),
            timing: s.switch("timing")?.unwrap_or(false),
            clusters: s.typed("k")?,
            methods,
            window: s.typed("window")?.unwrap_or(8),
            iters: s.typed("iters")?.unwrap_or(saa_core::oracles::KMEANS_ITERS),
        })
    }

    /// Loads or generates the tokens named by `--input` / `--synthetic`.
    pub fn load_tokens(&self) -> Result<TokenMatrix, HarnessError> {
        match &self.source {
            Some(TokenSource::Input(path)) => saa_core::format::load_tokens(path).map_err(|e| match e {
                saa_core::Error::Io(io) => HarnessError::Io(format!("{}: {io}", path.display())),
                other => HarnessError::Input(format!("{}: {other}", path.display())),
            }),
            Some(TokenSource::Synthetic(spec)) => spec.generate(self.seed),
            None => Err(HarnessError::Usage("this command needs --input or --synthetic".into())),
        }
    }

    pub fn synthetic_or(&self, default: SyntheticSpec) -> SyntheticSpec {
        match &self.source {
            Some(TokenSource::Synthetic(spec)) => *spec,
            _ => default,
        }
    }

    pub fn feature_map(&self, tokens: &TokenMatrix) -> Result<Option<FeatureMapShape>, HarnessError> {
        match self.map {
            None => Ok(None),
            Some((h, w)) if h * w == tokens.rows() => Ok(Some(FeatureMapShape::new(h, w, tokens.cols()))),
            Some((h, w)) => Err(HarnessError::Usage(format!("map {h}x{w} does not match {} tokens", tokens.rows()))),
        }
    }

    /// Head dimension `d` (defaults to the channel count) and attention spec.
    pub fn attention_spec(&self, channels: usize) -> Result<AttentionSpec, HarnessError> {
        let d = self.head_dim.unwrap_or(channels);
        let spec = match self.channel_scale {
            Some(rc) => AttentionSpec::with_channel_scaling(d, rc),
            None => AttentionSpec::new(d),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Projection weights matching `spec`, seeded.
    pub fn weights(&self, channels: usize, spec: &AttentionSpec, seed: u64) -> saa_core::ProjectionWeights {
        let scaled = spec.use_channel_scaling.then(|| spec.scaled_dim());
        synth::uniform_projection_weights(channels, spec.head_dim, scaled, seed)
    }
}

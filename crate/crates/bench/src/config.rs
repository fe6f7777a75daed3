//! Experiment specification and its TOML form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use adatrans::datagen::{CovarianceKind, Setting, SettingSpec, SignPattern};
use serde::Deserialize;

use crate::error::{config, BenchError, Result};

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Cross-validated Lasso on the target sample only.
    Lasso,
    /// Cross-validated Lasso on all samples with one shared parameter.
    PooledLasso,
    FAda,
    FAdaOracle,
    OracleEst,
    SAda,
    SAdaOracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Lasso,
        Method::PooledLasso,
        Method::FAda,
        Method::FAdaOracle,
        Method::OracleEst,
        Method::SAda,
        Method::SAdaOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::PooledLasso => "pooled-lasso",
            Method::FAda => "f-ada",
            Method::FAdaOracle => "f-ada-oracle",
            Method::OracleEst => "oracle-est",
            Method::SAda => "s-ada",
            Method::SAdaOracle => "s-ada-oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| config(format!("unknown method {s:?}")))
    }
}

/// Parses a comma-separated method list, keeping the given order and
/// dropping duplicates.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Method = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(config("method list is empty"));
    }
    Ok(out)
}

/// Factor varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    HWedge,
    SK,
    K,
    NS,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::HWedge => "h_wedge",
            Factor::SK => "s_k",
            Factor::K => "K",
            Factor::NS => "n_S",
        }
    }

    /// Applies `value` to a copy of `base`.
    pub fn apply(self, base: &SettingSpec, value: f64) -> Result<SettingSpec> {
        let mut spec = base.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(config(format!("{} needs integer values, got {value}", self.name())))
            }
        };
        match self {
            Factor::HWedge => {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(config(format!("h_wedge must be nonnegative, got {value}")));
                }
                spec.h_wedge = value;
            }
            Factor::SK => spec.s_k = count()?,
            Factor::K => spec.k = count()?,
            Factor::NS => spec.n_s = count()?,
        }
        Ok(spec)
    }

    /// Current value of this factor in `spec`.
    pub fn value_of(self, spec: &SettingSpec) -> f64 {
        match self {
            Factor::HWedge => spec.h_wedge,
            Factor::SK => spec.s_k as f64,
            Factor::K => spec.k as f64,
            Factor::NS => spec.n_s as f64,
        }
    }
}

impl FromStr for Factor {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" | "h_wedge" => Ok(Factor::HWedge),
            "sk" | "s_k" => Ok(Factor::SK),
            "k" => Ok(Factor::K),
            "ns" | "n_s" => Ok(Factor::NS),
            other => Err(config(format!("unknown sweep factor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub factor: Factor,
    pub values: Vec<f64>,
}

/// Preset sizes: `desk` (p = 100, 20 replications) for quick runs and
/// `paper` (p = 500, 100 replications) for the full-size experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(config(format!("unknown profile {other:?}"))),
        }
    }
}

impl Profile {
    /// Default instance for `setting` under this profile. The desk profile
    /// keeps the sample-wise contrast dense by scaling `s_k` to `0.9·p`.
    pub fn setting_spec(self, setting: Setting) -> SettingSpec {
        let spec = SettingSpec::for_setting(setting);
        match self {
            Profile::Paper => spec,
            Profile::Desk => {
                let p = 100;
                let s_k = match setting {
                    Setting::FeatureWise => spec.s_k,
                    Setting::SampleWise => 9 * p / 10,
                };
                SettingSpec { p, s_k, ..spec }
            }
        }
    }

    pub fn reps(self) -> usize {
        match self {
            Profile::Desk => 20,
            Profile::Paper => 100,
        }
    }
}

pub fn parse_setting(v: u8) -> Result<Setting> {
    match v {
        1 => Ok(Setting::FeatureWise),
        2 => Ok(Setting::SampleWise),
        other => Err(config(format!("setting must be 1 or 2, got {other}"))),
    }
}

pub fn setting_number(s: Setting) -> u8 {
    match s {
        Setting::FeatureWise => 1,
        Setting::SampleWise => 2,
    }
}

/// One benchmark run: the base instance, the methods, replications, an
/// optional sweep and the base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub setting_spec: SettingSpec,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub sweep: Option<Sweep>,
    pub base_seed: u64,
    /// Record wall-clock time per fit. Off by default so that output is
    /// byte-for-byte reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(setting_spec: SettingSpec, methods: Vec<Method>, reps: usize) -> Self {
        Self {
            setting_spec,
            methods,
            reps,
            sweep: None,
            base_seed: 0,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(config("reps must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config("no methods selected"));
        }
        for (_, spec) in self.instances()? {
            spec.validate().map_err(|e| config(e.to_string()))?;
        }
        Ok(())
    }

    /// `(sweep value, instance)` pairs; a single pair without a sweep.
    pub fn instances(&self) -> Result<Vec<(f64, SettingSpec)>> {
        match &self.sweep {
            None => Ok(vec![(f64::NAN, self.setting_spec.clone())]),
            Some(sweep) => {
                if sweep.values.is_empty() {
                    return Err(config("sweep has no values"));
                }
                sweep
                    .values
                    .iter()
                    .map(|&v| {
                        if !(v > 0.0) || !v.is_finite() {
                            return Err(config(format!("sweep values must be positive, got {v}")));
                        }
                        Ok((v, sweep.factor.apply(&self.setting_spec, v)?))
                    })
                    .collect()
            }
        }
    }
}

/// TOML document mirroring [`ExperimentSpec`]. Every key is optional; unset
/// keys fall back to the chosen profile and setting.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Option<String>,
    pub setting: Option<u8>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub n_t: Option<usize>,
    pub n_s: Option<usize>,
    pub k: Option<usize>,
    pub h_wedge: Option<f64>,
    pub s_k: Option<usize>,
    pub beta_value: Option<f64>,
    pub noise_sd: Option<f64>,
    /// `"identity"` or `"toeplitz:<rho>"`.
    pub covariance: Option<String>,
    pub source_covariance: Option<String>,
    /// `"alternating"` or `"random"`.
    pub signs: Option<String>,
    pub methods: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub base_seed: Option<u64>,
    pub timing: Option<bool>,
    pub sweep: Option<SweepFile>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub factor: String,
    pub values: Vec<f64>,
}

pub fn parse_covariance(s: &str) -> Result<CovarianceKind> {
    let s = s.trim().to_ascii_lowercase();
    if s == "identity" {
        return Ok(CovarianceKind::Identity);
    }
    if let Some(rho) = s.strip_prefix("toeplitz:") {
        let rho: f64 = rho
            .parse()
            .map_err(|_| config(format!("bad Toeplitz correlation {rho:?}")))?;
        return Ok(CovarianceKind::Toeplitz(rho));
    }
    Err(config(format!("unknown covariance {s:?}")))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }

    pub fn into_spec(self) -> Result<ExperimentSpec> {
        let profile: Profile = self.profile.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let setting = parse_setting(self.setting.unwrap_or(1))?;
        let mut spec = profile.setting_spec(setting);
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { spec.$field = v; } )* };
        }
        set!(p, s, n_t, n_s, k, h_wedge, s_k, beta_value, noise_sd);
        if let Some(c) = &self.covariance {
            spec.covariance = parse_covariance(c)?;
        }
        if let Some(c) = &self.source_covariance {
            spec.source_covariance = Some(parse_covariance(c)?);
        }
        if let Some(signs) = &self.signs {
            spec.sign_pattern = match signs.as_str() {
                "alternating" => SignPattern::Alternating,
                "random" => SignPattern::Random,
                other => return Err(config(format!("unknown sign pattern {other:?}"))),
            };
        }
        let methods = match self.methods {
            Some(list) => parse_methods(&list.join(","))?,
            None => default_methods(setting),
        };
        let sweep = self
            .sweep
            .map(|s| {
                Ok::<_, BenchError>(Sweep {
                    factor: s.factor.parse()?,
                    values: s.values,
                })
            })
            .transpose()?;
        let out = ExperimentSpec {
            setting_spec: spec,
            methods,
            reps: self.reps.unwrap_or(profile.reps()),
            sweep,
            base_seed: self.base_seed.unwrap_or(0),
            timing: self.timing.unwrap_or(false),
        };
        out.validate()?;
        Ok(out)
    }
}

/// Methods compared in each setting's figures.
pub fn default_methods(setting: Setting) -> Vec<Method> {
    match setting {
        Setting::FeatureWise => vec![Method::Lasso, Method::FAda, Method::FAdaOracle, Method::OracleEst],
        Setting::SampleWise => vec![Method::Lasso, Method::PooledLasso, Method::SAda, Method::SAdaOracle],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_round_trip_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(parse_methods("lasso, f-ada,lasso").unwrap(), vec![Method::Lasso, Method::FAda]);
        assert!(parse_methods("lasso,bogus").is_err());
    }

    #[test]
    fn config_file_overrides_profile() {
        let cfg = ConfigFile::parse(
            r#"
            profile = "desk"
            setting = 2
            reps = 3
            methods = ["lasso", "s-ada"]
            covariance = "toeplitz:0.5"
            [sweep]
            factor = "h_wedge"
            values = [0.012, 0.024]
            "#,
        )
        .unwrap();
        let spec = cfg.into_spec().unwrap();
        assert_eq!(spec.setting_spec.p, 100);
        assert_eq!(spec.setting_spec.s_k, 90);
        assert_eq!(spec.reps, 3);
        assert_eq!(spec.setting_spec.covariance, CovarianceKind::Toeplitz(0.5));
        assert_eq!(spec.instances().unwrap().len(), 2);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        assert!(matches!(ConfigFile::parse("nonsense = 1"), Err(BenchError::Config(_))));
        let bad = ConfigFile {
            reps: Some(0),
            ..Default::default()
        };
        assert!(matches!(bad.into_spec(), Err(BenchError::Config(_))));
        let odd = ConfigFile {
            s: Some(7),
            ..Default::default()
        };
        assert!(matches!(odd.into_spec(), Err(BenchError::Config(_))));
        assert!(Factor::K.apply(&SettingSpec::feature_wise(), 1.5).is_err());
    }
}

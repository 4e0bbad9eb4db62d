use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;
use crate::observation::BackendKind;
use crate::refinement::RefinementConfig;

/// Component ladder, from plain particle filter to the full tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// One shift to the map peak, weights from the initial maps.
    #[serde(rename = "PF")]
    Pf,
    /// Full refinement, count-only selection, resampling every frame.
    #[serde(rename = "IPF")]
    Ipf,
    /// IPF plus clustering of modes.
    #[serde(rename = "IPFK")]
    Ipfk,
    /// IPFK plus per-mode models and ESS-gated resampling.
    #[serde(rename = "D2CIP")]
    D2cip,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pf, Variant::Ipf, Variant::Ipfk, Variant::D2cip];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pf => "PF",
            Variant::Ipf => "IPF",
            Variant::Ipfk => "IPFK",
            Variant::D2cip => "D2CIP",
        }
    }

    pub fn clusters(self) -> bool {
        matches!(self, Variant::Ipfk | Variant::D2cip)
    }

    pub fn per_mode_models(self) -> bool {
        self == Variant::D2cip
    }

    pub fn gated_resampling(self) -> bool {
        self == Variant::D2cip
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PF" => Ok(Variant::Pf),
            "IPF" => Ok(Variant::Ipf),
            "IPFK" => Ok(Variant::Ipfk),
            "D2CIP" => Ok(Variant::D2cip),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "synthetic" => Ok(BackendKind::Synthetic),
            "template" => Ok(BackendKind::Template),
            other => Err(Error::InvalidConfig(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub n_total: usize,
    /// `None` derives the spread from the first ground-truth box.
    pub sigma: Option<[f64; 8]>,
    pub epsilon: f64,
    /// `None` calibrates to 5% of the centered first-frame likelihood.
    pub l_min: Option<f64>,
    pub max_iterations: usize,
    pub grid_radius: usize,
    pub gamma: f64,
    pub k_max: usize,
    pub m_max: usize,
    pub eta: f64,
    pub cluster_scale: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Synthetic,
            n_total: 200,
            sigma: None,
            epsilon: 1.0,
            l_min: None,
            max_iterations: 10,
            grid_radius: 15,
            gamma: 0.5,
            k_max: 4,
            m_max: 5,
            eta: 0.01,
            cluster_scale: 1.0,
            seed: 0,
            variant: Variant::D2cip,
        }
    }
}

/// Fraction of the centered first-frame likelihood used as `l_min`.
pub const L_MIN_FRACTION: f64 = 0.05;

pub const CONFIG_KEYS: [&str; 14] = [
    "backend",
    "n_total",
    "sigma",
    "epsilon",
    "l_min",
    "max_iterations",
    "grid_radius",
    "gamma",
    "k_max",
    "m_max",
    "eta",
    "cluster_scale",
    "seed",
    "variant",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

impl RunConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "backend" => self.backend = v.parse()?,
            "n_total" => self.n_total = num(key, v)?,
            "sigma" => {
                self.sigma = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    let parts: Vec<f64> = v.split(',').map(|p| num(key, p)).collect::<Result<_>>()?;
                    let arr: [f64; 8] = parts
                        .try_into()
                        .map_err(|_| Error::Parse("sigma needs 8 comma-separated values".into()))?;
                    Some(arr)
                }
            }
            "epsilon" => self.epsilon = num(key, v)?,
            "l_min" => {
                self.l_min = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "max_iterations" => self.max_iterations = num(key, v)?,
            "grid_radius" => self.grid_radius = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "k_max" => self.k_max = num(key, v)?,
            "m_max" => self.m_max = num(key, v)?,
            "eta" => self.eta = num(key, v)?,
            "cluster_scale" => self.cluster_scale = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "variant" => self.variant = v.parse()?,
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse_kv(text: &str, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let opt = |o: Option<f64>| o.map_or("auto".to_string(), |v| v.to_string());
        let sigma = self.sigma.map_or("auto".to_string(), |s| {
            s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        });
        let backend = match self.backend {
            BackendKind::Synthetic => "synthetic",
            BackendKind::Template => "template",
        };
        format!(
            "backend = {backend}\nn_total = {}\nsigma = {sigma}\nepsilon = {}\nl_min = {}\nmax_iterations = {}\n\
             grid_radius = {}\ngamma = {}\nk_max = {}\nm_max = {}\neta = {}\ncluster_scale = {}\nseed = {}\nvariant = {}\n",
            self.n_total,
            self.epsilon,
            opt(self.l_min),
            self.max_iterations,
            self.grid_radius,
            self.gamma,
            self.k_max,
            self.m_max,
            self.eta,
            self.cluster_scale,
            self.seed,
            self.variant
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_total == 0 {
            return bad("n_total must be >= 1");
        }
        if let Some(s) = self.sigma {
            if s.iter().any(|v| !(*v >= 0.0)) {
                return bad("sigma components must be >= 0");
            }
        }
        if let Some(l) = self.l_min {
            if !(l >= 0.0) {
                return bad("l_min must be >= 0");
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if self.k_max == 0 || self.m_max == 0 {
            return bad("k_max and m_max must be >= 1");
        }
        if !(self.cluster_scale >= 0.0) {
            return bad("cluster_scale must be >= 0");
        }
        self.refinement(0.0).validate()
    }

    pub fn refinement(&self, l_min: f64) -> RefinementConfig {
        RefinementConfig {
            epsilon: self.epsilon,
            l_min,
            max_iterations: self.max_iterations,
            grid_radius: self.grid_radius,
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            gamma: self.gamma,
            k_max: self.k_max,
            cluster_scale: self.cluster_scale,
            ..EstimatorConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys_and_comments() {
        let text = "# run\nvariant = IPF\nseed=42\nsigma = 1,1,0.5,0.5,0,0,0,0\nl_min = 3.5 # fixed\nbackend = template\n";
        let cfg = RunConfig::parse_kv(text, RunConfig::default()).unwrap();
        assert_eq!(cfg.variant, Variant::Ipf);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sigma, Some([1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(cfg.l_min, Some(3.5));
        assert_eq!(cfg.backend, BackendKind::Template);
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.sigma = Some([1.5, 1.5, 0.6, 0.6, 0.0, 0.0, 0.0, 0.0]);
        cfg.variant = Variant::Ipfk;
        let again = RunConfig::parse_kv(&cfg.to_kv(), RunConfig::default()).unwrap();
        assert_eq!(again, cfg);
        for key in CONFIG_KEYS {
            assert!(cfg.to_kv().contains(&format!("{key} = ")));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse_kv("nope = 1", RunConfig::default()).is_err());
        assert!(RunConfig::parse_kv("gamma = 0", RunConfig::default()).is_err());
        assert!(RunConfig::parse_kv("variant = XYZ", RunConfig::default()).is_err());
        assert!(RunConfig::parse_kv("seed", RunConfig::default()).is_err());
        assert!(RunConfig::parse_kv("sigma = 1,2", RunConfig::default()).is_err());
    }
}

//! Flat `section.key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use helm_mono::{AlphaPolicy, Coefficient, Contrast, Mesh, Rect, Region, Side, Tol};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line in the config file; 0 for command-line overrides and derived checks.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.key.is_empty()) {
            (0, true) => write!(f, "{}", self.message),
            (0, false) => write!(f, "field '{}': {}", self.key, self.message),
            (l, true) => write!(f, "line {l}: {}", self.message),
            (l, false) => write!(f, "line {l}, field '{}': {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Raw assignments with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

const KNOWN: &[&str] = &[
    "mesh.n",
    "mesh.domain",
    "sigma.sides",
    "k",
    "q.background",
    "q2.background",
    "basis.kind",
    "basis.panels",
    "grid.nx",
    "grid.ny",
    "contrast",
    "alpha.policy",
    "alpha.value",
    "alpha.max_halvings",
    "alpha.q_min",
    "alpha.q_max",
    "tol.rel",
    "tol.abs",
    "tol.resonance",
    "eigs.count",
    "scan.k_min",
    "scan.k_max",
    "scan.steps",
    "localize.b",
    "localize.d",
    "localize.v",
    "localize.v_dim",
    "seed",
    "output.dir",
];

fn is_known(key: &str) -> bool {
    KNOWN.contains(&key) || key.starts_with("q.inclusion.") || key.starts_with("q2.inclusion.")
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line,
                key: String::new(),
                message: format!("expected 'key = value', found '{content}'"),
            })?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Adds `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| ConfigError {
                line: 0,
                key: String::new(),
                message: format!("override '{o}' is not of the form key=value"),
            })?;
            self.entries.remove(key.trim());
            self.set(0, key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        if key.is_empty() || !key.split('.').all(|p| !p.is_empty()) {
            return Err(ConfigError {
                line,
                key: key.into(),
                message: "malformed key".into(),
            });
        }
        if !is_known(key) {
            return Err(ConfigError {
                line,
                key: key.into(),
                message: "unknown key".into(),
            });
        }
        if let Some((first, _)) = self.entries.get(key) {
            return Err(ConfigError {
                line,
                key: key.into(),
                message: format!("duplicate assignment (first on line {first})"),
            });
        }
        self.entries.insert(key.into(), (line, value.into()));
        Ok(())
    }

    /// Normalized `key = value` lines in key order.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, (_, v))| format!("{k} = {v}\n")).collect()
    }

    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| ConfigError {
                line,
                key: key.into(),
                message: format!("cannot parse '{v}'"),
            }),
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.get(key).map_or(0, |(l, _)| l),
            key: key.into(),
            message: message.into(),
        }
    }

    fn rect(&self, key: &str) -> Result<Option<Rect>, ConfigError> {
        let Some((_, v)) = self.get(key) else { return Ok(None) };
        let nums = numbers(v).ok_or_else(|| self.err(key, format!("cannot parse '{v}' as x0,x1,y0,y1")))?;
        if nums.len() != 4 || !(nums[0] < nums[1] && nums[2] < nums[3]) {
            return Err(self.err(key, "expected x0,x1,y0,y1 with x0 < x1 and y0 < y1"));
        }
        Ok(Some(Rect::new(nums[0], nums[1], nums[2], nums[3])))
    }

    fn coefficient(&self, prefix: &str) -> Result<CoefficientSpec, ConfigError> {
        let bg_key = format!("{prefix}.background");
        let background: f64 = self.parse_or(&bg_key, 1.0)?;
        if !background.is_finite() {
            return Err(self.err(&bg_key, "must be finite"));
        }
        let inc_prefix = format!("{prefix}.inclusion.");
        let mut inclusions = Vec::new();
        for (key, (_, v)) in self.entries.range(inc_prefix.clone()..) {
            if !key.starts_with(&inc_prefix) {
                break;
            }
            let nums = numbers(v)
                .filter(|n| n.len() == 5)
                .ok_or_else(|| self.err(key, "expected x0,x1,y0,y1,value"))?;
            if !(nums[0] < nums[1] && nums[2] < nums[3]) || !nums[4].is_finite() {
                return Err(self.err(key, "invalid rectangle or value"));
            }
            inclusions.push((key.clone(), Rect::new(nums[0], nums[1], nums[2], nums[3]), nums[4]));
        }
        Ok(CoefficientSpec { background, inclusions })
    }
}

fn numbers(v: &str) -> Option<Vec<f64>> {
    v.split(',').map(|s| s.trim().parse::<f64>().ok()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    pub background: f64,
    /// `(key, box, value)`; later inclusions overwrite earlier ones where they overlap.
    pub inclusions: Vec<(String, Rect, f64)>,
}

impl CoefficientSpec {
    pub fn build(&self, mesh: &Mesh) -> Result<Coefficient, ConfigError> {
        let mut q = Coefficient::constant(mesh, self.background);
        for (key, rect, value) in &self.inclusions {
            let region = Region::rect(mesh, *rect).map_err(|e| ConfigError {
                line: 0,
                key: key.clone(),
                message: e.to_string(),
            })?;
            q = q.with_region(&region, *value);
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Edges,
    Panels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    First,
    Random,
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub domain: Rect,
    pub sigma: Vec<Side>,
    pub k: f64,
    pub q: CoefficientSpec,
    pub q2: CoefficientSpec,
    pub basis: BasisKind,
    pub grid: (usize, usize),
    pub contrast: Contrast,
    pub alpha: AlphaPolicy,
    pub bounds: Option<(f64, f64)>,
    pub tol: Tol,
    pub resonance_tol: f64,
    pub eig_count: usize,
    pub scan: (f64, f64, usize),
    pub localize_b: Option<Rect>,
    pub localize_d: Option<Rect>,
    pub localize_v: SubspaceKind,
    pub v_dim: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let n: usize = raw.parse_or("mesh.n", 32)?;
        if n == 0 {
            return Err(raw.err("mesh.n", "must be at least 1"));
        }
        let domain = match raw.get("mesh.domain") {
            None | Some((_, "unit_square")) => Rect::new(0.0, 1.0, 0.0, 1.0),
            Some(_) => raw.rect("mesh.domain")?.expect("present"),
        };
        let sigma = match raw.get("sigma.sides") {
            None | Some((_, "all")) => Side::ALL.to_vec(),
            Some((_, v)) => v
                .split(',')
                .map(|s| Side::parse(s.trim()).ok_or_else(|| raw.err("sigma.sides", format!("unknown side '{}'", s.trim()))))
                .collect::<Result<_, _>>()?,
        };
        let k: f64 = raw.parse_or("k", 1.0)?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(raw.err("k", "frequency must be positive"));
        }
        let q = raw.coefficient("q")?;
        let q2 = if raw.entries.keys().any(|k| k.starts_with("q2.")) {
            raw.coefficient("q2")?
        } else {
            q.clone()
        };
        let basis = match raw.get("basis.kind") {
            None | Some((_, "edges")) => BasisKind::Edges,
            Some((_, "panels")) => {
                let p: usize = raw.parse_or("basis.panels", 0)?;
                if p == 0 {
                    return Err(raw.err("basis.panels", "panel basis needs basis.panels >= 1"));
                }
                BasisKind::Panels(p)
            }
            Some((_, v)) => return Err(raw.err("basis.kind", format!("expected 'edges' or 'panels', found '{v}'"))),
        };
        let grid = (raw.parse_or("grid.nx", 8usize)?, raw.parse_or("grid.ny", 8usize)?);
        if grid.0 == 0 || grid.1 == 0 {
            return Err(raw.err("grid.nx", "grid must have at least one pixel per axis"));
        }
        let contrast = match raw.get("contrast") {
            None | Some((_, "positive")) => Contrast::Positive,
            Some((_, "negative")) => Contrast::Negative,
            Some((_, v)) => return Err(raw.err("contrast", format!("expected 'positive' or 'negative', found '{v}'"))),
        };
        let alpha = match raw.get("alpha.policy") {
            None => match contrast {
                Contrast::Positive => AlphaPolicy::MaxAdmissible,
                Contrast::Negative => AlphaPolicy::Sweep {
                    max_halvings: raw.parse_or("alpha.max_halvings", 20)?,
                },
            },
            Some((_, "max")) => AlphaPolicy::MaxAdmissible,
            Some((_, "sweep")) => AlphaPolicy::Sweep {
                max_halvings: raw.parse_or("alpha.max_halvings", 20)?,
            },
            Some((_, "fixed")) => {
                let a: f64 = raw.parse_or("alpha.value", f64::NAN)?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(raw.err("alpha.value", "fixed alpha policy needs a positive alpha.value"));
                }
                AlphaPolicy::Fixed(a)
            }
            Some((_, v)) => return Err(raw.err("alpha.policy", format!("expected max, fixed or sweep, found '{v}'"))),
        };
        let bounds = match (raw.get("alpha.q_min"), raw.get("alpha.q_max")) {
            (None, None) => None,
            _ => Some((raw.parse_or("alpha.q_min", f64::NAN)?, raw.parse_or("alpha.q_max", f64::NAN)?)),
        };
        if let Some((lo, hi)) = bounds {
            if !(lo <= hi) {
                return Err(raw.err("alpha.q_min", "need both alpha.q_min <= alpha.q_max"));
            }
        }
        let tol = match (raw.get("tol.abs"), raw.get("tol.rel")) {
            (Some(_), Some(_)) => return Err(raw.err("tol.abs", "give either tol.abs or tol.rel, not both")),
            (Some(_), None) => Tol::Abs(positive(raw, "tol.abs", 0.0)?),
            (None, _) => Tol::Rel(positive(raw, "tol.rel", helm_mono::spectral::DEFAULT_REL_TOL)?),
        };
        let resonance_tol = positive(raw, "tol.resonance", 1e-2)?;
        let eig_count: usize = raw.parse_or("eigs.count", 10)?;
        if eig_count == 0 {
            return Err(raw.err("eigs.count", "must be at least 1"));
        }
        let scan = (
            raw.parse_or("scan.k_min", 0.5)?,
            raw.parse_or("scan.k_max", 5.0)?,
            raw.parse_or("scan.steps", 46usize)?,
        );
        if !(scan.0 > 0.0 && scan.0 < scan.1) || scan.2 < 2 {
            return Err(raw.err("scan.k_min", "need 0 < scan.k_min < scan.k_max and scan.steps >= 2"));
        }
        let localize_b = raw.rect("localize.b")?;
        let localize_d = match raw.get("localize.d") {
            Some((_, "none")) => None,
            _ => raw.rect("localize.d")?,
        };
        let localize_v = match raw.get("localize.v") {
            None | Some((_, "first")) => SubspaceKind::First,
            Some((_, "random")) => SubspaceKind::Random,
            Some((_, v)) => return Err(raw.err("localize.v", format!("expected 'first' or 'random', found '{v}'"))),
        };
        Ok(Self {
            n,
            domain,
            sigma,
            k,
            q,
            q2,
            basis,
            grid,
            contrast,
            alpha,
            bounds,
            tol,
            resonance_tol,
            eig_count,
            scan,
            localize_b,
            localize_d,
            localize_v,
            v_dim: raw.parse_or("localize.v_dim", 0usize)?,
            seed: raw.parse_or("seed", 0u64)?,
            output_dir: PathBuf::from(raw.get("output.dir").map_or("out", |(_, v)| v)),
        })
    }
}

fn positive(raw: &RawConfig, key: &str, default: f64) -> Result<f64, ConfigError> {
    let v: f64 = raw.parse_or(key, default)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(raw.err(key, "tolerance must be positive"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let raw = RawConfig::parse("# demo\nmesh.n = 8\nk=2.5\nq.inclusion.a = 0.25,0.75,0.25,0.75,2 # box\n").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.k, 2.5);
        assert_eq!(cfg.q.inclusions.len(), 1);
        assert_eq!(cfg.q2, cfg.q);
        assert_eq!(cfg.sigma.len(), 4);
        assert_eq!(cfg.basis, BasisKind::Edges);
    }

    #[test]
    fn reports_lines() {
        let err = RawConfig::parse("mesh.n = 4\n\nnonsense\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = RawConfig::parse("mesh.n = 4\nmesh.n = 5\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (2, "mesh.n"));
        let err = RawConfig::parse("mesh.x = 4\n").unwrap_err();
        assert!(err.message.contains("unknown"));
        let raw = RawConfig::parse("k = 1\nk2 = 3\n");
        assert!(raw.is_err());
        let raw = RawConfig::parse("mesh.n = 4\nk = -1\n").unwrap();
        let err = ExperimentConfig::from_raw(&raw).unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (2, "k"));
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse("k = 1\n").unwrap();
        raw.apply_overrides(&["k=3".into(), "sigma.sides=bottom,left".into()]).unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.k, 3.0);
        assert_eq!(cfg.sigma, vec![Side::Bottom, Side::Left]);
    }
}

//! INI-style experiment configuration: `[section]` headers, `key = value`
//! lines, `#`/`;` comments. Unknown sections or keys are rejected so a config
//! echoed into a manifest is always a complete, replayable description.

use crate::error::{Error, Result};
use crate::fields::AnalyticField;
use crate::pde::SolverConfig;
use std::fmt::Write as _;
use std::path::Path;

/// Boundary-data specification, parsed from strings like
/// `sphere_cap:R=1.0`, `trig:freq=1.0,amp=0.1`, `sin:axis=0,freq=3.0,amp=0.05`,
/// `poly:c0,c1,…`, or `zero`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    SphereCap { radius: f64 },
    Trig { freq: f64, amp: f64 },
    SinAxis { axis: usize, freq: f64, amp: f64 },
    Poly { coeffs: Vec<f64> },
    Zero,
}

impl PhiSpec {
    pub fn parse(s: &str) -> Result<PhiSpec> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        let kv = |rest: &str| -> Result<Vec<(String, f64)>> {
            rest.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (k, v) = p
                        .split_once('=')
                        .ok_or_else(|| Error::Validation(format!("bad phi parameter `{p}`")))?;
                    let v: f64 = v.trim().parse().map_err(|_| {
                        Error::Validation(format!("bad phi parameter value `{p}`"))
                    })?;
                    Ok((k.trim().to_string(), v))
                })
                .collect()
        };
        let get = |pairs: &[(String, f64)], key: &str, default: Option<f64>| -> Result<f64> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .or(default)
                .ok_or_else(|| Error::Validation(format!("phi spec missing `{key}`")))
        };
        match head {
            "sphere_cap" => {
                let pairs = kv(rest)?;
                Ok(PhiSpec::SphereCap { radius: get(&pairs, "R", Some(1.0))? })
            }
            "trig" => {
                let pairs = kv(rest)?;
                Ok(PhiSpec::Trig {
                    freq: get(&pairs, "freq", Some(1.0))?,
                    amp: get(&pairs, "amp", Some(0.1))?,
                })
            }
            "sin" => {
                let pairs = kv(rest)?;
                Ok(PhiSpec::SinAxis {
                    axis: get(&pairs, "axis", Some(0.0))? as usize,
                    freq: get(&pairs, "freq", Some(1.0))?,
                    amp: get(&pairs, "amp", Some(0.1))?,
                })
            }
            "poly" => {
                let coeffs: Result<Vec<f64>> = rest
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|_| Error::Validation(format!("bad poly coefficient `{p}`")))
                    })
                    .collect();
                let coeffs = coeffs?;
                if coeffs.is_empty() {
                    return Err(Error::Validation("poly phi needs coefficients".into()));
                }
                Ok(PhiSpec::Poly { coeffs })
            }
            "zero" => Ok(PhiSpec::Zero),
            other => Err(Error::Validation(format!("unknown phi kind `{other}`"))),
        }
    }

    pub fn to_field(&self, dims: usize) -> AnalyticField {
        match self {
            PhiSpec::SphereCap { radius } => AnalyticField::sphere_cap(dims, *radius),
            PhiSpec::Trig { freq, amp } => AnalyticField::trig(dims, *freq, *amp),
            PhiSpec::SinAxis { axis, freq, amp } => {
                AnalyticField::sin_axis(dims, *axis, *freq, *amp)
            }
            PhiSpec::Poly { coeffs } => AnalyticField::polynomial(dims, coeffs.clone()),
            PhiSpec::Zero => AnalyticField::constant(dims, 0.0),
        }
    }

    pub fn spec_string(&self) -> String {
        match self {
            PhiSpec::SphereCap { radius } => format!("sphere_cap:R={radius}"),
            PhiSpec::Trig { freq, amp } => format!("trig:freq={freq},amp={amp}"),
            PhiSpec::SinAxis { axis, freq, amp } => {
                format!("sin:axis={axis},freq={freq},amp={amp}")
            }
            PhiSpec::Poly { coeffs } => {
                let list: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                format!("poly:{}", list.join(","))
            }
            PhiSpec::Zero => "zero".into(),
        }
    }
}

/// How lateral and top Dirichlet data is produced for `solve`/`verify`:
/// the exact hemisphere (sphere-cap data only) or the computed expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Exact,
    Expansion,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // [problem]
    pub n: usize,
    pub phi: PhiSpec,
    pub bc: BcKind,
    // [mesh]
    pub r: f64,
    pub w: f64,
    pub ny: usize,
    pub big_m: usize,
    pub gamma: f64,
    // [solver]
    pub solver: SolverConfig,
    // [analysis]
    pub k: i32,
    pub alpha: f64,
    pub j_max: u32,
    pub taus: Vec<usize>,
    pub ms: Vec<usize>,
    pub input: Option<String>,
    // [ode]
    pub m_low: i32,
    pub m_high: i32,
    pub ode_k: i32,
    pub forcing_amp: f64,
    // [output]
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 2,
            phi: PhiSpec::SphereCap { radius: 1.0 },
            bc: BcKind::Exact,
            r: 0.3,
            w: 0.3,
            ny: 17,
            big_m: 32,
            gamma: 2.0,
            solver: SolverConfig::default(),
            k: 3,
            alpha: 0.5,
            j_max: 2,
            taus: vec![0, 1],
            ms: vec![0, 1, 2],
            input: None,
            m_low: 0,
            m_high: 3,
            ode_k: 4,
            forcing_amp: 2.0,
            out_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    /// Load from a file (usage error when missing) and apply defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                Self::check_section(&section)?;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(&section, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn check_section(name: &str) -> Result<()> {
        match name {
            "problem" | "mesh" | "solver" | "analysis" | "ode" | "output" => Ok(()),
            other => Err(Error::Validation(format!("unknown section `[{other}]`"))),
        }
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{spec}` is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Usage(format!("override key `{path}` needs section.key")))?;
        Self::check_section(section)?;
        self.set(section, key, value.trim())?;
        self.validate()
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let bad_val =
            |k: &str, v: &str| Error::Validation(format!("invalid value `{v}` for `{k}`"));
        let f = |k: &str, v: &str| -> Result<f64> { v.parse().map_err(|_| bad_val(k, v)) };
        let u = |k: &str, v: &str| -> Result<usize> { v.parse().map_err(|_| bad_val(k, v)) };
        let i = |k: &str, v: &str| -> Result<i32> { v.parse().map_err(|_| bad_val(k, v)) };
        let list = |k: &str, v: &str| -> Result<Vec<usize>> {
            v.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse().map_err(|_| bad_val(k, v)))
                .collect()
        };
        match (section, key) {
            ("problem", "n") => self.n = u(key, value)?,
            ("problem", "phi") => self.phi = PhiSpec::parse(value)?,
            ("problem", "bc") => {
                self.bc = match value {
                    "exact" => BcKind::Exact,
                    "expansion" => BcKind::Expansion,
                    _ => return Err(bad_val(key, value)),
                }
            }
            ("mesh", "r") => self.r = f(key, value)?,
            ("mesh", "w") => self.w = f(key, value)?,
            ("mesh", "ny") => self.ny = u(key, value)?,
            ("mesh", "M") => self.big_m = u(key, value)?,
            ("mesh", "gamma") => self.gamma = f(key, value)?,
            ("solver", "newton_tol") => self.solver.newton_tol = f(key, value)?,
            ("solver", "max_iters") => self.solver.max_iters = u(key, value)?,
            ("solver", "damping") => {
                self.solver.damping = value.parse().map_err(|_| bad_val(key, value))?
            }
            ("solver", "lambda") => self.solver.lambda_floor = f(key, value)?,
            ("analysis", "k") => self.k = i(key, value)?,
            ("analysis", "alpha") => self.alpha = f(key, value)?,
            ("analysis", "j_max") => self.j_max = u(key, value)? as u32,
            ("analysis", "taus") => self.taus = list(key, value)?,
            ("analysis", "ms") => self.ms = list(key, value)?,
            ("analysis", "input") => self.input = Some(value.to_string()),
            ("ode", "m_low") => self.m_low = i(key, value)?,
            ("ode", "m_high") => self.m_high = i(key, value)?,
            ("ode", "k") => self.ode_k = i(key, value)?,
            ("ode", "forcing_amp") => self.forcing_amp = f(key, value)?,
            ("output", "dir") => self.out_dir = value.to_string(),
            (sec, k) => {
                return Err(Error::Validation(if sec.is_empty() {
                    format!("key `{k}` appears before any [section] header")
                } else {
                    format!("unknown key `{k}` in section [{sec}]")
                }))
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Validation(format!("n = {} must be at least 2", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if self.k < 2 {
            return Err(Error::Validation(format!("expansion order k = {} below 2", self.k)));
        }
        if !(self.r > 0.0 && self.w > 0.0 && self.gamma >= 1.0) {
            return Err(Error::Validation("mesh parameters out of range".into()));
        }
        Ok(())
    }

    /// PDE pipelines discretize `n − 1` tangential dimensions.
    pub fn require_pde_n(&self) -> Result<usize> {
        if self.n == 2 || self.n == 3 {
            Ok(self.n - 1)
        } else {
            Err(Error::Validation(format!("n = {} unsupported for pde pipelines", self.n)))
        }
    }

    /// Canonical echo of every setting, for the run manifest.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[problem]");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "phi = {}", self.phi.spec_string());
        let _ = writeln!(
            s,
            "bc = {}",
            if self.bc == BcKind::Exact { "exact" } else { "expansion" }
        );
        let _ = writeln!(s, "[mesh]");
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "w = {}", self.w);
        let _ = writeln!(s, "ny = {}", self.ny);
        let _ = writeln!(s, "M = {}", self.big_m);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "[solver]");
        let _ = writeln!(s, "newton_tol = {:e}", self.solver.newton_tol);
        let _ = writeln!(s, "max_iters = {}", self.solver.max_iters);
        let _ = writeln!(s, "damping = {}", self.solver.damping);
        let _ = writeln!(s, "lambda = {:e}", self.solver.lambda_floor);
        let _ = writeln!(s, "[analysis]");
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "j_max = {}", self.j_max);
        let taus: Vec<String> = self.taus.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "taus = {}", taus.join(","));
        let ms: Vec<String> = self.ms.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "ms = {}", ms.join(","));
        if let Some(input) = &self.input {
            let _ = writeln!(s, "input = {input}");
        }
        let _ = writeln!(s, "[ode]");
        let _ = writeln!(s, "m_low = {}", self.m_low);
        let _ = writeln!(s, "m_high = {}", self.m_high);
        let _ = writeln!(s, "k = {}", self.ode_k);
        let _ = writeln!(s, "forcing_amp = {}", self.forcing_amp);
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(name: &str, body: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let p = write_tmp("cfg_minimal.ini", "[problem]\nn = 2\nphi = sphere_cap:R=1\n");
        let cfg = ExperimentConfig::from_file(&p).unwrap();
        assert_eq!(cfg.n, 2);
        assert_eq!(cfg.phi, PhiSpec::SphereCap { radius: 1.0 });
        assert_eq!(cfg.big_m, 32);
        assert_eq!(cfg.gamma, 2.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let p = write_tmp("cfg_badkey.ini", "[mesh]\nspacing = 0.1\n");
        let err = ExperimentConfig::from_file(&p).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn n5_rejected_for_pde() {
        let p = write_tmp("cfg_n5.ini", "[problem]\nn = 5\n");
        let cfg = ExperimentConfig::from_file(&p).unwrap();
        assert!(cfg.require_pde_n().is_err());
    }

    #[test]
    fn missing_file_is_usage_error() {
        let err =
            ExperimentConfig::from_file(Path::new("/nonexistent/nope.ini")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_override("mesh.M=128").unwrap();
        assert_eq!(cfg.big_m, 128);
        cfg.apply_override("problem.phi=trig:freq=3,amp=0.05").unwrap();
        assert_eq!(cfg.phi, PhiSpec::Trig { freq: 3.0, amp: 0.05 });
        assert!(cfg.apply_override("mesh.gamma=0.2").is_err());
        assert!(cfg.apply_override("nonsense").is_err());
        assert!(cfg.apply_override("mesh.spacing=1").is_err());
    }

    #[test]
    fn phi_specs_round_trip() {
        for s in ["sphere_cap:R=2", "trig:freq=1,amp=0.1", "sin:axis=1,freq=2,amp=0.3", "zero"] {
            let spec = PhiSpec::parse(s).unwrap();
            let again = PhiSpec::parse(&spec.spec_string()).unwrap();
            assert_eq!(spec, again);
        }
        assert!(PhiSpec::parse("blob:x=1").is_err());
        assert!(PhiSpec::parse("poly:").is_err());
    }

    #[test]
    fn comments_and_echo() {
        let p = write_tmp(
            "cfg_comment.ini",
            "# experiment\n[problem]\nn = 3  ; dimension\n[mesh]\nM = 64\n",
        );
        let cfg = ExperimentConfig::from_file(&p).unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.big_m, 64);
        let echo = cfg.echo();
        assert!(echo.contains("n = 3"));
        assert!(echo.contains("M = 64"));
    }
}

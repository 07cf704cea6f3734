//! Flat `key = value` run configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; lists are comma-separated. Unknown or repeated keys are
//! errors. Omitted keys take the defaults of [`RunConfig::default`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::{Bounds, Method, SolverConfig};
use crate::warp::WarpProfile;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileChoice {
    Standard,
    Product,
    Cosine(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: ProfileChoice,
    pub n_list: Vec<u32>,
    pub eps0: f64,
    pub halvings: usize,
    pub blend_fraction: f64,
    pub rings: usize,
    pub levels_per_wrap: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub residual_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub method: Method,
    pub transversal_phi: f64,
    pub transversal_theta: f64,
    pub transversal_delta: f64,
    pub curvature_bands: Vec<f64>,
    pub disk_radii: Vec<f64>,
    pub check_grid: usize,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: ProfileChoice::Standard,
            n_list: vec![1, 2, 3],
            eps0: 0.3,
            halvings: 2,
            blend_fraction: 0.5,
            rings: 32,
            levels_per_wrap: 48,
            max_iterations: 20_000,
            grad_tol: 1e-6,
            residual_tol: 1e-4,
            backtrack: 0.5,
            armijo: 1e-4,
            method: Method::Ncg,
            transversal_phi: 1.5,
            transversal_theta: 1.0,
            transversal_delta: 3.0,
            curvature_bands: vec![0.1, 0.5],
            disk_radii: vec![0.05, 0.1, 0.2],
            check_grid: 4096,
            seed: 0,
            threads: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

const KEYS: &[&str] = &[
    "profile",
    "cosine_coefficients",
    "n_list",
    "eps0",
    "halvings",
    "blend_fraction",
    "rings",
    "levels_per_wrap",
    "max_iterations",
    "grad_tol",
    "residual_tol",
    "backtrack",
    "armijo",
    "method",
    "transversal_phi",
    "transversal_theta",
    "transversal_delta",
    "curvature_bands",
    "disk_radii",
    "check_grid",
    "seed",
    "threads",
    "out_dir",
];

/// Keys that do not change results and are left out of the config hash.
const NON_SEMANTIC: &[&str] = &["out_dir", "threads"];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if pairs.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        let mut cfg = RunConfig::default();
        let mut cosine: Option<Vec<f64>> = None;
        let mut profile_name = "standard".to_string();
        for (k, (_, v)) in &pairs {
            let v = v.as_str();
            match k.as_str() {
                "profile" => profile_name = v.to_string(),
                "cosine_coefficients" => cosine = Some(parse_list(k, v)?),
                "n_list" => cfg.n_list = parse_list(k, v)?,
                "eps0" => cfg.eps0 = parse_num(k, v)?,
                "halvings" => cfg.halvings = parse_num(k, v)?,
                "blend_fraction" => cfg.blend_fraction = parse_num(k, v)?,
                "rings" => cfg.rings = parse_num(k, v)?,
                "levels_per_wrap" => cfg.levels_per_wrap = parse_num(k, v)?,
                "max_iterations" => cfg.max_iterations = parse_num(k, v)?,
                "grad_tol" => cfg.grad_tol = parse_num(k, v)?,
                "residual_tol" => cfg.residual_tol = parse_num(k, v)?,
                "backtrack" => cfg.backtrack = parse_num(k, v)?,
                "armijo" => cfg.armijo = parse_num(k, v)?,
                "method" => {
                    cfg.method = match v {
                        "ncg" => Method::Ncg,
                        "gradient" => Method::Gradient,
                        _ => return Err(Error::Config(format!("method: expected ncg or gradient, got {v:?}"))),
                    }
                }
                "transversal_phi" => cfg.transversal_phi = parse_num(k, v)?,
                "transversal_theta" => cfg.transversal_theta = parse_num(k, v)?,
                "transversal_delta" => cfg.transversal_delta = parse_num(k, v)?,
                "curvature_bands" => cfg.curvature_bands = parse_list(k, v)?,
                "disk_radii" => cfg.disk_radii = parse_list(k, v)?,
                "check_grid" => cfg.check_grid = parse_num(k, v)?,
                "seed" => cfg.seed = parse_num(k, v)?,
                "threads" => cfg.threads = parse_num(k, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.profile = match (profile_name.as_str(), cosine) {
            ("standard", None) => ProfileChoice::Standard,
            ("product", None) => ProfileChoice::Product,
            ("cosine", Some(c)) => ProfileChoice::Cosine(c),
            ("cosine", None) => return Err(Error::Config("profile = cosine needs cosine_coefficients".into())),
            ("standard" | "product", Some(_)) => {
                return Err(Error::Config("cosine_coefficients given without profile = cosine".into()))
            }
            (other, _) => return Err(Error::Config(format!("profile: unknown value {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n == 0 || n > 64) {
            return fail(format!("n_list {:?}: entries must be in 1..=64", self.n_list));
        }
        if !(self.eps0 > 0.0 && self.eps0 < PI / 4.0) {
            return fail(format!("eps0 = {} outside (0, pi/4)", self.eps0));
        }
        if self.halvings > 12 {
            return fail(format!("halvings = {} > 12", self.halvings));
        }
        if !(self.blend_fraction > 0.0 && self.blend_fraction <= 0.5) {
            return fail(format!("blend_fraction = {} outside (0, 0.5]", self.blend_fraction));
        }
        if self.rings < 16 || self.levels_per_wrap < 16 {
            return fail("rings and levels_per_wrap must be >= 16".into());
        }
        if self.max_iterations == 0 || !(self.grad_tol >= 0.0) || !(self.residual_tol >= 0.0) {
            return fail("solver iteration limit and tolerances must be positive".into());
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return fail("backtrack and armijo must lie in (0, 1)".into());
        }
        let margin = 0.1;
        if !(self.transversal_phi > margin && self.transversal_phi < PI - margin) {
            return fail(format!("transversal_phi = {} too close to an axis", self.transversal_phi));
        }
        if !self.transversal_theta.is_finite() {
            return fail("transversal_theta must be finite".into());
        }
        if !(self.transversal_delta > 0.0 && self.transversal_delta < PI) {
            return fail(format!("transversal_delta = {} outside (0, pi)", self.transversal_delta));
        }
        if self.curvature_bands.windows(2).any(|w| !(w[1] > w[0])) || self.curvature_bands.iter().any(|b| !(*b > 0.0)) {
            return fail("curvature_bands must be positive and increasing".into());
        }
        if self.disk_radii.iter().any(|r| !(*r > 0.0)) {
            return fail("disk_radii must be positive".into());
        }
        if self.check_grid < 64 {
            return fail("check_grid must be >= 64".into());
        }
        if let ProfileChoice::Cosine(c) = &self.profile {
            if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                return fail("cosine_coefficients must be finite and nonempty".into());
            }
        }
        Ok(())
    }

    pub fn warp_profile(&self) -> WarpProfile {
        match &self.profile {
            ProfileChoice::Standard => WarpProfile::standard(),
            ProfileChoice::Product => WarpProfile::product(),
            ProfileChoice::Cosine(c) => WarpProfile::cosine(c.clone()),
        }
    }

    /// Solver settings for an annulus in N_{n,ε}.
    pub fn solver(&self, n: u32) -> SolverConfig {
        SolverConfig {
            max_iterations: self.max_iterations,
            grad_tol: self.grad_tol,
            residual_tol: self.residual_tol,
            backtrack: self.backtrack,
            armijo: self.armijo,
            method: self.method,
            bounds: Bounds::box_chart(n),
            ..SolverConfig::default()
        }
    }

    /// Every key with its normalised value, in key order.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let (name, coeffs) = match &self.profile {
            ProfileChoice::Standard => ("standard", None),
            ProfileChoice::Product => ("product", None),
            ProfileChoice::Cosine(c) => ("cosine", Some(fmt_list(c))),
        };
        m.insert("profile".into(), name.into());
        if let Some(c) = coeffs {
            m.insert("cosine_coefficients".into(), c);
        }
        m.insert("n_list".into(), fmt_list(&self.n_list));
        m.insert("eps0".into(), format!("{:?}", self.eps0));
        m.insert("halvings".into(), self.halvings.to_string());
        m.insert("blend_fraction".into(), format!("{:?}", self.blend_fraction));
        m.insert("rings".into(), self.rings.to_string());
        m.insert("levels_per_wrap".into(), self.levels_per_wrap.to_string());
        m.insert("max_iterations".into(), self.max_iterations.to_string());
        m.insert("grad_tol".into(), format!("{:?}", self.grad_tol));
        m.insert("residual_tol".into(), format!("{:?}", self.residual_tol));
        m.insert("backtrack".into(), format!("{:?}", self.backtrack));
        m.insert("armijo".into(), format!("{:?}", self.armijo));
        m.insert("method".into(), match self.method {
            Method::Ncg => "ncg".into(),
            Method::Gradient => "gradient".into(),
        });
        m.insert("transversal_phi".into(), format!("{:?}", self.transversal_phi));
        m.insert("transversal_theta".into(), format!("{:?}", self.transversal_theta));
        m.insert("transversal_delta".into(), format!("{:?}", self.transversal_delta));
        m.insert("curvature_bands".into(), fmt_list(&self.curvature_bands));
        m.insert("disk_radii".into(), fmt_list(&self.disk_radii));
        m.insert("check_grid".into(), self.check_grid.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("threads".into(), self.threads.to_string());
        m.insert("out_dir".into(), self.out_dir.display().to_string());
        m
    }

    /// Config file text that parses back to `self`.
    pub fn to_text(&self) -> String {
        self.canonical().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// sha256 over the semantic fields of the canonical form.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            if NON_SEMANTIC.contains(&k.as_str()) {
                continue;
            }
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn parses_comments_and_lists() {
        let cfg = RunConfig::parse(
            "# smoke run\nn_list = 1, 2   # two wraps\nprofile = cosine\ncosine_coefficients = 1.25, -0.25\nmethod = gradient\n",
        )
        .unwrap();
        assert_eq!(cfg.n_list, vec![1, 2]);
        assert_eq!(cfg.profile, ProfileChoice::Cosine(vec![1.25, -0.25]));
        assert_eq!(cfg.method, Method::Gradient);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("colour = blue").is_err());
        assert!(RunConfig::parse("eps0 = 0.3\neps0 = 0.2").is_err());
        assert!(RunConfig::parse("eps0").is_err());
        assert!(RunConfig::parse("eps0 = 1.0").is_err());
        assert!(RunConfig::parse("profile = cosine").is_err());
        assert!(RunConfig::parse("n_list = 0").is_err());
        assert!(RunConfig::parse("transversal_phi = 0.01").is_err());
        assert!(RunConfig::parse("rings = many").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig { out_dir: "elsewhere".into(), threads: 4, ..a.clone() };
        let c = RunConfig { eps0: 0.25, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}

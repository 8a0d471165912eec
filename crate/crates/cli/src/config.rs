//! Experiment configuration: a plain-text `key = value` file plus flag
//! overrides (flags win).
//!
//! ```text
//! # correlated factors
//! d = 3
//! lambdas = 1, 1
//! gram = two-eigenvalue:1.8,0.2
//! n = 4
//! samples = 100000
//! ```
//!
//! Gram values are `identity`, `all-ones`, `two-eigenvalue:a,b` or a literal
//! matrix with rows separated by `;` and entries by `,` (entries may be
//! complex, e.g. `0.3+0.1i`). `gram.K = …` overrides mode `K` (1-based).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use spikedet_core::moment::SpikePrior;
use spikedet_core::spike::{GramSet, SpikeSpec};
use spikedet_core::CMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn at(mut self, line: Option<usize>) -> Self {
        self.line = self.line.or(line);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Threshold,
    Cloud,
    Moment,
    Split,
    XiTail,
    Roc,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Threshold => "threshold",
            Self::Cloud => "cloud",
            Self::Moment => "moment",
            Self::Split => "split",
            Self::XiTail => "xi-tail",
            Self::Roc => "roc",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "threshold" => Self::Threshold,
            "cloud" => Self::Cloud,
            "moment" => Self::Moment,
            "split" => Self::Split,
            "xi-tail" => Self::XiTail,
            "roc" => Self::Roc,
            _ => return Err(format!("unknown experiment `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("expected `csv` or `json`, got `{s}`")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// Which second-moment estimator `moment` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    Haar,
    Direct,
}

impl FromStr for MomentMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "haar" => Ok(Self::Haar),
            "direct" => Ok(Self::Direct),
            _ => Err(format!("expected `haar` or `direct`, got `{s}`")),
        }
    }
}

impl fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Haar => "haar",
            Self::Direct => "direct",
        })
    }
}

fn parse_prior(s: &str) -> Result<SpikePrior, String> {
    match s {
        "haar" => Ok(SpikePrior::Haar),
        "fixed" => Ok(SpikePrior::Fixed),
        _ => Err(format!("expected `haar` or `fixed`, got `{s}`")),
    }
}

fn prior_name(p: SpikePrior) -> &'static str {
    match p {
        SpikePrior::Haar => "haar",
        SpikePrior::Fixed => "fixed",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GramSpec {
    Identity,
    AllOnes,
    TwoEigenvalue(f64, f64),
    Literal(Vec<Vec<Complex64>>),
}

impl FromStr for GramSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "identity" => return Ok(Self::Identity),
            "all-ones" => return Ok(Self::AllOnes),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("two-eigenvalue:") {
            let vals = parse_list::<f64>(rest)?;
            let [a, b] = vals[..] else {
                return Err(format!("two-eigenvalue preset takes two values, got {}", vals.len()));
            };
            return Ok(Self::TwoEigenvalue(a, b));
        }
        if s.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            return Err(format!("unknown Gram preset `{s}` (expected identity, all-ones, two-eigenvalue:a,b or a literal matrix)"));
        }
        let rows = s
            .split(';')
            .map(|row| row.split(',').map(|e| parse_complex(e.trim())).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let r = rows.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(format!("literal Gram must be square; got {r} rows of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>()));
        }
        Ok(Self::Literal(rows))
    }
}

impl fmt::Display for GramSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::AllOnes => f.write_str("all-ones"),
            Self::TwoEigenvalue(a, b) => write!(f, "two-eigenvalue:{a},{b}"),
            Self::Literal(rows) => {
                let text: Vec<String> = rows
                    .iter()
                    .map(|row| row.iter().map(|z| format_complex(*z)).collect::<Vec<_>>().join(", "))
                    .collect();
                f.write_str(&text.join("; "))
            }
        }
    }
}

impl GramSpec {
    pub fn matrix(&self, r: usize) -> Result<CMatrix, String> {
        let one = Complex64::new(1.0, 0.0);
        match self {
            Self::Identity => Ok(CMatrix::identity(r, r)),
            Self::AllOnes => Ok(CMatrix::from_element(r, r, one)),
            Self::TwoEigenvalue(a, b) => {
                if r != 2 {
                    return Err(format!("two-eigenvalue preset requires rank 2, got rank {r}"));
                }
                let set = GramSet::two_eigenvalue(1, *a, *b).map_err(|e| e.to_string())?;
                Ok(set.grams()[0].clone())
            }
            Self::Literal(rows) => {
                if rows.len() != r {
                    return Err(format!("literal Gram is {0}x{0} but rank is {r}", rows.len()));
                }
                Ok(CMatrix::from_fn(r, r, |i, j| rows[i][j]))
            }
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let bad = || format!("cannot parse `{s}` as a number");
    if let Some(body) = s.strip_suffix('i') {
        // Split at the last sign that is not part of an exponent or leading.
        let bytes = body.as_bytes();
        let split = (1..bytes.len())
            .rev()
            .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            other => other,
        };
        let re: f64 = re.parse().map_err(|_| bad())?;
        let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
        return Ok(Complex64::new(re, im));
    }
    s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad())
}

fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(format!("malformed list `{s}`"));
    }
    items
        .iter()
        .map(|i| i.parse::<T>().map_err(|_| format!("cannot parse `{i}`")))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub d: usize,
    pub lambdas: Vec<f64>,
    pub gram: GramSpec,
    /// Per-mode overrides, keyed by 1-based mode index.
    pub mode_grams: BTreeMap<usize, GramSpec>,
    pub n: Vec<usize>,
    pub samples: usize,
    pub inner: usize,
    pub outer: usize,
    pub trials: usize,
    pub epsilon: Option<f64>,
    pub bins: usize,
    pub t: Vec<f64>,
    pub seed: u64,
    pub format: OutputFormat,
    pub relaxed: bool,
    pub method: MomentMethod,
    pub prior: SpikePrior,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            d: 3,
            lambdas: vec![1.0],
            gram: GramSpec::Identity,
            mode_grams: BTreeMap::new(),
            n: vec![4],
            samples: 10_000,
            inner: 1_000,
            outer: 1_000,
            trials: 1_000,
            epsilon: None,
            bins: 50,
            t: vec![0.5],
            seed: DEFAULT_SEED,
            format: OutputFormat::Json,
            relaxed: false,
            method: MomentMethod::Haar,
            prior: SpikePrior::Haar,
        }
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(line, "expected `key = value`").at(Some(idx + 1)));
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| e.at(Some(idx + 1)))?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let err = |m: String| ConfigError::new(key, m);
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "experiment" => self.experiment = Some(value.parse().map_err(err)?),
            "d" => self.d = num(value).map_err(err)?,
            "r" => {
                let r: usize = num(value).map_err(err)?;
                if r != self.lambdas.len() {
                    return Err(err(format!("r = {r} disagrees with {} lambdas", self.lambdas.len())));
                }
            }
            "lambdas" => self.lambdas = parse_list(value).map_err(err)?,
            "gram" => self.gram = value.parse().map_err(err)?,
            "n" => self.n = parse_list(value).map_err(err)?,
            "samples" => self.samples = num(value).map_err(err)?,
            "inner" => self.inner = num(value).map_err(err)?,
            "outer" => self.outer = num(value).map_err(err)?,
            "trials" => self.trials = num(value).map_err(err)?,
            "epsilon" => {
                self.epsilon = match value {
                    "auto" => None,
                    v => Some(num(v).map_err(err)?),
                }
            }
            "bins" => self.bins = num(value).map_err(err)?,
            "t" => self.t = parse_list(value).map_err(err)?,
            "seed" => self.seed = num(value).map_err(err)?,
            "format" => self.format = value.parse().map_err(err)?,
            "relaxed" => self.relaxed = num(value).map_err(err)?,
            "method" => self.method = value.parse().map_err(err)?,
            "prior" => self.prior = parse_prior(value).map_err(err)?,
            other => {
                let Some(mode) = other.strip_prefix("gram.") else {
                    return Err(ConfigError::new(other, "unknown key"));
                };
                let k: usize = num(mode).map_err(err)?;
                if k == 0 {
                    return Err(err("mode indices are 1-based".into()));
                }
                self.mode_grams.insert(k, value.parse().map_err(err)?);
            }
        }
        Ok(())
    }

    /// Canonical `key = value` text; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Canonical `(key, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        if let Some(e) = self.experiment {
            push("experiment", e.name().into());
        }
        push("d", self.d.to_string());
        push("lambdas", join(&self.lambdas));
        push("gram", self.gram.to_string());
        for (k, g) in &self.mode_grams {
            push(&format!("gram.{k}"), g.to_string());
        }
        push("n", join(&self.n));
        push("samples", self.samples.to_string());
        push("inner", self.inner.to_string());
        push("outer", self.outer.to_string());
        push("trials", self.trials.to_string());
        push("epsilon", self.epsilon.map_or("auto".into(), |e| e.to_string()));
        push("bins", self.bins.to_string());
        push("t", join(&self.t));
        push("seed", self.seed.to_string());
        push("format", self.format.to_string());
        push("relaxed", self.relaxed.to_string());
        push("method", self.method.to_string());
        push("prior", prior_name(self.prior).into());
        out
    }

    pub fn r(&self) -> usize {
        self.lambdas.len()
    }

    pub fn gram_set(&self) -> Result<GramSet, ConfigError> {
        if self.d < 2 {
            return Err(ConfigError::new("d", format!("order must be at least 2, got {}", self.d)));
        }
        if self.lambdas.is_empty() {
            return Err(ConfigError::new("lambdas", "at least one amplitude required"));
        }
        if let Some(&k) = self.mode_grams.keys().find(|&&k| k > self.d) {
            return Err(ConfigError::new(&format!("gram.{k}"), format!("mode {k} exceeds d = {}", self.d)));
        }
        let r = self.r();
        let grams = (1..=self.d)
            .map(|k| {
                let (field, spec) = match self.mode_grams.get(&k) {
                    Some(g) => (format!("gram.{k}"), g),
                    None => ("gram".to_string(), &self.gram),
                };
                spec.matrix(r).map_err(|m| ConfigError::new(&field, m))
            })
            .collect::<Result<Vec<_>, _>>()?;
        GramSet::new(grams).map_err(|e| ConfigError::new("gram", e.to_string()))
    }

    /// Spike at dimension `n`, factors from the Grams (no rotation).
    pub fn spike(&self, n: usize) -> Result<SpikeSpec, ConfigError> {
        let grams = self.gram_set()?;
        let built = if self.relaxed {
            SpikeSpec::relaxed_from_grams(self.lambdas.clone(), &grams, n, None)
        } else {
            SpikeSpec::from_grams(self.lambdas.clone(), &grams, n, None)
        };
        built.map_err(|e| ConfigError::new("lambdas", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_eigenvalue_preset() {
        let cfg = ExperimentConfig::parse("# comment\nd = 3\nlambdas = 1, 1\ngram = two-eigenvalue:1.8,0.2\nn = 4, 8 # trailing\n").unwrap();
        assert_eq!(cfg.gram, GramSpec::TwoEigenvalue(1.8, 0.2));
        assert_eq!(cfg.n, vec![4, 8]);
        let g = cfg.gram_set().unwrap();
        assert!((g.grams()[2][(0, 1)].re - 0.8).abs() < 1e-15);
    }

    #[test]
    fn literal_complex_gram() {
        let g: GramSpec = "1, 0.3+0.4i; 0.3-0.4i, 1".parse().unwrap();
        let m = g.matrix(2).unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(0.3, 0.4));
        assert_eq!(m[(1, 0)], Complex64::new(0.3, -0.4));
        assert_eq!(g.to_string().parse::<GramSpec>().unwrap(), g);
        assert_eq!(parse_complex("-2i").unwrap(), Complex64::new(0.0, -2.0));
        assert_eq!(parse_complex("1e-3+2e-1i").unwrap(), Complex64::new(1e-3, 0.2));
    }

    #[test]
    fn errors_carry_line_and_field() {
        let e = ExperimentConfig::parse("d = 3\ngram = diagonal\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.field, "gram");
        let e = ExperimentConfig::parse("d = 3\n\nbogus = 1\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(3), "bogus"));
        let e = ExperimentConfig::parse("lambdas = 1,,2").unwrap_err();
        assert_eq!(e.field, "lambdas");
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn invalid_gram_is_config_error() {
        let mut cfg = ExperimentConfig::parse("lambdas = 1, 1, 1\ngram = two-eigenvalue:1.8,0.2").unwrap();
        assert_eq!(cfg.gram_set().unwrap_err().field, "gram");
        cfg.gram = "1, 2; 2, 1".parse().unwrap();
        assert!(cfg.gram_set().is_err());
        cfg.mode_grams.insert(7, GramSpec::Identity);
        assert_eq!(cfg.gram_set().unwrap_err().field, "gram.7");
    }

    #[test]
    fn per_mode_override() {
        let cfg = ExperimentConfig::parse("d = 3\nlambdas = 1, 1\ngram = identity\ngram.2 = all-ones").unwrap();
        let g = cfg.gram_set().unwrap();
        assert_eq!(g.grams()[0][(0, 1)], Complex64::new(0.0, 0.0));
        assert_eq!(g.grams()[1][(0, 1)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "seed=7\n  gram.2 = 1,0.5;0.5,1\nlambdas=0.5,0.25\nexperiment=cloud\nt = 0.3,0.7\nepsilon=0.01\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let canon = cfg.to_text();
        assert_eq!(ExperimentConfig::parse(&canon).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse(&canon).unwrap().to_text(), canon);
    }
}

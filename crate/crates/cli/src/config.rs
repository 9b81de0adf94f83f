//! TOML problem descriptions.
//!
//! The grammar is documented in `docs/config.md`. Every semantic check is
//! reported against the line of the offending key.

use qho_core::autonomous::AutonomousObserverProblem;
use qho_core::composite::PlantObserverSystem;
use qho_core::matlib::{canonical_ccr, is_symmetric, min_eigenvalue_sym, RealMatrix};
use qho_core::qho::{validate_ccr, InitialMoments};
use serde::Deserialize;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use toml::Spanned;

const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    plant: RawPlant,
    observer: Option<RawObserver>,
    coupling: Option<RawCoupling>,
    weights: Option<RawWeights>,
    horizon: Option<RawHorizon>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    theta: Spanned<Entry>,
    #[serde(rename = "K")]
    k: Spanned<Entry>,
    sigma1: Spanned<Entry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    theta: Spanned<Entry>,
    #[serde(rename = "M")]
    m: Spanned<Entry>,
    sigma2: Spanned<Entry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    #[serde(rename = "L")]
    l: Spanned<Entry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    #[serde(rename = "S0")]
    s0: Option<Spanned<Entry>>,
    #[serde(rename = "S1")]
    s1: Option<Spanned<Entry>>,
    #[serde(rename = "S2")]
    s2: Option<Spanned<Entry>>,
    #[serde(rename = "Pi")]
    pi: Spanned<Entry>,
    lambda: Option<Spanned<f64>>,
    mu: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHorizon {
    tau: Spanned<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Entry {
    Word(String),
    Rows(Vec<Vec<f64>>),
}

/// A single oscillator: only the `plant` section is present.
#[derive(Debug, Clone)]
pub struct OscillatorConfig {
    pub theta: RealMatrix,
    pub energy: RealMatrix,
    pub sigma: RealMatrix,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompositeConfig {
    pub system: PlantObserverSystem,
    /// `1/λ`, zero when the coupling is zero and `mu = 0` was given.
    pub mu: f64,
    /// Present when the instance belongs to the autonomous-error class.
    pub autonomous: Option<AutonomousObserverProblem>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Oscillator(OscillatorConfig),
    Composite(CompositeConfig),
}

#[derive(Debug, Clone)]
pub struct Config {
    pub path: String,
    pub text: String,
    pub problem: Problem,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: shown.clone(),
            line: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&shown, &text)
    }

    pub fn parse(path: &str, text: &str) -> Result<Config, ConfigError> {
        let cx = Cx { path, text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| cx.err(e.span(), e.message().to_string()))?;
        let problem = cx.build(raw)?;
        Ok(Config {
            path: path.to_string(),
            text: text.to_string(),
            problem,
        })
    }

    pub fn oscillator(&self) -> OscillatorConfig {
        match &self.problem {
            Problem::Oscillator(o) => o.clone(),
            Problem::Composite(c) => OscillatorConfig {
                theta: c.system.theta1.clone(),
                energy: c.system.k_energy.clone(),
                sigma: c.system.sigma1.clone(),
                tau: Some(c.system.tau),
            },
        }
    }
}

struct Cx<'a> {
    path: &'a str,
    text: &'a str,
}

impl Cx<'_> {
    fn line_of(&self, offset: usize) -> usize {
        let end = offset.min(self.text.len());
        self.text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: span.map(|s| self.line_of(s.start)),
            message: message.into(),
        }
    }

    fn at<T>(&self, item: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        self.err(Some(item.span()), message)
    }

    fn matrix(&self, item: &Spanned<Entry>, name: &str) -> Result<RealMatrix, ConfigError> {
        match item.get_ref() {
            Entry::Word(w) => Err(self.at(item, format!("{name}: expected a matrix, found \"{w}\""))),
            Entry::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || cols == 0 {
                    return Err(self.at(item, format!("{name}: empty matrix")));
                }
                if let Some(i) = rows.iter().position(|r| r.len() != cols) {
                    return Err(self.at(
                        item,
                        format!("{name}: row {} has {} entries, expected {cols}", i + 1, rows[i].len()),
                    ));
                }
                if rows.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(self.at(item, format!("{name}: non-finite entry")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(RealMatrix::from_row_slice(rows.len(), cols, &flat))
            }
        }
    }

    fn shaped(&self, item: &Spanned<Entry>, name: &str, shape: (usize, usize)) -> Result<RealMatrix, ConfigError> {
        let m = self.matrix(item, name)?;
        if m.shape() != shape {
            return Err(self.at(
                item,
                format!("{name}: expected {}x{}, found {}x{}", shape.0, shape.1, m.nrows(), m.ncols()),
            ));
        }
        Ok(m)
    }

    fn symmetric(&self, item: &Spanned<Entry>, name: &str, n: usize) -> Result<RealMatrix, ConfigError> {
        let m = self.shaped(item, name, (n, n))?;
        if !is_symmetric(&m, SYM_TOL * (1.0 + m.amax())) {
            return Err(self.at(item, format!("{name}: not symmetric")));
        }
        Ok(m)
    }

    fn word<'e>(&self, item: &'e Spanned<Entry>) -> Option<&'e str> {
        match item.get_ref() {
            Entry::Word(w) => Some(w.as_str()),
            Entry::Rows(_) => None,
        }
    }

    fn ccr(&self, item: &Spanned<Entry>, name: &str, n: usize) -> Result<RealMatrix, ConfigError> {
        let theta = match self.word(item) {
            Some("canonical") => canonical_ccr(n).map_err(|e| self.at(item, format!("{name}: {e}")))?,
            Some(w) => return Err(self.at(item, format!("{name}: unknown keyword \"{w}\""))),
            None => self.shaped(item, name, (n, n))?,
        };
        validate_ccr(&theta).map_err(|e| self.at(item, format!("{name}: {e}")))?;
        Ok(theta)
    }

    fn covariance(&self, item: &Spanned<Entry>, name: &str, theta: &RealMatrix) -> Result<RealMatrix, ConfigError> {
        let sigma = self.symmetric(item, name, theta.nrows())?;
        InitialMoments::new(&sigma, theta).map_err(|e| self.at(item, format!("{name}: {e}")))?;
        Ok(sigma)
    }

    fn build(&self, raw: RawConfig) -> Result<Problem, ConfigError> {
        let plant = &raw.plant;
        let k = self.matrix(&plant.k, "plant.K")?;
        let n = k.nrows();
        let k = self.symmetric(&plant.k, "plant.K", n)?;
        let theta1 = self.ccr(&plant.theta, "plant.theta", n)?;
        let sigma1 = self.covariance(&plant.sigma1, "plant.sigma1", &theta1)?;
        let tau = match &raw.horizon {
            Some(h) => {
                let t = *h.tau.get_ref();
                if !(t > 0.0 && t.is_finite()) {
                    return Err(self.at(&h.tau, format!("horizon.tau must be positive, got {t}")));
                }
                Some(t)
            }
            None => None,
        };

        let Some(obs) = &raw.observer else {
            if raw.coupling.is_some() || raw.weights.is_some() {
                return Err(self.err(None, "coupling and weights need an [observer] section"));
            }
            return Ok(Problem::Oscillator(OscillatorConfig {
                theta: theta1,
                energy: k,
                sigma: sigma1,
                tau,
            }));
        };

        let mirror = self.word(&obs.m) == Some("mirror");
        let nu = if mirror {
            n
        } else if let Some(w) = self.word(&obs.m) {
            return Err(self.at(&obs.m, format!("observer.M: unknown keyword \"{w}\"")));
        } else {
            self.matrix(&obs.m, "observer.M")?.nrows()
        };
        let m = if mirror { k.clone() } else { self.symmetric(&obs.m, "observer.M", nu)? };
        let theta2 = match self.word(&obs.theta) {
            Some("plant") if nu == n => theta1.clone(),
            Some("plant") => return Err(self.at(&obs.theta, "observer.theta: \"plant\" needs equal orders")),
            _ => self.ccr(&obs.theta, "observer.theta", nu)?,
        };
        let sigma2 = self.covariance(&obs.sigma2, "observer.sigma2", &theta2)?;

        let coupling = match &raw.coupling {
            None => RealMatrix::zeros(n, nu),
            Some(c) => match self.word(&c.l) {
                Some("zero") => RealMatrix::zeros(n, nu),
                Some(w) => return Err(self.at(&c.l, format!("coupling.L: unknown keyword \"{w}\""))),
                None => self.shaped(&c.l, "coupling.L", (n, nu))?,
            },
        };

        let w = raw
            .weights
            .as_ref()
            .ok_or_else(|| self.err(None, "a plant-observer config needs a [weights] section"))?;
        let tau = tau.ok_or_else(|| self.err(None, "a plant-observer config needs a [horizon] section"))?;
        let (s1, s2) = match (&w.s0, &w.s1, &w.s2) {
            (Some(s0), None, None) => {
                let s = self.matrix(s0, "weights.S0")?;
                let s = self.shaped(s0, "weights.S0", (s.nrows(), n))?;
                if nu != n {
                    return Err(self.at(s0, "weights.S0 needs equal plant and observer orders"));
                }
                (s.clone(), s)
            }
            (None, Some(a), Some(b)) => {
                let p = self.matrix(a, "weights.S1")?.nrows();
                (self.shaped(a, "weights.S1", (p, n))?, self.shaped(b, "weights.S2", (p, nu))?)
            }
            (Some(s0), _, _) => return Err(self.at(s0, "give either S0 or both S1 and S2")),
            (None, Some(a), None) | (None, None, Some(a)) => {
                return Err(self.at(a, "S1 and S2 must be given together"))
            }
            (None, None, None) => return Err(self.err(None, "weights: S0 or S1 and S2 required")),
        };
        let pi = self.symmetric(&w.pi, "weights.Pi", n)?;
        if !(min_eigenvalue_sym(&pi) > 0.0) {
            return Err(self.at(&w.pi, "weights.Pi must be positive definite"));
        }
        let (lambda, mu) = match (&w.lambda, &w.mu) {
            (Some(l), None) => {
                let v = *l.get_ref();
                if !(v > 0.0 && v.is_finite()) {
                    return Err(self.at(l, format!("weights.lambda must be positive, got {v}")));
                }
                (v, 1.0 / v)
            }
            (None, Some(m)) => {
                let v = *m.get_ref();
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(self.at(m, format!("weights.mu must be nonnegative, got {v}")));
                }
                if v == 0.0 {
                    if coupling.amax() != 0.0 {
                        return Err(self.at(m, "weights.mu = 0 requires zero coupling"));
                    }
                    // the penalty vanishes with L, so any finite λ gives the same instance
                    (1.0, 0.0)
                } else {
                    (1.0 / v, v)
                }
            }
            (Some(l), Some(_)) => return Err(self.at(l, "give either lambda or mu, not both")),
            (None, None) => return Err(self.err(None, "weights: lambda or mu required")),
        };

        let system = PlantObserverSystem {
            theta1,
            theta2,
            k_energy: k,
            m_energy: m,
            coupling,
            sigma1,
            sigma2,
            s1,
            s2,
            pi_weight: pi,
            lambda,
            tau,
        };
        system.validate().map_err(|e| self.err(None, e.to_string()))?;
        let autonomous = autonomous_view(&system);
        Ok(Problem::Composite(CompositeConfig { system, mu, autonomous }))
    }
}

fn autonomous_view(sys: &PlantObserverSystem) -> Option<AutonomousObserverProblem> {
    let square = sys.n() == sys.nu() && sys.p() == sys.n();
    if !square || sys.theta1 != sys.theta2 || sys.m_energy != sys.k_energy || sys.s1 != sys.s2 {
        return None;
    }
    if !is_symmetric(&sys.coupling, SYM_TOL * (1.0 + sys.coupling.amax())) {
        return None;
    }
    let prob = AutonomousObserverProblem {
        theta0: sys.theta1.clone(),
        k_energy: sys.k_energy.clone(),
        s0: sys.s1.clone(),
        sigma1: sys.sigma1.clone(),
        sigma2: sys.sigma2.clone(),
        pi_weight: sys.pi_weight.clone(),
        tau: sys.tau,
    };
    prob.validate().ok().map(|_| prob)
}

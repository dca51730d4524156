use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One column of a working-model design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Linear(usize),
    Square(usize),
    Exp(usize),
    /// The observed outcome; only meaningful for the trial-membership model
    /// among untreated rows.
    Outcome,
}

impl Term {
    #[inline]
    fn eval(self, x: &[f64], y: f64) -> f64 {
        match self {
            Term::Intercept => 1.0,
            Term::Linear(j) => x[j],
            Term::Square(j) => x[j] * x[j],
            Term::Exp(j) => x[j].exp(),
            Term::Outcome => y,
        }
    }

    fn covariate(self) -> Option<usize> {
        match self {
            Term::Linear(j) | Term::Square(j) | Term::Exp(j) => Some(j),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "intercept"),
            Term::Linear(j) => write!(f, "linear:{j}"),
            Term::Square(j) => write!(f, "square:{j}"),
            Term::Exp(j) => write!(f, "exp:{j}"),
            Term::Outcome => write!(f, "outcome"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "intercept" => return Ok(Term::Intercept),
            "outcome" => return Ok(Term::Outcome),
            _ => {}
        }
        let (kind, idx) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("unrecognised basis term `{s}`")))?;
        let j: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad covariate index in basis term `{s}`")))?;
        match kind.trim() {
            "linear" => Ok(Term::Linear(j)),
            "square" => Ok(Term::Square(j)),
            "exp" => Ok(Term::Exp(j)),
            other => Err(Error::Config(format!("unknown basis term kind `{other}`"))),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered, duplicate-free list of design terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct FeatureBasis {
    terms: Vec<Term>,
}

impl<'de> Deserialize<'de> for FeatureBasis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<Term>::deserialize(d)?;
        FeatureBasis::new(terms).map_err(serde::de::Error::custom)
    }
}

impl FeatureBasis {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Usage("a basis needs at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Usage(format!("basis term `{t}` repeated")));
            }
        }
        Ok(Self { terms })
    }

    /// Intercept plus a linear term for each of `p` covariates.
    pub fn linear(p: usize) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend((0..p).map(Term::Linear));
        Self { terms }
    }

    /// Returns this basis with `Outcome` appended.
    pub fn with_outcome(&self) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(Term::Outcome);
        Self::new(terms)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_outcome(&self) -> bool {
        self.terms.contains(&Term::Outcome)
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    /// Checks every covariate index is below `p`.
    pub fn check_dimension(&self, p: usize) -> Result<()> {
        match self.terms.iter().filter_map(|t| t.covariate()).find(|&j| j >= p) {
            Some(j) => Err(Error::Dimension(format!(
                "basis references covariate {j} but data has p={p}"
            ))),
            None => Ok(()),
        }
    }

    /// Design row for `x` (and `y` when the basis has an outcome term).
    pub fn design_row(&self, x: &[f64], y: Option<f64>) -> Result<Vec<f64>> {
        if let Some(j) = self.terms.iter().filter_map(|t| t.covariate()).find(|&j| j >= x.len()) {
            return Err(Error::Dimension(format!(
                "basis references covariate {j} but x has length {}",
                x.len()
            )));
        }
        let y = match (self.has_outcome(), y) {
            (true, Some(y)) => y,
            (true, None) => {
                return Err(Error::Usage("basis has an outcome term but no outcome was given".into()))
            }
            (false, _) => f64::NAN,
        };
        Ok(self.terms.iter().map(|t| t.eval(x, y)).collect())
    }

    /// Unchecked fill used on hot paths once dimensions were validated.
    #[inline]
    pub(crate) fn fill(&self, x: &[f64], y: f64, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x, y);
        }
    }

    #[inline]
    pub(crate) fn dot(&self, coef: &[f64], x: &[f64], y: f64) -> f64 {
        self.terms
            .iter()
            .zip(coef)
            .map(|(t, c)| c * t.eval(x, y))
            .sum()
    }
}

impl fmt::Display for FeatureBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_row() {
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Linear(0), Term::Square(0)]).unwrap();
        assert_eq!(b.design_row(&[2.0], None).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn exp_at_zero() {
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Exp(0)]).unwrap();
        assert_eq!(b.design_row(&[0.0], None).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn full_rho_row() {
        let b = FeatureBasis::new(vec![
            Term::Intercept,
            Term::Linear(0),
            Term::Square(0),
            Term::Exp(0),
            Term::Outcome,
        ])
        .unwrap();
        let row = b.design_row(&[1.0], Some(3.0)).unwrap();
        assert_eq!(row, vec![1.0, 1.0, 1.0, std::f64::consts::E, 3.0]);
    }

    #[test]
    fn outcome_needs_y() {
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Outcome]).unwrap();
        assert!(matches!(b.design_row(&[1.0], None), Err(Error::Usage(_))));
    }

    #[test]
    fn repeated_terms_rejected() {
        assert!(FeatureBasis::new(vec![Term::Linear(0), Term::Linear(0)]).is_err());
        assert!(FeatureBasis::new(vec![]).is_err());
    }

    #[test]
    fn out_of_range_covariate() {
        let b = FeatureBasis::new(vec![Term::Linear(3)]).unwrap();
        assert!(matches!(b.design_row(&[1.0], None), Err(Error::Dimension(_))));
    }

    #[test]
    fn json_uses_term_strings() {
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Square(1), Term::Outcome]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"["intercept","square:1","outcome"]"#);
        let back: FeatureBasis = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<FeatureBasis>(r#"["intercept","intercept"]"#).is_err());
    }
}

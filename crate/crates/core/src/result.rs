use std::fmt;
use std::str::FromStr;

use crate::bethe::PseudoMarginals;
use crate::error::Error;
use crate::meanfield::FactorizedMarginals;
use crate::passing::Messages;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MeanField,
    Bethe,
    Trw,
    Exact,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::MeanField, Method::Bethe, Method::Trw, Method::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Method::MeanField => "mf",
            Method::Bethe => "bethe",
            Method::Trw => "trw",
            Method::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mf" | "meanfield" | "mean-field" => Ok(Method::MeanField),
            "bethe" | "bp" => Ok(Method::Bethe),
            "trw" | "trwbp" => Ok(Method::Trw),
            "exact" => Ok(Method::Exact),
            _ => Err(Error::Input(format!("unknown method {s:?}"))),
        }
    }
}

/// Direction in which an estimate is guaranteed to err.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
    /// Exact value, or no guarantee.
    None,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::Lower => "lower",
            Bound::Upper => "upper",
            Bound::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Marginals {
    Factorized(FactorizedMarginals),
    Pseudo(PseudoMarginals),
    None,
}

impl Marginals {
    pub fn singleton(&self, var: usize) -> Option<&[f64]> {
        match self {
            Marginals::Factorized(q) => Some(q.get(var)),
            Marginals::Pseudo(mu) => Some(mu.singleton(var)),
            Marginals::None => None,
        }
    }
}

/// Output of one estimator run.
#[derive(Clone, Debug)]
pub struct InferenceResult {
    /// Estimate of `log Z`.
    pub log_z: f64,
    pub marginals: Marginals,
    pub method: Method,
    pub bound: Bound,
    pub converged: bool,
    /// Sweeps (mean field) or message passes (BP) of the selected run.
    pub iters: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Final messages of message-passing methods, usable as a warm start.
    pub messages: Option<Messages>,
}

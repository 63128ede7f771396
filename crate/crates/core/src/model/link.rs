use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::special::{log_logistic, log_norm_cdf, log_norm_cdf_derivatives, logistic, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Probit,
    Logit,
}

impl Link {
    #[inline]
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Link::Probit => norm_cdf(x),
            Link::Logit => logistic(x),
        }
    }

    #[inline]
    pub fn log_cdf(self, x: f64) -> f64 {
        match self {
            Link::Probit => log_norm_cdf(x),
            Link::Logit => log_logistic(x),
        }
    }

    /// `(log F)'(x)`.
    #[inline]
    pub fn d_log_cdf(self, x: f64) -> f64 {
        match self {
            Link::Probit => log_norm_cdf_derivatives(x).0,
            Link::Logit => logistic(-x),
        }
    }

    /// `(log F)(x)`, `(log F)'(x)` and `(log F)''(x)`.
    #[inline]
    pub fn log_cdf_derivatives(self, x: f64) -> (f64, f64, f64) {
        match self {
            Link::Probit => {
                let (d1, d2) = log_norm_cdf_derivatives(x);
                (log_norm_cdf(x), d1, d2)
            }
            Link::Logit => {
                let (up, down) = (logistic(x), logistic(-x));
                (log_logistic(x), down, -up * down)
            }
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Probit => "probit",
            Link::Logit => "logit",
        })
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            other => Err(Error::InvalidArgument(format!("unknown link `{other}`"))),
        }
    }
}

//! Grid specifications: `lo:hi:n` (linear) or `log:lo:hi:n`.

use std::str::FromStr;

use confcurve::interp::{linspace, logspace};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub log: bool,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn linear(lo: f64, hi: f64, points: usize) -> Self {
        Self { log: false, lo, hi, points }
    }

    pub fn log(lo: f64, hi: f64, points: usize) -> Self {
        Self { log: true, lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.log {
            logspace(self.lo, self.hi, self.points)
        } else {
            linspace(self.lo, self.hi, self.points)
        }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let (log, rest) = match parts.as_slice() {
            ["log", rest @ ..] => (true, rest),
            rest => (false, rest),
        };
        let [lo, hi, n] = rest else {
            return Err(format!("grid '{s}' is not of the form [log:]lo:hi:n"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad grid lower end '{lo}'"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad grid upper end '{hi}'"))?;
        let points: usize = n.parse().map_err(|_| format!("bad grid size '{n}'"))?;
        if !(lo < hi) || points < 2 {
            return Err(format!("grid '{s}' needs lo < hi and at least 2 points"));
        }
        if log && !(lo > 0.0) {
            return Err(format!("log grid '{s}' needs a positive lower end"));
        }
        Ok(Self { log, lo, hi, points })
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.log {
            write!(f, "log:")?;
        }
        write!(f, "{}:{}:{}", self.lo, self.hi, self.points)
    }
}

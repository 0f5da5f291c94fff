//! `start:stop:count[:lin|log]` grid specifications.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub log: bool,
}

impl GridSpec {
    pub const fn linear(start: f64, stop: f64, count: usize) -> Self {
        GridSpec {
            start,
            stop,
            count,
            log: false,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    return self.stop;
                }
                let s = k as f64 / n;
                if self.log {
                    (self.start.ln() + s * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + s * (self.stop - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let log = match parts.len() {
            3 => false,
            4 => match parts[3] {
                "log" => true,
                "lin" => false,
                other => return Err(format!("grid scale must be `lin` or `log`, got `{other}`")),
            },
            _ => return Err(format!("grid must be start:stop:count[:log], got `{s}`")),
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("grid bound `{v}` is not a number"));
        let (start, stop) = (num(parts[0])?, num(parts[1])?);
        let count: usize = parts[2]
            .parse()
            .map_err(|_| format!("grid count `{}` is not a positive integer", parts[2]))?;
        if count == 0 {
            return Err("grid count must be at least 1".into());
        }
        if !(start.is_finite() && stop.is_finite()) {
            return Err("grid bounds must be finite".into());
        }
        if count > 1 && !(stop > start) {
            return Err(format!("grid must be increasing, got start {start} and stop {stop}"));
        }
        if log && !(start > 0.0) {
            return Err(format!("log grid needs a positive start, got {start}"));
        }
        Ok(GridSpec { start, stop, count, log })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)?;
        if self.log {
            f.write_str(":log")?;
        }
        Ok(())
    }
}

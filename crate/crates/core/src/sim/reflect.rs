use std::fmt::Write as _;

use super::path::PathGrid;
use crate::error::{Error, Result};

/// Grid separation below which a boundary hit is not inserted as a new point.
const HIT_GAP: f64 = 1e-12;

/// Workload obtained by reflecting a path at 0, and at `K` when `upper` is
/// set. The underlying grid contains every boundary hit of an event-driven
/// path, so the workload is linear between consecutive grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    pub path: PathGrid,
    pub q: Vec<f64>,
    pub q0: f64,
    pub upper: Option<f64>,
}

impl ReflectedPath {
    fn clamp(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        match self.upper {
            Some(k) => v.min(k),
            None => v,
        }
    }

    /// `Q_t`: exact on event grids, last grid value at or before `t` on
    /// Euler grids.
    pub fn q_at(&self, t: f64) -> f64 {
        let k = self.path.locate(t);
        if self.path.kind.is_event() && k + 1 < self.path.len() {
            // no boundary is crossed inside the interval
            self.clamp(self.q[k] + self.path.slope(k) * (t - self.path.times[k]))
        } else {
            self.q[k]
        }
    }

    /// `(Q, J)` at the horizon.
    pub fn terminal(&self) -> (f64, usize) {
        (*self.q.last().unwrap(), *self.path.states.last().unwrap())
    }

    /// CSV dump with header `t,x,j,q`; states are written 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,j,q\n");
        for k in 0..self.q.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.path.times[k],
                self.path.x[k],
                self.path.states[k] + 1,
                self.q[k]
            );
        }
        out
    }
}

/// One-sided reflection `Q_t = X_t + max{Q_0, -inf_{u≤t} X_u}`.
pub fn reflect_one_sided(path: &PathGrid, q0: f64) -> Result<ReflectedPath> {
    reflect(path, q0, None)
}

/// Reflection at 0 and `K`, equivalently `(Γ⁺ ∘ Γ⁻)[Q_0 + X]`.
pub fn reflect_two_sided(path: &PathGrid, q0: f64, k: f64) -> Result<ReflectedPath> {
    reflect(path, q0, Some(k))
}

pub fn reflect(path: &PathGrid, q0: f64, upper: Option<f64>) -> Result<ReflectedPath> {
    path.check()?;
    if let Some(k) = upper {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("buffer size must be positive, got {k}")));
        }
        if !(0.0..=k).contains(&q0) {
            return Err(Error::Domain(format!("initial level {q0} outside [0, {k}]")));
        }
    } else if !(q0 >= 0.0 && q0.is_finite()) {
        return Err(Error::Domain(format!("initial level must be non-negative, got {q0}")));
    }
    let kmax = upper.unwrap_or(f64::INFINITY);
    let clamp = |v: f64| v.max(0.0).min(kmax);
    if !path.kind.is_event() {
        let mut q = Vec::with_capacity(path.len());
        q.push(q0);
        let mut cur = q0;
        for w in path.x.windows(2) {
            cur = clamp(cur + (w[1] - w[0]));
            q.push(cur);
        }
        return Ok(ReflectedPath {
            path: path.clone(),
            q,
            q0,
            upper,
        });
    }

    let n = path.len();
    let mut out = PathGrid {
        times: Vec::with_capacity(n + n / 4),
        x: Vec::with_capacity(n + n / 4),
        states: Vec::with_capacity(n + n / 4),
        jumps: Vec::with_capacity(n + n / 4),
        kind: path.kind,
    };
    let mut q = Vec::with_capacity(n + n / 4);
    out.times.push(path.times[0]);
    out.x.push(path.x[0]);
    out.states.push(path.states[0]);
    out.jumps.push(path.jumps[0]);
    q.push(q0);
    let mut cur = q0;
    for k in 0..n - 1 {
        let (t0, t1) = (path.times[k], path.times[k + 1]);
        let dx = path.pre_jump(k + 1) - path.x[k];
        let end = cur + dx;
        let target = if end < 0.0 && cur > 0.0 {
            Some(0.0)
        } else if end > kmax && cur < kmax {
            Some(kmax)
        } else {
            None
        };
        let mut pre = clamp(end);
        if let Some(level) = target {
            let frac = (level - cur) / dx;
            let th = t0 + frac * (t1 - t0);
            let gap = HIT_GAP * t1.abs().max(1.0);
            if th - t0 > gap && t1 - th > gap {
                out.times.push(th);
                out.x.push(path.x[k] + frac * dx);
                out.states.push(path.states[k]);
                out.jumps.push(0.0);
                q.push(level);
            }
            pre = level;
        }
        cur = clamp(pre + path.jumps[k + 1]);
        out.times.push(t1);
        out.x.push(path.x[k + 1]);
        out.states.push(path.states[k + 1]);
        out.jumps.push(path.jumps[k + 1]);
        q.push(cur);
    }
    Ok(ReflectedPath {
        path: out,
        q,
        q0,
        upper,
    })
}

/// `Γ⁻[Y]_k = Y_k - min{0, min_{j≤k} Y_j}` on a sequence.
pub fn gamma_lower(y: &[f64]) -> Vec<f64> {
    let mut m = 0.0_f64;
    y.iter()
        .map(|&v| {
            m = m.min(v);
            v - m
        })
        .collect()
}

/// `Γ⁺[Y]_k = Y_k - max_{j≤k} min{(Y_j - K)⁺, min_{j≤i≤k} Y_i}` on a
/// sequence, via `M_k = min{max{M_{k-1}, (Y_k - K)⁺}, Y_k}`.
pub fn gamma_upper(y: &[f64], k: f64) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    y.iter()
        .map(|&v| {
            m = m.max((v - k).max(0.0)).min(v);
            v - m
        })
        .collect()
}

/// `W_{n+1} = max{W_n + U_n, 0}`; returns `W_1, …, W_N`.
pub fn lindley_waiting_times(u: &[f64], w0: f64) -> Vec<f64> {
    let mut w = w0;
    u.iter()
        .map(|&x| {
            w = (w + x).max(0.0);
            w
        })
        .collect()
}

/// Two workloads driven by the same increments.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub a: ReflectedPath,
    pub b: ReflectedPath,
    /// First grid time at which the workloads agree to within `1e-12`.
    pub coupling_time: Option<f64>,
}

/// Reflects one path from two initial levels on a common grid (the union of
/// both sets of boundary hits).
pub fn coupled_pair(path: &PathGrid, q0a: f64, q0b: f64, upper: Option<f64>) -> Result<CoupledPair> {
    let mut grid = path.clone();
    let (a, b) = loop {
        let a = reflect(&grid, q0a, upper)?;
        let b = reflect(&a.path, q0b, upper)?;
        if b.path.len() == grid.len() {
            break (a, b);
        }
        grid = b.path;
    };
    let coupling_time = a
        .q
        .iter()
        .zip(&b.q)
        .position(|(x, y)| (x - y).abs() < 1e-12)
        .map(|k| a.path.times[k]);
    Ok(CoupledPair { a, b, coupling_time })
}

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::rng::{RngStreamSpec, StreamRole};
use crate::error::{Error, Result};
use crate::model::{validate_model, MapModel};

/// How a path is discretised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discretization {
    /// Fixed step `h`. Background switches inside a step are simulated
    /// exactly (occupation times), Brownian increments are Gaussian with the
    /// accumulated mean and variance, and jumps are added at the step end.
    Euler { h: f64 },
    /// Exact piecewise-linear paths with grid points at every background
    /// transition and jump. Needs zero Brownian variance in every state.
    Event,
}

pub const DEFAULT_STEP: f64 = 0.01;

impl Default for Discretization {
    fn default() -> Self {
        Discretization::Euler { h: DEFAULT_STEP }
    }
}

impl Discretization {
    /// Event-driven when the model allows it, Euler with the default step
    /// otherwise.
    pub fn auto(model: &MapModel) -> Self {
        if supports_events(model) {
            Discretization::Event
        } else {
            Discretization::default()
        }
    }

    pub fn is_event(&self) -> bool {
        matches!(self, Discretization::Event)
    }
}

/// True when every state moves deterministically between jumps.
pub fn supports_events(model: &MapModel) -> bool {
    model.components.iter().all(|c| c.brownian_var == 0.0)
}

/// A realisation of `(X_t, J_t)` on a grid.
///
/// On event-driven grids the path is linear on `[times[k], times[k+1])`,
/// moving from `x[k]` to `x[k+1] - jumps[k+1]`, and jumps by `jumps[k+1]`
/// at `times[k+1]`. Euler grids only carry the grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// Background state on `[times[k], times[k+1])`; the last entry is the
    /// state at the horizon.
    pub states: Vec<usize>,
    /// Jump included in `x[k]`; `jumps[0] = 0`.
    pub jumps: Vec<f64>,
    pub kind: Discretization,
}

impl PathGrid {
    /// Single-state path with the given increments on a uniform grid,
    /// treated as an Euler grid.
    pub fn from_increments(increments: &[f64], dt: f64) -> Self {
        let n = increments.len();
        let mut x = Vec::with_capacity(n + 1);
        x.push(0.0);
        let mut acc = 0.0;
        for &u in increments {
            acc += u;
            x.push(acc);
        }
        PathGrid {
            times: (0..=n).map(|k| k as f64 * dt).collect(),
            x,
            states: vec![0; n + 1],
            jumps: vec![0.0; n + 1],
            kind: Discretization::Euler { h: dt },
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("a path has at least one point")
    }

    /// Value just before `times[k]`.
    pub fn pre_jump(&self, k: usize) -> f64 {
        self.x[k] - self.jumps[k]
    }

    /// Slope of the linear piece starting at `times[k]` (event grids).
    pub fn slope(&self, k: usize) -> f64 {
        (self.pre_jump(k + 1) - self.x[k]) / (self.times[k + 1] - self.times[k])
    }

    /// Index of the grid interval containing `t` (the last point at or
    /// before `t`, up to rounding).
    pub fn locate(&self, t: f64) -> usize {
        let tol = 1e-9 * (1.0 + t.abs());
        let idx = self.times.partition_point(|&s| s <= t + tol);
        idx.saturating_sub(1)
    }

    /// `X_t`: exact on event grids, last grid value at or before `t` on
    /// Euler grids.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.locate(t);
        if self.kind.is_event() && k + 1 < self.len() {
            self.x[k] + self.slope(k) * (t - self.times[k])
        } else {
            self.x[k]
        }
    }

    /// Grid values interleaved with pre-jump values wherever a jump occurs:
    /// the vertices of the path.
    pub fn vertices(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.x[0]);
        for k in 1..self.len() {
            if self.jumps[k] != 0.0 {
                v.push(self.pre_jump(k));
            }
            v.push(self.x[k]);
        }
        v
    }

    /// `min_{s ≤ horizon} X_s`, including `X_0 = 0`. Exact on event grids.
    pub fn running_min(&self) -> f64 {
        self.vertices().into_iter().fold(0.0, f64::min)
    }

    /// Structural checks: strictly increasing times from 0 and matching
    /// lengths.
    pub fn check(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.x.len() != n || self.states.len() != n || self.jumps.len() != n {
            return Err(Error::Grid("path arrays have inconsistent lengths".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Grid(format!("path starts at {} instead of 0", self.times[0])));
        }
        if let Some(w) = self.times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(format!("times not increasing at {} -> {}", w[0], w[1])));
        }
        Ok(())
    }
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Draws the next state after leaving `j`.
fn next_state<R: Rng + ?Sized>(model: &MapModel, j: usize, rng: &mut R) -> usize {
    let d = model.dim();
    sample_index((0..d).map(|k| if k == j { 0.0 } else { model.generator.rate(j, k) }), rng)
}

/// Draws `J_0` from the stationary law of the background chain.
pub fn sample_background<R: Rng + ?Sized>(model: &MapModel, rng: &mut R) -> Result<usize> {
    if model.dim() == 1 {
        return Ok(0);
    }
    let pi = model.stationary_distribution()?;
    Ok(sample_index(pi.iter().copied(), rng))
}

/// Simulates `X` on `[0, horizon]` from background state `j0`.
pub fn simulate_path_from<R: Rng + ?Sized>(
    model: &MapModel,
    horizon: f64,
    disc: Discretization,
    j0: usize,
    rng: &mut R,
) -> Result<PathGrid> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if j0 >= model.dim() {
        return Err(Error::Domain(format!("start state {} out of range", j0 + 1)));
    }
    match disc {
        Discretization::Event => {
            if !supports_events(model) {
                return Err(Error::Unsupported(
                    "event-driven simulation needs zero Brownian variance in every state".into(),
                ));
            }
            Ok(simulate_event(model, horizon, j0, rng))
        }
        Discretization::Euler { h } => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Domain(format!("Euler step must be positive, got {h}")));
            }
            Ok(simulate_euler(model, horizon, h, j0, rng))
        }
    }
}

/// Simulates `X` on `[0, horizon]` with `J_0` drawn from its stationary law,
/// using the streams of `spec`.
pub fn simulate_input_path(
    model: &MapModel,
    horizon: f64,
    disc: Discretization,
    spec: &RngStreamSpec,
) -> Result<PathGrid> {
    validate_model(model).into_result()?;
    let mut start = spec.rng(StreamRole::Start);
    let j0 = sample_background(model, &mut start)?;
    simulate_path_from(model, horizon, disc, j0, &mut spec.rng(StreamRole::Path))
}

fn simulate_event<R: Rng + ?Sized>(model: &MapModel, horizon: f64, j0: usize, rng: &mut R) -> PathGrid {
    let mut path = PathGrid {
        times: vec![0.0],
        x: vec![0.0],
        states: vec![j0],
        jumps: vec![0.0],
        kind: Discretization::Event,
    };
    let (mut t, mut x, mut j) = (0.0, 0.0, j0);
    loop {
        let comp = &model.components[j];
        let leave = model.generator.leaving_rate(j);
        let total = leave + comp.jump_rate;
        let dt = if total > 0.0 { exp1(rng) / total } else { f64::INFINITY };
        if t + dt >= horizon {
            if horizon > t {
                path.times.push(horizon);
                path.x.push(x + comp.drift * (horizon - t));
                path.states.push(j);
                path.jumps.push(0.0);
            }
            return path;
        }
        t += dt;
        x += comp.drift * dt;
        let jump = if rng.random::<f64>() * total < comp.jump_rate {
            comp.jump_dist.sample(rng)
        } else {
            let k = next_state(model, j, rng);
            let u = model.transition_jumps[j][k];
            j = k;
            if u.is_zero() {
                0.0
            } else {
                u.sample(rng)
            }
        };
        x += jump;
        path.times.push(t);
        path.x.push(x);
        path.states.push(j);
        path.jumps.push(jump);
    }
}

fn simulate_euler<R: Rng + ?Sized>(model: &MapModel, horizon: f64, h: f64, j0: usize, rng: &mut R) -> PathGrid {
    let steps = ((horizon / h) - 1e-9).ceil().max(0.0) as usize;
    let mut path = PathGrid {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        jumps: Vec::with_capacity(steps + 1),
        kind: Discretization::Euler { h },
    };
    path.times.push(0.0);
    path.x.push(0.0);
    path.states.push(j0);
    path.jumps.push(0.0);

    let mut j = j0;
    let mut x = 0.0;
    let mut t = 0.0;
    let leave = |j: usize| model.generator.leaving_rate(j);
    let mut next_switch = if leave(j) > 0.0 { exp1(rng) / leave(j) } else { f64::INFINITY };
    // unit-rate exponential budget for the in-state Poisson clock
    let mut hazard = exp1(rng);
    for k in 1..=steps {
        let t_end = if k == steps { horizon } else { k as f64 * h };
        let (mut mean, mut var, mut jumps) = (0.0, 0.0, 0.0);
        let mut s = t;
        while s < t_end {
            let seg_end = next_switch.min(t_end);
            let occ = seg_end - s;
            let comp = &model.components[j];
            mean += comp.drift * occ;
            var += comp.brownian_var * occ;
            if comp.jump_rate > 0.0 {
                let mut used = comp.jump_rate * occ;
                while hazard <= used {
                    used -= hazard;
                    jumps += comp.jump_dist.sample(rng);
                    hazard = exp1(rng);
                }
                hazard -= used;
            }
            s = seg_end;
            if next_switch <= t_end {
                let to = next_state(model, j, rng);
                let u = model.transition_jumps[j][to];
                if !u.is_zero() {
                    jumps += u.sample(rng);
                }
                j = to;
                next_switch = s + if leave(j) > 0.0 { exp1(rng) / leave(j) } else { f64::INFINITY };
            }
        }
        let noise = if var > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            var.sqrt() * z
        } else {
            0.0
        };
        x += mean + noise + jumps;
        t = t_end;
        path.times.push(t);
        path.x.push(x);
        path.states.push(j);
        path.jumps.push(0.0);
    }
    path
}

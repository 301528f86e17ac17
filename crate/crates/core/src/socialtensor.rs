//! Target-centric occupancy grids of surrounding-agent relative motion.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::navframe::{NavFrameState, METERS_PER_KM};
use crate::pipeline::{Direction, SequenceSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lateral cell count.
    pub w: usize,
    /// Longitudinal cell count.
    pub l: usize,
    /// Lateral cell extent (m).
    pub lat_cell: f64,
    /// Longitudinal cell extent (m).
    pub lon_cell: f64,
    /// Share of the longitudinal cells ahead of the target.
    pub ahead_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            w: 5,
            l: 30,
            lat_cell: 25.0,
            lon_cell: 75.0,
            ahead_fraction: 2.0 / 3.0,
        }
    }
}

impl GridSpec {
    pub fn ahead_cells(&self) -> usize {
        (self.l as f64 * self.ahead_fraction).round() as usize
    }

    pub fn behind_cells(&self) -> usize {
        self.l - self.ahead_cells()
    }

    /// Longitudinal span `[behind, ahead)` in meters relative to the target.
    pub fn lon_span(&self) -> (f64, f64) {
        (
            -(self.behind_cells() as f64) * self.lon_cell,
            self.ahead_cells() as f64 * self.lon_cell,
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.w == 0 || self.l == 0 {
            return Err("grid needs at least one cell per axis".into());
        }
        if !(self.lat_cell > 0.0 && self.lon_cell > 0.0) {
            return Err("cell extents must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ahead_fraction) {
            return Err("ahead_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Cell of a target-relative offset (`lat`, `lon` in meters, oriented along
    /// the target's direction of travel), or `None` outside the grid.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let wf = (lat / self.lat_cell + self.w as f64 / 2.0).floor();
        let lf = (lon / self.lon_cell).floor() + self.behind_cells() as f64;
        if wf < 0.0 || lf < 0.0 || wf >= self.w as f64 || lf >= self.l as f64 {
            return None;
        }
        Some((wf as usize, lf as usize))
    }

    /// Lateral and longitudinal extents `[lo, hi)` of cell `(w, l)`.
    pub fn cell_bounds(&self, w: usize, l: usize) -> ((f64, f64), (f64, f64)) {
        let lat0 = (w as f64 - self.w as f64 / 2.0) * self.lat_cell;
        let lon0 = (l as f64 - self.behind_cells() as f64) * self.lon_cell;
        ((lat0, lat0 + self.lat_cell), (lon0, lon0 + self.lon_cell))
    }
}

/// Offset of `other` from `target` in meters, oriented along `dir`.
pub fn relative_offset(target: NavFrameState, other: NavFrameState, dir: Direction) -> (f64, f64) {
    let s = dir.km_sign();
    ((other.f - target.f) * s, (other.km - target.km) * METERS_PER_KM * s)
}

/// `(W, L, T, 2)` change-rate values plus a `(W, L, T)` occupancy mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialTensor {
    pub w: usize,
    pub l: usize,
    pub t: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// One occupied cell at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupied {
    pub w: usize,
    pub l: usize,
    pub value: [f64; 2],
}

struct Candidate {
    w: usize,
    l: usize,
    dist: f64,
    value: [f64; 2],
}

impl SocialTensor {
    pub fn empty(spec: &GridSpec, t: usize) -> Self {
        Self {
            w: spec.w,
            l: spec.l,
            t,
            values: vec![0.0; spec.w * spec.l * t * 2],
            mask: vec![false; spec.w * spec.l * t],
        }
    }

    fn idx(&self, w: usize, l: usize, t: usize) -> usize {
        (t * self.w + w) * self.l + l
    }

    pub fn occupied(&self, w: usize, l: usize, t: usize) -> bool {
        self.mask[self.idx(w, l, t)]
    }

    pub fn value(&self, w: usize, l: usize, t: usize) -> [f64; 2] {
        let i = self.idx(w, l, t) * 2;
        [self.values[i], self.values[i + 1]]
    }

    pub fn set(&mut self, w: usize, l: usize, t: usize, value: [f64; 2]) {
        let i = self.idx(w, l, t);
        self.mask[i] = true;
        self.values[2 * i] = value[0];
        self.values[2 * i + 1] = value[1];
    }

    /// Overwrites the stored values of an unoccupied cell without touching the
    /// mask. Used to probe masking.
    pub fn scribble_masked(&mut self, w: usize, l: usize, t: usize, value: [f64; 2]) {
        let i = self.idx(w, l, t);
        assert!(!self.mask[i], "cell is occupied");
        self.values[2 * i] = value[0];
        self.values[2 * i + 1] = value[1];
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count_occupied(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Occupied cells of step `t` in row-major `(w, l)` order.
    pub fn occupied_at(&self, t: usize) -> Vec<Occupied> {
        let mut out = vec![];
        for w in 0..self.w {
            for l in 0..self.l {
                if self.occupied(w, l, t) {
                    out.push(Occupied { w, l, value: self.value(w, l, t) });
                }
            }
        }
        out
    }

    /// Builds the tensor of a sample's observed steps. Slice `t` holds, for
    /// each neighbor seen at window steps `t` and `t + 1`, the change of its
    /// target-relative offset, placed in the cell of its offset at `t + 1`.
    /// Colliding neighbors resolve to the one nearest the target; ties keep
    /// the lexicographically first agent id.
    pub fn build(sample: &SequenceSample, spec: &GridSpec) -> Self {
        let mut out = Self::empty(spec, sample.t_obs);
        let mut order: Vec<usize> = (0..sample.neighbors.len()).collect();
        order.sort_by(|&a, &b| sample.neighbors[a].agent_id.cmp(&sample.neighbors[b].agent_id));
        for t in 0..sample.t_obs {
            let (ta, tb) = (sample.target_states[t], sample.target_states[t + 1]);
            let mut cands: Vec<Candidate> = vec![];
            for &ni in &order {
                let nb = &sample.neighbors[ni];
                let (Some(a), Some(b)) = (nb.states[t], nb.states[t + 1]) else {
                    continue;
                };
                let prev = relative_offset(ta, a, sample.direction);
                let cur = relative_offset(tb, b, sample.direction);
                let Some((w, l)) = spec.cell_of(cur.0, cur.1) else {
                    continue;
                };
                cands.push(Candidate {
                    w,
                    l,
                    dist: cur.0.hypot(cur.1),
                    value: [cur.0 - prev.0, cur.1 - prev.1],
                });
            }
            for c in collide(cands) {
                out.set(c.w, c.l, t, c.value);
            }
        }
        out
    }

    /// Per-step occupied cells as CSV: `t,w,l,d_lat,d_lon`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,w,l,d_lat,d_lon\n");
        for t in 0..self.t {
            for o in self.occupied_at(t) {
                let _ = writeln!(s, "{t},{},{},{},{}", o.w, o.l, o.value[0], o.value[1]);
            }
        }
        s
    }
}

/// Keeps one candidate per cell: the nearest, earliest on ties.
fn collide(cands: Vec<Candidate>) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = vec![];
    for c in cands {
        match kept.iter_mut().find(|k| k.w == c.w && k.l == c.l) {
            Some(k) if c.dist < k.dist => *k = c,
            Some(_) => {}
            None => kept.push(c),
        }
    }
    kept
}

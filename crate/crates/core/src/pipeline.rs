//! Raw position logs to training sequences: trip splitting, outlier
//! rejection, velocity-aware resampling, windowing and surrounding-agent
//! selection.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::navframe::{FairwayGeometry, NavError, NavFrameState, Vec2, METERS_PER_KM};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("trip {0} has fewer than two fixes")]
    TooShort(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upstream,
    Downstream,
}

impl Direction {
    /// +1 when travel increases the waterway kilometer.
    pub fn km_sign(self) -> f64 {
        match self {
            Direction::Upstream => 1.0,
            Direction::Downstream => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFix {
    pub agent_id: String,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
    pub direction: Direction,
}

impl RawFix {
    pub fn p(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn v(&self) -> Option<Vec2> {
        match (self.vx, self.vy) {
            (Some(x), Some(y)) => Some(Vec2::new(x, y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripRole {
    TargetEligible,
    SurroundingOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub agent_id: String,
    /// `agent_id#index`, unique across a dataset.
    pub trip_id: String,
    pub direction: Direction,
    pub role: TripRole,
    pub fixes: Vec<RawFix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Grid resolution (s).
    pub dt: f64,
    pub t_obs: usize,
    pub horizon: usize,
    /// Window stride in grid steps.
    pub stride: usize,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Trips split on gaps strictly longer than this (s).
    pub max_gap: f64,
    /// Source segments at least this long (s) are not interpolated.
    pub interp_gap: f64,
    pub behind_km: f64,
    pub ahead_km: f64,
    /// Trips slower than this on average (m/s) are surrounding-only.
    pub min_target_speed: f64,
    pub context_segments: usize,
    pub context_segment_m: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dt: 60.0,
            t_obs: 5,
            horizon: 5,
            stride: 5,
            max_speed: 8.0,
            max_accel: 0.5,
            max_gap: 3600.0,
            interp_gap: 120.0,
            behind_km: 0.75,
            ahead_km: 1.5,
            min_target_speed: 0.1,
            context_segments: 4,
            context_segment_m: 250.0,
        }
    }
}

/// Splits a fix stream into per-agent trips at direction changes and at gaps
/// longer than `max_gap` seconds. Fixes with repeated timestamps keep the first.
pub fn split_trips(fixes: &[RawFix], max_gap: f64) -> Vec<Trip> {
    let mut by_agent: BTreeMap<&str, Vec<&RawFix>> = BTreeMap::new();
    for f in fixes {
        by_agent.entry(&f.agent_id).or_default().push(f);
    }
    let mut trips = vec![];
    for (agent, mut list) in by_agent {
        list.sort_by(|a, b| a.t.total_cmp(&b.t));
        list.dedup_by(|b, a| a.t == b.t);
        let mut current: Vec<RawFix> = vec![];
        let mut n = 0;
        let mut flush = |current: &mut Vec<RawFix>, trips: &mut Vec<Trip>| {
            if let Some(first) = current.first() {
                let direction = first.direction;
                trips.push(Trip {
                    agent_id: agent.to_string(),
                    trip_id: format!("{agent}#{n}"),
                    direction,
                    role: match direction {
                        Direction::Upstream => TripRole::TargetEligible,
                        Direction::Downstream => TripRole::SurroundingOnly,
                    },
                    fixes: std::mem::take(current),
                });
                n += 1;
            }
        };
        for f in list {
            if let Some(last) = current.last() {
                if f.direction != last.direction || f.t - last.t > max_gap {
                    flush(&mut current, &mut trips);
                }
            }
            current.push(f.clone());
        }
        flush(&mut current, &mut trips);
    }
    trips
}

/// Drops fixes whose implied speed or acceleration against the last kept fix
/// exceeds the thresholds.
pub fn filter_outliers(trip: &Trip, max_speed: f64, max_accel: f64) -> Trip {
    let mut kept: Vec<RawFix> = Vec::with_capacity(trip.fixes.len());
    let mut last_speed: Option<f64> = None;
    for f in &trip.fixes {
        let Some(prev) = kept.last() else {
            kept.push(f.clone());
            continue;
        };
        let dt = f.t - prev.t;
        let speed = prev.p().distance(f.p()) / dt;
        let accel_ok = last_speed.is_none_or(|s| (speed - s).abs() / dt <= max_accel);
        if speed <= max_speed && accel_ok {
            last_speed = Some(speed);
            kept.push(f.clone());
        }
    }
    Trip {
        fixes: kept,
        ..trip.clone()
    }
}

/// Cubic Hermite interpolant through time-stamped positions and velocities.
#[derive(Debug, Clone)]
pub struct HermiteTrack {
    t: Vec<f64>,
    p: Vec<Vec2>,
    v: Vec<Vec2>,
}

/// Finite-difference velocity estimates: central inside, one-sided at the ends.
pub fn estimate_velocities(t: &[f64], p: &[Vec2]) -> Vec<Vec2> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1.min(n - 1)),
                _ if i == n - 1 => (i - 1, i),
                _ => (i - 1, i + 1),
            };
            if a == b {
                Vec2::default()
            } else {
                (p[b] - p[a]) * (1.0 / (t[b] - t[a]))
            }
        })
        .collect()
}

impl HermiteTrack {
    pub fn new(fixes: &[RawFix]) -> Self {
        let t: Vec<f64> = fixes.iter().map(|f| f.t).collect();
        let p: Vec<Vec2> = fixes.iter().map(|f| f.p()).collect();
        let est = estimate_velocities(&t, &p);
        let v = fixes.iter().zip(est).map(|(f, e)| f.v().unwrap_or(e)).collect();
        Self { t, p, v }
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    /// Position and velocity on segment `i` at `time`.
    pub fn eval_segment(&self, i: usize, time: f64) -> (Vec2, Vec2) {
        let h = self.t[i + 1] - self.t[i];
        let s = (time - self.t[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (p0, p1) = (self.p[i], self.p[i + 1]);
        let (m0, m1) = (self.v[i] * h, self.v[i + 1] * h);
        let pos = p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let vel = (p0 * d00 + m0 * d10 + p1 * d01 + m1 * d11) * (1.0 / h);
        (pos, vel)
    }

    /// Interpolated state at `time`, or `None` outside the span or inside a
    /// segment at least `max_segment` seconds long. Source timestamps return
    /// the source fix exactly.
    pub fn eval(&self, time: f64, max_segment: f64) -> Option<(Vec2, Vec2)> {
        let i = self.t.partition_point(|&x| x <= time).checked_sub(1)?;
        if self.t[i] == time {
            return Some((self.p[i], self.v[i]));
        }
        if i + 1 >= self.t.len() || self.t[i + 1] - self.t[i] >= max_segment {
            return None;
        }
        Some(self.eval_segment(i, time))
    }
}

/// Resamples a trip onto absolute multiples of `dt`. Grid points inside source
/// segments of `max_segment` seconds or longer are omitted.
pub fn hermite_resample(trip: &Trip, dt: f64, max_segment: f64) -> Result<Trip, PipelineError> {
    if trip.fixes.len() < 2 {
        return Err(PipelineError::TooShort(trip.trip_id.clone()));
    }
    let track = HermiteTrack::new(&trip.fixes);
    let (t0, t1) = (trip.fixes[0].t, trip.fixes.last().unwrap().t);
    let template = &trip.fixes[0];
    let fixes = ((t0 / dt).ceil() as i64..=(t1 / dt).floor() as i64)
        .filter_map(|k| {
            let time = k as f64 * dt;
            let (p, v) = track.eval(time, max_segment)?;
            Some(RawFix {
                agent_id: template.agent_id.clone(),
                t: time,
                x: p.x,
                y: p.y,
                vx: Some(v.x),
                vy: Some(v.y),
                heading: None,
                direction: template.direction,
            })
        })
        .collect();
    Ok(Trip {
        fixes,
        ..trip.clone()
    })
}

/// A resampled trip on the global time grid, mapped into the fairway frame.
/// Index `i` holds grid step `k0 + i`.
#[derive(Debug, Clone)]
pub struct NavTrack {
    pub agent_id: String,
    pub trip_id: String,
    pub direction: Direction,
    pub role: TripRole,
    pub k0: i64,
    pub states: Vec<Option<NavFrameState>>,
    pub points: Vec<Option<Vec2>>,
    pub velocities: Vec<Option<Vec2>>,
}

impl NavTrack {
    /// Builds a track from a resampled trip; fixes outside the geometry are
    /// treated as unobserved.
    pub fn from_resampled(trip: &Trip, dt: f64, g: &FairwayGeometry, min_target_speed: f64) -> Option<Self> {
        let ks: Vec<i64> = trip.fixes.iter().map(|f| (f.t / dt).round() as i64).collect();
        let (&k0, &k1) = (ks.first()?, ks.last()?);
        let len = (k1 - k0 + 1) as usize;
        let mut states = vec![None; len];
        let mut points = vec![None; len];
        let mut velocities = vec![None; len];
        let mut speed_sum = 0.0;
        for (f, k) in trip.fixes.iter().zip(&ks) {
            let i = (k - k0) as usize;
            if let Ok(s) = g.to_nav_frame(f.p()) {
                states[i] = Some(s);
                points[i] = Some(f.p());
                velocities[i] = f.v();
            }
            speed_sum += f.v().map_or(0.0, |v| v.norm());
        }
        let mean_speed = speed_sum / trip.fixes.len() as f64;
        let role = if trip.role == TripRole::TargetEligible && mean_speed >= min_target_speed {
            TripRole::TargetEligible
        } else {
            TripRole::SurroundingOnly
        };
        Some(Self {
            agent_id: trip.agent_id.clone(),
            trip_id: trip.trip_id.clone(),
            direction: trip.direction,
            role,
            k0,
            states,
            points,
            velocities,
        })
    }

    pub fn k_end(&self) -> i64 {
        self.k0 + self.states.len() as i64
    }

    pub fn state_at(&self, k: i64) -> Option<NavFrameState> {
        let i = k.checked_sub(self.k0)?;
        self.states.get(usize::try_from(i).ok()?).copied().flatten()
    }

    pub fn point_at(&self, k: i64) -> Option<Vec2> {
        let i = k.checked_sub(self.k0)?;
        self.points.get(usize::try_from(i).ok()?).copied().flatten()
    }

    pub fn velocity_at(&self, k: i64) -> Option<Vec2> {
        let i = k.checked_sub(self.k0)?;
        self.velocities.get(usize::try_from(i).ok()?).copied().flatten()
    }
}

/// Direction-signed kilometer offset of `other` relative to `target`:
/// positive ahead of the target in its direction of travel.
pub fn signed_offset_km(target: NavFrameState, other: NavFrameState, dir: Direction) -> f64 {
    (other.km - target.km) * dir.km_sign()
}

/// Whether `other` lies in the closed window `[-behind_km, ahead_km]` around `target`.
pub fn in_neighbor_window(
    target: NavFrameState,
    other: NavFrameState,
    dir: Direction,
    behind_km: f64,
    ahead_km: f64,
) -> bool {
    let off = signed_offset_km(target, other, dir);
    (-behind_km..=ahead_km).contains(&off)
}

/// Tracks (by index into `others`) observed at step `k` inside the neighbor
/// window of `target`, with their states.
pub fn select_neighbors(
    target: &NavTrack,
    others: &[NavTrack],
    k: i64,
    behind_km: f64,
    ahead_km: f64,
) -> Vec<(usize, NavFrameState)> {
    let Some(ts) = target.state_at(k) else {
        return vec![];
    };
    others
        .iter()
        .enumerate()
        .filter(|(_, o)| o.agent_id != target.agent_id)
        .filter_map(|(i, o)| {
            let s = o.state_at(k)?;
            in_neighbor_window(ts, s, target.direction, behind_km, ahead_km).then_some((i, s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Encounter,
    Overtaking,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub agent_id: String,
    pub kind: EventKind,
    /// Grid step at which the offset has changed sign.
    pub k: i64,
}

/// Fairway characteristics ahead of the target: per lookahead segment, the
/// width (in units of 100 m) and signed curvature (in 1/km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationContext {
    pub features: Vec<f64>,
}

impl NavigationContext {
    pub fn zeros(segments: usize) -> Self {
        Self {
            features: vec![0.0; 2 * segments],
        }
    }

    pub fn compute(
        g: &FairwayGeometry,
        at: NavFrameState,
        dir: Direction,
        segments: usize,
        segment_m: f64,
    ) -> Self {
        let len = g.length();
        let s0 = g.arclength_at_km(at.km);
        let mut features = Vec::with_capacity(2 * segments);
        for j in 0..segments {
            let a = (s0 + dir.km_sign() * j as f64 * segment_m).clamp(0.0, len);
            let b = (s0 + dir.km_sign() * (j + 1) as f64 * segment_m).clamp(0.0, len);
            let mid = 0.5 * (a + b);
            let width = g.width_at(mid).unwrap_or(0.0);
            let curvature = if (b - a).abs() > 1e-9 {
                g.curvature_between(a.min(b), a.max(b)) * dir.km_sign()
            } else {
                0.0
            };
            features.push(width / 100.0);
            features.push(curvature * 1000.0);
        }
        Self { features }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTrack {
    pub agent_id: String,
    pub direction: Direction,
    /// One entry per window step; `None` where unobserved or outside the window.
    pub states: Vec<Option<NavFrameState>>,
}

/// One training window. Step 0 is an anchor preceding the `t_obs` observed
/// steps; the `horizon` future steps follow. All per-step vectors have
/// `t_obs + horizon + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub agent_id: String,
    pub trip_id: String,
    pub direction: Direction,
    /// Grid step of the anchor.
    pub k_start: i64,
    pub dt: f64,
    pub t_obs: usize,
    pub horizon: usize,
    pub target_states: Vec<NavFrameState>,
    pub target_points: Vec<Vec2>,
    /// Heading (rad) of the target's velocity at the anchor.
    pub anchor_heading: f64,
    pub neighbors: Vec<NeighborTrack>,
    pub context: NavigationContext,
    pub events: Vec<InteractionEvent>,
}

impl SequenceSample {
    pub fn window_len(&self) -> usize {
        self.t_obs + self.horizon + 1
    }

    pub fn has_encounter(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Encounter)
    }
}

/// Sign-change events of neighbor offsets over the horizon steps of a window.
fn detect_events(
    target_states: &[NavFrameState],
    dir: Direction,
    neighbors: &[NeighborTrack],
    t_obs: usize,
    k_start: i64,
) -> Vec<InteractionEvent> {
    let mut events = vec![];
    for n in neighbors {
        let kind = if n.direction == dir {
            EventKind::Overtaking
        } else {
            EventKind::Encounter
        };
        for i in t_obs..target_states.len() - 1 {
            let (Some(a), Some(b)) = (n.states[i], n.states[i + 1]) else {
                continue;
            };
            let prev = signed_offset_km(target_states[i], a, dir);
            let next = signed_offset_km(target_states[i + 1], b, dir);
            if (prev > 0.0 && next <= 0.0) || (prev < 0.0 && next >= 0.0) {
                events.push(InteractionEvent {
                    agent_id: n.agent_id.clone(),
                    kind,
                    k: k_start + i as i64 + 1,
                });
                break;
            }
        }
    }
    events
}

/// Windows of a target track that contain at least one encounter or
/// overtaking within the prediction horizon.
pub fn extract_sequences(
    target: &NavTrack,
    others: &[NavTrack],
    cfg: &PipelineConfig,
    g: &FairwayGeometry,
) -> Vec<SequenceSample> {
    if target.role != TripRole::TargetEligible {
        return vec![];
    }
    let len = cfg.t_obs + cfg.horizon + 1;
    let stride = cfg.stride.max(1);
    let overlapping: Vec<&NavTrack> = others
        .iter()
        .filter(|o| o.agent_id != target.agent_id && o.k0 < target.k_end() && target.k0 < o.k_end())
        .collect();
    let mut out = vec![];
    let mut start = target.k0;
    while start + len as i64 <= target.k_end() {
        let ks: Vec<i64> = (0..len as i64).map(|i| start + i).collect();
        let states: Option<Vec<NavFrameState>> = ks.iter().map(|&k| target.state_at(k)).collect();
        let points: Option<Vec<Vec2>> = ks.iter().map(|&k| target.point_at(k)).collect();
        let (Some(states), Some(points)) = (states, points) else {
            start += stride as i64;
            continue;
        };
        let neighbors: Vec<NeighborTrack> = overlapping
            .iter()
            .filter_map(|o| {
                let st: Vec<Option<NavFrameState>> = ks
                    .iter()
                    .zip(&states)
                    .map(|(&k, &ts)| {
                        o.state_at(k).filter(|&s| {
                            in_neighbor_window(ts, s, target.direction, cfg.behind_km, cfg.ahead_km)
                        })
                    })
                    .collect();
                st.iter().any(Option::is_some).then(|| NeighborTrack {
                    agent_id: o.agent_id.clone(),
                    direction: o.direction,
                    states: st,
                })
            })
            .collect();
        let events = detect_events(&states, target.direction, &neighbors, cfg.t_obs, start);
        if !events.is_empty() {
            let anchor_heading = match target.velocity_at(start) {
                Some(v) if v.norm() > 1e-9 => v.angle(),
                _ => (points[1] - points[0]).angle(),
            };
            out.push(SequenceSample {
                agent_id: target.agent_id.clone(),
                trip_id: target.trip_id.clone(),
                direction: target.direction,
                k_start: start,
                dt: cfg.dt,
                t_obs: cfg.t_obs,
                horizon: cfg.horizon,
                context: NavigationContext::compute(
                    g,
                    states[cfg.t_obs],
                    target.direction,
                    cfg.context_segments,
                    cfg.context_segment_m,
                ),
                target_states: states,
                target_points: points,
                anchor_heading,
                neighbors,
                events,
            });
        }
        start += stride as i64;
    }
    out
}

/// Re-checks the structural invariants of a sample.
pub fn validate_sample(s: &SequenceSample, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let bad = |m: String| Err(PipelineError::InvalidSample(format!("{}@{}: {m}", s.trip_id, s.k_start)));
    let n = s.t_obs + s.horizon + 1;
    if s.target_states.len() != n || s.target_points.len() != n {
        return bad("target length".into());
    }
    if !s.target_states.iter().all(|t| t.km.is_finite() && t.f.is_finite()) {
        return bad("non-finite target state".into());
    }
    for nb in &s.neighbors {
        if nb.states.len() != n {
            return bad(format!("neighbor {} length", nb.agent_id));
        }
        if nb.states.iter().all(Option::is_none) {
            return bad(format!("neighbor {} never observed", nb.agent_id));
        }
        for (ts, st) in s.target_states.iter().zip(&nb.states) {
            if let Some(st) = st {
                let off = (st.km - ts.km) * s.direction.km_sign();
                if off < -cfg.behind_km || off > cfg.ahead_km {
                    return bad(format!("neighbor {} outside window", nb.agent_id));
                }
            }
        }
    }
    if s.events.is_empty() {
        return bad("no interaction".into());
    }
    Ok(())
}

/// Full preprocessing: split, filter, resample, map into the fairway frame and
/// extract windows. Output is ordered by (agent_id, trip, start step).
pub fn preprocess(fixes: &[RawFix], g: &FairwayGeometry, cfg: &PipelineConfig) -> Vec<SequenceSample> {
    let trips = split_trips(fixes, cfg.max_gap);
    let tracks: Vec<NavTrack> = trips
        .par_iter()
        .filter_map(|t| {
            let t = filter_outliers(t, cfg.max_speed, cfg.max_accel);
            let r = hermite_resample(&t, cfg.dt, cfg.interp_gap).ok()?;
            NavTrack::from_resampled(&r, cfg.dt, g, cfg.min_target_speed)
        })
        .collect();
    let per_target: Vec<Vec<SequenceSample>> = tracks
        .par_iter()
        .map(|t| extract_sequences(t, &tracks, cfg, g))
        .collect();
    per_target.into_iter().flatten().collect()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = vec![];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PipelineError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(|source| PipelineError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fixes(path: &Path) -> Result<Vec<RawFix>, PipelineError> {
    read_jsonl(path)
}

pub fn write_fixes(path: &Path, fixes: &[RawFix]) -> Result<(), PipelineError> {
    write_jsonl(path, fixes)
}

pub fn read_samples(path: &Path) -> Result<Vec<SequenceSample>, PipelineError> {
    read_jsonl(path)
}

pub fn write_samples(path: &Path, samples: &[SequenceSample]) -> Result<(), PipelineError> {
    write_jsonl(path, samples)
}

/// Per-step kilometer change in meters; shorthand used by tests and metrics.
pub fn km_step_m(a: NavFrameState, b: NavFrameState) -> f64 {
    (b.km - a.km) * METERS_PER_KM
}

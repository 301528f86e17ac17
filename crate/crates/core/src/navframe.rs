//! Navigation-area-relative coordinates.
//!
//! A position is expressed as `(km, f)`: the waterway kilometer of its
//! projection onto the fairway centerline, and its signed distance from the
//! right fairway border measured along the centerline normal (positive into
//! the fairway). Per-step changes of these two quantities are the lateral and
//! longitudinal dislocation features, which [`LabelCodec`] discretizes into
//! class labels.

use std::fs;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Meters per waterway kilometer.
pub const METERS_PER_KM: f64 = 1000.0;

/// Arclength tolerance when deciding whether a point lies past either end of
/// the centerline.
const SPAN_SLACK_M: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("position lies outside the fairway geometry span")]
    ProjectionOutOfRange,
    #[error("label ({lat}, {lon}) outside codec classes ({n_lat}, {n_lon})")]
    IndexOutOfRange {
        lat: usize,
        lon: usize,
        n_lat: usize,
        n_lon: usize,
    },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid codec: {0}")]
    InvalidCodec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn from_angle(theta: f64) -> Vec2 {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Position in the fairway frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavFrameState {
    /// Waterway kilometer.
    pub km: f64,
    /// Signed distance from the right fairway border (m), positive into the fairway.
    pub f: f64,
}

/// Per-step change of position: `dx` lateral, `dy` longitudinal, both in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dislocation {
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DislocationLabel {
    pub lat: usize,
    pub lon: usize,
}

impl DislocationLabel {
    pub const fn new(lat: usize, lon: usize) -> Self {
        Self { lat, lon }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeometryFile {
    centerline: Vec<[f64; 2]>,
    right_border: Vec<[f64; 2]>,
    left_border: Vec<[f64; 2]>,
    km_origin: f64,
    km_per_meter: f64,
}

/// Single-channel fairway: centerline, both borders, and a linear waterway
/// kilometer mapping along the centerline arclength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryFile", into = "GeometryFile")]
pub struct FairwayGeometry {
    centerline: Vec<Vec2>,
    right_border: Vec<Vec2>,
    left_border: Vec<Vec2>,
    km_origin: f64,
    km_per_meter: f64,
    arclength: Vec<f64>,
}

/// Orthogonal projection of a point onto the centerline.
#[derive(Debug, Clone, Copy)]
struct Projection {
    s: f64,
    center: Vec2,
    normal: Vec2,
    point: Vec2,
}

impl FairwayGeometry {
    pub fn new(
        centerline: Vec<Vec2>,
        right_border: Vec<Vec2>,
        left_border: Vec<Vec2>,
        km_origin: f64,
        km_per_meter: f64,
    ) -> Result<Self, NavError> {
        if centerline.len() < 2 {
            return Err(NavError::InvalidGeometry("centerline needs at least 2 points".into()));
        }
        if right_border.len() < 2 || left_border.len() < 2 {
            return Err(NavError::InvalidGeometry("borders need at least 2 points".into()));
        }
        if !(km_per_meter > 0.0 && km_per_meter.is_finite() && km_origin.is_finite()) {
            return Err(NavError::InvalidGeometry(
                "km mapping must be finite and strictly increasing".into(),
            ));
        }
        let all = centerline.iter().chain(&right_border).chain(&left_border);
        if !all.clone().all(|p| p.x.is_finite() && p.y.is_finite()) {
            return Err(NavError::InvalidGeometry("non-finite coordinate".into()));
        }
        let mut arclength = Vec::with_capacity(centerline.len());
        arclength.push(0.0);
        for w in centerline.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= 0.0 {
                return Err(NavError::InvalidGeometry("repeated centerline vertex".into()));
            }
            arclength.push(arclength.last().unwrap() + len);
        }
        let g = Self {
            centerline,
            right_border,
            left_border,
            km_origin,
            km_per_meter,
            arclength,
        };
        for i in 0..g.centerline.len() {
            let s = g.arclength[i];
            let (c, n) = g.frame_at(s);
            let right = g.border_offset(&g.right_border, c, n, false);
            let left = g.border_offset(&g.left_border, c, n, true);
            match (right, left) {
                (Some(r), Some(l)) if r < 0.0 && l > 0.0 => {}
                _ => {
                    return Err(NavError::InvalidGeometry(format!(
                        "borders must straddle the centerline (vertex {i})"
                    )))
                }
            }
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, NavError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NavError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn right_border(&self) -> &[Vec2] {
        &self.right_border
    }

    pub fn left_border(&self) -> &[Vec2] {
        &self.left_border
    }

    pub fn km_origin(&self) -> f64 {
        self.km_origin
    }

    pub fn km_per_meter(&self) -> f64 {
        self.km_per_meter
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn km_at(&self, s: f64) -> f64 {
        self.km_origin + s * self.km_per_meter
    }

    pub fn arclength_at_km(&self, km: f64) -> f64 {
        (km - self.km_origin) / self.km_per_meter
    }

    /// Kilometer range `[start, end]` covered by the centerline.
    pub fn km_span(&self) -> (f64, f64) {
        (self.km_at(0.0), self.km_at(self.length()))
    }

    /// Segment index containing arclength `s`; vertex ties go to the lower segment.
    fn segment_at(&self, s: f64) -> usize {
        let i = self.arclength.partition_point(|&a| a < s);
        i.saturating_sub(1).min(self.centerline.len() - 2)
    }

    fn segment_normal(&self, i: usize) -> Vec2 {
        (self.centerline[i + 1] - self.centerline[i]).normalized().perp()
    }

    /// Normal at vertex `i`: bisector of the adjacent segment normals.
    fn vertex_normal(&self, i: usize) -> Vec2 {
        let last = self.centerline.len() - 1;
        if i == 0 {
            self.segment_normal(0)
        } else if i == last {
            self.segment_normal(last - 1)
        } else {
            (self.segment_normal(i - 1) + self.segment_normal(i)).normalized()
        }
    }

    /// Centerline point and left-pointing unit normal at arclength `s`.
    fn frame_at(&self, s: f64) -> (Vec2, Vec2) {
        let i = self.segment_at(s);
        let (a, b) = (self.centerline[i], self.centerline[i + 1]);
        let (s0, s1) = (self.arclength[i], self.arclength[i + 1]);
        let u = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let c = a + (b - a) * u;
        let n = if u <= 0.0 {
            self.vertex_normal(i)
        } else if u >= 1.0 {
            self.vertex_normal(i + 1)
        } else {
            self.segment_normal(i)
        };
        (c, n)
    }

    /// Unit tangent (direction of increasing km) at arclength `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let (_, n) = self.frame_at(s);
        Vec2::new(n.y, -n.x)
    }

    /// Signed offset `t` along `c + t n` where the normal line meets `border`.
    /// Picks the nearest intersection on the requested side.
    fn border_offset(&self, border: &[Vec2], c: Vec2, n: Vec2, left: bool) -> Option<f64> {
        let mut best: Option<f64> = None;
        for w in border.windows(2) {
            let (r1, r2) = (w[0], w[1]);
            let e = r2 - r1;
            let denom = n.cross(e);
            if denom.abs() < 1e-12 {
                continue;
            }
            let d = r1 - c;
            let t = d.cross(e) / denom;
            let u = d.cross(n) / denom;
            if !(-1e-12..=1.0 + 1e-12).contains(&u) {
                continue;
            }
            let on_side = if left { t > 0.0 } else { t < 0.0 };
            if on_side && best.is_none_or(|b| t.abs() < b.abs()) {
                best = Some(t);
            }
        }
        best
    }

    fn right_offset(&self, c: Vec2, n: Vec2) -> Result<f64, NavError> {
        self.border_offset(&self.right_border, c, n, false)
            .ok_or(NavError::ProjectionOutOfRange)
    }

    /// Fairway width along the normal at arclength `s`.
    pub fn width_at(&self, s: f64) -> Result<f64, NavError> {
        let (c, n) = self.frame_at(s);
        let r = self.right_offset(c, n)?;
        let l = self
            .border_offset(&self.left_border, c, n, true)
            .ok_or(NavError::ProjectionOutOfRange)?;
        Ok(l - r)
    }

    /// Mean signed curvature (1/m, positive turning left) over `[s0, s1]`.
    pub fn curvature_between(&self, s0: f64, s1: f64) -> f64 {
        let h0 = self.tangent_at(s0).angle();
        let h1 = self.tangent_at(s1).angle();
        let mut dh = h1 - h0;
        while dh > std::f64::consts::PI {
            dh -= 2.0 * std::f64::consts::PI;
        }
        while dh < -std::f64::consts::PI {
            dh += 2.0 * std::f64::consts::PI;
        }
        dh / (s1 - s0)
    }

    fn project(&self, p: Vec2) -> Result<Projection, NavError> {
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for i in 0..self.centerline.len() - 1 {
            let (a, b) = (self.centerline[i], self.centerline[i + 1]);
            let e = b - a;
            let len2 = e.dot(e);
            let raw = (p - a).dot(e) / len2;
            let u = raw.clamp(0.0, 1.0);
            let q = a + e * u;
            let d2 = (p - q).dot(p - q);
            // Strict comparison keeps the lower-arclength segment on ties.
            if best.is_none_or(|(bd, ..)| d2 < bd) {
                best = Some((d2, i, u, raw));
            }
        }
        let (_, i, u, raw) = best.expect("centerline has a segment");
        let seg_len = self.arclength[i + 1] - self.arclength[i];
        let last = self.centerline.len() - 2;
        if (i == 0 && raw * seg_len < -SPAN_SLACK_M) || (i == last && (raw - 1.0) * seg_len > SPAN_SLACK_M) {
            return Err(NavError::ProjectionOutOfRange);
        }
        let (a, b) = (self.centerline[i], self.centerline[i + 1]);
        let center = a + (b - a) * u;
        let normal = if u <= 0.0 {
            self.vertex_normal(i)
        } else if u >= 1.0 {
            self.vertex_normal(i + 1)
        } else {
            self.segment_normal(i)
        };
        Ok(Projection {
            s: self.arclength[i] + u * seg_len,
            center,
            normal,
            point: p,
        })
    }

    /// Converts a Cartesian point (m) into the fairway frame.
    pub fn to_nav_frame(&self, p: Vec2) -> Result<NavFrameState, NavError> {
        let pr = self.project(p)?;
        let offset = (pr.point - pr.center).dot(pr.normal);
        let right = self.right_offset(pr.center, pr.normal)?;
        Ok(NavFrameState {
            km: self.km_at(pr.s),
            f: offset - right,
        })
    }

    /// Inverse of [`FairwayGeometry::to_nav_frame`].
    pub fn from_nav_frame(&self, state: NavFrameState) -> Result<Vec2, NavError> {
        let s = self.arclength_at_km(state.km);
        if !s.is_finite() || s < -SPAN_SLACK_M || s > self.length() + SPAN_SLACK_M {
            return Err(NavError::ProjectionOutOfRange);
        }
        let (c, n) = self.frame_at(s.clamp(0.0, self.length()));
        let right = self.right_offset(c, n)?;
        Ok(c + n * (state.f + right))
    }
}

impl TryFrom<GeometryFile> for FairwayGeometry {
    type Error = NavError;
    fn try_from(f: GeometryFile) -> Result<Self, NavError> {
        let conv = |v: Vec<[f64; 2]>| v.into_iter().map(|[x, y]| Vec2::new(x, y)).collect();
        FairwayGeometry::new(
            conv(f.centerline),
            conv(f.right_border),
            conv(f.left_border),
            f.km_origin,
            f.km_per_meter,
        )
    }
}

impl From<FairwayGeometry> for GeometryFile {
    fn from(g: FairwayGeometry) -> Self {
        let conv = |v: Vec<Vec2>| v.into_iter().map(|p| [p.x, p.y]).collect();
        GeometryFile {
            centerline: conv(g.centerline),
            right_border: conv(g.right_border),
            left_border: conv(g.left_border),
            km_origin: g.km_origin,
            km_per_meter: g.km_per_meter,
        }
    }
}

/// Nav-frame change from `a` to `b`; the kilometer difference is reported in meters.
pub fn dislocation(a: NavFrameState, b: NavFrameState) -> Dislocation {
    Dislocation {
        dx: b.f - a.f,
        dy: (b.km - a.km) * METERS_PER_KM,
    }
}

/// Displacement `a -> b` expressed in the frame of `heading` (rad):
/// `dy` along the heading, `dx` to its left.
pub fn heading_dislocation(heading: f64, a: Vec2, b: Vec2) -> Dislocation {
    let fwd = Vec2::from_angle(heading);
    let d = b - a;
    Dislocation {
        dx: d.dot(fwd.perp()),
        dy: d.dot(fwd),
    }
}

/// Inverse of [`heading_dislocation`].
pub fn apply_heading_dislocation(heading: f64, a: Vec2, d: Dislocation) -> Vec2 {
    let fwd = Vec2::from_angle(heading);
    a + fwd * d.dy + fwd.perp() * d.dx
}

/// Uniform-bin discretization of lateral and longitudinal dislocations.
///
/// Bins are half-open `[e_k, e_{k+1})`; values outside the outer edges clamp
/// to the first or last class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCodec {
    lateral_edges: Vec<f64>,
    longitudinal_edges: Vec<f64>,
    lateral_centers: Vec<f64>,
    longitudinal_centers: Vec<f64>,
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    (0..=n).map(|i| if i == n { hi } else { lo + w * i as f64 }).collect()
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    let n = edges.len() - 1;
    edges.partition_point(|&e| e <= v).saturating_sub(1).min(n - 1)
}

impl LabelCodec {
    pub fn from_edges(lateral_edges: Vec<f64>, longitudinal_edges: Vec<f64>) -> Result<Self, NavError> {
        for (name, e) in [("lateral", &lateral_edges), ("longitudinal", &longitudinal_edges)] {
            if e.len() < 2 {
                return Err(NavError::InvalidCodec(format!("{name} needs at least one bin")));
            }
            if !e.iter().all(|v| v.is_finite()) || e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(NavError::InvalidCodec(format!("{name} edges must ascend strictly")));
            }
        }
        Ok(Self {
            lateral_centers: centers(&lateral_edges),
            longitudinal_centers: centers(&longitudinal_edges),
            lateral_edges,
            longitudinal_edges,
        })
    }

    /// `n_lat` uniform bins over `lat_range`, `n_lon` over `lon_range`.
    pub fn uniform(
        lat_range: (f64, f64),
        n_lat: usize,
        lon_range: (f64, f64),
        n_lon: usize,
    ) -> Result<Self, NavError> {
        if n_lat == 0 || n_lon == 0 {
            return Err(NavError::InvalidCodec("bin counts must be positive".into()));
        }
        Self::from_edges(
            uniform_edges(lat_range.0, lat_range.1, n_lat),
            uniform_edges(lon_range.0, lon_range.1, n_lon),
        )
    }

    pub fn n_lat(&self) -> usize {
        self.lateral_centers.len()
    }

    pub fn n_lon(&self) -> usize {
        self.longitudinal_centers.len()
    }

    pub fn lateral_edges(&self) -> &[f64] {
        &self.lateral_edges
    }

    pub fn longitudinal_edges(&self) -> &[f64] {
        &self.longitudinal_edges
    }

    pub fn encode(&self, d: Dislocation) -> DislocationLabel {
        debug_assert!(d.dx.is_finite() && d.dy.is_finite());
        DislocationLabel {
            lat: bin_of(&self.lateral_edges, d.dx),
            lon: bin_of(&self.longitudinal_edges, d.dy),
        }
    }

    pub fn decode(&self, l: DislocationLabel) -> Result<Dislocation, NavError> {
        match (self.lateral_centers.get(l.lat), self.longitudinal_centers.get(l.lon)) {
            (Some(&dx), Some(&dy)) => Ok(Dislocation { dx, dy }),
            _ => Err(NavError::IndexOutOfRange {
                lat: l.lat,
                lon: l.lon,
                n_lat: self.n_lat(),
                n_lon: self.n_lon(),
            }),
        }
    }

    /// Widths of the bins holding label `l`.
    pub fn bin_widths(&self, l: DislocationLabel) -> (f64, f64) {
        (
            self.lateral_edges[l.lat + 1] - self.lateral_edges[l.lat],
            self.longitudinal_edges[l.lon + 1] - self.longitudinal_edges[l.lon],
        )
    }
}

/// Rolls decoded dislocations forward from `start` in the fairway frame and
/// maps each visited state back to Cartesian coordinates.
pub fn reconstruct(
    start: NavFrameState,
    labels: &[DislocationLabel],
    codec: &LabelCodec,
    geometry: &FairwayGeometry,
) -> Result<Vec<Vec2>, NavError> {
    let mut state = start;
    labels
        .iter()
        .map(|&l| {
            let d = codec.decode(l)?;
            state.f += d.dx;
            state.km += d.dy / METERS_PER_KM;
            geometry.from_nav_frame(state)
        })
        .collect()
}

/// Rolls decoded heading-frame dislocations forward from `start`, re-aiming
/// the frame along each applied step.
pub fn reconstruct_heading_frame(
    start: Vec2,
    start_heading: f64,
    labels: &[DislocationLabel],
    codec: &LabelCodec,
) -> Result<Vec<Vec2>, NavError> {
    let mut p = start;
    let mut heading = start_heading;
    labels
        .iter()
        .map(|&l| {
            let d = codec.decode(l)?;
            let next = apply_heading_dislocation(heading, p, d);
            if next != p {
                heading = (next - p).angle();
            }
            p = next;
            Ok(p)
        })
        .collect()
}

/// Straight fairway along +x with the right border on `y = 0`.
pub fn straight_fairway(length: f64, width: f64, km_origin: f64) -> FairwayGeometry {
    let half = width / 2.0;
    FairwayGeometry::new(
        vec![Vec2::new(0.0, half), Vec2::new(length, half)],
        vec![Vec2::new(-1.0, 0.0), Vec2::new(length + 1.0, 0.0)],
        vec![Vec2::new(-1.0, width), Vec2::new(length + 1.0, width)],
        km_origin,
        1.0 / METERS_PER_KM,
    )
    .expect("straight fairway is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_codec() -> LabelCodec {
        LabelCodec::uniform((-15.0, 15.0), 21, (0.0, 200.0), 41).unwrap()
    }

    /// Gentle S-bend sampled every 20 m with borders offset along vertex normals.
    fn bend() -> FairwayGeometry {
        let mut pts = vec![];
        let mut p = Vec2::new(100.0, -50.0);
        let mut h: f64 = 0.3;
        for i in 0..200 {
            pts.push(p);
            let k = if i < 100 { 1.0 / 1500.0 } else { -1.0 / 2000.0 };
            h += k * 20.0;
            p = p + Vec2::from_angle(h) * 20.0;
        }
        let normals: Vec<Vec2> = (0..pts.len())
            .map(|i| {
                let a = pts[i.saturating_sub(1)];
                let b = pts[(i + 1).min(pts.len() - 1)];
                (b - a).normalized().perp()
            })
            .collect();
        let right = pts.iter().zip(&normals).map(|(p, n)| *p - *n * 80.0).collect();
        let left = pts.iter().zip(&normals).map(|(p, n)| *p + *n * 80.0).collect();
        FairwayGeometry::new(pts, right, left, 12.0, 1e-3).unwrap()
    }

    #[test]
    fn point_on_right_border_has_zero_f() {
        let g = straight_fairway(1000.0, 150.0, 0.0);
        let s = g.to_nav_frame(Vec2::new(250.0, 0.0)).unwrap();
        assert!(s.f.abs() < 1e-12);
    }

    #[test]
    fn origin_maps_to_km_origin() {
        let g = straight_fairway(1000.0, 150.0, 10.0);
        let s = g.to_nav_frame(Vec2::new(0.0, 40.0)).unwrap();
        assert_eq!(s.km, 10.0);
    }

    #[test]
    fn straight_projection_closed_form() {
        let g = straight_fairway(1000.0, 150.0, 0.0);
        let s = g.to_nav_frame(Vec2::new(500.0, 30.0)).unwrap();
        assert!((s.km - 0.5).abs() < 1e-12);
        assert!((s.f - 30.0).abs() < 1e-12);
    }

    #[test]
    fn beyond_span_is_out_of_range() {
        let g = straight_fairway(1000.0, 150.0, 0.0);
        assert!(matches!(
            g.to_nav_frame(Vec2::new(-5.0, 30.0)),
            Err(NavError::ProjectionOutOfRange)
        ));
        assert!(matches!(
            g.to_nav_frame(Vec2::new(1000.5, 30.0)),
            Err(NavError::ProjectionOutOfRange)
        ));
        assert!(g
            .from_nav_frame(NavFrameState { km: 1.2, f: 10.0 })
            .is_err());
    }

    #[test]
    fn dislocation_examples() {
        let a = NavFrameState { km: 1.0, f: 20.0 };
        assert_eq!(dislocation(a, a), Dislocation { dx: 0.0, dy: 0.0 });
        let b = NavFrameState { km: 1.050, f: 18.0 };
        let d = dislocation(a, b);
        assert!((d.dx + 2.0).abs() < 1e-12);
        assert!((d.dy - 50.0).abs() < 1e-9);
        let down = dislocation(b, a);
        assert!(down.dy < 0.0);
    }

    #[test]
    fn sign_conventions() {
        let g = straight_fairway(1000.0, 150.0, 0.0);
        let a = g.to_nav_frame(Vec2::new(300.0, 50.0)).unwrap();
        let left = g.to_nav_frame(Vec2::new(300.0, 60.0)).unwrap();
        let up = g.to_nav_frame(Vec2::new(340.0, 50.0)).unwrap();
        assert!(left.f > a.f);
        assert!(dislocation(a, up).dy > 0.0);
    }

    #[test]
    fn zero_dislocation_maps_to_center_classes() {
        let c = default_codec();
        let l = c.encode(Dislocation { dx: 0.0, dy: 0.0 });
        assert_eq!(l.lat, 10);
        let d = c.decode(DislocationLabel::new(10, 0)).unwrap();
        assert!(d.dx.abs() < 1e-12);
        let sym = LabelCodec::uniform((-15.0, 15.0), 21, (-100.0, 100.0), 41).unwrap();
        assert_eq!(sym.encode(Dislocation { dx: 0.0, dy: 0.0 }), DislocationLabel::new(10, 20));
        let z = sym.decode(DislocationLabel::new(10, 20)).unwrap();
        assert!(z.dx.abs() < 1e-12 && z.dy.abs() < 1e-12);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let c = default_codec();
        assert_eq!(c.encode(Dislocation { dx: 0.0, dy: 1e4 }).lon, 40);
        assert_eq!(c.encode(Dislocation { dx: -99.0, dy: -5.0 }), DislocationLabel::new(0, 0));
        assert_eq!(c.encode(Dislocation { dx: 15.0, dy: 200.0 }), DislocationLabel::new(20, 40));
    }

    #[test]
    fn decode_rejects_bad_index() {
        let c = default_codec();
        assert!(matches!(
            c.decode(DislocationLabel::new(21, 0)),
            Err(NavError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn codec_rejects_bad_edges() {
        assert!(LabelCodec::from_edges(vec![0.0, 1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(LabelCodec::from_edges(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn every_label_round_trips() {
        let c = default_codec();
        for lat in 0..c.n_lat() {
            for lon in 0..c.n_lon() {
                let l = DislocationLabel::new(lat, lon);
                assert_eq!(c.encode(c.decode(l).unwrap()), l);
            }
        }
    }

    fn linear_scan(edges: &[f64], v: f64) -> usize {
        let n = edges.len() - 1;
        if v < edges[0] {
            return 0;
        }
        for k in 0..n {
            if edges[k] <= v && v < edges[k + 1] {
                return k;
            }
        }
        n - 1
    }

    #[test]
    fn binning_matches_linear_scan() {
        let c = default_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let d = Dislocation {
                dx: rng.gen_range(-20.0..20.0),
                dy: rng.gen_range(-20.0..230.0),
            };
            let l = c.encode(d);
            assert_eq!(l.lat, linear_scan(c.lateral_edges(), d.dx));
            assert_eq!(l.lon, linear_scan(c.longitudinal_edges(), d.dy));
        }
        for (i, &e) in c.lateral_edges().iter().enumerate() {
            assert_eq!(c.encode(Dislocation { dx: e, dy: 0.0 }).lat, linear_scan(c.lateral_edges(), e));
            assert_eq!(c.encode(Dislocation { dx: e, dy: 0.0 }).lat, i.min(20));
        }
    }

    #[test]
    fn quantization_error_is_half_bin() {
        let c = default_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let d = Dislocation {
                dx: rng.gen_range(-15.0..15.0),
                dy: rng.gen_range(0.0..200.0),
            };
            let l = c.encode(d);
            let back = c.decode(l).unwrap();
            let (wl, wn) = c.bin_widths(l);
            assert!((back.dx - d.dx).abs() <= wl / 2.0 + 1e-12);
            assert!((back.dy - d.dy).abs() <= wn / 2.0 + 1e-12);
        }
    }

    #[test]
    fn zero_labels_hold_position() {
        let g = straight_fairway(2000.0, 150.0, 0.0);
        let c = LabelCodec::uniform((-15.0, 15.0), 21, (-100.0, 100.0), 41).unwrap();
        let start = NavFrameState { km: 0.8, f: 40.0 };
        let pts = reconstruct(start, &[DislocationLabel::new(10, 20); 4], &c, &g).unwrap();
        let p0 = g.from_nav_frame(start).unwrap();
        for p in pts {
            assert!(p.distance(p0) < 1e-9);
        }
    }

    #[test]
    fn single_step_on_straight_fairway() {
        let g = straight_fairway(2000.0, 150.0, 0.0);
        let c = default_codec();
        let start = NavFrameState { km: 0.5, f: 30.0 };
        let l = DislocationLabel::new(14, 30);
        let d = c.decode(l).unwrap();
        let p = reconstruct(start, &[l], &c, &g).unwrap()[0];
        assert!((p.x - (500.0 + d.dy)).abs() < 1e-9);
        assert!((p.y - (30.0 + d.dx)).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_error_bounded_by_accumulated_half_bins() {
        let g = straight_fairway(5000.0, 150.0, 0.0);
        let c = default_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut states = vec![NavFrameState { km: 0.3, f: 50.0 }];
        for _ in 0..10 {
            let last = *states.last().unwrap();
            states.push(NavFrameState {
                km: last.km + rng.gen_range(100.0..180.0) / 1000.0,
                f: last.f + rng.gen_range(-8.0..8.0),
            });
        }
        let labels: Vec<_> = states.windows(2).map(|w| c.encode(dislocation(w[0], w[1]))).collect();
        let pts = reconstruct(states[0], &labels, &c, &g).unwrap();
        let (mut lat_bound, mut lon_bound) = (0.0, 0.0);
        for (k, l) in labels.iter().enumerate() {
            let (wl, wn) = c.bin_widths(*l);
            lat_bound += wl / 2.0;
            lon_bound += wn / 2.0;
            let truth = g.from_nav_frame(states[k + 1]).unwrap();
            assert!((pts[k].y - truth.y).abs() <= lat_bound + 1e-9);
            assert!((pts[k].x - truth.x).abs() <= lon_bound + 1e-9);
        }
    }

    #[test]
    fn frame_round_trip_on_curved_geometry() {
        let g = bend();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0;
        while checked < 2000 {
            // Sample states whose arclength stays clear of vertices.
            let seg = rng.gen_range(1..190) as f64;
            let s = seg * 20.0 + rng.gen_range(1.0..19.0);
            let st = NavFrameState {
                km: g.km_at(s),
                f: rng.gen_range(5.0..155.0),
            };
            let p = g.from_nav_frame(st).unwrap();
            let back = g.to_nav_frame(p).unwrap();
            let again = g.to_nav_frame(g.from_nav_frame(back).unwrap()).unwrap();
            assert!(((back.km - again.km) * METERS_PER_KM).abs() < 1e-6);
            assert!((back.f - again.f).abs() < 1e-6);
            assert!(((back.km - st.km) * METERS_PER_KM).abs() < 1e-6);
            assert!((back.f - st.f).abs() < 1e-6);
            checked += 1;
        }
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = bend();
        let json = serde_json::to_string(&g).unwrap();
        let back: FairwayGeometry = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["km_per_meter"].is_number());
        assert!(v["centerline"][0].is_array());
    }

    #[test]
    fn invalid_geometry_rejected() {
        let one = vec![Vec2::new(0.0, 0.0)];
        let two = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert!(FairwayGeometry::new(one, two.clone(), two.clone(), 0.0, 1e-3).is_err());
        // Borders on the same side of the centerline.
        let c = vec![Vec2::new(0.0, 10.0), Vec2::new(100.0, 10.0)];
        let r = vec![Vec2::new(-1.0, 0.0), Vec2::new(101.0, 0.0)];
        let l = vec![Vec2::new(-1.0, 5.0), Vec2::new(101.0, 5.0)];
        assert!(FairwayGeometry::new(c.clone(), r.clone(), l, 0.0, 1e-3).is_err());
        let l = vec![Vec2::new(-1.0, 20.0), Vec2::new(101.0, 20.0)];
        assert!(FairwayGeometry::new(c, r, l, 0.0, -1e-3).is_err());
    }

    #[test]
    fn heading_frame_round_trip() {
        let a = Vec2::new(3.0, 4.0);
        let b = Vec2::new(120.0, -30.0);
        for h in [0.0, 0.7, -2.0, 3.1] {
            let d = heading_dislocation(h, a, b);
            assert!(apply_heading_dislocation(h, a, d).distance(b) < 1e-9);
        }
        let d = heading_dislocation(0.0, a, a + Vec2::new(10.0, 2.0));
        assert!((d.dy - 10.0).abs() < 1e-12 && (d.dx - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn translation_invariance(tx in -1e4f64..1e4, ty in -1e4f64..1e4, s in 30.0f64..3700.0, f in 5.0f64..150.0) {
            let g = bend();
            let shift = Vec2::new(tx, ty);
            let moved = |v: &[Vec2]| v.iter().map(|p| *p + shift).collect::<Vec<_>>();
            let h = FairwayGeometry::new(
                moved(g.centerline()), moved(g.right_border()), moved(g.left_border()),
                g.km_origin(), g.km_per_meter(),
            ).unwrap();
            let p = g.from_nav_frame(NavFrameState { km: g.km_at(s), f }).unwrap();
            let a = g.to_nav_frame(p).unwrap();
            let b = h.to_nav_frame(p + shift).unwrap();
            prop_assert!(((a.km - b.km) * METERS_PER_KM).abs() < 1e-6);
            prop_assert!((a.f - b.f).abs() < 1e-6);
        }
    }
}

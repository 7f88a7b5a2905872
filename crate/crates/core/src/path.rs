//! Spiral-inward coverage paths, retrace laps and coverage diagnostics.
//!
//! Tracks lie on a lattice of pitch `spacing_m` anchored at the launch
//! corner. Ring `k` is the lattice rectangle inset by `k` tracks from every
//! side; rings are joined at the inset corner next to where the previous
//! ring closed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::geometry::{point_segment_distance, Point2, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    SouthWest,
    SouthEast,
    NorthEast,
    NorthWest,
}

impl Corner {
    pub fn of(self, r: &Rect) -> Point2 {
        match self {
            Corner::SouthWest => Point2::new(r.x0, r.y0),
            Corner::SouthEast => Point2::new(r.x1, r.y0),
            Corner::NorthEast => Point2::new(r.x1, r.y1),
            Corner::NorthWest => Point2::new(r.x0, r.y1),
        }
    }

    pub fn opposite(self) -> Corner {
        match self {
            Corner::SouthWest => Corner::NorthEast,
            Corner::SouthEast => Corner::NorthWest,
            Corner::NorthEast => Corner::SouthWest,
            Corner::NorthWest => Corner::SouthEast,
        }
    }

    /// Corner of `r` closest to `p`. Ties resolve in declaration order.
    pub fn nearest(r: &Rect, p: Point2) -> Corner {
        [
            Corner::SouthWest,
            Corner::SouthEast,
            Corner::NorthEast,
            Corner::NorthWest,
        ]
        .into_iter()
        .min_by(|a, b| {
            a.of(r)
                .distance_sq(p)
                .total_cmp(&b.of(r).distance_sq(p))
        })
        .expect("four corners")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub dense_spacing_m: f64,
    pub sparse_spacing_m: f64,
    /// Explicit track spacing; overrides the density profile when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    pub laps: u32,
    /// Sub-rectangle to fly in standalone mode; defaults to the whole field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Rect>,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            dense_spacing_m: 2.0,
            sparse_spacing_m: 4.0,
            spacing_m: None,
            laps: 6,
            region: None,
        }
    }
}

impl PathSection {
    pub fn spacing_for(&self, density: Density) -> f64 {
        self.spacing_m.unwrap_or(match density {
            Density::Dense => self.dense_spacing_m,
            Density::Sparse => self.sparse_spacing_m,
        })
    }
}

fn lattice_points(len: f64, spacing: f64) -> usize {
    (len / spacing + 1e-9).floor() as usize
}

/// Lattice rings of the inward spiral, outermost first, in lattice indices
/// relative to the south-west corner.
fn lattice_rings(nx: usize, ny: usize) -> Vec<Vec<(usize, usize)>> {
    let mut rings = Vec::new();
    let mut k = 0;
    while k + k < nx && k + k < ny {
        let (l, r, b, t) = (k, nx - 1 - k, k, ny - 1 - k);
        let ring = if l == r && b == t {
            vec![(l, b)]
        } else if b == t {
            vec![(l, b), (r, b)]
        } else if l == r {
            vec![(l, b), (l, t)]
        } else {
            let mut ring = vec![(l, b), (r, b), (r, t), (l, t)];
            if b + 1 != t {
                ring.push((l, b + 1));
            }
            ring
        };
        rings.push(ring);
        k += 1;
    }
    rings
}

/// The spiral split into its rings, mapped into field coordinates so that
/// the first waypoint is `start`'s corner of `region`.
pub fn spiral_rings(region: &Rect, spacing_m: f64, start: Corner) -> Result<Vec<Vec<Point2>>> {
    if region.is_degenerate() {
        return Err(Error::DegenerateRegion(format!(
            "region {:?} has no area",
            region
        )));
    }
    if !(spacing_m > 0.0) || spacing_m > region.width().min(region.height()) + 1e-9 {
        return Err(Error::DegenerateRegion(format!(
            "spacing {spacing_m} m does not fit a {} × {} m region",
            region.width(),
            region.height()
        )));
    }
    let nx = lattice_points(region.width(), spacing_m);
    let ny = lattice_points(region.height(), spacing_m);
    let (from_west, from_south) = match start {
        Corner::SouthWest => (true, true),
        Corner::SouthEast => (false, true),
        Corner::NorthEast => (false, false),
        Corner::NorthWest => (true, false),
    };
    let map = |(i, j): (usize, usize)| {
        let dx = i as f64 * spacing_m;
        let dy = j as f64 * spacing_m;
        Point2::new(
            if from_west { region.x0 + dx } else { region.x1 - dx },
            if from_south { region.y0 + dy } else { region.y1 - dy },
        )
    };
    Ok(lattice_rings(nx, ny)
        .into_iter()
        .map(|ring| ring.into_iter().map(map).collect())
        .collect())
}

/// Concentric rectangular rings from the perimeter inward, ending on the
/// innermost ring (or the center point).
pub fn spiral_inward(region: &Rect, spacing_m: f64, start: Corner) -> Result<Vec<Point2>> {
    let mut out: Vec<Point2> = Vec::new();
    for p in spiral_rings(region, spacing_m, start)?.into_iter().flatten() {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// `inward` followed by its reverse, sharing the center point once.
pub fn full_lap(inward: &[Point2]) -> Vec<Point2> {
    let mut lap = inward.to_vec();
    lap.extend(inward.iter().rev().skip(1));
    lap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub region: Rect,
    pub spacing_m: f64,
    pub laps: u32,
    pub waypoints: Vec<Point2>,
    /// Length of one full lap (spiral plus retrace).
    pub lap_len: usize,
}

impl PathPlan {
    pub fn launch_corner(&self) -> Point2 {
        self.waypoints[0]
    }

    /// Waypoint indices at which each lap ends, in order.
    pub fn lap_end_indices(&self) -> Vec<usize> {
        let stride = if self.lap_len > 1 { self.lap_len - 1 } else { 1 };
        let first = if self.lap_len > 1 { stride } else { 0 };
        (0..self.laps as usize).map(|l| first + l * stride).collect()
    }

    /// Waypoints of lap `lap` (0-based), both endpoints included.
    pub fn lap_waypoints(&self, lap: usize) -> &[Point2] {
        if self.lap_len <= 1 {
            return &self.waypoints[lap..=lap];
        }
        let start = lap * (self.lap_len - 1);
        &self.waypoints[start..start + self.lap_len]
    }

    pub fn length_m(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// The innermost point of the spiral, visited once per lap.
    pub fn center(&self) -> Point2 {
        self.waypoints[(self.lap_len - 1) / 2]
    }
}

/// `laps` consecutive full laps with the shared launch-corner endpoints
/// merged.
pub fn mission_path(region: &Rect, spacing_m: f64, laps: u32, start: Corner) -> Result<PathPlan> {
    if laps < 1 {
        return Err(Error::config("path.laps", "at least one lap is required"));
    }
    let lap = full_lap(&spiral_inward(region, spacing_m, start)?);
    let mut waypoints = lap.clone();
    for _ in 1..laps {
        if lap.len() == 1 {
            waypoints.push(lap[0]);
        } else {
            waypoints.extend_from_slice(&lap[1..]);
        }
    }
    Ok(PathPlan {
        region: *region,
        spacing_m,
        laps,
        waypoints,
        lap_len: lap.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub fraction: f64,
    /// Row-major per-cell flags aligned to the field grid.
    pub covered: Vec<bool>,
    pub nx: usize,
    pub ny: usize,
}

impl CoverageMap {
    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        self.covered[j * self.nx + i]
    }
}

/// Cells whose centers lie within `effect_radius_m` of any segment of any of
/// the given polylines.
pub fn coverage_of_paths<'a>(
    paths: impl IntoIterator<Item = &'a [Point2]>,
    effect_radius_m: f64,
    field: &FieldSpec,
) -> CoverageMap {
    let (nx, ny) = (field.nx(), field.ny());
    let mut covered = vec![false; nx * ny];
    let cs = field.cell_size_m;
    for path in paths {
        let segments: Vec<(Point2, Point2)> = match path.len() {
            0 => continue,
            1 => vec![(path[0], path[0])],
            _ => path.windows(2).map(|w| (w[0], w[1])).collect(),
        };
        for (a, b) in segments {
            let i0 = ((a.x.min(b.x) - effect_radius_m) / cs - 0.5).floor().max(0.0) as usize;
            let i1 = (((a.x.max(b.x) + effect_radius_m) / cs - 0.5).ceil().max(0.0) as usize).min(nx - 1);
            let j0 = ((a.y.min(b.y) - effect_radius_m) / cs - 0.5).floor().max(0.0) as usize;
            let j1 = (((a.y.max(b.y) + effect_radius_m) / cs - 0.5).ceil().max(0.0) as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let idx = j * nx + i;
                    if !covered[idx]
                        && point_segment_distance(field.cell_center(i, j), a, b) <= effect_radius_m
                    {
                        covered[idx] = true;
                    }
                }
            }
        }
    }
    let n = covered.iter().filter(|c| **c).count();
    CoverageMap {
        fraction: n as f64 / (nx * ny) as f64,
        covered,
        nx,
        ny,
    }
}

pub fn coverage_map(plan: &PathPlan, effect_radius_m: f64, field: &FieldSpec) -> CoverageMap {
    // Laps repeat the same geometry; one lap covers what the mission covers.
    let lap = if plan.waypoints.is_empty() {
        &plan.waypoints[..]
    } else {
        plan.lap_waypoints(0)
    };
    coverage_of_paths([lap], effect_radius_m, field)
}

//! Field geometry, crop heights and the pest population.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};

/// Crop height as given in the run config: one value for the whole field or
/// a row-major grid (`rows[j][i]`, `j` along the length, `i` along the width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CropHeight {
    Uniform(f64),
    Grid(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub width_m: f64,
    pub length_m: f64,
    pub cell_size_m: f64,
    pub crop_height_m: CropHeight,
    pub launch_point: [f64; 2],
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            width_m: 30.0,
            length_m: 30.0,
            cell_size_m: 0.5,
            crop_height_m: CropHeight::Uniform(1.0),
            launch_point: [0.0, 0.0],
        }
    }
}

/// Validated rectangular field on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub width_m: f64,
    pub length_m: f64,
    pub cell_size_m: f64,
    nx: usize,
    ny: usize,
    crop_height_m: Vec<f64>,
    pub launch_point: Point2,
}

impl FieldSpec {
    /// Number of grid columns (along the width).
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of grid rows (along the length).
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width_m, self.length_m)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            (i as f64 + 0.5) * self.cell_size_m,
            (j as f64 + 0.5) * self.cell_size_m,
        )
    }

    pub fn crop_height(&self, i: usize, j: usize) -> f64 {
        self.crop_height_m[j * self.nx + i]
    }

    /// Tallest crop among cells whose centers fall inside `region`.
    pub fn max_crop_height_in(&self, region: &Rect) -> f64 {
        let mut max = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if region.contains(self.cell_center(i, j)) {
                    max = max.max(self.crop_height(i, j));
                }
            }
        }
        max
    }

    /// Grid cell containing `p`, clamped to the field.
    pub fn cell_of(&self, p: Point2) -> (usize, usize) {
        let i = ((p.x / self.cell_size_m).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((p.y / self.cell_size_m).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }
}

fn grid_count(len: f64, cell: f64, key: &str) -> Result<usize> {
    let n = len / cell;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::config(
            key,
            format!("{len} m is not a whole number of {cell} m cells"),
        ));
    }
    Ok(rounded as usize)
}

pub fn build_field(cfg: &FieldSection) -> Result<FieldSpec> {
    for (key, v) in [
        ("field.width_m", cfg.width_m),
        ("field.length_m", cfg.length_m),
        ("field.cell_size_m", cfg.cell_size_m),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(key, format!("must be positive, got {v}")));
        }
    }
    if cfg.cell_size_m > cfg.width_m.min(cfg.length_m) {
        return Err(Error::config(
            "field.cell_size_m",
            "cell size exceeds the smaller field dimension",
        ));
    }
    let nx = grid_count(cfg.width_m, cfg.cell_size_m, "field.width_m")?;
    let ny = grid_count(cfg.length_m, cfg.cell_size_m, "field.length_m")?;

    let crop_height_m = match &cfg.crop_height_m {
        CropHeight::Uniform(h) => vec![*h; nx * ny],
        CropHeight::Grid(rows) => {
            if rows.len() != ny || rows.iter().any(|r| r.len() != nx) {
                return Err(Error::config(
                    "field.crop_height_m",
                    format!("grid must be {ny} rows of {nx} values"),
                ));
            }
            rows.iter().flatten().copied().collect()
        }
    };
    if let Some(h) = crop_height_m.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
        return Err(Error::config(
            "field.crop_height_m",
            format!("crop height must be non-negative, got {h}"),
        ));
    }

    let [lx, ly] = cfg.launch_point;
    let bounds = Rect::new(0.0, 0.0, cfg.width_m, cfg.length_m);
    let on_edge = |v: f64, edge: f64| (v - edge).abs() <= 1e-9;
    let launch = Point2::new(lx, ly);
    if !bounds.contains(launch)
        || !(on_edge(lx, 0.0) || on_edge(lx, cfg.width_m) || on_edge(ly, 0.0) || on_edge(ly, cfg.length_m))
    {
        return Err(Error::config(
            "field.launch_point",
            format!("({lx}, {ly}) is not on the field boundary"),
        ));
    }

    Ok(FieldSpec {
        width_m: cfg.width_m,
        length_m: cfg.length_m,
        cell_size_m: cfg.cell_size_m,
        nx,
        ny,
        crop_height_m,
        launch_point: launch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PestSpecies {
    pub name: String,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub base_susceptibility: f64,
    pub habituation_days: f64,
    pub rf_susceptible: bool,
}

impl Default for PestSpecies {
    fn default() -> Self {
        Self {
            name: "generic-insect".to_string(),
            band_lo_hz: 20_000.0,
            band_hi_hz: 60_000.0,
            base_susceptibility: 0.9,
            habituation_days: 10.0,
            rf_susceptible: true,
        }
    }
}

impl PestSpecies {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_lo_hz > 0.0 && self.band_lo_hz < self.band_hi_hz) {
            return Err(Error::config(
                "species.band_lo_hz",
                "band must satisfy 0 < band_lo_hz < band_hi_hz",
            ));
        }
        if !(0.0..=1.0).contains(&self.base_susceptibility) {
            return Err(Error::config(
                "species.base_susceptibility",
                "must lie in [0, 1]",
            ));
        }
        if !(self.habituation_days > 0.0) {
            return Err(Error::config("species.habituation_days", "must be positive"));
        }
        Ok(())
    }

    pub fn in_band(&self, freq_hz: f64) -> bool {
        self.band_lo_hz <= freq_hz && freq_hz <= self.band_hi_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pest {
    pub position: Point2,
    pub present: bool,
    /// Habituation level in `[0, 1]`.
    pub habituation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PestPopulation {
    pub species: PestSpecies,
    pub individuals: Vec<Pest>,
}

impl PestPopulation {
    /// Population at explicit positions, all present and unhabituated.
    pub fn from_positions(
        field: &FieldSpec,
        species: &PestSpecies,
        positions: &[Point2],
    ) -> Result<Self> {
        let bounds = field.bounds();
        if let Some(p) = positions.iter().find(|p| !bounds.contains(**p)) {
            return Err(Error::config(
                "species.positions",
                format!("({}, {}) lies outside the field", p.x, p.y),
            ));
        }
        Ok(Self {
            species: species.clone(),
            individuals: positions
                .iter()
                .map(|&position| Pest {
                    position,
                    present: true,
                    habituation: 0.0,
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn present_count(&self) -> usize {
        self.individuals.iter().filter(|p| p.present).count()
    }
}

/// Places `count` pests uniformly over the field. Pure in its arguments.
pub fn seed_pests(field: &FieldSpec, species: &PestSpecies, count: usize, seed: u64) -> PestPopulation {
    seed_pests_where(field, species, count, seed, |_| true)
        .expect("unconstrained placement always succeeds")
}

/// Uniform placement restricted by rejection to points accepted by `accept`.
/// Fails if the accepted region looks empty.
pub fn seed_pests_where(
    field: &FieldSpec,
    species: &PestSpecies,
    count: usize,
    seed: u64,
    accept: impl Fn(Point2) -> bool,
) -> Result<PestPopulation> {
    const MAX_REJECTS_PER_PEST: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut individuals = Vec::with_capacity(count);
    let mut rejects = 0usize;
    while individuals.len() < count {
        let p = Point2::new(
            rng.random::<f64>() * field.width_m,
            rng.random::<f64>() * field.length_m,
        );
        if accept(p) {
            rejects = 0;
            individuals.push(Pest {
                position: p,
                present: true,
                habituation: 0.0,
            });
        } else {
            rejects += 1;
            if rejects > MAX_REJECTS_PER_PEST {
                return Err(Error::config(
                    "species.placement",
                    "no admissible pest position found in the field",
                ));
            }
        }
    }
    Ok(PestPopulation {
        species: species.clone(),
        individuals,
    })
}

/// Fraction of initially present pests that are gone afterwards.
pub fn effectiveness(before: &PestPopulation, after: &PestPopulation) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::PopulationMismatch {
            before: before.len(),
            after: after.len(),
        });
    }
    let present_before = before.present_count();
    if present_before == 0 {
        return Err(Error::UndefinedMetric);
    }
    let present_after = before
        .individuals
        .iter()
        .zip(&after.individuals)
        .filter(|(b, a)| b.present && a.present)
        .count();
    Ok((present_before - present_after) as f64 / present_before as f64)
}

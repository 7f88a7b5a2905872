//! Grid partitioning of a field among agents and neighbor-to-neighbor
//! boundary negotiation.
//!
//! Negotiation runs in synchronous rounds. Every agent tells each edge
//! neighbor where it believes their shared edge lies. When two claims
//! disagree the lower agent id keeps its edge and the higher id moves to
//! match, which closes both overlaps and vacancies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::geometry::{Point2, Rect};

pub type AgentId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellAssignment {
    pub agent_id: AgentId,
    pub cell: Rect,
    pub neighbors: Vec<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMsg {
    pub from: AgentId,
    pub to: AgentId,
    pub claimed_edge: Segment,
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub overlap_area_m2: f64,
    pub gap_area_m2: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::West => Side::East,
            Side::East => Side::West,
            Side::South => Side::North,
            Side::North => Side::South,
        }
    }

    fn coord(self, r: &Rect) -> f64 {
        match self {
            Side::West => r.x0,
            Side::East => r.x1,
            Side::South => r.y0,
            Side::North => r.y1,
        }
    }

    fn set_coord(self, r: &mut Rect, v: f64) {
        match self {
            Side::West => r.x0 = v,
            Side::East => r.x1 = v,
            Side::South => r.y0 = v,
            Side::North => r.y1 = v,
        }
    }

    fn edge(self, r: &Rect) -> Segment {
        let [sw, se, ne, nw] = r.corners();
        let (a, b) = match self {
            Side::West => (sw, nw),
            Side::East => (se, ne),
            Side::South => (sw, se),
            Side::North => (nw, ne),
        };
        Segment { a, b }
    }
}

/// Side of `from` that faces `to`, judged from the cell centers relative to
/// the cell sizes.
fn facing_side(from: &Rect, to: &Rect) -> Side {
    let (cf, ct) = (from.center(), to.center());
    let sx = (ct.x - cf.x) / (0.5 * (from.width() + to.width()));
    let sy = (ct.y - cf.y) / (0.5 * (from.height() + to.height()));
    if sx.abs() >= sy.abs() {
        if sx >= 0.0 {
            Side::East
        } else {
            Side::West
        }
    } else if sy >= 0.0 {
        Side::North
    } else {
        Side::South
    }
}

/// Columns × rows factorization of `n` closest to the field aspect ratio.
fn grid_shape(field: &FieldSpec, n: usize) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(Error::config("swarm.agents", "at least one agent is required"));
    }
    if n > field.cell_count() {
        return Err(Error::OverPartition {
            agents: n,
            reason: format!("field has only {} grid cells", field.cell_count()),
        });
    }
    let aspect = (field.width_m / field.length_m).ln();
    (1..=n)
        .filter(|p| n.is_multiple_of(*p))
        .map(|p| (p, n / p))
        .filter(|&(p, q)| p <= field.nx() && q <= field.ny())
        .min_by(|a, b| {
            let da = ((a.0 as f64 / a.1 as f64).ln() - aspect).abs();
            let db = ((b.0 as f64 / b.1 as f64).ln() - aspect).abs();
            da.total_cmp(&db).then(b.0.cmp(&a.0))
        })
        .ok_or_else(|| Error::OverPartition {
            agents: n,
            reason: format!(
                "no factorization fits a {} × {} cell grid",
                field.nx(),
                field.ny()
            ),
        })
}

/// Splits the field into a grid of near-equal rectangles snapped to grid
/// lines. Agent ids run row-major from the south-west corner.
pub fn partition_field(field: &FieldSpec, n_agents: usize) -> Result<Vec<CellAssignment>> {
    let (cols, rows) = grid_shape(field, n_agents)?;
    let bound = |k: usize, parts: usize, cells: usize, len: f64| {
        if k == parts {
            len
        } else {
            ((2 * k * cells + parts) / (2 * parts)) as f64 * field.cell_size_m
        }
    };
    let xs: Vec<f64> = (0..=cols)
        .map(|k| bound(k, cols, field.nx(), field.width_m))
        .collect();
    let ys: Vec<f64> = (0..=rows)
        .map(|k| bound(k, rows, field.ny(), field.length_m))
        .collect();

    let mut out = Vec::with_capacity(n_agents);
    for r in 0..rows {
        for c in 0..cols {
            let mut neighbors = Vec::new();
            if r > 0 {
                neighbors.push((r - 1) * cols + c);
            }
            if c > 0 {
                neighbors.push(r * cols + c - 1);
            }
            if c + 1 < cols {
                neighbors.push(r * cols + c + 1);
            }
            if r + 1 < rows {
                neighbors.push((r + 1) * cols + c);
            }
            out.push(CellAssignment {
                agent_id: r * cols + c,
                cell: Rect::new(xs[c], ys[r], xs[c + 1], ys[r + 1]),
                neighbors,
            });
        }
    }
    Ok(out)
}

/// Moves one side of an agent's cell by `delta_m`. Used to inject
/// conflicting claims when exercising negotiation.
pub fn perturb_edge(assignments: &mut [CellAssignment], agent: AgentId, side: Side, delta_m: f64) {
    if let Some(a) = assignments.iter_mut().find(|a| a.agent_id == agent) {
        let v = side.coord(&a.cell) + delta_m;
        side.set_coord(&mut a.cell, v);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Negotiation {
    pub assignments: Vec<CellAssignment>,
    pub trace: Vec<BoundaryMsg>,
    pub rounds: usize,
    /// Edge adjustments made across all rounds.
    pub claim_changes: usize,
}

fn index_of(assignments: &[CellAssignment], id: AgentId) -> Result<usize> {
    assignments
        .iter()
        .position(|a| a.agent_id == id)
        .ok_or_else(|| Error::config("swarm.assignments", format!("unknown neighbor id {id}")))
}

fn check_symmetric(assignments: &[CellAssignment]) -> Result<()> {
    for a in assignments {
        if a.cell.is_degenerate() {
            return Err(Error::config(
                "swarm.assignments",
                format!("agent {} has a degenerate cell", a.agent_id),
            ));
        }
        for &n in &a.neighbors {
            let other = &assignments[index_of(assignments, n)?];
            if !other.neighbors.contains(&a.agent_id) {
                return Err(Error::config(
                    "swarm.assignments",
                    format!("neighbor relation {} -> {} is not symmetric", a.agent_id, n),
                ));
            }
        }
    }
    Ok(())
}

/// Runs synchronous neighbor-only rounds until one produces no claim change.
/// Messages are exchanged between edge neighbors only.
pub fn negotiate(assignments: &[CellAssignment], max_rounds: usize) -> Result<Negotiation> {
    check_symmetric(assignments)?;
    let mut cells: Vec<CellAssignment> = assignments.to_vec();
    let mut trace = Vec::new();
    let mut claim_changes = 0;

    for round in 1..=max_rounds {
        // Everyone speaks from the state at the start of the round.
        let mut outbox = Vec::new();
        for a in &cells {
            let mut neighbors = a.neighbors.clone();
            neighbors.sort_unstable();
            for n in neighbors {
                let to = &cells[index_of(&cells, n)?];
                let side = facing_side(&a.cell, &to.cell);
                outbox.push(BoundaryMsg {
                    from: a.agent_id,
                    to: n,
                    claimed_edge: side.edge(&a.cell),
                    round,
                });
            }
        }

        let mut changes = 0;
        for msg in &outbox {
            if msg.from > msg.to {
                // The receiver has the lower id and keeps its edge.
                continue;
            }
            let from_idx = index_of(&cells, msg.from)?;
            let to_idx = index_of(&cells, msg.to)?;
            let side = facing_side(&cells[to_idx].cell, &cells[from_idx].cell);
            let claimed = match side {
                Side::West | Side::East => msg.claimed_edge.a.x,
                Side::South | Side::North => msg.claimed_edge.a.y,
            };
            let cell = &mut cells[to_idx].cell;
            if side.coord(cell) != claimed {
                side.set_coord(cell, claimed);
                changes += 1;
            }
        }
        trace.extend(outbox);
        claim_changes += changes;

        if changes == 0 {
            return Ok(Negotiation {
                assignments: cells,
                trace,
                rounds: round,
                claim_changes,
            });
        }
    }

    Err(Error::NegotiationTimeout {
        rounds: max_rounds,
        overlap_area_m2: pairwise_overlap(&cells),
        assignments: cells,
    })
}

fn pairwise_overlap(cells: &[CellAssignment]) -> f64 {
    let mut overlap = 0.0;
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            let w = a.cell.x1.min(b.cell.x1) - a.cell.x0.max(b.cell.x0);
            let h = a.cell.y1.min(b.cell.y1) - a.cell.y0.max(b.cell.y0);
            if w > 0.0 && h > 0.0 {
                overlap += w * h;
            }
        }
    }
    overlap
}

/// Brute-force tiling check over the field grid: cells claimed twice count
/// as overlap, unclaimed cells as gap.
pub fn validate_partition(assignments: &[CellAssignment], field: &FieldSpec) -> PartitionReport {
    let mut overlap_cells = 0usize;
    let mut gap_cells = 0usize;
    for j in 0..field.ny() {
        for i in 0..field.nx() {
            let c = field.cell_center(i, j);
            match assignments
                .iter()
                .filter(|a| a.cell.contains_half_open(c))
                .count()
            {
                0 => gap_cells += 1,
                1 => {}
                _ => overlap_cells += 1,
            }
        }
    }
    PartitionReport {
        overlap_area_m2: overlap_cells as f64 * field.cell_area(),
        gap_area_m2: gap_cells as f64 * field.cell_area(),
        ok: overlap_cells == 0 && gap_cells == 0,
    }
}

//! Network layout: AP/UE placement on a wrap-around square, pilot
//! assignment, and cell membership for the cellular baseline.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the access points are placed in the square deployment area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApPlacement {
    /// Evenly spaced grid, one AP centered in each of sqrt(L) x sqrt(L) sub-squares.
    SquareGrid,
    /// Independent uniform positions.
    UniformRandom,
}

/// Deployment geometry and pilot dimensioning for one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Side length of the square area in meters.
    pub area_side_m: f64,
    /// Number of APs (L).
    pub num_aps: usize,
    /// Antennas per AP (N).
    pub antennas_per_ap: usize,
    /// Number of single-antenna UEs (K).
    pub num_ues: usize,
    /// Number of mutually orthogonal pilots (tau_p).
    pub num_pilots: usize,
    pub ap_placement: ApPlacement,
    /// AP height above the UE plane contributes to 3D link distances.
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    /// Number of cellular baseline BSs (0 disables the baseline).
    pub cellular_cells: usize,
    /// Antennas per cellular BS (M_c).
    pub cellular_antennas: usize,
    /// Seed used when the layout is drawn standalone; the simulation harness
    /// derives per-drop seeds from the plan's master seed instead.
    pub seed: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        // Dense urban deployment: 400 single-antenna APs and 40 UEs in a
        // 1 km x 1 km area, 10 pilots, 4-cell / 100-antenna cellular baseline.
        Self {
            area_side_m: 1000.0,
            num_aps: 400,
            antennas_per_ap: 1,
            num_ues: 40,
            num_pilots: 10,
            ap_placement: ApPlacement::SquareGrid,
            ap_height_m: 10.0,
            ue_height_m: 0.0,
            cellular_cells: 4,
            cellular_antennas: 100,
            seed: 1,
        }
    }
}

impl LayoutConfig {
    /// Validates the invariants that later stages rely on.
    pub fn validate(&self) -> Result<()> {
        if self.area_side_m <= 0.0 || !self.area_side_m.is_finite() {
            return Err(Error::config("layout.area_side_m must be positive"));
        }
        if self.num_aps == 0 {
            return Err(Error::config("layout.num_aps must be at least 1"));
        }
        if self.antennas_per_ap == 0 {
            return Err(Error::config("layout.antennas_per_ap must be at least 1"));
        }
        if self.num_ues == 0 {
            return Err(Error::config("layout.num_ues must be at least 1"));
        }
        if self.num_pilots == 0 {
            return Err(Error::config("layout.num_pilots must be at least 1"));
        }
        if self.ap_placement == ApPlacement::SquareGrid {
            let side = (self.num_aps as f64).sqrt().round() as usize;
            if side * side != self.num_aps {
                return Err(Error::config(format!(
                    "layout.num_aps = {} must be a perfect square for square_grid placement",
                    self.num_aps
                )));
            }
        }
        if self.cellular_cells > 0 {
            if self.num_ues % self.cellular_cells != 0 {
                return Err(Error::config(format!(
                    "layout.num_ues = {} must be divisible by layout.cellular_cells = {}",
                    self.num_ues, self.cellular_cells
                )));
            }
            let per_cell = self.num_ues / self.cellular_cells;
            if per_cell > self.num_pilots {
                return Err(Error::config(format!(
                    "per-cell UE count {} exceeds layout.num_pilots = {}; in-cell pilots must be unique",
                    per_cell, self.num_pilots
                )));
            }
            if self.cellular_antennas == 0 {
                return Err(Error::config("layout.cellular_antennas must be at least 1"));
            }
            let side = (self.cellular_cells as f64).sqrt().round() as usize;
            if side * side != self.cellular_cells {
                return Err(Error::config(format!(
                    "layout.cellular_cells = {} must be a perfect square (BSs sit on a grid)",
                    self.cellular_cells
                )));
            }
        }
        Ok(())
    }
}

/// One drop: positions, pilot assignment, and (in cellular mode) the cell
/// each UE was dropped in. Immutable once constructed, so it can be shared
/// read-only across parallel Monte-Carlo trials.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    pub ap_positions: Vec<(f64, f64)>,
    pub ue_positions: Vec<(f64, f64)>,
    /// Pilot index of each UE, in 0..num_pilots.
    pub pilot_of_ue: Vec<usize>,
    /// For each UE k, the UEs sharing its pilot (k itself included), ascending.
    pub copilot_sets: Vec<Vec<usize>>,
    /// Cell each UE was dropped in (cellular mode only). Serving cells are
    /// assigned later from large-scale fading, see [`assign_cells`].
    pub drop_cell_of_ue: Option<Vec<usize>>,
    pub area_side_m: f64,
    pub num_pilots: usize,
}

impl NetworkRealization {
    /// UEs assigned to pilot `t`, ascending.
    pub fn ues_on_pilot(&self, t: usize) -> Vec<usize> {
        (0..self.pilot_of_ue.len())
            .filter(|&k| self.pilot_of_ue[k] == t)
            .collect()
    }
}

/// Positions of `count` units centered in the sub-squares of a
/// sqrt(count) x sqrt(count) grid. `count` must be a perfect square.
pub fn grid_positions(count: usize, area_side: f64) -> Vec<(f64, f64)> {
    let side = (count as f64).sqrt().round() as usize;
    debug_assert_eq!(side * side, count);
    let step = area_side / side as f64;
    let mut out = Vec::with_capacity(count);
    for ix in 0..side {
        for iy in 0..side {
            out.push(((ix as f64 + 0.5) * step, (iy as f64 + 0.5) * step));
        }
    }
    out
}

/// Draws AP/UE positions and the pilot assignment for one drop.
///
/// In cellular mode (cellular_cells > 0) the UEs are dropped uniformly per
/// cell, `num_ues / cellular_cells` in each, and the UEs of a cell get
/// distinct pilots with random indices. In cell-free-only mode the UEs are
/// uniform over the whole area and pilots are assigned by balanced random
/// grouping, so every pilot serves either floor(K/tau_p) or ceil(K/tau_p)
/// UEs. With fewer UEs than pilots every UE gets a distinct pilot.
pub fn place_network<R: Rng + ?Sized>(config: &LayoutConfig, rng: &mut R) -> Result<NetworkRealization> {
    config.validate()?;
    let side = config.area_side_m;

    let ap_positions = match config.ap_placement {
        ApPlacement::SquareGrid => grid_positions(config.num_aps, side),
        ApPlacement::UniformRandom => (0..config.num_aps)
            .map(|_| (rng.gen::<f64>() * side, rng.gen::<f64>() * side))
            .collect(),
    };

    let k = config.num_ues;
    let tau_p = config.num_pilots;
    let mut ue_positions = Vec::with_capacity(k);
    let mut pilot_of_ue = vec![0usize; k];
    let mut drop_cell_of_ue = None;

    if config.cellular_cells > 0 {
        let cells = config.cellular_cells;
        let per_cell = k / cells;
        let bs_grid = grid_positions(cells, side);
        let cell_side = side / (cells as f64).sqrt();
        let mut cell_of = Vec::with_capacity(k);
        for (cell, bs) in bs_grid.iter().enumerate() {
            // Distinct pilots with random indices within the cell.
            let mut pilots: Vec<usize> = (0..tau_p).collect();
            pilots.shuffle(rng);
            for u in 0..per_cell {
                let ue = cell * per_cell + u;
                let x = bs.0 - cell_side / 2.0 + rng.gen::<f64>() * cell_side;
                let y = bs.1 - cell_side / 2.0 + rng.gen::<f64>() * cell_side;
                ue_positions.push((x, y));
                pilot_of_ue[ue] = pilots[u];
                cell_of.push(cell);
            }
        }
        drop_cell_of_ue = Some(cell_of);
    } else {
        for _ in 0..k {
            ue_positions.push((rng.gen::<f64>() * side, rng.gen::<f64>() * side));
        }
        if k < tau_p {
            // Fewer UEs than pilots: a random choice of distinct pilots.
            let mut pilots: Vec<usize> = (0..tau_p).collect();
            pilots.shuffle(rng);
            pilot_of_ue.copy_from_slice(&pilots[..k]);
        } else {
            // Balanced random grouping: `extra` randomly chosen pilots carry
            // one UE more than the rest, and the pool is shuffled over UEs.
            let base = k / tau_p;
            let extra = k % tau_p;
            let mut order: Vec<usize> = (0..tau_p).collect();
            order.shuffle(rng);
            let mut pool = Vec::with_capacity(k);
            for (rank, &t) in order.iter().enumerate() {
                let copies = if rank < extra { base + 1 } else { base };
                pool.extend(std::iter::repeat(t).take(copies));
            }
            pool.shuffle(rng);
            pilot_of_ue.copy_from_slice(&pool);
        }
    }

    let copilot_sets = (0..k)
        .map(|kk| {
            (0..k)
                .filter(|&i| pilot_of_ue[i] == pilot_of_ue[kk])
                .collect()
        })
        .collect();

    Ok(NetworkRealization {
        ap_positions,
        ue_positions,
        pilot_of_ue,
        copilot_sets,
        drop_cell_of_ue,
        area_side_m: side,
        num_pilots: tau_p,
    })
}

/// Minimum 3D distance between `a` and the nine wrap-around copies of `b`
/// (shifts of 0 and +-area_side on each axis), including the vertical offset.
pub fn wraparound_distance(a: (f64, f64), b: (f64, f64), area_side: f64, height_delta: f64) -> f64 {
    let (dx, dy) = wraparound_displacement(a, b, area_side);
    (dx * dx + dy * dy + height_delta * height_delta).sqrt()
}

/// Horizontal displacement from `a` to the closest wrap-around copy of `b`.
/// Used both for distances and for nominal azimuth angles.
pub fn wraparound_displacement(a: (f64, f64), b: (f64, f64), area_side: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = b.0 + sx * area_side - a.0;
            let dy = b.1 + sy * area_side - a.1;
            let d2 = dx * dx + dy * dy;
            if d2 < best.0 {
                best = (d2, dx, dy);
            }
        }
    }
    (best.1, best.2)
}

/// Assigns every UE to the BS with the largest large-scale fading
/// coefficient; ties go to the lowest BS index. `beta[k][j]` is the linear
/// gain from UE `k` to BS `j`.
pub fn assign_cells(beta: &[Vec<f64>]) -> Vec<usize> {
    beta.iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &b) in row.iter().enumerate() {
                if b > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

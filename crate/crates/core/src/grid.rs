//! Lattice discretization of probability simplices and interpolation of
//! tables defined on them.
//!
//! A [`SimplexGrid`] of dimension `d` and resolution `m` holds every vector
//! `(k_1/m, ..., k_d/m)` with non-negative integer `k` summing to `m`, in
//! lexicographic order of `k`. Off-grid points are interpolated with the
//! Kuhn (Freudenthal) triangulation of the lattice, which is exact at nodes
//! and reproduces affine functions. In dimension two it reduces to ordinary
//! piecewise-linear interpolation.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::export::fmt_num;

pub const DEFAULT_GRID_CAP: usize = 2_000_000;
pub const DEFAULT_BELIEF_RESOLUTION: usize = 10;

/// Points within this distance of the simplex are renormalized onto it.
pub const SIMPLEX_TOL: f64 = 1e-9;

const SNAP_TOL: f64 = 1e-9;

/// z-simplex resolution used when none is configured.
pub fn default_z_resolution(n_follower_states: usize) -> usize {
    if n_follower_states == 2 {
        50
    } else {
        10
    }
}

/// `C(n, k)` in `u128`, `None` on overflow.
fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of lattice points of a `dim`-atom simplex at resolution `m`.
pub fn lattice_size(dim: usize, resolution: usize) -> Option<u128> {
    if dim == 0 {
        return Some(0);
    }
    binomial((resolution + dim - 1) as u128, (dim - 1) as u128)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    dim: usize,
    resolution: usize,
    counts: Vec<Vec<u32>>,
    points: Vec<Vec<f64>>,
}

impl SimplexGrid {
    pub fn build(dim: usize, resolution: usize) -> Result<Self> {
        Self::build_with_cap(dim, resolution, DEFAULT_GRID_CAP)
    }

    pub fn build_with_cap(dim: usize, resolution: usize, cap: usize) -> Result<Self> {
        if dim == 0 || resolution == 0 {
            return Err(Error::Config(format!(
                "simplex grid needs dim >= 1 and resolution >= 1, got dim {dim} resolution {resolution}"
            )));
        }
        let size = lattice_size(dim, resolution).unwrap_or(u128::MAX);
        if size > cap as u128 {
            return Err(Error::GridTooLarge {
                dim,
                resolution,
                points: size,
                cap,
            });
        }
        let mut counts = Vec::with_capacity(size as usize);
        let mut current = vec![0u32; dim];
        compositions(&mut current, 0, resolution as u32, &mut counts);
        let m = resolution as f64;
        let points = counts
            .iter()
            .map(|k| k.iter().map(|&ki| ki as f64 / m).collect())
            .collect();
        Ok(Self {
            dim,
            resolution,
            counts,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }
    pub fn counts(&self, index: usize) -> &[u32] {
        &self.counts[index]
    }

    /// Position of the lattice point with the given counts.
    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        if counts.len() != self.dim || counts.iter().map(|&c| c as usize).sum::<usize>() != self.resolution {
            return None;
        }
        let mut rank: u128 = 0;
        let mut remaining = self.resolution as u128;
        for (i, &k) in counts.iter().enumerate().take(self.dim - 1) {
            let parts_after = (self.dim - i - 1) as u128;
            for j in 0..k as u128 {
                let rest = remaining - j;
                rank += binomial(rest + parts_after - 1, parts_after - 1)?;
            }
            remaining -= k as u128;
        }
        Some(rank as usize)
    }

    /// Validates `point` and pulls it exactly onto the simplex.
    pub fn normalize(&self, point: &[f64]) -> Result<Vec<f64>> {
        normalize_point(point, self.dim)
    }

    /// Index of the nearest lattice point (largest-remainder rounding).
    pub fn nearest(&self, point: &[f64]) -> Result<usize> {
        let p = self.normalize(point)?;
        let m = self.resolution as f64;
        let scaled: Vec<f64> = p.iter().map(|v| v * m).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|v| (v + SNAP_TOL).floor().max(0.0) as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - counts[a] as f64;
            let fb = scaled[b] - counts[b] as f64;
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let target = self.resolution as u32;
        if assigned < target {
            for &i in order.iter().take((target - assigned) as usize) {
                counts[i] += 1;
            }
        } else if assigned > target {
            // Snapping pushed the sum over; take units back from the smallest remainders.
            let mut excess = assigned - target;
            for &i in order.iter().rev() {
                if excess == 0 {
                    break;
                }
                if counts[i] > 0 {
                    counts[i] -= 1;
                    excess -= 1;
                }
            }
        }
        Ok(self.index_of(&counts).expect("rounded counts lie on the lattice"))
    }

    /// Barycentric weights of the Kuhn simplex containing `point`. Weights are
    /// positive, sum to one, and there are at most `dim` of them.
    pub fn weights(&self, point: &[f64]) -> Result<Vec<(usize, f64)>> {
        let p = self.normalize(point)?;
        Ok(self.weights_normalized(&p))
    }

    fn weights_normalized(&self, p: &[f64]) -> Vec<(usize, f64)> {
        let d = self.dim;
        if d == 1 {
            return vec![(0, 1.0)];
        }
        let m = self.resolution as f64;
        // Cumulative coordinates y_i = m * sum_{j >= i} p_j for i = 1..d-1.
        let mut y = vec![0.0; d - 1];
        let mut tail = 0.0;
        for i in (1..d).rev() {
            tail += p[i];
            y[i - 1] = (m * tail).min(m);
        }
        let mut base = vec![0i64; d - 1];
        let mut frac = vec![0.0; d - 1];
        for i in 0..d - 1 {
            let r = y[i].round();
            let yi = if (y[i] - r).abs() < SNAP_TOL { r } else { y[i] };
            base[i] = yi.floor() as i64;
            frac[i] = yi - base[i] as f64;
        }
        let mut order: Vec<usize> = (0..d - 1).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

        let mut out = Vec::with_capacity(d);
        let mut vertex = base.clone();
        let w0 = 1.0 - frac[order[0]];
        if w0 > 0.0 {
            out.push((self.cumulative_to_index(&vertex), w0));
        }
        for k in 0..d - 1 {
            vertex[order[k]] += 1;
            let next = if k + 1 < d - 1 { frac[order[k + 1]] } else { 0.0 };
            let w = frac[order[k]] - next;
            if w > 0.0 {
                out.push((self.cumulative_to_index(&vertex), w));
            }
        }
        out
    }

    fn cumulative_to_index(&self, y: &[i64]) -> usize {
        let m = self.resolution as i64;
        let mut counts = Vec::with_capacity(self.dim);
        let mut prev = m;
        for &yi in y {
            counts.push((prev - yi) as u32);
            prev = yi;
        }
        counts.push(prev as u32);
        self.index_of(&counts).expect("Kuhn vertex lies on the lattice")
    }

    /// Interpolates node values (one per lattice point) at `point`.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Result<f64> {
        Ok(self.weights(point)?.into_iter().map(|(i, w)| w * values[i]).sum())
    }
}

fn compositions(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        compositions(current, pos + 1, remaining - k, out);
    }
}

/// Checks that `point` is a distribution over `dim` atoms up to
/// [`SIMPLEX_TOL`], clamps tiny negatives and renormalizes.
pub fn normalize_point(point: &[f64], dim: usize) -> Result<Vec<f64>> {
    let sum: f64 = point.iter().sum();
    let off = point.len() != dim
        || point.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOL)
        || (sum - 1.0).abs() > SIMPLEX_TOL;
    if off {
        return Err(Error::OffSimplex {
            point: point.to_vec(),
            sum,
        });
    }
    let clamped: Vec<f64> = point.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total == 1.0 {
        Ok(clamped)
    } else {
        Ok(clamped.into_iter().map(|v| v / total).collect())
    }
}

/// Cartesian product of the leader-belief simplex grid and the mean-field
/// simplex grid. Joint index is `belief_index * mean_field.len() + z_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrid {
    belief: SimplexGrid,
    mean_field: SimplexGrid,
}

impl JointGrid {
    pub fn new(belief: SimplexGrid, mean_field: SimplexGrid) -> Self {
        Self { belief, mean_field }
    }

    pub fn belief(&self) -> &SimplexGrid {
        &self.belief
    }
    pub fn mean_field(&self) -> &SimplexGrid {
        &self.mean_field
    }
    pub fn len(&self) -> usize {
        self.belief.len() * self.mean_field.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, belief_index: usize, z_index: usize) -> usize {
        belief_index * self.mean_field.len() + z_index
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.mean_field.len(), index % self.mean_field.len())
    }

    pub fn point(&self, index: usize) -> (&[f64], &[f64]) {
        let (b, z) = self.split(index);
        (self.belief.point(b), self.mean_field.point(z))
    }

    pub fn nearest(&self, belief: &[f64], z: &[f64]) -> Result<usize> {
        Ok(self.index(self.belief.nearest(belief)?, self.mean_field.nearest(z)?))
    }

    /// Tensor-product interpolation weights over joint indices.
    pub fn weights(&self, belief: &[f64], z: &[f64]) -> Result<Vec<(usize, f64)>> {
        let wb = self.belief.weights(belief)?;
        let wz = self.mean_field.weights(z)?;
        let mut out = Vec::with_capacity(wb.len() * wz.len());
        for &(ib, vb) in &wb {
            for &(iz, vz) in &wz {
                out.push((self.index(ib, iz), vb * vz));
            }
        }
        Ok(out)
    }
}

/// Real values per (joint grid point, private state).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    grid: Arc<JointGrid>,
    states: usize,
    values: Vec<f64>,
}

impl GridTable {
    pub fn zeros(grid: Arc<JointGrid>, states: usize) -> Self {
        let values = vec![0.0; grid.len() * states];
        Self { grid, states, values }
    }

    pub fn from_values(grid: Arc<JointGrid>, states: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * states {
            return Err(Error::Config(format!(
                "table needs {} values, got {}",
                grid.len() * states,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("table values must be finite".into()));
        }
        Ok(Self { grid, states, values })
    }

    pub fn grid(&self) -> &Arc<JointGrid> {
        &self.grid
    }
    pub fn states(&self) -> usize {
        self.states
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, point: usize, state: usize) -> f64 {
        self.values[point * self.states + state]
    }

    /// Values of all private states at one node.
    pub fn node(&self, point: usize) -> &[f64] {
        &self.values[point * self.states..(point + 1) * self.states]
    }

    pub fn set_node(&mut self, point: usize, values: &[f64]) {
        self.values[point * self.states..(point + 1) * self.states].copy_from_slice(values);
    }

    pub fn interpolate(&self, belief: &[f64], z: &[f64], state: usize) -> Result<f64> {
        let w = self.grid.weights(belief, z)?;
        Ok(w.into_iter().map(|(i, wi)| wi * self.get(i, state)).sum())
    }

    /// Interpolated values of every private state, written into `out`.
    pub fn interpolate_all(&self, belief: &[f64], z: &[f64], out: &mut [f64]) -> Result<()> {
        let w = self.grid.weights(belief, z)?;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, wi) in w {
            for (o, v) in out.iter_mut().zip(self.node(i)) {
                *o += wi * v;
            }
        }
        Ok(())
    }

    /// Sup-norm distance to another table on the same grid.
    pub fn sup_distance(&self, other: &GridTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes one row per (node, private state): belief coordinates, mean
    /// field coordinates, state label, value.
    pub fn write_csv<W: Write>(
        &self,
        out: W,
        belief_labels: &[String],
        z_labels: &[String],
        state_labels: &[String],
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = belief_labels.iter().map(|l| format!("pi_{l}")).collect();
        header.extend(z_labels.iter().map(|l| format!("z_{l}")));
        header.push("state".into());
        header.push("value".into());
        w.write_record(&header).map_err(csv_err)?;
        for point in 0..self.grid.len() {
            let (b, z) = self.grid.point(point);
            for (s, label) in state_labels.iter().enumerate().take(self.states) {
                let mut row: Vec<String> = b.iter().chain(z.iter()).map(|v| fmt_num(*v)).collect();
                row.push(label.clone());
                row.push(fmt_num(self.get(point, s)));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

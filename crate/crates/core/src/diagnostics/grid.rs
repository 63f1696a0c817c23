//! Deterministic quadrature on a regular grid for targets in one or two dimensions.

use crate::error::{Error, Result};

/// Regular grid over a box in `d ≤ 2` dimensions; densities on it are tables of cell
/// masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOracle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: usize,
}

/// Truncated mass targeted by [`GridOracle::for_strongly_convex`].
pub const TAIL_MASS: f64 = 1e-6;

impl GridOracle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: usize) -> Result<Self> {
        let d = lower.len();
        if !(1..=2).contains(&d) || upper.len() != d {
            return Err(Error::InvalidInput(format!("grid oracle supports d <= 2, got {d}")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u && l.is_finite() && u.is_finite())) {
            return Err(Error::InvalidInput("grid box must have finite lower < upper".into()));
        }
        if cells < 2 {
            return Err(Error::InvalidInput("grid needs at least two cells per axis".into()));
        }
        Ok(Self { lower, upper, cells })
    }

    /// Box centred at the mode of an `α`-strongly log-concave density with half-width
    /// `max(6/√α, 2√(d/α) + √(2 ln(1/TAIL_MASS)/α))`: the mean lies within `√(d/α)` of the
    /// mode, `E‖X − mean‖ ≤ √(d/α)`, and Gaussian concentration bounds the rest by
    /// `TAIL_MASS`.
    pub fn for_strongly_convex(mode: &[f64], alpha: f64, cells: usize) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        let d = mode.len() as f64;
        let half = (6.0 / alpha.sqrt()).max(2.0 * (d / alpha).sqrt() + (2.0 * (1.0 / TAIL_MASS).ln() / alpha).sqrt());
        Self::new(mode.iter().map(|m| m - half).collect(), mode.iter().map(|m| m + half).collect(), cells)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Same box at twice the resolution.
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..self.clone() }
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells as f64
    }

    /// Cell edges along `axis` (`cells + 1` values).
    pub fn edges(&self, axis: usize) -> Vec<f64> {
        let w = self.width(axis);
        (0..=self.cells).map(|i| self.lower[axis] + i as f64 * w).collect()
    }

    fn midpoint(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.width(axis)
    }

    /// Normalised cell masses of `exp(−V)` by the midpoint rule.
    pub fn masses<F>(&self, potential: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let n = self.cells;
        let mut logs = Vec::with_capacity(self.len());
        let mut x = vec![0.0; self.dim()];
        for idx in 0..self.len() {
            x[0] = self.midpoint(0, idx % n);
            if self.dim() == 2 {
                x[1] = self.midpoint(1, idx / n);
            }
            let v = potential(&x)?;
            if v.is_nan() {
                return Err(Error::InvalidInput("potential returned NaN on the grid".into()));
            }
            logs.push(-v);
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::InvalidInput("density vanishes on the whole grid".into()));
        }
        let mut masses: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        Ok(masses)
    }

    /// Cell index of a point, `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for axis in 0..self.dim() {
            let t = (x[axis] - self.lower[axis]) / self.width(axis);
            if !(t >= 0.0 && t < self.cells as f64) {
                return None;
            }
            idx += (t as usize).min(self.cells - 1) * stride;
            stride *= self.cells;
        }
        Some(idx)
    }

    /// Empirical cell masses (normalised by the full sample count) and the fraction of
    /// samples outside the box.
    pub fn histogram<'a, I>(&self, samples: I) -> Result<(Vec<f64>, f64)>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut counts = vec![0.0; self.len()];
        let (mut total, mut outside) = (0usize, 0usize);
        for x in samples {
            if x.len() != self.dim() {
                return Err(Error::InvalidInput("sample dimension does not match grid".into()));
            }
            total += 1;
            match self.locate(x) {
                Some(i) => counts[i] += 1.0,
                None => outside += 1,
            }
        }
        if total == 0 {
            return Err(Error::Empty("samples"));
        }
        counts.iter_mut().for_each(|c| *c /= total as f64);
        Ok((counts, outside as f64 / total as f64))
    }

    /// TV between a gridded density and an empirical sample; mass outside the box counts
    /// as fully separated.
    pub fn tv_to_samples<'a, I>(&self, masses: &[f64], samples: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let (hist, outside) = self.histogram(samples)?;
        Ok(grid_tv(masses, &hist)? + 0.5 * outside)
    }
}

/// Half the `ℓ¹` distance between two tables of cell masses.
pub fn grid_tv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("density table"));
    }
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("tables have {} and {} cells", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact `W₂` between two piecewise-uniform densities on the cells of a 1-d grid.
///
/// Both quantile functions are piecewise linear, so `∫₀¹ (F⁻¹ − G⁻¹)²` is integrated
/// exactly over the merged breakpoints.
pub fn grid_w2_1d(grid: &GridOracle, p: &[f64], q: &[f64]) -> Result<f64> {
    if grid.dim() != 1 {
        return Err(Error::InvalidInput("grid_w2_1d needs a one-dimensional grid".into()));
    }
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("density table"));
    }
    if p.len() != grid.cells() || q.len() != grid.cells() {
        return Err(Error::InvalidInput("table length does not match grid".into()));
    }
    let edges = grid.edges(0);
    let w = grid.width(0);
    let normalise = |m: &[f64]| -> Result<Vec<f64>> {
        let total: f64 = m.iter().sum();
        if !(total > 0.0) || m.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidInput("masses must be non-negative with positive total".into()));
        }
        Ok(m.iter().map(|v| v / total).collect())
    };
    let (p, q) = (normalise(p)?, normalise(q)?);
    // quantile of cell `i` at level `t`, where the cell holds levels [start, start + mass]
    let qf = |i: usize, start: f64, mass: f64, t: f64| edges[i] + ((t - start) / mass).clamp(0.0, 1.0) * w;
    let next = |m: &[f64], mut i: usize| {
        while i < m.len() && m[i] == 0.0 {
            i += 1;
        }
        i
    };
    let (mut i, mut j) = (next(&p, 0), next(&q, 0));
    let (mut p_start, mut q_start) = (0.0, 0.0);
    let mut t = 0.0;
    let mut sum = 0.0;
    while i < p.len() && j < q.len() {
        let (p_end, q_end) = (p_start + p[i], q_start + q[j]);
        let t_next = p_end.min(q_end);
        let e0 = qf(i, p_start, p[i], t) - qf(j, q_start, q[j], t);
        let e1 = qf(i, p_start, p[i], t_next) - qf(j, q_start, q[j], t_next);
        sum += (t_next - t).max(0.0) * (e0 * e0 + e0 * e1 + e1 * e1) / 3.0;
        t = t_next;
        if p_end <= t {
            p_start = p_end;
            i = next(&p, i + 1);
        }
        if q_end <= t {
            q_start = q_end;
            j = next(&q, j + 1);
        }
    }
    Ok(sum.sqrt())
}

/// `W₂` between two empirical distributions on the line; equal sizes reduce to the
/// sorted coupling.
pub fn w2_1d_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        return Ok((s / a.len() as f64).sqrt());
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0;
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        let t_next = ((i + 1) as f64 / n).min((j + 1) as f64 / m);
        sum += (t_next - t) * (a[i] - b[j]).powi(2);
        t = t_next;
        if (i + 1) as f64 / n <= t {
            i += 1;
        }
        if (j + 1) as f64 / m <= t {
            j += 1;
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_identities() {
        let p = [0.25, 0.25, 0.5, 0.0];
        assert_eq!(grid_tv(&p, &p).unwrap(), 0.0);
        assert_eq!(grid_tv(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).unwrap(), 1.0);
        assert!(grid_tv(&[], &[]).is_err());
    }

    #[test]
    fn w2_of_translated_cells() {
        let g = GridOracle::new(vec![0.0], vec![4.0], 4).unwrap();
        // uniform on [0,1] vs uniform on [3,4]
        let w = grid_w2_1d(&g, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
        // uniform on [0,2] vs uniform on [0,1]: ∫ (2t − t)² dt = 1/3
        let w = grid_w2_1d(&g, &[0.5, 0.5, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((w - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sample_w2() {
        assert_eq!(w2_1d_samples(&[0.0], &[3.0]).unwrap(), 3.0);
        assert_eq!(w2_1d_samples(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // {0, 1} vs {0, 0, 1, 1} is the same measure
        assert!(w2_1d_samples(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]).unwrap() < 1e-15);
        assert!(w2_1d_samples(&[], &[1.0]).is_err());
    }

    #[test]
    fn masses_normalise_and_box_covers_tail() {
        let g = GridOracle::for_strongly_convex(&[0.0], 1.0, 4096).unwrap();
        let m = g.masses(|x| Ok(0.5 * x[0] * x[0])).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // half-width ≥ 2 + √(2 ln 10⁶) ≈ 7.26 leaves far less than 10⁻⁶ of N(0,1) outside
        assert!(g.upper()[0] > 7.2);
        let g2 = GridOracle::for_strongly_convex(&[0.0, 0.0], 1.0, 64).unwrap();
        assert_eq!(g2.len(), 64 * 64);
        assert_eq!(g2.locate(&[g2.lower()[0], g2.lower()[1]]), Some(0));
        assert_eq!(g2.locate(&[100.0, 0.0]), None);
    }

    #[test]
    fn rejects_high_dimension() {
        assert!(GridOracle::new(vec![0.0; 3], vec![1.0; 3], 8).is_err());
    }
}

//! Grid helpers shared by the GCV, CV and amortized selectors.

use crate::error::{Error, Result};

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("grid is empty"));
    }
    if grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::domain("grid values must be finite and positive"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    Ok(())
}

/// Index of the smallest value, preferring the later index on ties.
/// `None` entries (skipped grid points) are ignored.
pub fn argmin_prefer_last<I>(values: I) -> Option<usize>
where
    I: IntoIterator<Item = Option<f64>>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let Some(v) = v else { continue };
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v > b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// `count` points spaced evenly in log scale from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count == 0 {
        return Err(Error::domain(format!(
            "bad log grid [{lo}, {hi}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
    grid[0] = lo;
    grid[count - 1] = hi;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_later_point() {
        assert_eq!(
            argmin_prefer_last([Some(1.0), Some(0.5), Some(0.5), Some(2.0)]),
            Some(2)
        );
        assert_eq!(argmin_prefer_last([None, Some(3.0), None]), Some(1));
        assert_eq!(argmin_prefer_last::<Vec<Option<f64>>>(vec![]), None);
        assert_eq!(argmin_prefer_last([Some(f64::NAN), Some(1.0)]), Some(1));
    }

    #[test]
    fn grid_checks() {
        assert!(check_grid(&[0.1]).is_ok());
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[0.1, 0.1]).is_err());
        assert!(check_grid(&[0.0, 0.1]).is_err());
        let g = log_grid(1e-3, 1.0, 4).unwrap();
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[3], 1.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
    }
}

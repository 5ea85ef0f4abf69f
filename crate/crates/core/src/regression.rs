//! Ordinary least-squares line fitting.

use crate::scalar::Real;

/// A fitted line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Coefficient of determination. Equals 1 when every point lies on the line.
    pub r_squared: T,
    /// Number of points used.
    pub n: usize,
}

impl<T: Real> LinearFit<T> {
    /// Evaluates the line at `x`.
    pub fn at(&self, x: T) -> T {
        self.slope * x + self.intercept
    }
}

/// Error returned when the abscissae do not determine a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("line fit needs at least 2 distinct x values, got {distinct}")]
pub struct DegenerateDesign {
    pub distinct: usize,
}

/// Least-squares fit of `y` against `x`.
pub fn fit_line<T: Real>(points: &[(T, T)]) -> Result<LinearFit<T>, DegenerateDesign> {
    let n = points.len();
    let distinct = count_distinct(points.iter().map(|&(x, _)| x));
    if distinct < 2 {
        return Err(DegenerateDesign { distinct });
    }
    let nt = T::count(n);
    let mean_x = points.iter().map(|&(x, _)| x).sum::<T>() / nt;
    let mean_y = points.iter().map(|&(_, y)| y).sum::<T>() / nt;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in points {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == T::zero() {
        // Every y equal: the horizontal line explains the data exactly.
        T::one()
    } else {
        let sse = points
            .iter()
            .map(|&(x, y)| {
                let e = y - (slope * x + intercept);
                e * e
            })
            .sum::<T>();
        (T::one() - sse / syy).max(T::zero()).min(T::one())
    };
    Ok(LinearFit { slope, intercept, r_squared, n })
}

fn count_distinct<T: Real>(xs: impl Iterator<Item = T>) -> usize {
    let mut v: Vec<T> = xs.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite abscissa"));
    v.dedup();
    v.len()
}

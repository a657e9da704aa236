use crate::error::{Error, Result};

/// Samples of a function on a uniform grid in the upper half-plane.
///
/// Sample `(i, j)` sits at physical position
/// `((origin.0 + i)·spacing, (origin.1 + j)·spacing)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spacing: f64,
    origin: (i64, i64),
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spacing: f64, origin: (i64, i64), nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Domain(format!("spacing must be positive, got {spacing}")));
        }
        if values.len() != nx * ny {
            return Err(Error::Domain(format!(
                "expected {} values for a {nx}x{ny} grid, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample {bad}")));
        }
        Ok(Self { spacing, origin, nx, ny, values })
    }

    /// Sample `f(x, y)` on the grid.
    pub fn sample<F>(spacing: f64, origin: (i64, i64), nx: usize, ny: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = (origin.0 + i as i64) as f64 * spacing;
                let y = (origin.1 + j as i64) as f64 * spacing;
                values.push(f(x, y)?);
            }
        }
        Self::new(spacing, origin, nx, ny, values)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Five-point discretization of `y·Δf + β·∂f/∂y` at the interior samples.
///
/// The returned field covers the interior `(nx − 2) × (ny − 2)` block, with
/// `y` taken at the stencil centre.
pub fn pde_residual(field: &ScalarField, beta: f64) -> Result<ScalarField> {
    let (nx, ny) = field.dims();
    if nx < 3 || ny < 3 {
        return Err(Error::Domain(format!(
            "residual needs at least 3 samples per direction, got {nx}x{ny}"
        )));
    }
    if field.origin.1 < 1 {
        return Err(Error::Domain(format!(
            "stencil reaches y = {} <= 0",
            field.origin.1 as f64 * field.spacing
        )));
    }
    let a = field.spacing;
    let inv_a2 = 1.0 / (a * a);
    let inv_2a = 0.5 / a;
    let mut out = Vec::with_capacity((nx - 2) * (ny - 2));
    for j in 1..ny - 1 {
        let y = (field.origin.1 + j as i64) as f64 * a;
        for i in 1..nx - 1 {
            let c = field.get(i, j);
            let e = field.get(i + 1, j);
            let w = field.get(i - 1, j);
            let n = field.get(i, j + 1);
            let s = field.get(i, j - 1);
            let lap = (e + w + n + s - 4.0 * c) * inv_a2;
            out.push(y * lap + beta * (n - s) * inv_2a);
        }
    }
    ScalarField::new(a, (field.origin.0 + 1, field.origin.1 + 1), nx - 2, ny - 2, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_in_y_gives_beta() {
        let f = ScalarField::sample(0.1, (-5, 1), 11, 8, |_, y| Ok(y)).unwrap();
        for &beta in &[-0.6, 0.0, 1.3] {
            let r = pde_residual(&f, beta).unwrap();
            assert!(r.values().iter().all(|v| (v - beta).abs() < 1e-9));
        }
    }

    #[test]
    fn harmonic_with_zero_beta_vanishes() {
        let f = ScalarField::sample(0.05, (-10, 2), 21, 9, |x, y| Ok(x + 3.0 * x * y)).unwrap();
        let r = pde_residual(&f, 0.0).unwrap();
        assert!(r.sup_norm() < 1e-9, "{}", r.sup_norm());
    }

    #[test]
    fn rejects_stencil_at_axis() {
        let f = ScalarField::sample(0.1, (0, 0), 4, 4, |x, _| Ok(x)).unwrap();
        assert!(matches!(pde_residual(&f, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_small_grid() {
        let f = ScalarField::sample(0.1, (0, 1), 2, 4, |x, _| Ok(x)).unwrap();
        assert!(pde_residual(&f, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_spacing_and_values() {
        assert!(ScalarField::new(0.0, (0, 1), 1, 1, vec![1.0]).is_err());
        assert!(ScalarField::new(1.0, (0, 1), 1, 1, vec![f64::NAN]).is_err());
    }
}

//! Numerical tolerances shared across modules.

/// Boundary band for closed-form membership tests.
pub const TOL_GEOM: f64 = 1e-9;
/// Feasibility tolerance for iteratively computed projections.
pub const TOL_GEOM_ITERATIVE: f64 = 1e-7;
/// Stationarity tolerance of the constrained solvers.
pub const TOL_SOLVE: f64 = 1e-7;
pub const ITER_CAP: usize = 20_000;
pub const STARTS: usize = 10;
/// Two boundary values closer than this count as the same minimum.
pub const TOL_MULTI: f64 = 1e-6;
/// Relative slack for the strict-gap test of finite minimax problems.
pub const TOL_GAP_REL: f64 = 1e-9;
/// Lower edge of every geometric λ/δ grid.
pub const GRID_FLOOR: f64 = 1e-4;
pub const GRID_POINTS_PER_DECADE: usize = 12;
/// Required relative gap between boundary and interior infima.
pub const MARGIN_STRICT_REL: f64 = 1e-4;

/// Geometric grid with `GRID_POINTS_PER_DECADE` points per decade spanning
/// `[GRID_FLOOR, max]`, both ends included. Empty when `max < GRID_FLOOR`.
pub fn geometric_grid(max: f64) -> Vec<f64> {
    if !(max >= GRID_FLOOR) {
        return Vec::new();
    }
    let decades = (max / GRID_FLOOR).log10();
    let steps = (decades * GRID_POINTS_PER_DECADE as f64).ceil().max(0.0) as usize;
    if steps == 0 {
        return vec![max];
    }
    (0..=steps)
        .map(|k| if k == steps { max } else { GRID_FLOOR * (max / GRID_FLOOR).powf(k as f64 / steps as f64) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_endpoints() {
        let g = geometric_grid(1.0);
        assert_eq!(g.len(), 49);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratio = g[1] / g[0];
        assert!((ratio - 10f64.powf(1.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_below_floor_is_empty() {
        assert!(geometric_grid(5e-5).is_empty());
        assert!(geometric_grid(0.0).is_empty());
        assert_eq!(geometric_grid(1e-4), vec![1e-4]);
    }
}

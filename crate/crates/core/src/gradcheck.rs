//! Central finite-difference checks of parameter gradients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::{ParamId, ParamStore};

/// Denominator floor of [`relative_error`] per unit of loss magnitude.
/// Central differences carry round-off of order `ulp(loss) / step`, so
/// gradients far below the loss scale are compared against this floor.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// Parameter name, flat index, analytic and numeric value at the worst
    /// coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Every coordinate of every parameter, in store order.
pub fn all_coordinates(store: &ParamStore) -> Vec<(ParamId, usize)> {
    store.ids().flat_map(|id| (0..store.get(id).len()).map(move |k| (id, k))).collect()
}

/// Compares `analytic` (one array per parameter, store order) with central
/// differences of `loss` at the listed coordinates.
pub fn check_gradients(
    store: &ParamStore,
    analytic: &[ndarray::Array2<f64>],
    coordinates: &[(ParamId, usize)],
    step: f64,
    loss: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        coordinates: coordinates.len(),
        max_relative_error: 0.0,
        worst: None,
    };
    let floor = RELATIVE_FLOOR * loss(store)?.abs().max(1.0);
    let mut probe = store.clone();
    for &(id, k) in coordinates {
        let original = store.get(id).as_slice().expect("contiguous")[k];
        probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = original + step;
        let up = loss(&probe)?;
        probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = original - step;
        let down = loss(&probe)?;
        probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = original;
        let numeric = (up - down) / (2.0 * step);
        let a = *analytic[id.0].iter().nth(k).expect("gradient shape matches parameter");
        let err = relative_error(a, numeric, floor);
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some((store.name(id).to_string(), k, a, numeric));
        }
    }
    Ok(report)
}

//! Post-processing of traces: zigzag detection for the collapsed iterations,
//! random 2-D projection of iterate paths, and the power-of-10 step search.

use nalgebra::{Matrix2xX, Vector2};
use rowspace_core::linalg::orthonormal_columns_with;
use rowspace_core::{Error as CoreError, IterateTrace, RngSpec, Termination};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zigzag {
    pub onset: Option<usize>,
    pub oscillating: bool,
}

/// Number of consecutive amplification factors that must alternate around 1.
pub const ZIGZAG_WINDOW: usize = 3;

/// Finds the first recorded iteration whose amplification factor exceeds 1
/// and then alternates above and below 1 for [`ZIGZAG_WINDOW`] records.
///
/// The factor is `|1 − γ|⁻¹` for the one-layer iteration and its square for
/// the two-layer one; both exceed 1 exactly when `0 < γ < 2`, so the test
/// does not need to know which method produced the trace.
pub fn detect_zigzag(trace: &IterateTrace) -> Result<Zigzag> {
    let gammas: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter_map(|r| r.gamma.map(|g| (r.iter, g)))
        .collect();
    if gammas.is_empty() {
        return Err(HarnessError::NoGammaData);
    }
    let above: Vec<bool> = gammas.iter().map(|(_, g)| *g > 0.0 && *g < 2.0).collect();
    let onset = (0..above.len()).find(|&k| {
        above[k] && k + ZIGZAG_WINDOW <= above.len() && (k + 1..k + ZIGZAG_WINDOW).all(|j| above[j] != above[j - 1])
    });
    Ok(Zigzag {
        onset: onset.map(|k| gammas[k].0),
        oscillating: onset.is_some(),
    })
}

/// Projected iterates of one method, keyed by iteration.
pub type ProjectedPath = Vec<(usize, Vector2<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct PathProjection {
    /// Two orthonormal rows spanning the projection plane.
    pub basis: Matrix2xX<f64>,
    pub points: Vec<(String, ProjectedPath)>,
}

/// Projects every snapshot onto one shared random plane.
pub fn project_paths(traces: &[(&str, &IterateTrace)], d: usize, spec: &RngSpec) -> Result<PathProjection> {
    if d < 2 {
        return Err(CoreError::InvalidArgument("projection needs d >= 2".into()).into());
    }
    let q = orthonormal_columns_with(&mut spec.rng(), d, 2);
    let basis = Matrix2xX::from_fn(d, |i, j| q[(j, i)]);
    let mut points = Vec::with_capacity(traces.len());
    for (name, trace) in traces {
        let mut path = Vec::new();
        for r in &trace.records {
            if let Some(y) = &r.snapshot {
                if y.len() != d {
                    return Err(CoreError::DimensionMismatch(format!(
                        "{name}: snapshot of length {} but d = {d}",
                        y.len()
                    ))
                    .into());
                }
                path.push((r.iter, &basis * y));
            }
        }
        if path.is_empty() {
            return Err(CoreError::InvalidArgument(format!("{name}: trace carries no snapshots")).into());
        }
        points.push((name.to_string(), path));
    }
    Ok(PathProjection { basis, points })
}

/// Step sizes `10¹, 10⁰, …, 10⁻⁶`, largest first.
pub fn rate_grid() -> impl Iterator<Item = f64> {
    [1e1, 1e0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6].into_iter()
}

/// Largest grid rate whose run neither diverges nor fails numerically.
pub fn largest_stable_rate<T, F>(mut run: F) -> Result<Option<(f64, T, IterateTrace)>>
where
    F: FnMut(f64) -> std::result::Result<(T, IterateTrace), CoreError>,
{
    for alpha in rate_grid() {
        match run(alpha) {
            Ok((out, trace)) if trace.terminated_by != Termination::Diverged => return Ok(Some((alpha, out, trace))),
            Ok(_) | Err(CoreError::GammaSingular { .. }) | Err(CoreError::SingularStep) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(None)
}

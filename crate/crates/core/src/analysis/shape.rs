use super::AnalysisError;
use crate::geometry::{centroid, procrustes};

/// Points per trajectory after resampling.
pub const RESAMPLE_POINTS: usize = 64;

/// `count` points spaced evenly by arc length along the polyline.
pub fn resample(path: &[[f64; 2]], count: usize) -> Result<Vec<[f64; 2]>, AnalysisError> {
    let mut cumulative = Vec::with_capacity(path.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in path.windows(2) {
        total += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cumulative.push(total);
    }
    if total == 0.0 {
        return Err(AnalysisError::Degenerate(
            "trajectory has zero length".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / (count - 1) as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < s {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let u = if span > 0.0 {
            ((s - cumulative[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (path[seg], path[seg + 1]);
        out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
    }
    Ok(out)
}

fn normalise(points: &mut [[f64; 2]]) {
    let c = centroid(points);
    points
        .iter_mut()
        .for_each(|p| *p = [p[0] - c[0], p[1] - c[1]]);
    let rms = (points
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1])
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    points
        .iter_mut()
        .for_each(|p| *p = [p[0] / rms, p[1] / rms]);
}

/// Shape dissimilarity of two embedded trajectories, invariant to
/// translation, rotation and uniform scaling: both are resampled by arc
/// length, centred, scaled to unit RMS radius and rotated onto each other;
/// the remaining RMS distance is returned.
pub fn shape_similarity(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64, AnalysisError> {
    if a.len() < 3 || b.len() < 3 {
        return Err(AnalysisError::Degenerate(
            "shape comparison needs at least 3 points per trajectory".into(),
        ));
    }
    let mut ra = resample(a, RESAMPLE_POINTS)?;
    let mut rb = resample(b, RESAMPLE_POINTS)?;
    normalise(&mut ra);
    normalise(&mut rb);
    Ok(procrustes(&ra, &rb, false).rms)
}

//! Curves through embedded trajectories and small 2-D helpers.

use serde::{Deserialize, Serialize};

pub const DEFAULT_TENSION: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 16;

/// Sampled cardinal spline through a list of control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub control: Vec<[f64; 2]>,
    pub tension: f64,
    pub samples_per_segment: usize,
    /// `samples_per_segment` samples per segment plus the final control point.
    pub polyline: Vec<[f64; 2]>,
}

fn tangent(control: &[[f64; 2]], i: usize, tension: f64) -> [f64; 2] {
    let prev = control[i.saturating_sub(1)];
    let next = control[(i + 1).min(control.len() - 1)];
    let s = (1.0 - tension) / 2.0;
    [s * (next[0] - prev[0]), s * (next[1] - prev[1])]
}

/// Samples of segment `i` (from control point `i` to `i + 1`), excluding its end.
fn segment(control: &[[f64; 2]], i: usize, tension: f64, samples: usize, out: &mut Vec<[f64; 2]>) {
    let (p0, p1) = (control[i], control[i + 1]);
    let (m0, m1) = (
        tangent(control, i, tension),
        tangent(control, i + 1, tension),
    );
    for k in 0..samples {
        let u = k as f64 / samples as f64;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        out.push([
            h00 * p0[0] + h10 * m0[0] + h01 * p1[0] + h11 * m1[0],
            h00 * p0[1] + h10 * m0[1] + h01 * p1[1] + h11 * m1[1],
        ]);
    }
}

/// Cubic cardinal spline with tangents `(1 - tension) (P[i+1] - P[i-1]) / 2`;
/// the end points reuse themselves as the missing neighbour.
pub fn cardinal_spline(
    control: &[[f64; 2]],
    tension: f64,
    samples_per_segment: usize,
) -> CurveSample {
    assert!(
        control.len() >= 2,
        "a curve needs at least two control points"
    );
    assert!(samples_per_segment >= 1);
    let mut polyline = Vec::with_capacity((control.len() - 1) * samples_per_segment + 1);
    for i in 0..control.len() - 1 {
        segment(control, i, tension, samples_per_segment, &mut polyline);
    }
    polyline.push(control[control.len() - 1]);
    CurveSample {
        control: control.to_vec(),
        tension,
        samples_per_segment,
        polyline,
    }
}

/// Extends the curve by one control point. Only the former last segment is
/// resampled (its end tangent changes); everything before it is left as is.
pub fn append_point(curve: &mut CurveSample, point: [f64; 2]) {
    let s = curve.samples_per_segment;
    curve.control.push(point);
    let n = curve.control.len();
    curve.polyline.truncate((n - 3) * s);
    segment(&curve.control, n - 3, curve.tension, s, &mut curve.polyline);
    segment(&curve.control, n - 2, curve.tension, s, &mut curve.polyline);
    curve.polyline.push(point);
}

/// Length of the bounding-box diagonal (0 for an empty set).
pub fn bounding_diagonal(coords: &[[f64; 2]]) -> f64 {
    if coords.is_empty() {
        return 0.0;
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

pub fn centroid(coords: &[[f64; 2]]) -> [f64; 2] {
    let n = coords.len() as f64;
    let s = coords
        .iter()
        .fold([0.0, 0.0], |a, c| [a[0] + c[0], a[1] + c[1]]);
    [s[0] / n, s[1] / n]
}

/// Rigid alignment of `moving` onto `reference` (equal lengths).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Procrustes {
    /// Root-mean-square distance after alignment.
    pub rms: f64,
    pub angle: f64,
    pub reflected: bool,
}

/// Best translation plus rotation (and optionally reflection) of `moving`
/// onto `reference`, without scaling.
pub fn procrustes(
    reference: &[[f64; 2]],
    moving: &[[f64; 2]],
    allow_reflection: bool,
) -> Procrustes {
    assert_eq!(reference.len(), moving.len());
    let n = reference.len();
    let (ca, cb) = (centroid(reference), centroid(moving));
    let a: Vec<[f64; 2]> = reference
        .iter()
        .map(|p| [p[0] - ca[0], p[1] - ca[1]])
        .collect();
    let b: Vec<[f64; 2]> = moving
        .iter()
        .map(|p| [p[0] - cb[0], p[1] - cb[1]])
        .collect();
    // As complex numbers, the best rotation of b maximises |sum conj(b) a|.
    let fit = |reflect: bool| {
        let (mut re, mut im) = (0.0, 0.0);
        for (p, q) in a.iter().zip(&b) {
            let qy = if reflect { -q[1] } else { q[1] };
            re += p[0] * q[0] + p[1] * qy;
            im += p[1] * q[0] - p[0] * qy;
        }
        let angle = im.atan2(re);
        let (sin, cos) = angle.sin_cos();
        let ss: f64 = a
            .iter()
            .zip(&b)
            .map(|(p, q)| {
                let qy = if reflect { -q[1] } else { q[1] };
                (p[0] - (cos * q[0] - sin * qy)).powi(2) + (p[1] - (sin * q[0] + cos * qy)).powi(2)
            })
            .sum();
        Procrustes {
            rms: (ss / n as f64).sqrt(),
            angle,
            reflected: reflect,
        }
    };
    let proper = fit(false);
    if allow_reflection {
        let mirrored = fit(true);
        if mirrored.rms < proper.rms {
            return mirrored;
        }
    }
    proper
}

//! Field sampling and error norms over particle data.

use nalgebra::Vector2;

use crate::fields::weight_1d;

use super::BenchError;

/// Stress and displacement values sampled at evaluation points. Points with
/// no particle inside the smoothing radius are flagged and excluded from
/// norms.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub points: Vec<Vector2<f64>>,
    /// (sigma_xx, sigma_yy, sigma_xy) per point, Pa.
    pub stress: Vec<[f64; 3]>,
    pub displacement: Vec<Vector2<f64>>,
    pub flagged: Vec<bool>,
}

impl FieldSample {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// Mass-weighted kernel average of per-particle Cauchy stress (and
/// displacement) at each evaluation point. The kernel is the radial
/// quadratic B-spline scaled so its support equals `radius`.
pub fn sample_stress(
    positions: &[Vector2<f64>],
    masses: &[f64],
    cauchy: &[[f64; 3]],
    displacements: &[Vector2<f64>],
    points: &[Vector2<f64>],
    radius: f64,
) -> FieldSample {
    assert!(radius > 0.0);
    let scale = 1.5 / radius;
    let mut stress = Vec::with_capacity(points.len());
    let mut displacement = Vec::with_capacity(points.len());
    let mut flagged = Vec::with_capacity(points.len());
    for &q in points {
        let mut wsum = 0.0;
        let mut s = [0.0; 3];
        let mut d = Vector2::zeros();
        for p in 0..positions.len() {
            let dist = (positions[p] - q).norm();
            if dist >= radius {
                continue;
            }
            let w = masses[p] * weight_1d(dist * scale);
            if w == 0.0 {
                continue;
            }
            wsum += w;
            for c in 0..3 {
                s[c] += w * cauchy[p][c];
            }
            d += w * displacements[p];
        }
        if wsum > 0.0 {
            stress.push([s[0] / wsum, s[1] / wsum, s[2] / wsum]);
            displacement.push(d / wsum);
            flagged.push(false);
        } else {
            stress.push([0.0; 3]);
            displacement.push(Vector2::zeros());
            flagged.push(true);
        }
    }
    FieldSample {
        points: points.to_vec(),
        stress,
        displacement,
        flagged,
    }
}

fn frobenius_sq(s: &[f64; 3]) -> f64 {
    s[0] * s[0] + s[1] * s[1] + 2.0 * s[2] * s[2]
}

/// Relative L2 error of the sampled stress field against an oracle field,
/// over unflagged points with uniform weights:
/// sqrt(sum |s_num - s_oracle|_F^2) / sqrt(sum |s_oracle|_F^2).
pub fn l2_stress_error(
    sample: &FieldSample,
    oracle: impl Fn(Vector2<f64>) -> [f64; 3],
) -> Result<f64, BenchError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for (k, &q) in sample.points.iter().enumerate() {
        if sample.flagged[k] {
            continue;
        }
        used += 1;
        let o = oracle(q);
        let s = &sample.stress[k];
        let diff = [s[0] - o[0], s[1] - o[1], s[2] - o[2]];
        num += frobenius_sq(&diff);
        den += frobenius_sq(&o);
    }
    if used == 0 {
        return Err(BenchError::AllSamplesFlagged);
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_cloud(value: [f64; 3]) -> (Vec<Vector2<f64>>, Vec<f64>, Vec<[f64; 3]>, Vec<Vector2<f64>>) {
        let mut pos = Vec::new();
        for j in 0..10 {
            for i in 0..10 {
                pos.push(Vector2::new(i as f64 * 0.01, j as f64 * 0.01));
            }
        }
        let n = pos.len();
        (pos, vec![2.0; n], vec![value; n], vec![Vector2::new(0.5, -0.25); n])
    }

    #[test]
    fn uniform_hydrostatic_field_is_reproduced() {
        let p = 549.45;
        let (pos, m, sig, disp) = uniform_cloud([-p, -p, 0.0]);
        let points = vec![Vector2::new(0.045, 0.045), Vector2::new(0.02, 0.07)];
        let sample = sample_stress(&pos, &m, &sig, &disp, &points, 0.02);
        assert_eq!(sample.flagged_count(), 0);
        for s in &sample.stress {
            assert!((s[0] + p).abs() < 1e-10);
            assert!((s[1] + p).abs() < 1e-10);
            assert!(s[2].abs() < 1e-12);
        }
        for d in &sample.displacement {
            assert!((d - Vector2::new(0.5, -0.25)).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_support_is_flagged() {
        let (pos, m, sig, disp) = uniform_cloud([1.0, 0.0, 0.0]);
        let points = vec![Vector2::new(5.0, 5.0), Vector2::new(0.05, 0.05)];
        let sample = sample_stress(&pos, &m, &sig, &disp, &points, 0.02);
        assert!(sample.flagged[0]);
        assert!(!sample.flagged[1]);
    }

    #[test]
    fn l2_error_identical_and_doubled_fields() {
        let (pos, m, sig, disp) = uniform_cloud([3.0, -1.0, 0.5]);
        let points: Vec<Vector2<f64>> = (0..5)
            .map(|k| Vector2::new(0.02 + 0.01 * k as f64, 0.05))
            .collect();
        let sample = sample_stress(&pos, &m, &sig, &disp, &points, 0.02);
        let exact = l2_stress_error(&sample, |_| [3.0, -1.0, 0.5]).unwrap();
        assert!(exact < 1e-12);
        // sigma_num = 2 sigma_oracle gives relative error 1.
        let doubled = l2_stress_error(&sample, |_| [1.5, -0.5, 0.25]).unwrap();
        assert!((doubled - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_error_is_scale_invariant() {
        let (pos, m, mut sig, disp) = uniform_cloud([2.0, 1.0, -0.5]);
        for (k, s) in sig.iter_mut().enumerate() {
            s[0] += 0.1 * (k % 3) as f64;
        }
        let points: Vec<Vector2<f64>> = (0..6)
            .map(|k| Vector2::new(0.015 * k as f64 + 0.01, 0.04))
            .collect();
        let sample = sample_stress(&pos, &m, &sig, &disp, &points, 0.03);
        let e1 = l2_stress_error(&sample, |q| [2.0 + q.x, 1.0, -0.5]).unwrap();

        let scaled: Vec<[f64; 3]> = sig.iter().map(|s| [7.0 * s[0], 7.0 * s[1], 7.0 * s[2]]).collect();
        let sample2 = sample_stress(&pos, &m, &scaled, &disp, &points, 0.03);
        let e2 = l2_stress_error(&sample2, |q| [7.0 * (2.0 + q.x), 7.0, -3.5]).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn all_flagged_is_an_error() {
        let (pos, m, sig, disp) = uniform_cloud([1.0, 1.0, 0.0]);
        let points = vec![Vector2::new(9.0, 9.0)];
        let sample = sample_stress(&pos, &m, &sig, &disp, &points, 0.01);
        assert!(matches!(
            l2_stress_error(&sample, |_| [0.0; 3]),
            Err(BenchError::AllSamplesFlagged)
        ));
    }
}

//! Ramer-Douglas-Peucker polyline simplification (iterative end-point fit).

use super::IntentionError;

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len2 = abx * abx + aby * aby;
    if len2 < 1e-24 {
        return (apx * apx + apy * apy).sqrt();
    }
    let t = ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0);
    let (dx, dy) = (p.0 - (a.0 + t * abx), p.1 - (a.1 + t * aby));
    (dx * dx + dy * dy).sqrt()
}

fn rdp_recurse(points: &[(f64, f64)], lo: usize, hi: usize, epsilon: f64, keep: &mut Vec<usize>) {
    if hi <= lo + 1 {
        return;
    }
    let (a, b) = (points[lo], points[hi]);
    let mut worst = 0.0;
    let mut worst_idx = lo;
    for i in lo + 1..hi {
        let d = point_segment_distance(points[i], a, b);
        if d > worst {
            worst = d;
            worst_idx = i;
        }
    }
    if worst > epsilon {
        rdp_recurse(points, lo, worst_idx, epsilon, keep);
        keep.push(worst_idx);
        rdp_recurse(points, worst_idx, hi, epsilon, keep);
    }
}

/// Indices of the retained vertices, endpoints always included, in order.
pub fn rdp_simplify_indices(
    points: &[(f64, f64)],
    epsilon: f64,
) -> Result<Vec<usize>, IntentionError> {
    if points.len() < 2 {
        return Err(IntentionError::TooFewPoints(points.len()));
    }
    let mut keep = vec![0];
    rdp_recurse(points, 0, points.len() - 1, epsilon, &mut keep);
    keep.push(points.len() - 1);
    Ok(keep)
}

/// Simplified polyline; every discarded point lies within `epsilon`
/// perpendicular distance of the result.
pub fn rdp_simplify(
    points: &[(f64, f64)],
    epsilon: f64,
) -> Result<Vec<(f64, f64)>, IntentionError> {
    Ok(rdp_simplify_indices(points, epsilon)?
        .into_iter()
        .map(|i| points[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collinear_collapses_to_endpoints() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        assert_eq!(rdp_simplify(&pts, 0.1).unwrap(), vec![(0.0, 0.0), (2.0, 0.0)]);
    }

    #[test]
    fn spike_retained_below_epsilon() {
        let pts = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        // Mid-point perpendicular distance to the chord is 1.0.
        assert_eq!(rdp_simplify(&pts, 0.5).unwrap().len(), 3);
        assert_eq!(rdp_simplify(&pts, 1.5).unwrap().len(), 2);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            rdp_simplify(&[(0.0, 0.0)], 0.1),
            Err(IntentionError::TooFewPoints(1))
        ));
    }

    fn hausdorff_to_simplified(original: &[(f64, f64)], simplified: &[(f64, f64)]) -> f64 {
        original
            .iter()
            .map(|&p| {
                simplified
                    .windows(2)
                    .map(|w| point_segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn containment_and_idempotence(
            pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..30),
            epsilon in 0.0..5.0f64,
        ) {
            let simplified = rdp_simplify(&pts, epsilon).unwrap();
            prop_assert_eq!(simplified.first(), pts.first());
            prop_assert_eq!(simplified.last(), pts.last());
            let h = hausdorff_to_simplified(&pts, &simplified);
            prop_assert!(h <= epsilon + 1e-9, "hausdorff {} > epsilon {}", h, epsilon);
            let again = rdp_simplify(&simplified, epsilon).unwrap();
            prop_assert_eq!(again, simplified);
        }
    }
}

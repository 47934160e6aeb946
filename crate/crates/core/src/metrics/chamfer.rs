use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChamferMode {
    /// Mean of the kept nearest-neighbour distances, pooled over both directions.
    #[default]
    Euclidean,
    /// Sum over both directions of the mean squared distance, each direction
    /// trimmed on its own.
    Squared,
}

fn nearest(points: &[[f64; 2]], others: &[[f64; 2]]) -> Vec<f64> {
    par::map_slice(points, |p| {
        others
            .iter()
            .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            .fold(f64::INFINITY, f64::min)
    })
}

/// Chamfer distance with the largest `trim_fraction` of the per-point
/// distances discarded (pooled over both directions for `Euclidean`, per
/// direction for `Squared`). Distances are in the input's units.
pub fn chamfer_trimmed(s1: &[[f64; 2]], s2: &[[f64; 2]], trim_fraction: f64, mode: ChamferMode) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Dimension("chamfer distance needs two non-empty point sets".into()));
    }
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(Error::Config(format!("trim fraction {trim_fraction} outside [0, 1)")));
    }
    let mut d12 = nearest(s1, s2);
    let mut d21 = nearest(s2, s1);
    Ok(match mode {
        ChamferMode::Euclidean => {
            let mut pooled: Vec<f64> = d12.iter().chain(&d21).map(|d| d.sqrt()).collect();
            pooled.sort_by(f64::total_cmp);
            let keep = pooled.len() - (trim_fraction * pooled.len() as f64).floor() as usize;
            pooled[..keep].iter().sum::<f64>() / keep as f64
        }
        ChamferMode::Squared => [&mut d12, &mut d21]
            .into_iter()
            .map(|d| {
                d.sort_by(f64::total_cmp);
                let keep = d.len() - (trim_fraction * d.len() as f64).floor() as usize;
                d[..keep].iter().sum::<f64>() / keep as f64
            })
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let a = [[0.0, 0.0]];
        let b = [[3.0, 4.0]];
        assert_eq!(chamfer_trimmed(&a, &b, 0.0, ChamferMode::Squared).unwrap(), 50.0);
        assert_eq!(chamfer_trimmed(&a, &b, 0.0, ChamferMode::Euclidean).unwrap(), 5.0);
        let c = [[0.0, 0.0], [100.0, 0.0]];
        assert_eq!(chamfer_trimmed(&c, &a, 0.5, ChamferMode::Euclidean).unwrap(), 0.0);
        assert_eq!(chamfer_trimmed(&c, &c, 0.3, ChamferMode::Squared).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(chamfer_trimmed(&[], &[[0.0, 0.0]], 0.0, ChamferMode::Euclidean).is_err());
        assert!(chamfer_trimmed(&[[0.0, 0.0]], &[[0.0, 0.0]], 1.0, ChamferMode::Euclidean).is_err());
    }

    fn pts() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| [x, y]), 1..20)
    }

    proptest! {
        #[test]
        fn symmetric_and_monotone(a in pts(), b in pts(), t1 in 0.0..0.99f64, t2 in 0.0..0.99f64) {
            for mode in [ChamferMode::Euclidean, ChamferMode::Squared] {
                let ab = chamfer_trimmed(&a, &b, t1, mode).unwrap();
                let ba = chamfer_trimmed(&b, &a, t1, mode).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(chamfer_trimmed(&a, &b, hi, mode).unwrap() <= chamfer_trimmed(&a, &b, lo, mode).unwrap() + 1e-12);
            }
        }

        #[test]
        fn matches_brute_force(a in pts(), b in pts(), t in 0.0..0.99f64) {
            let mut all = Vec::new();
            for p in &a {
                all.push(b.iter().map(|q| ((p[0]-q[0]).powi(2) + (p[1]-q[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min));
            }
            for q in &b {
                all.push(a.iter().map(|p| ((p[0]-q[0]).powi(2) + (p[1]-q[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min));
            }
            all.sort_by(f64::total_cmp);
            let keep = all.len() - (t * all.len() as f64).floor() as usize;
            let expect = all[..keep].iter().sum::<f64>() / keep as f64;
            let got = chamfer_trimmed(&a, &b, t, ChamferMode::Euclidean).unwrap();
            prop_assert!((got - expect).abs() <= 1e-9 * (1.0 + expect));
        }
    }
}

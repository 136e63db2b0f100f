//! Mutual information and the two IB coordinates of a naming system.

use crate::color::{ChipGrid, MeaningModel};
use crate::error::{Error, Result};
use crate::ib::NamingSystem;
use crate::matrix::Matrix;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Position of a naming system in the IB plane (bits).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IBPoint {
    pub complexity: f64,
    pub accuracy: f64,
    pub epsilon: Option<f64>,
}

impl IBPoint {
    pub fn new(complexity: f64, accuracy: f64) -> Self {
        IBPoint {
            complexity,
            accuracy,
            epsilon: None,
        }
    }
}

/// `I(X;Y)` in bits for a joint distribution given as a matrix.
pub fn mutual_information(joint: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for &p in joint.as_slice() {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::validation(format!("joint has invalid entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(format!("joint sums to {total}, not 1")));
    }
    Ok(mi_nats(joint) / std::f64::consts::LN_2)
}

/// Mutual information in nats without validation; clamps tiny negatives.
pub(crate) fn mi_nats(joint: &Matrix) -> f64 {
    let rows = joint.rows();
    let cols = joint.cols();
    let row_m: Vec<f64> = (0..rows).map(|i| joint.row(i).iter().sum()).collect();
    let mut col_m = vec![0.0; cols];
    for i in 0..rows {
        for (acc, p) in col_m.iter_mut().zip(joint.row(i)) {
            *acc += p;
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        if row_m[i] <= 0.0 {
            continue;
        }
        for (j, &p) in joint.row(i).iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (row_m[i] * col_m[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

fn check_dims(sys: &NamingSystem, grid: &ChipGrid) -> Result<()> {
    if sys.num_chips() != grid.len() {
        return Err(Error::dimension(format!(
            "encoder covers {} chips, grid has {}",
            sys.num_chips(),
            grid.len()
        )));
    }
    Ok(())
}

/// Complexity `I(C;W)` in bits.
pub fn complexity(sys: &NamingSystem, grid: &ChipGrid) -> Result<f64> {
    check_dims(sys, grid)?;
    Ok(mi_nats(&sys.joint(grid.prior())) / std::f64::consts::LN_2)
}

/// Joint `p(w, u)` induced by the Bayesian listener over the meaning model.
pub fn word_meaning_joint(sys: &NamingSystem, grid: &ChipGrid, mm: &MeaningModel) -> Result<Matrix> {
    check_dims(sys, grid)?;
    if mm.len() != grid.len() {
        return Err(Error::dimension("meaning model and grid sizes differ"));
    }
    // p(w,u) = Σ_c p(c) q(w|c) m_c(u)
    Ok(sys.joint(grid.prior()).matmul(mm.likelihood()))
}

/// Accuracy `I(W;U)` in bits.
pub fn accuracy(sys: &NamingSystem, grid: &ChipGrid, mm: &MeaningModel) -> Result<f64> {
    Ok(mi_nats(&word_meaning_joint(sys, grid, mm)?) / std::f64::consts::LN_2)
}

pub fn ib_point(sys: &NamingSystem, grid: &ChipGrid, mm: &MeaningModel) -> Result<IBPoint> {
    Ok(IBPoint::new(complexity(sys, grid)?, accuracy(sys, grid, mm)?))
}

/// `I(C;U)` of the meaning channel: the accuracy ceiling for any encoder.
pub fn meaning_information(grid: &ChipGrid, mm: &MeaningModel) -> f64 {
    let joint = Matrix::from_fn(grid.len(), grid.len(), |c, u| grid.prior()[c] * mm.row(c)[u]);
    mi_nats(&joint) / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{Chip, DEFAULT_SIGMA_SQ};
    use proptest::prelude::*;

    fn oracle_mi(joint: &[Vec<f64>]) -> f64 {
        let rows = joint.len();
        let cols = joint[0].len();
        let mut mi = 0.0;
        for i in 0..rows {
            let pi: f64 = joint[i].iter().sum();
            for j in 0..cols {
                let pj: f64 = (0..rows).map(|r| joint[r][j]).sum();
                let p = joint[i][j];
                if p > 0.0 {
                    mi += p * (p / (pi * pj)).log2();
                }
            }
        }
        mi
    }

    fn to_matrix(joint: &[Vec<f64>]) -> Matrix {
        Matrix::from_fn(joint.len(), joint[0].len(), |i, j| joint[i][j])
    }

    #[test]
    fn independent_joint_has_zero_information() {
        let px = [0.2, 0.3, 0.5];
        let py = [0.6, 0.4];
        let joint = Matrix::from_fn(3, 2, |i, j| px[i] * py[j]);
        assert!(mutual_information(&joint).unwrap().abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_one_bit() {
        let joint = Matrix::from_vec(2, 2, vec![0.5, 0.0, 0.0, 0.5]);
        assert!((mutual_information(&joint).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arbitrary_three_by_three_matches_oracle() {
        let raw = vec![
            vec![0.10, 0.05, 0.02],
            vec![0.03, 0.20, 0.07],
            vec![0.15, 0.08, 0.30],
        ];
        let m = to_matrix(&raw);
        assert!((mutual_information(&m).unwrap() - oracle_mi(&raw)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_joints() {
        let neg = Matrix::from_vec(1, 2, vec![1.5, -0.5]);
        assert!(mutual_information(&neg).is_err());
        let short = Matrix::from_vec(1, 2, vec![0.5, 0.4]);
        assert!(mutual_information(&short).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn mi_agrees_with_direct_summation(
            rows in 2usize..=5,
            cols in 2usize..=5,
            raw in proptest::collection::vec(0.0f64..1.0, 25),
            zeros in proptest::collection::vec(any::<bool>(), 25),
        ) {
            let mut joint: Vec<Vec<f64>> = (0..rows)
                .map(|i| (0..cols).map(|j| if zeros[i * 5 + j] { 0.0 } else { raw[i * 5 + j] }).collect())
                .collect();
            let total: f64 = joint.iter().flatten().sum();
            prop_assume!(total > 1e-6);
            for row in &mut joint {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            let got = mutual_information(&to_matrix(&joint)).unwrap();
            prop_assert!((got - oracle_mi(&joint).max(0.0)).abs() < 1e-12);
        }
    }

    fn toy_grid() -> ChipGrid {
        let labs = [[50.0, 0.0, 0.0], [52.0, 6.0, 0.0], [60.0, -8.0, 10.0], [30.0, 4.0, -4.0]];
        let chips = labs
            .iter()
            .enumerate()
            .map(|(i, lab)| Chip { index: i, row: 'B', column: i as u8 + 1, lab: *lab })
            .collect();
        ChipGrid::new(chips, Some(vec![0.1, 0.2, 0.3, 0.4])).unwrap()
    }

    #[test]
    fn constant_channel_has_zero_complexity() {
        let grid = ChipGrid::bundled();
        let sys = NamingSystem::uniform(4, grid.len());
        assert!(complexity(&sys, &grid).unwrap().abs() < 1e-12);
        let mm = MeaningModel::new(&grid, DEFAULT_SIGMA_SQ).unwrap();
        assert!(accuracy(&sys, &grid, &mm).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identity_encoder_is_lossless() {
        let grid = ChipGrid::bundled();
        let sys = NamingSystem::new(Matrix::identity(grid.len())).unwrap();
        let got = complexity(&sys, &grid).unwrap();
        assert!((got - 330f64.log2()).abs() < 1e-9, "{got}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let grid = ChipGrid::bundled();
        let sys = NamingSystem::uniform(2, 10);
        assert!(matches!(complexity(&sys, &grid), Err(Error::Dimension(_))));
    }

    #[test]
    fn accuracy_matches_brute_force_chain() {
        let grid = toy_grid();
        let mm = MeaningModel::new(&grid, 64.0).unwrap();
        let enc = Matrix::from_vec(2, 4, vec![0.9, 0.7, 0.2, 0.05, 0.1, 0.3, 0.8, 0.95]);
        let sys = NamingSystem::new(enc).unwrap();

        // Brute force over (w, c, u): p(w,u) = Σ_c p(c) q(w|c) m_c(u).
        let p = grid.prior();
        let mut pwu = vec![vec![0.0; 4]; 2];
        for w in 0..2 {
            for c in 0..4 {
                for u in 0..4 {
                    pwu[w][u] += p[c] * sys.q(w, c) * mm.row(c)[u];
                }
            }
        }
        let expected = oracle_mi(&pwu);
        let got = accuracy(&sys, &grid, &mm).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

        let cx = complexity(&sys, &grid).unwrap();
        assert!(got <= cx + 1e-9);
        assert!(got < meaning_information(&grid, &mm));
    }
}

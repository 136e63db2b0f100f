//! Inefficiency ε: distance of a system from the IB frontier.

use crate::color::{ChipGrid, MeaningModel};
use crate::error::{Error, Result};
use crate::ib::{ib_point, IBCurve, NamingSystem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EpsilonMethod {
    /// `min_β (1/β)(F_β[sys] − F_β[q*_β])`, recording the minimizing β.
    #[default]
    ObjectiveGap,
    /// Frontier accuracy at the system's complexity minus its accuracy.
    AccuracyGap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyFit {
    pub epsilon: f64,
    /// Fitted tradeoff; `None` for [`EpsilonMethod::AccuracyGap`].
    pub beta: Option<f64>,
}

/// ε for a system already placed in the IB plane.
pub fn epsilon_for_point(
    complexity: f64,
    accuracy: f64,
    curve: &IBCurve,
    method: EpsilonMethod,
) -> Result<EfficiencyFit> {
    if curve.is_empty() {
        return Err(Error::validation("frontier curve is empty"));
    }
    match method {
        EpsilonMethod::ObjectiveGap => {
            let mut best = EfficiencyFit {
                epsilon: f64::INFINITY,
                beta: None,
            };
            for p in curve.points() {
                let gap = (complexity - p.complexity) / p.beta - (accuracy - p.accuracy);
                if gap < best.epsilon {
                    best = EfficiencyFit {
                        epsilon: gap,
                        beta: Some(p.beta),
                    };
                }
            }
            Ok(best)
        }
        EpsilonMethod::AccuracyGap => Ok(EfficiencyFit {
            epsilon: curve.accuracy_at(complexity) - accuracy,
            beta: None,
        }),
    }
}

/// ε of `sys` relative to `curve` using the objective-gap definition.
pub fn inefficiency_epsilon(
    sys: &NamingSystem,
    curve: &IBCurve,
    grid: &ChipGrid,
    mm: &MeaningModel,
) -> Result<EfficiencyFit> {
    inefficiency_epsilon_with(sys, curve, grid, mm, EpsilonMethod::ObjectiveGap)
}

pub fn inefficiency_epsilon_with(
    sys: &NamingSystem,
    curve: &IBCurve,
    grid: &ChipGrid,
    mm: &MeaningModel,
    method: EpsilonMethod,
) -> Result<EfficiencyFit> {
    let pt = ib_point(sys, grid, mm)?;
    epsilon_for_point(pt.complexity, pt.accuracy, curve, method)
}

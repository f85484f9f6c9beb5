//! A fitted model of either flavor, behind one evaluation interface.

use super::mnl::{mnl_set_utilities, mnl_utility, MnlParams};
use super::observables::Observables;
use super::params::LatentParams;
use crate::data::ChoiceSet;
use crate::math::softmax_in_place;
use crate::Result;

/// Posterior-mean parameters of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Ttfm(LatentParams),
    Mnl(MnlParams),
}

impl FittedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Ttfm(_) => "ttfm",
            FittedModel::Mnl(_) => "mnl",
        }
    }

    /// Deterministic utility of one alternative at an arbitrary distance.
    ///
    /// Evaluates the same expression as `set_utilities_into`, so for a
    /// distance taken from the user's choice set the two agree bitwise.
    pub fn utility(
        &self,
        observables: &Observables,
        u: usize,
        i: usize,
        week: usize,
        d_miles: f64,
    ) -> Result<f64> {
        match self {
            FittedModel::Ttfm(p) => super::utility(p, u, i, week, d_miles),
            FittedModel::Mnl(p) => mnl_utility(p, observables, i, d_miles),
        }
    }

    /// Utilities over a user's choice set at a week context.
    pub fn set_utilities_into(
        &self,
        observables: &Observables,
        u: usize,
        week: usize,
        set: &ChoiceSet,
        out: &mut Vec<f64>,
    ) {
        match self {
            FittedModel::Ttfm(p) => super::set_utilities_into(p, u, week, set, out),
            FittedModel::Mnl(p) => mnl_set_utilities(p, observables, set, out),
        }
    }

    /// Choice probabilities over a user's choice set at a week context.
    pub fn probabilities(
        &self,
        observables: &Observables,
        u: usize,
        week: usize,
        set: &ChoiceSet,
    ) -> Vec<f64> {
        let mut p = Vec::new();
        self.set_utilities_into(observables, u, week, set, &mut p);
        softmax_in_place(&mut p);
        p
    }

    /// Distance sensitivity: the coefficient on -ln(d) for a (user,
    /// restaurant) pair.
    pub fn travel_sensitivity(&self, u: usize, i: usize) -> f64 {
        match self {
            FittedModel::Ttfm(p) => p.travel_sensitivity(u, i),
            FittedModel::Mnl(p) => {
                let _ = (u, i);
                p.dist_coef
            }
        }
    }
}

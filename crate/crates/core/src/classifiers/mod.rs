//! Downstream learners written from scratch: gradient boosted trees,
//! multinomial logistic regression and a majority-vote table.

mod gbt;
mod linear;
mod vote;

pub use gbt::{accuracy, gbt_feature_importance, gbt_predict, train_gbt, GbtConfig, GbtModel};
pub use linear::{loss_and_gradient, train_linear, LinearModel};
pub use vote::{majority_vote, VoteClassifier};

//! Comparison regressors: random forest and ε-SVR with an RBF kernel.

pub mod forest;
pub mod svr;

pub use forest::{rf_predict, rf_train, Forest, ForestConfig, TreeNode};
pub use svr::{rbf, svr_predict, svr_train, svr_train_observed, SvrConfig, SvrModel, SvrReport, SvrState};

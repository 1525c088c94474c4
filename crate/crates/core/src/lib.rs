pub mod baselines;
pub mod cli;
pub mod demand;
pub mod dg;
pub mod dp;
pub mod error;
pub mod policy;
pub mod problem;
pub mod ptrl;
pub mod sim;
pub mod tariff;

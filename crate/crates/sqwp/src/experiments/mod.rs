pub mod choi;
pub mod convergence;
pub mod decay;
pub mod spectra;
pub mod trajectories;

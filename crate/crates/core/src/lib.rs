pub mod cislunar;
pub mod milp;
pub mod netgraph;
pub mod solver;
pub mod traj;

//! Single-instance CVRP solver by policy iteration. Each action is a route
//! chosen by a mixed-integer program whose objective embeds a trained ReLU
//! network estimating the cost-to-go.

pub mod actionsel;
pub mod instances;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod tsp;
pub mod valuefn;

pub use instances::CvrpInstance;
pub use mdp::{Route, State};

pub type ValueNet = valuefn::Network<f64>;
pub type Dataset = valuefn::RetainedDataset<f64>;

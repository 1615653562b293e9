pub mod dynamics;
pub mod fov;
pub mod grid;
pub mod reachability;
pub mod advisor;
pub mod constraints;
pub mod reference;
pub mod trajectory;
pub mod qp;
pub mod nmpc;
pub mod footprint;
pub mod observer;
pub mod scenario;

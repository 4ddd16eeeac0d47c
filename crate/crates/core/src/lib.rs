//! Wi-Fi RSSI indoor localization with a graph-transformer regressor and
//! spatially-adaptive split-conformal confidence radii.

pub mod autodiff;
pub mod cli;
pub mod conformal;
pub mod dataset;
pub mod evalreport;
pub mod graphbuild;
pub mod gtmodel;
pub mod regions;

//! Standard-library side of the VPC eye-tracker: cascade and manifest file
//! formats, the batch archive, the document store, the node transport and
//! runtimes, the UI gateway and the command line.

pub mod archive;
pub mod cascade_xml;
pub mod cli;
pub mod frames;
pub mod gateway;
pub mod models;
pub mod nodes;
pub mod store;
pub mod transport;

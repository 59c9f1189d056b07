pub mod app;
pub mod config;
pub mod csvio;
pub mod http;
pub mod registry;
pub mod store;
pub mod weather;

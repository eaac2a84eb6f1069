//! Service, command-line tools, event-log persistence and the remote model
//! gateway around the `creative-select` core.
//!
//! - [`store`]: append-only event log per dataset with byte-stable snapshots
//!   and annotation leases.
//! - [`service`]: the JSON HTTP API.
//! - [`gateway`]: chat-completion transport with retries.
//! - [`commands`] and [`cli`]: the work behind each subcommand.
//! - [`config`]: TOML configuration.

pub mod cli;
pub mod commands;
pub mod config;
pub mod gateway;
pub mod service;
pub mod store;

//! Host layer for the agent trade server: configuration files, the TCP
//! gateway with its wire protocol, the wall-clock feed replay driver and
//! the client shell for remote agents. All trading semantics live in
//! `ats-core`; this crate is IO.

pub mod config;
pub mod frames;
pub mod gateway;
pub mod manifest;
pub mod replay;
pub mod shell;

pub use config::ServerConfig;
pub use gateway::{Gateway, Server, SystemClock};
pub use shell::{admin_command, RemoteShell};

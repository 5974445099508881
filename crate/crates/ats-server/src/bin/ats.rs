//! Operator and developer command line for the agent trade server.
//!
//! `serve` runs the server; everything else is a client of a running
//! server's command channel, except `sign-manifest`, which is local.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use base64::Engine;
use clap::{Parser, Subcommand};
use serde_json::json;

use ats_server::config::ServerConfig;
use ats_server::gateway::{Gateway, Server};
use ats_server::manifest::DescriptorJson;
use ats_server::{admin_command, replay};

#[derive(Parser)]
#[command(name = "ats", about = "Agent trade server operator tool", version)]
struct Cli {
    /// Server configuration file (also supplies tokens and the address
    /// for client commands).
    #[arg(long, global = true, default_value = "config/server.json")]
    config: PathBuf,

    /// Role token for client commands; defaults to the admin token from
    /// the config. Pass a broker token to act as that broker.
    #[arg(long, global = true)]
    token: Option<String>,

    /// Server address override for client commands.
    #[arg(long, global = true)]
    addr: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boot the runtime, gateway and feed replay from the config file.
    Serve,
    /// Compute a manifest digest and sign it with a developer seed.
    SignManifest {
        /// File holding the 32-byte signing seed as 64 hex characters.
        #[arg(long)]
        key: PathBuf,
        /// Manifest file to sign.
        #[arg(long)]
        manifest: PathBuf,
        /// Write the resulting JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Register a developer verification key (administrator).
    RegisterDeveloper {
        #[arg(long)]
        developer: String,
        /// 32-byte verification key, hex.
        #[arg(long)]
        key: String,
    },
    /// Revoke a developer (administrator).
    RevokeDeveloper {
        #[arg(long)]
        developer: String,
    },
    /// Submit a signed agent descriptor plus its manifest.
    SubmitAgent {
        /// Descriptor JSON file.
        #[arg(long)]
        descriptor: PathBuf,
        /// Manifest file the descriptor's digest covers. Defaults to the
        /// path in the descriptor file's directory named `manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// List agents and their lifecycle states.
    ListAgents,
    /// Kill an agent (administrator or the agent's broker).
    KillAgent {
        #[arg(long)]
        agent: String,
    },
    /// Aggregated depth snapshot.
    Book {
        #[arg(long)]
        symbol: String,
        #[arg(long, default_value_t = 5)]
        levels: usize,
    },
    /// Query the activity log; optionally export XML.
    Logs {
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        kind: Option<String>,
        /// Step range `FROM:TO` (inclusive).
        #[arg(long)]
        range: Option<String>,
        /// Write the entries as an XML document to this file.
        #[arg(long)]
        xml: Option<PathBuf>,
    },
    /// Replay a feed file into the running server.
    ReplayFeed {
        #[arg(long)]
        file: String,
        /// Feed seconds per wall second.
        #[arg(long, default_value_t = 1_000_000.0)]
        speed: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve => serve(&cli.config),
        Command::SignManifest { key, manifest, out } => sign_manifest(&key, &manifest, out.as_deref()),
        ref client_cmd => {
            let config = ServerConfig::load(&cli.config)?;
            let addr = cli.addr.clone().unwrap_or_else(|| config.listen.clone());
            let token = cli.token.clone().unwrap_or_else(|| config.admin_token.clone());
            let result = match client_cmd {
                Command::RegisterDeveloper { developer, key } => admin_command(
                    &addr,
                    &token,
                    json!({ "op": "register-developer", "developer": developer, "key": key }),
                )?,
                Command::RevokeDeveloper { developer } => admin_command(
                    &addr,
                    &token,
                    json!({ "op": "revoke-developer", "developer": developer }),
                )?,
                Command::SubmitAgent {
                    descriptor,
                    manifest,
                } => {
                    let text = std::fs::read_to_string(descriptor)
                        .with_context(|| format!("reading {}", descriptor.display()))?;
                    let desc: DescriptorJson = serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", descriptor.display()))?;
                    let manifest_path = manifest.clone().unwrap_or_else(|| {
                        descriptor.with_file_name("manifest.json")
                    });
                    let bytes = std::fs::read(&manifest_path)
                        .with_context(|| format!("reading {}", manifest_path.display()))?;
                    let b64 = base64::engine::general_purpose::STANDARD.encode(&bytes);
                    admin_command(
                        &addr,
                        &token,
                        json!({ "op": "submit-agent", "descriptor": desc, "manifest_b64": b64 }),
                    )?
                }
                Command::ListAgents => {
                    admin_command(&addr, &token, json!({ "op": "list-agents" }))?
                }
                Command::KillAgent { agent } => {
                    admin_command(&addr, &token, json!({ "op": "kill-agent", "agent": agent }))?
                }
                Command::Book { symbol, levels } => admin_command(
                    &addr,
                    &token,
                    json!({ "op": "book", "symbol": symbol, "levels": levels }),
                )?,
                Command::Logs {
                    agent,
                    kind,
                    range,
                    xml,
                } => {
                    let (from_step, to_step) = match range {
                        None => (None, None),
                        Some(r) => {
                            let (f, t) = r
                                .split_once(':')
                                .ok_or_else(|| anyhow!("--range must be FROM:TO"))?;
                            (Some(f.parse::<u64>()?), Some(t.parse::<u64>()?))
                        }
                    };
                    let result = admin_command(
                        &addr,
                        &token,
                        json!({
                            "op": "logs",
                            "agent": agent,
                            "kind": kind,
                            "from_step": from_step,
                            "to_step": to_step,
                            "xml": xml.is_some(),
                        }),
                    )?;
                    if let Some(path) = xml {
                        let doc = result
                            .get("xml")
                            .and_then(|v| v.as_str())
                            .ok_or_else(|| anyhow!("server returned no XML"))?;
                        std::fs::write(path, doc)
                            .with_context(|| format!("writing {}", path.display()))?;
                        println!(
                            "{}",
                            json!({ "count": result.get("count"), "written": path.display().to_string() })
                        );
                        return Ok(());
                    }
                    result
                }
                Command::ReplayFeed { file, speed } => admin_command(
                    &addr,
                    &token,
                    json!({ "op": "replay-feed", "file": file, "speed": speed }),
                )?,
                Command::Serve | Command::SignManifest { .. } => unreachable!(),
            };
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
    }
}

fn serve(config_path: &std::path::Path) -> Result<()> {
    let config = ServerConfig::load(config_path)?;
    let feed = config.feed.clone();
    let (server, warnings) = Server::new(config)?;
    for w in &warnings {
        eprintln!("config warning: {w}");
    }
    let server = Arc::new(server);
    let gateway = Gateway::spawn(server.clone())?;
    println!("listening on {}", gateway.addr);
    std::io::Write::flush(&mut std::io::stdout())?;

    if let Some(feed) = feed {
        let state = server.state.clone();
        std::thread::spawn(move || {
            let text = match std::fs::read_to_string(&feed.file) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("feed source unavailable: {e}");
                    return;
                }
            };
            match replay::replay_text(&state, &text, feed.speed, feed.delay_secs * 1000) {
                Ok(stats) => eprintln!(
                    "feed replay done: {} records applied, {} crossed skipped, {} warnings",
                    stats.applied, stats.skipped_crossed, stats.warnings
                ),
                Err(e) => eprintln!("feed replay failed: {e}"),
            }
        });
    }

    // serve until killed
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
    #[allow(unreachable_code)]
    {
        gateway.stop();
        Ok(())
    }
}

fn sign_manifest(key: &std::path::Path, manifest: &std::path::Path, out: Option<&std::path::Path>) -> Result<()> {
    let seed_hex = std::fs::read_to_string(key)
        .with_context(|| format!("reading {}", key.display()))?;
    let seed_bytes = hex::decode(seed_hex.trim()).context("key file must be hex")?;
    let seed: [u8; 32] = seed_bytes
        .try_into()
        .map_err(|_| anyhow!("key file must hold 32 bytes of hex"))?;
    let manifest_bytes =
        std::fs::read(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    if manifest_bytes.is_empty() {
        bail!("manifest is empty");
    }
    let digest = ats_core::cert::manifest_digest(&manifest_bytes);
    let signature = ats_core::cert::sign_bytes(&seed, &digest);
    let result = json!({
        "verify_key": hex::encode(ats_core::cert::verifying_key_of(&seed)),
        "manifest_digest": hex::encode(digest),
        "signature": hex::encode(signature),
    });
    let text = serde_json::to_string_pretty(&result)?;
    match out {
        Some(path) => {
            std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

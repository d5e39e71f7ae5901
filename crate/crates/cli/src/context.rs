use crate::args::Cli;
use anyhow::{Context as _, Result};
use bless_core::clock::{Clock, ManualClock, SystemClock};
use bless_core::principal::Principal;
use bless_core::store::StoreEntry;
use bless_core::{Acl, Blessing, BlessingPattern};
use bless_net::messages::Grant;
use bless_net::{ClientOptions, DischargeFetcher, Identity, TcpNetwork, Verifier};
use chrono::{DateTime, Utc};
use serde_json::Value;
use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

/// An error in how the command was invoked rather than in what it did.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Context {
    principal: Option<PathBuf>,
    pub timeout: Duration,
    pub json: bool,
    yes: bool,
    clock: Arc<dyn Clock>,
}

impl Context {
    pub fn new(cli: &Cli) -> Self {
        let clock: Arc<dyn Clock> = match cli.now {
            Some(t) => Arc::new(ManualClock::new(t)),
            None => Arc::new(SystemClock),
        };
        Context {
            principal: cli.principal.clone(),
            timeout: cli.timeout,
            json: cli.json,
            yes: cli.yes,
            clock,
        }
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn dir(&self) -> Result<&Path> {
        self.principal
            .as_deref()
            .ok_or_else(|| usage("no principal directory: pass --principal or set VPRINCIPAL"))
    }

    pub fn open(&self) -> Result<Principal> {
        let dir = self.dir()?;
        Principal::open(dir).with_context(|| format!("opening principal {}", dir.display()))
    }

    pub fn identity(&self) -> Result<Identity> {
        Ok(Identity::from_principal(self.open()?))
    }

    pub fn verifier(&self) -> Verifier {
        Verifier::default().with_clock(self.clock.clone())
    }

    /// Client options that fetch discharges for third-party caveats.
    pub fn client_options(&self, policy: Option<Acl>) -> ClientOptions {
        let fetcher = DischargeFetcher::new(Arc::new(TcpNetwork), self.verifier(), self.timeout);
        ClientOptions {
            verifier: self.verifier(),
            policy,
            expected_key: None,
            timeout: self.timeout,
            fetcher: Some(Arc::new(fetcher)),
        }
    }

    /// Prints one record: `text` normally, `json` under `--json`.
    pub fn emit(&self, text: impl fmt::Display, json: Value) {
        let mut out = io::stdout().lock();
        let _ = if self.json {
            writeln!(out, "{json}")
        } else {
            writeln!(out, "{text}")
        };
        let _ = out.flush();
    }

    pub fn confirmed(&self, question: &str) -> Result<bool> {
        if self.yes {
            return Ok(true);
        }
        eprint!("{question} [y/N] ");
        io::stderr().flush()?;
        let mut answer = String::new();
        io::stdin().lock().read_line(&mut answer)?;
        Ok(matches!(answer.trim(), "y" | "Y" | "yes"))
    }

    /// Offers each granted blessing for storage, recognizing its root when
    /// accepted. Declined blessings are printed so they are not lost.
    pub fn accept_grants(&self, grants: &[Grant], label: &str) -> Result<()> {
        for g in grants {
            let name = g.blessing.full_name();
            let question = format!("store blessing {name} for peers matching {}?", g.peer_pattern);
            if !self.confirmed(&question)? {
                self.emit(
                    format_args!("declined {name}: {}", g.blessing.to_text()),
                    serde_json::json!({"declined": name, "blessing": g.blessing.to_text()}),
                );
                continue;
            }
            let now = self.now();
            let mut p = self.open()?;
            p.update(|p| {
                p.store.add(g.blessing.clone(), g.peer_pattern.clone(), label, now)?;
                p.roots.add(g.blessing.root());
                Ok(())
            })?;
            self.emit(
                format_args!("stored {name} for {} as {label:?}", g.peer_pattern),
                serde_json::json!({"stored": name, "peers": g.peer_pattern.to_string(), "label": label}),
            );
        }
        Ok(())
    }
}

pub fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_blessing(path: &Path) -> Result<Blessing> {
    let text = read_input(path)?;
    Blessing::from_text(text.trim()).with_context(|| format!("{} does not hold a blessing", path.display()))
}

pub fn parse_pattern(text: &str) -> Result<BlessingPattern> {
    text.parse().map_err(|e| usage(format!("pattern {text:?}: {e}")))
}

/// ACL admitting exactly the given patterns, or none when empty.
pub fn expect_acl(patterns: &[String]) -> Result<Option<Acl>> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let allow = patterns.iter().map(|p| parse_pattern(p)).collect::<Result<Vec<_>>>()?;
    Ok(Some(Acl::allow_only(allow)))
}

pub fn entry_json(e: &StoreEntry, is_default: bool) -> Value {
    serde_json::json!({
        "label": e.label,
        "name": e.blessing.full_name(),
        "peers": e.peer_pattern.to_string(),
        "acquired": e.acquired_at.to_rfc3339(),
        "default": is_default,
    })
}

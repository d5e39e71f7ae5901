use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::time::Duration;

#[derive(Debug, Parser)]
#[command(name = "vbless", version, about = "Principals, blessings and the services that check them")]
pub struct Cli {
    /// Principal directory to act as.
    #[arg(long, env = "VPRINCIPAL", global = true)]
    pub principal: Option<PathBuf>,

    /// Bound on each network phase and call.
    #[arg(long, global = true, default_value = "10s", value_parser = humantime::parse_duration)]
    pub timeout: Duration,

    /// Line-delimited JSON output.
    #[arg(long, global = true)]
    pub json: bool,

    /// Accept offered blessings without asking.
    #[arg(long, global = true)]
    pub yes: bool,

    /// Freeze the clock at this RFC 3339 instant.
    #[arg(long, global = true, value_parser = parse_instant)]
    pub now: Option<DateTime<Utc>>,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create or inspect a principal.
    #[command(subcommand)]
    Principal(PrincipalCmd),
    /// Extend one of our blessings to another key.
    Bless(BlessArgs),
    /// Manage the blessings we hold.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Manage the roots we recognize.
    #[command(subcommand)]
    Roots(RootsCmd),
    /// Run or administer a discharge service.
    #[command(subcommand)]
    Discharge(DischargeCmd),
    /// Serve or query group definitions.
    #[command(subcommand)]
    Group(GroupCmd),
    /// Run or operate a claimable lock.
    #[command(subcommand)]
    Lock(LockCmd),
    /// Serve methods that echo their arguments, guarded by an ACL.
    Serve(ServeArgs),
    /// Call a method on a service.
    Call(CallArgs),
}

#[derive(Debug, Subcommand)]
pub enum PrincipalCmd {
    /// Create a principal with a fresh key and a self-blessing.
    Create {
        #[arg(long)]
        name: String,
    },
    /// Print the public key and held names.
    Show,
}

#[derive(Debug, Args)]
pub struct BlessArgs {
    /// Public key text of the recipient, or a file containing it.
    #[arg(long = "for")]
    pub recipient: String,
    /// Name components to append, such as `Houseguest/Bob`.
    #[arg(long)]
    pub extension: String,
    /// Caveat in `kind=value` form; repeatable.
    #[arg(long = "caveat")]
    pub caveats: Vec<String>,
    /// Store label of the blessing to extend; the default blessing otherwise.
    #[arg(long)]
    pub from: Option<String>,
    /// Write the blessing here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StoreCmd {
    /// Add a blessing from a file (`-` for stdin).
    Add {
        blessing: PathBuf,
        /// Peers the blessing may be presented to.
        #[arg(long, default_value = "...")]
        peers: String,
        #[arg(long)]
        label: String,
        /// Also present it when serving.
        #[arg(long)]
        default: bool,
        /// Also recognize the blessing's root.
        #[arg(long)]
        add_root: bool,
    },
    /// List held blessings.
    List,
    /// Show which blessings would be presented to a peer.
    Select {
        /// Blessing name of the peer; repeatable.
        #[arg(long = "peer")]
        peers: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RootsCmd {
    /// Recognize a root, given directly or as the root of a blessing file.
    Add {
        #[arg(long, conflicts_with_all = ["name", "key"])]
        from: Option<PathBuf>,
        #[arg(long, requires = "key")]
        name: Option<String>,
        #[arg(long, requires = "name")]
        key: Option<String>,
    },
    /// List recognized roots.
    List,
}

#[derive(Debug, Subcommand)]
pub enum DischargeCmd {
    /// Issue discharges for revocation caveats addressed to our key.
    Serve {
        /// Address to bind; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        #[arg(long)]
        revocations: PathBuf,
        #[arg(long, default_value = "5m", value_parser = humantime::parse_duration)]
        lifetime: Duration,
    },
    /// Add an id to a revocation list.
    Revoke {
        #[arg(long)]
        revocations: PathBuf,
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum GroupCmd {
    /// Serve the groups defined in the given files.
    Serve {
        /// Address to bind; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        /// Group definition file; repeatable.
        #[arg(long = "define", required = true)]
        definitions: Vec<PathBuf>,
        /// Where foreign groups are served.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Ask which prefixes of a name belong to a group.
    Query {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        group: String,
        #[arg(long)]
        name: String,
        /// Over-approximate unreachable groups instead of under.
        #[arg(long)]
        over: bool,
    },
}

#[derive(Debug, Args)]
pub struct LockTarget {
    /// Address of the service, as `host:port`.
    #[arg(long)]
    pub endpoint: String,
    /// Pattern the lock must present a blessing for.
    #[arg(long)]
    pub expect: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum LockCmd {
    /// Run the lock service for this principal.
    Serve {
        /// Address to bind; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        /// Shell command run on each state change with the new state as `$1`.
        #[arg(long)]
        hook: Option<String>,
    },
    /// Name an unclaimed lock and receive its key blessing.
    Claim {
        /// Address of the lock, as `host:port`.
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        name: String,
        /// Pattern the manufacturer blessing must match.
        #[arg(long)]
        expect_manufacturer: Option<String>,
    },
    /// Lock the door.
    Lock(LockTarget),
    /// Unlock the door.
    Unlock(LockTarget),
    /// Print the claim and lock state.
    Status(LockTarget),
    /// Print audit records from a running lock or a local log file.
    Audit {
        #[arg(long, required_unless_present = "log")]
        endpoint: Option<String>,
        #[arg(long, conflicts_with = "endpoint")]
        log: Option<PathBuf>,
        #[arg(long)]
        expect: Option<String>,
        /// RFC 3339 instant or a duration ago, such as `1h`.
        #[arg(long)]
        since: Option<String>,
    },
    /// Allow another pattern on Lock and Unlock.
    AddAcl {
        #[command(flatten)]
        target: LockTarget,
        #[arg(long)]
        pattern: String,
        /// Blessing file whose root the lock should start recognizing.
        #[arg(long)]
        root_from: Option<PathBuf>,
    },
    /// Forget the claim, the lock state and the audit log.
    FactoryReset,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to bind; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: String,
    /// ACL file guarding the connection and every method.
    #[arg(long)]
    pub acl: PathBuf,
    /// Method to serve; repeatable.
    #[arg(long = "method", default_values_t = ["Echo".to_string()])]
    pub methods: Vec<String>,
    /// Where groups named in the ACL are served.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Append an audit record for every call.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CallArgs {
    /// Address of the service, as `host:port`.
    #[arg(long)]
    pub endpoint: String,
    /// Method name, such as `Echo`.
    #[arg(long)]
    pub method: String,
    /// Argument text passed to the method.
    #[arg(long, default_value = "")]
    pub args: String,
    /// Pattern the server must present a blessing for; repeatable.
    #[arg(long = "server")]
    pub server: Vec<String>,
}

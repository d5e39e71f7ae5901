//! Discharge, group and echo services, and the generic client call.

use crate::args::{CallArgs, DischargeCmd, GroupCmd, ServeArgs};
use crate::context::{expect_acl, read_input, usage, Context};
use anyhow::{Context as _, Result};
use bless_core::audit::AuditLog;
use bless_core::groups::{GroupDefinition, GroupResolver, LocalResolver, Mode, RemainderQuery};
use bless_core::{Acl, BlessingName};
use bless_net::discharge::{DischargeService, RevocationList};
use bless_net::group_service::{GroupRegistry, GroupService, RemoteResolver};
use bless_net::server::{CallContext, MethodTable};
use bless_net::{Client, MethodPolicy, Server, ServerConfig, Service, SharedIdentity, TcpNetwork};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Binds, announces the address on stdout's first line, then serves.
fn serve_forever(ctx: &Context, listen: &str, config: ServerConfig, service: Arc<dyn Service>) -> Result<()> {
    let server = Server::bind(listen, config, service).with_context(|| format!("binding {listen}"))?;
    let addr = server.local_addr()?;
    ctx.emit(addr, json!({"listening": addr.to_string()}));
    server.run()?;
    Ok(())
}

fn load_registry(path: &Path) -> Result<GroupRegistry> {
    GroupRegistry::parse(&read_input(path)?).with_context(|| format!("registry {}", path.display()))
}

fn remote_resolver(ctx: &Context, registry: &Path) -> Result<RemoteResolver> {
    Ok(RemoteResolver::new(
        load_registry(registry)?,
        Arc::new(TcpNetwork),
        Arc::new(ctx.identity()?),
        ctx.client_options(None),
    ))
}

pub fn discharge(ctx: &Context, cmd: DischargeCmd) -> Result<()> {
    match cmd {
        DischargeCmd::Serve {
            listen,
            revocations,
            lifetime,
        } => {
            let p = ctx.open()?;
            let lifetime = chrono::Duration::from_std(lifetime).map_err(|e| usage(format!("lifetime: {e}")))?;
            let service = DischargeService::new(p.keys.secret.clone(), ctx.clock())
                .with_lifetime(lifetime)
                .with_revocation(RevocationList::new(revocations));
            let config = ServerConfig::new(SharedIdentity::new(bless_net::Identity::from_principal(p)), ctx.verifier());
            serve_forever(ctx, &listen, config, Arc::new(service))
        }
        DischargeCmd::Revoke { revocations, id } => {
            RevocationList::new(&revocations)
                .revoke(&id)
                .with_context(|| format!("revoking in {}", revocations.display()))?;
            ctx.emit(format_args!("revoked {id}"), json!({"revoked": id}));
            Ok(())
        }
    }
}

fn load_definition(path: &Path) -> Result<GroupDefinition> {
    GroupDefinition::parse(&read_input(path)?).with_context(|| format!("group definition {}", path.display()))
}

pub fn group(ctx: &Context, cmd: GroupCmd) -> Result<()> {
    match cmd {
        GroupCmd::Serve {
            listen,
            definitions,
            registry,
        } => {
            let mut local: LocalResolver = definitions.iter().map(|p| load_definition(p)).collect::<Result<_>>()?;
            if let Some(r) = &registry {
                local = local.with_fallback(Arc::new(remote_resolver(ctx, r)?));
            }
            let config = ServerConfig::new(SharedIdentity::new(ctx.identity()?), ctx.verifier());
            serve_forever(ctx, &listen, config, Arc::new(GroupService::new(local)))
        }
        GroupCmd::Query {
            registry,
            group,
            name,
            over,
        } => {
            let bn: BlessingName = name.parse().map_err(|e| usage(format!("name {name:?}: {e}")))?;
            let mode = if over { Mode::Over } else { Mode::Under };
            let result = remote_resolver(ctx, &registry)?.remainders(&RemainderQuery::new(&group, bn.clone(), mode));
            let prefixes: Vec<String> = result.consumed.iter().map(|&c| bn.prefix(c).to_string()).collect();
            let member = result.consumed.contains(&bn.len());
            ctx.emit(
                format_args!(
                    "member: {}\nmember prefixes: {}\napproximated: {}",
                    if member { "yes" } else { "no" },
                    if prefixes.is_empty() { "-".to_string() } else { prefixes.join(", ") },
                    result.approximated
                ),
                json!({
                    "group": group,
                    "name": name,
                    "member": member,
                    "prefixes": prefixes,
                    "approximated": result.approximated,
                    "unavailable": result.unavailable,
                }),
            );
            Ok(())
        }
    }
}

type EchoHandler = fn(&mut CallContext<'_>, &str, &[u8]) -> Result<Vec<u8>, String>;

fn echo(_ctx: &mut CallContext<'_>, _method: &str, args: &[u8]) -> Result<Vec<u8>, String> {
    Ok(args.to_vec())
}

pub fn serve(ctx: &Context, args: ServeArgs) -> Result<()> {
    let acl = Acl::parse(&read_input(&args.acl)?).with_context(|| format!("ACL {}", args.acl.display()))?;
    for warning in acl.lint() {
        tracing::warn!("{warning}");
    }
    let mut verifier = ctx.verifier();
    if let Some(r) = &args.registry {
        verifier = verifier.with_resolver(Arc::new(remote_resolver(ctx, r)?));
    }
    let mut config = ServerConfig::new(SharedIdentity::new(ctx.identity()?), verifier);
    config.handshake_policy = Some(acl.clone());
    if let Some(path) = &args.audit {
        config.audit = Some(Arc::new(AuditLog::open(path)?));
    }
    let service = MethodTable::<EchoHandler> {
        policies: args
            .methods
            .iter()
            .map(|m| (m.clone(), MethodPolicy::Acl(acl.clone())))
            .collect::<BTreeMap<_, _>>(),
        handler: echo,
    };
    serve_forever(ctx, &args.listen, config, Arc::new(service))
}

pub fn call(ctx: &Context, args: CallArgs) -> Result<()> {
    let identity = ctx.identity()?;
    let opts = ctx.client_options(expect_acl(&args.server)?);
    let mut client = Client::connect(&TcpNetwork, &args.endpoint, &identity, &opts)?;
    let server = client.server().presented_names();
    let outcome = client.call(&args.method, args.args.as_bytes());
    client.close();
    let outcome = outcome?;
    ctx.accept_grants(&outcome.grants, &args.method)?;
    let body = String::from_utf8_lossy(&outcome.body);
    ctx.emit(&body, json!({"method": args.method, "server": server, "body": body}));
    Ok(())
}

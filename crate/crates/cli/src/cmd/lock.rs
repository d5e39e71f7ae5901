//! The lock service and its client operations.

use crate::args::{LockCmd, LockTarget};
use crate::context::{expect_acl, parse_pattern, read_blessing, usage, Context};
use anyhow::{Context as _, Result};
use bless_core::audit::{read_log, AuditRecord};
use bless_core::{Decode, Encode};
use bless_net::lockd::{
    audit_since_args, bind_lock, decode_audit_reply, factory_reset, AddAclArgs, LockStatus, ADD_ACL, AUDIT_LOG, CLAIM,
    LOCK, STATUS, UNLOCK,
};
use bless_net::{CallOutcome, Client, TcpNetwork};
use chrono::{DateTime, Utc};
use serde_json::json;

fn call(ctx: &Context, endpoint: &str, expect: Option<&str>, method: &str, args: &[u8]) -> Result<CallOutcome> {
    let expect: Vec<String> = expect.into_iter().map(String::from).collect();
    let identity = ctx.identity()?;
    let mut client = Client::connect(&TcpNetwork, endpoint, &identity, &ctx.client_options(expect_acl(&expect)?))?;
    let out = client.call(method, args);
    client.close();
    Ok(out?)
}

fn print_status(ctx: &Context, body: &[u8]) -> Result<()> {
    let st = LockStatus::from_canonical_bytes(body)?;
    ctx.emit(&st, json!({"claimed": st.name, "state": st.physical.to_string()}));
    Ok(())
}

fn simple(ctx: &Context, t: &LockTarget, method: &str) -> Result<()> {
    let out = call(ctx, &t.endpoint, t.expect.as_deref(), method, b"")?;
    print_status(ctx, &out.body)
}

fn parse_since(ctx: &Context, text: Option<&str>) -> Result<DateTime<Utc>> {
    let Some(text) = text else {
        return Ok(DateTime::<Utc>::UNIX_EPOCH);
    };
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&Utc));
    }
    let ago = humantime::parse_duration(text).map_err(|e| usage(format!("since {text:?}: {e}")))?;
    let ago = chrono::Duration::from_std(ago).map_err(|e| usage(e.to_string()))?;
    Ok(ctx.now() - ago)
}

fn print_record(ctx: &Context, r: &AuditRecord) {
    ctx.emit(
        r,
        json!({
            "time": r.time.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            "method": r.method,
            "peer_names": r.peer_names,
            "decision": r.decision.to_string(),
        }),
    );
}

pub fn lock(ctx: &Context, cmd: LockCmd) -> Result<()> {
    match cmd {
        LockCmd::Serve { listen, hook } => {
            let server = bind_lock(ctx.dir()?, &listen, ctx.verifier(), hook)?;
            let addr = server.local_addr()?;
            ctx.emit(addr, json!({"listening": addr.to_string()}));
            server.run()?;
            Ok(())
        }
        LockCmd::Claim {
            endpoint,
            name,
            expect_manufacturer,
        } => {
            let out = call(ctx, &endpoint, expect_manufacturer.as_deref(), CLAIM, name.as_bytes())?;
            ctx.emit(
                format_args!("claimed as {name}; key {}", String::from_utf8_lossy(&out.body)),
                json!({"claimed": name, "key": String::from_utf8_lossy(&out.body)}),
            );
            ctx.accept_grants(&out.grants, &name)
        }
        LockCmd::Lock(t) => simple(ctx, &t, LOCK),
        LockCmd::Unlock(t) => simple(ctx, &t, UNLOCK),
        LockCmd::Status(t) => simple(ctx, &t, STATUS),
        LockCmd::Audit {
            endpoint,
            log,
            expect,
            since,
        } => {
            let since = parse_since(ctx, since.as_deref())?;
            let records = match (endpoint, log) {
                (Some(ep), _) => decode_audit_reply(&call(ctx, &ep, expect.as_deref(), AUDIT_LOG, &audit_since_args(since))?.body)?,
                (None, Some(path)) => read_log(&path)?.into_iter().filter(|r| r.time >= since).collect(),
                (None, None) => return Err(usage("pass --endpoint or --log")),
            };
            for r in &records {
                print_record(ctx, r);
            }
            Ok(())
        }
        LockCmd::AddAcl {
            target,
            pattern,
            root_from,
        } => {
            let args = AddAclArgs {
                pattern: parse_pattern(&pattern)?,
                root: root_from.as_deref().map(read_blessing).transpose()?.map(|b| b.root()),
            };
            call(ctx, &target.endpoint, target.expect.as_deref(), ADD_ACL, &args.to_canonical_bytes())?;
            ctx.emit(format_args!("allowed {pattern}"), json!({"allowed": pattern}));
            Ok(())
        }
        LockCmd::FactoryReset => {
            let dir = ctx.dir()?;
            if !ctx.confirmed("discard the claim, lock state and audit log?")? {
                return Err(usage("factory reset not confirmed; pass --yes"));
            }
            factory_reset(dir).with_context(|| format!("resetting {}", dir.display()))?;
            ctx.emit("reset", json!({"reset": dir.display().to_string()}));
            Ok(())
        }
    }
}

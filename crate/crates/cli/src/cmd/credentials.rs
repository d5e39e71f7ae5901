//! Local principal, blessing, store and root management.

use crate::args::{BlessArgs, PrincipalCmd, RootsCmd, StoreCmd};
use crate::context::{entry_json, parse_pattern, read_blessing, usage, Context};
use anyhow::{Context as _, Result};
use bless_core::caveat_text::parse_caveat;
use bless_core::principal::Principal;
use bless_core::{bless, BlessingName, PublicKey, Root};
use serde_json::json;
use std::path::Path;

pub fn principal(ctx: &Context, cmd: PrincipalCmd) -> Result<()> {
    match cmd {
        PrincipalCmd::Create { name } => {
            let dir = ctx.dir()?;
            let p = Principal::create(dir, &name, ctx.now())?;
            ctx.emit(
                p.keys.public.to_text(),
                json!({"principal": dir.display().to_string(), "name": name, "public_key": p.keys.public.to_text()}),
            );
        }
        PrincipalCmd::Show => {
            let p = ctx.open()?;
            let default = p.store.default_blessing().map(|b| b.full_name());
            let names: Vec<String> = p.store.entries().iter().map(|e| e.blessing.full_name()).collect();
            ctx.emit(
                format_args!(
                    "public key: {}\ndefault: {}\nnames: {}",
                    p.keys.public.to_text(),
                    default.as_deref().unwrap_or("-"),
                    names.join(", ")
                ),
                json!({"public_key": p.keys.public.to_text(), "default": default, "names": names}),
            );
        }
    }
    Ok(())
}

fn recipient_key(text: &str) -> Result<PublicKey> {
    let path = Path::new(text);
    let text = if path.is_file() {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        text.to_string()
    };
    PublicKey::from_text(text.trim()).map_err(|e| usage(format!("recipient key: {e}")))
}

pub fn bless_cmd(ctx: &Context, args: BlessArgs) -> Result<()> {
    let p = ctx.open()?;
    let key = recipient_key(&args.recipient)?;
    let from = match &args.from {
        Some(label) => p
            .store
            .by_label(label)
            .map(|e| e.blessing.clone())
            .ok_or_else(|| anyhow::anyhow!("no blessing labelled {label:?}"))?,
        None => p
            .store
            .default_blessing()
            .cloned()
            .ok_or_else(|| anyhow::anyhow!("no default blessing; pass --from"))?,
    };
    let now = ctx.now();
    let caveats = args
        .caveats
        .iter()
        .map(|c| parse_caveat(c, now).map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let b = bless(&key, &p.keys.secret, &from, &args.extension, caveats)?;
    let text = b.to_text();
    match &args.out {
        Some(path) => {
            std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
            ctx.emit(b.full_name(), json!({"name": b.full_name(), "file": path.display().to_string()}));
        }
        None => ctx.emit(&text, json!({"name": b.full_name(), "blessing": text})),
    }
    Ok(())
}

pub fn store(ctx: &Context, cmd: StoreCmd) -> Result<()> {
    match cmd {
        StoreCmd::Add {
            blessing,
            peers,
            label,
            default,
            add_root,
        } => {
            let b = read_blessing(&blessing)?;
            let peers = parse_pattern(&peers)?;
            let now = ctx.now();
            let mut p = ctx.open()?;
            p.update(|p| {
                p.store.add(b.clone(), peers.clone(), &label, now)?;
                if default {
                    p.store.set_default(Some(b.clone()))?;
                }
                if add_root {
                    p.roots.add(b.root());
                }
                Ok(())
            })?;
            ctx.emit(
                format_args!("{label}: {} for {peers}", b.full_name()),
                json!({"label": label, "name": b.full_name(), "peers": peers.to_string()}),
            );
        }
        StoreCmd::List => {
            let p = ctx.open()?;
            let default = p.store.default_blessing();
            for e in p.store.entries() {
                let is_default = default == Some(&e.blessing);
                ctx.emit(
                    format_args!(
                        "{}{}\t{}\tpeers {}",
                        if is_default { "* " } else { "  " },
                        e.label,
                        e.blessing.full_name(),
                        e.peer_pattern
                    ),
                    entry_json(e, is_default),
                );
            }
        }
        StoreCmd::Select { peers } => {
            let names = peers
                .iter()
                .map(|n| n.parse::<BlessingName>().map_err(|e| usage(format!("peer {n:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let p = ctx.open()?;
            for b in p.store.select_for_peer(&names) {
                ctx.emit(b.full_name(), json!({"name": b.full_name()}));
            }
        }
    }
    Ok(())
}

pub fn roots(ctx: &Context, cmd: RootsCmd) -> Result<()> {
    match cmd {
        RootsCmd::Add { from, name, key } => {
            let root = match (from, name, key) {
                (Some(path), _, _) => read_blessing(&path)?.root(),
                (None, Some(name), Some(key)) => Root {
                    name,
                    public_key: PublicKey::from_text(key.trim()).map_err(|e| usage(format!("key: {e}")))?,
                },
                _ => return Err(usage("pass --from, or --name with --key")),
            };
            let mut p = ctx.open()?;
            let added = p.add_root(root.clone())?;
            ctx.emit(
                format_args!("{} {} {}", if added { "added" } else { "already present" }, root.name, root.public_key.to_text()),
                json!({"name": root.name, "public_key": root.public_key.to_text(), "added": added}),
            );
        }
        RootsCmd::List => {
            let p = ctx.open()?;
            for r in p.roots.iter() {
                ctx.emit(
                    format_args!("{}\t{}", r.name, r.public_key.to_text()),
                    json!({"name": r.name, "public_key": r.public_key.to_text()}),
                );
            }
        }
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};

use bioledger_core::biohash::{self, BioHashModel, DevSet};
use bioledger_core::chain::{
    convert, decode_i32_be, encode_i32_be, estimate_storage_gas, Direction, GasReceipt,
    SimulatedChain, TxOp,
};
use bioledger_core::evaluation::{
    curve_table, protection_report_table, protection_table, size_sweep,
};
use bioledger_core::features::{
    load_feature_table_auto, make_pairs, synth_dataset, to_fixed_point, write_feature_table,
    Dataset, FeatureVector, PairProtocol, SyntheticSpec,
};
use bioledger_core::matcher::{fixedpoint_euclidean, hamming};
use bioledger_core::storage::SchemeKind;
use bioledger_core::table::{self, Table};
use bioledger_core::{BitString, Error};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::state::{self, Enrollment, State};
use crate::{print_receipt, CliError, Command, PairArgs, ReportArgs};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("E_IO", format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Fixed ten decimals with trailing zeros dropped.
fn money(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let text = read_text(path)?;
    load_feature_table_auto(text.as_bytes())
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

fn dataset_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.dataset.clone()).ok_or_else(|| {
        CliError::new(
            "E_CONFIG",
            "no dataset given (--dataset or `dataset` in the config)",
        )
    })
}

/// A file holding exactly one sample row.
fn read_sample(path: &Path) -> Result<FeatureVector, CliError> {
    let text = read_text(path)?;
    let rows = table::read_table(text.as_bytes(), false)?.rows.len();
    match rows {
        0 => Err(CliError::new(
            "E_PAYLOAD",
            format!("{}: {}", path.display(), Error::EmptyPayload),
        )),
        1 => Ok(load_feature_table_auto(text.as_bytes())?.samples()[0].clone()),
        n => Err(CliError::new(
            "E_PROTOCOL",
            format!("{}: expected one sample, found {n}", path.display()),
        )),
    }
}

fn load_model(path: &Path) -> Result<BioHashModel, CliError> {
    let text = read_text(path)?;
    BioHashModel::from_json(&text)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

/// Samples up to the requested pair counts.
fn sample_pairs(ds: &Dataset, args: &PairArgs, seed: u64) -> Result<PairProtocol, CliError> {
    let n = ds.len();
    let mut per_subject = std::collections::HashMap::<&str, usize>::new();
    for s in ds.samples() {
        *per_subject.entry(s.subject_id.as_str()).or_default() += 1;
    }
    let genuine: usize = per_subject.values().map(|g| g * (g - 1) / 2).sum();
    let impostor = n * n.saturating_sub(1) / 2 - genuine;
    Ok(make_pairs(
        ds,
        args.genuine.min(genuine),
        args.impostor.min(impostor),
        seed,
    )?)
}

fn emit_report(
    report: &ReportArgs,
    table: &Table,
    summary: serde_json::Value,
) -> Result<(), CliError> {
    let text = table::to_string(table);
    let summary = serde_json::to_string_pretty(&summary).expect("summary is plain JSON");
    match &report.out {
        Some(path) => {
            write_file(path, &text)?;
            let json_path = path.with_extension("json");
            write_file(&json_path, &summary)?;
            println!("{summary}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn dispatch(cfg: RunConfig, command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            classes,
            per_class,
            dim,
            intra,
            inter,
            out,
        } => {
            let ds = synth_dataset(&SyntheticSpec {
                n_classes: classes,
                samples_per_class: per_class,
                dimension: dim,
                intra_class_spread: intra,
                inter_class_spread: inter,
                seed: cfg.seed,
            })?;
            let mut buf = Vec::new();
            write_feature_table(&mut buf, &ds).map_err(|e| io_err(&out, e))?;
            write_file(&out, std::str::from_utf8(&buf).expect("utf-8 table"))?;
            println!(
                "samples={} dim={} path={}",
                ds.len(),
                ds.dim(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            dataset,
            out,
            theta,
            q,
            m,
            target_d,
            pairs,
        } => {
            let mut cfg = cfg;
            cfg.theta = theta.unwrap_or(cfg.theta);
            cfg.q = q.unwrap_or(cfg.q);
            cfg.m = m.unwrap_or(cfg.m);
            cfg.target_d = target_d.or(cfg.target_d);
            let ds = read_dataset(&dataset_path(dataset, &cfg)?)?;
            let config = cfg.biohash(ds.dim())?;
            let pairs = sample_pairs(&ds, &pairs, cfg.seed)?;
            let model = biohash::train_model(&DevSet::new(ds, pairs)?, &config, cfg.seed)?;
            let path = out.unwrap_or_else(|| cfg.model_path());
            write_file(&path, &model.to_json()?)?;
            println!(
                "bits={} subsets={} theta={} dev_eer={} dev_threshold={} model_id={} path={}",
                model.output_len(),
                model.plan().len(),
                config.theta,
                model.dev_eer(),
                model.dev_threshold(),
                model.model_id(),
                path.display()
            );
            Ok(())
        }
        Command::Enroll {
            user,
            sample,
            model,
            unprotected,
        } => {
            let x = read_sample(&sample)?;
            let (payload, entry) = if unprotected {
                let scaled = to_fixed_point(&x.values, cfg.scale);
                let entry = Enrollment::FixedPoint {
                    scale: cfg.scale,
                    dim: x.len(),
                };
                (encode_i32_be(&scaled)?, entry)
            } else {
                let model = load_model(&model.unwrap_or_else(|| cfg.model_path()))?;
                let bits = model.hash(&x)?.bits;
                let entry = Enrollment::Protected {
                    model_id: model.model_id().to_string(),
                    bits: bits.len(),
                };
                (bits.to_bytes(), entry)
            };
            let mut st = State::open(&cfg)?;
            st.ensure_ready()?;
            let r = st.enroll(user, &payload, b"", entry)?;
            st.save()?;
            print_receipt("enroll", &r);
            println!("user={user} scheme={} bytes={}", cfg.scheme, payload.len());
            Ok(())
        }
        Command::Verify {
            user,
            probe,
            model,
            threshold,
        } => verify(&cfg, user, &probe, model, threshold),
        Command::Delete { user } => {
            let mut st = State::open(&cfg)?;
            let r = st.remove(user)?;
            st.save()?;
            print_receipt("delete", &r);
            Ok(())
        }
        Command::Evaluate {
            dataset,
            dev_dataset,
            thetas,
            pairs,
            report,
        } => {
            let eval = read_dataset(&dataset_path(dataset, &cfg)?)?;
            let dev_ds = match dev_dataset {
                Some(p) => read_dataset(&p)?,
                None => eval.clone(),
            };
            let dev_pairs = sample_pairs(&dev_ds, &pairs, cfg.seed.wrapping_add(1))?;
            let eval_pairs = sample_pairs(&eval, &pairs, cfg.seed)?;
            let mut configs = Vec::with_capacity(thetas.len());
            let mut base = None;
            for &theta in &thetas {
                let c = RunConfig {
                    theta,
                    ..cfg.clone()
                }
                .biohash(eval.dim())?;
                configs.push((c.theta, c.target_d));
                base.get_or_insert(c);
            }
            let base = match base {
                Some(b) => b,
                None => cfg.biohash(eval.dim())?,
            };
            let dev = DevSet::new(dev_ds, dev_pairs)?;
            let rows = protection_table(&dev, &eval, &eval_pairs, &base, &configs, cfg.seed)?;
            let summary = json!({
                "seed": cfg.seed,
                "genuine_pairs": eval_pairs.genuine().count(),
                "impostor_pairs": eval_pairs.impostor().count(),
                "rows": rows.iter().map(|r| json!({
                    "case": r.case,
                    "theta": r.theta,
                    "features": r.feature_count,
                    "eer": r.eer,
                })).collect::<Vec<_>>(),
            });
            emit_report(&report, &protection_report_table(&rows), summary)
        }
        Command::Sweep {
            dataset,
            sizes,
            trials,
            pairs,
            report,
        } => {
            let ds = read_dataset(&dataset_path(dataset, &cfg)?)?;
            let pairs = sample_pairs(&ds, &pairs, cfg.seed)?;
            let curve = size_sweep(&ds, &pairs, &sizes, trials, cfg.seed)?;
            let summary = json!({
                "seed": cfg.seed,
                "trials": trials,
                "points": curve.iter().map(|p| json!({
                    "size": p.size,
                    "mean_eer": p.mean_eer,
                    "mean_accuracy": p.mean_accuracy,
                })).collect::<Vec<_>>(),
            });
            emit_report(&report, &curve_table(&curve), summary)
        }
        Command::CostReport { users, report } => cost_report(&cfg, users, &report),
        Command::ChainLog { json } => {
            let chain = state::read_chain(&cfg)?;
            if json {
                println!("{}", chain.to_json()?);
                return Ok(());
            }
            let mut t = Table::new(
                ["tx", "op", "user", "gas", "eth", "usd", "latency_s"]
                    .map(String::from)
                    .to_vec(),
            );
            for (i, e) in chain.state.tx_log.iter().enumerate() {
                let op = match e.op {
                    TxOp::Deploy => "deploy",
                    TxOp::Create => "create",
                    TxOp::Modify => "modify",
                    TxOp::Delete => "delete",
                    TxOp::MatchEuclidean => "match_euclidean",
                };
                t.push_row([
                    i.to_string(),
                    op.to_string(),
                    e.user.map_or("-".into(), |u| u.to_string()),
                    e.receipt.gas_used.to_string(),
                    money(e.receipt.eth_cost),
                    money(e.receipt.usd_cost),
                    format!("{:.3}", e.receipt.latency_s),
                ]);
            }
            print!("{}", table::to_string(&t));
            Ok(())
        }
    }
}

fn verify(
    cfg: &RunConfig,
    user: u64,
    probe: &Path,
    model: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<(), CliError> {
    let x = read_sample(probe)?;
    let mut st = State::open(cfg)?;
    let entry = st.enrollment(user)?.clone();
    if !st.vault.verify_integrity(&st.chain, user)? {
        println!("user={user} verdict=tamper");
        return Err(CliError::new(
            "E_TAMPER",
            format!("stored template for user {user} fails its integrity check"),
        ));
    }
    let (score, threshold, gas) = match entry {
        Enrollment::Protected { model_id, bits } => {
            let model = load_model(&model.unwrap_or_else(|| cfg.model_path()))?;
            if model.model_id() != model_id {
                return Err(CliError::new(
                    "E_CONFIG",
                    format!(
                        "user {user} was enrolled with model {model_id}, not {}",
                        model.model_id()
                    ),
                ));
            }
            let probe_bits = model.hash(&x)?.bits;
            let distance = if st.vault.scheme() == SchemeKind::FullOnChain {
                st.chain.onchain_hamming(user, &probe_bits)?.0
            } else {
                let stored = BitString::from_bytes(&st.vault.load(&st.chain, user)?, bits)?;
                hamming(&stored, &probe_bits)?
            };
            (
                f64::from(distance),
                threshold.unwrap_or(model.dev_threshold()),
                0,
            )
        }
        Enrollment::FixedPoint { scale, .. } => {
            let threshold = threshold.ok_or_else(|| {
                CliError::new("E_CONFIG", "unprotected templates need --threshold")
            })?;
            let scaled = to_fixed_point(&x.values, scale);
            let fp = bioledger_core::matcher::FixedPointConfig {
                scale,
                ..cfg.fixed_point()
            };
            let (distance, gas) = if st.vault.scheme() == SchemeKind::FullOnChain {
                let (d, r) = st.chain.onchain_euclidean(user, &scaled, &fp)?;
                st.save()?;
                (d, r.gas_used)
            } else {
                let stored = decode_i32_be(&st.vault.load(&st.chain, user)?);
                (fixedpoint_euclidean(&stored, &scaled, &fp)?, 0)
            };
            (distance as f64 / scale as f64, threshold, gas)
        }
    };
    let decision = if score <= threshold {
        "accept"
    } else {
        "reject"
    };
    println!("user={user} score={score} threshold={threshold} gas={gas} decision={decision}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct CostRow {
    section: &'static str,
    template: String,
    bytes: usize,
    operation: String,
    gas: u64,
    eth: f64,
    usd: f64,
    latency_s: Option<f64>,
}

fn cost_report(cfg: &RunConfig, users: u64, report: &ReportArgs) -> Result<(), CliError> {
    let mut chain = SimulatedChain::new(cfg.schedule.clone(), cfg.chain_config()?)?;
    let prices = cfg.chain_config()?;
    let mut rows = Vec::new();
    let mut push = |section, template: &str, bytes, operation: &str, gas, latency| {
        let (eth, usd) = convert(gas, &prices);
        rows.push(CostRow {
            section,
            template: template.to_string(),
            bytes,
            operation: operation.to_string(),
            gas,
            eth,
            usd,
            latency_s: latency,
        });
    };
    for (op, dir) in [("write", Direction::Write), ("read", Direction::Read)] {
        push(
            "storage",
            "-",
            1024,
            op,
            estimate_storage_gas(1024, dir, &cfg.schedule),
            None,
        );
    }
    let receipt_row = |r: &GasReceipt| (r.gas_used, Some(r.latency_s));
    let (g, l) = receipt_row(&chain.deploy()?);
    push("ledger", "contract", 0, "deploy", g, l);
    let templates: [(&str, usize); 6] = [
        ("signature", 6174),
        ("face", 400),
        ("hash", 32),
        ("protected-75", 10),
        ("protected-500", 63),
        ("protected-1500", 188),
    ];
    for (user, (name, bytes)) in (1u64..).zip(templates) {
        let payload = vec![0xa5u8; bytes];
        let (g, l) = receipt_row(&chain.create(user, &payload, b"")?);
        push("ledger", name, bytes, "create", g, l);
        let (g, l) = receipt_row(&chain.modify(user, &payload)?);
        push("ledger", name, bytes, "modify", g, l);
        let (g, l) = receipt_row(&chain.delete(user)?);
        push("ledger", name, bytes, "delete", g, l);
    }
    let face: Vec<i64> = (0..100).collect();
    chain.create(100, &encode_i32_be(&face)?, b"")?;
    let (_, r) = chain.onchain_euclidean(100, &face, &cfg.fixed_point())?;
    push(
        "matching",
        "face",
        400,
        "euclidean",
        r.gas_used,
        Some(r.latency_s),
    );
    push("matching", "protected", 0, "hamming", 0, None);
    let total = r
        .gas_used
        .checked_mul(users)
        .ok_or_else(|| CliError::new("E_OVERFLOW", "matching total exceeds u64 gas"))?;
    push(
        "matching",
        "face",
        400,
        &format!("euclidean-x{users}"),
        total,
        None,
    );

    let mut t = Table::new(
        [
            "section",
            "template",
            "bytes",
            "operation",
            "gas",
            "eth",
            "usd",
            "latency_s",
        ]
        .map(String::from)
        .to_vec(),
    );
    for r in &rows {
        t.push_row([
            r.section.to_string(),
            r.template.clone(),
            r.bytes.to_string(),
            r.operation.clone(),
            r.gas.to_string(),
            money(r.eth),
            money(r.usd),
            r.latency_s.map_or("-".into(), |l| format!("{l:.3}")),
        ]);
    }
    let summary = json!({
        "gas_price_gwei": cfg.gas_price,
        "eth_usd": cfg.eth_usd,
        "rows": rows,
    });
    emit_report(report, &t, summary)
}

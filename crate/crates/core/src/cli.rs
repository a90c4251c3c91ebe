//! The `redlab` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::adversary::{attack_btt, attack_linear, attack_positive, verify_attack, AdversaryError, AttackResult};
use crate::bitseq::{direct_sum, rule_sum, split_seq_list, ColumnRule};
use crate::formula::{find_control, Formula};
use crate::reduction::{classify_reduction, greedy_disjoint, Reduction};
use crate::seqfun::{f_inverse, g_from_f, measure, pullback, selection_map, SeqFun, SigmaLevel};
use crate::switcher::{builtin_estimator, run_switcher, Alpha, PiMap};

#[derive(Debug, Parser)]
#[command(name = "redlab", version, about = "Truth-table reductions, oracle attacks and column switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackClass {
    Positive,
    Linear,
    Btt,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Write machine-readable output here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a reduction family over [0, horizon).
    Classify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 256)]
        horizon: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Build and verify an oracle on which the reduction's output is not random.
    Attack {
        #[arg(value_enum)]
        class: AttackClass,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 256)]
        horizon: u64,
        #[arg(long, default_value_t = 64)]
        window: u64,
        #[arg(long, default_value_t = 2)]
        columns: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Width bound for btt; defaults to the declared bound, else the
        /// largest width seen below the horizon.
        #[arg(long)]
        bound: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the column switcher and print its trace as JSON lines.
    Switch {
        /// Comma-separated sequence literals, one per column.
        #[arg(long, conflicts_with = "prng_family")]
        columns: Option<String>,
        /// Use infinitely many columns, column i = prng:(seed + i).
        #[arg(long)]
        prng_family: Option<u64>,
        /// Number of columns, or "omega"; defaults to the column count.
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long, default_value = "lz78")]
        estimator: String,
        #[arg(long, default_value_t = 1024)]
        stages: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy search for pairwise disjoint query sets.
    Greedy {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 256)]
        horizon: u64,
        #[arg(long, default_value_t = 64)]
        window: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Find a setting of some variables that fixes a formula's value.
    Control {
        #[arg(long)]
        formula: String,
        /// Comma-separated variable indices.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Build g from a table of f, with f-inverse lookups.
    Seqfun {
        /// Comma-separated values f(0), f(1), ...
        #[arg(long, value_delimiter = ',', required = true)]
        table: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        inverse: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Pull a class file back along a strictly increasing map h.
    Pullback {
        #[arg(long)]
        class: PathBuf,
        /// Comma-separated values h(0), h(1), ...
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Verification(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn emit(&mut self, common: &Common, text: &str) -> Outcome {
        let mut body = text.to_string();
        if !body.ends_with('\n') {
            body.push('\n');
        }
        match &common.output {
            Some(path) => fs::write(path, body).map_err(|e| usage(format!("{}: {e}", path.display()))),
            None => self.out.write_all(body.as_bytes()).map_err(usage),
        }
    }

    fn note(&mut self, line: &str) {
        let _ = writeln!(self.err, "{line}");
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_reduction(path: &PathBuf) -> Result<Reduction, Failure> {
    Reduction::parse(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("plain json")
}

/// Runs one invocation, writing to the given streams; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let mut io = Io { out, err };
    match dispatch(cli.command, &mut io) {
        Ok(()) => 0,
        Err(Failure::Verification(msg)) => {
            io.note(&format!("error: {msg}"));
            1
        }
        Err(Failure::Usage(msg)) => {
            io.note(&format!("error: {msg}"));
            2
        }
    }
}

fn dispatch(cmd: Command, io: &mut Io<'_>) -> Outcome {
    match cmd {
        Command::Classify { spec, horizon, common } => {
            let r = load_reduction(&spec)?;
            let rep = classify_reduction(&r, horizon).map_err(usage)?;
            let text = match common.format.unwrap_or(Format::Text) {
                Format::Text => rep.to_string(),
                Format::Json => pretty(&serde_json::to_value(&rep).expect("report")),
            };
            io.emit(&common, &text)
        }
        Command::Attack { class, spec, horizon, window, columns, seed, bound, common } => {
            let r = load_reduction(&spec)?;
            let res = match class {
                AttackClass::Positive => attack_positive(&r, columns, horizon, seed),
                AttackClass::Linear => attack_linear(&r, columns, horizon, seed),
                AttackClass::Btt => {
                    let c = match bound.or(r.declared_bound()) {
                        Some(c) => c,
                        None => classify_reduction(&r, horizon).map_err(usage)?.max_width.max(1),
                    };
                    attack_btt(&r, c, columns, horizon, window, seed)
                }
            };
            let res = res.map_err(|e| match e {
                AdversaryError::NoWitness { .. }
                | AdversaryError::ConstructionMismatch { .. }
                | AdversaryError::FalseStall { .. } => Failure::Verification(e.to_string()),
                other => usage(other),
            })?;
            report_attack(&r, &res, horizon, &common, io)
        }
        Command::Switch { columns, prng_family, alpha, estimator, stages, common } => {
            let est = builtin_estimator(&estimator).map_err(usage)?;
            let (s, count) = match (columns, prng_family) {
                (Some(list), None) => {
                    let cols = split_seq_list(&list).map_err(usage)?;
                    let n = Alpha::Finite(cols.len() as u64);
                    (direct_sum(cols), n)
                }
                (None, Some(seed)) => (rule_sum(ColumnRule::PrngFamily { seed }), Alpha::Omega),
                _ => return Err(usage("give --columns or --prng-family")),
            };
            let alpha = match alpha {
                Some(a) => a.parse::<Alpha>().map_err(usage)?,
                None => count,
            };
            let run = run_switcher(&s, alpha, est.as_ref(), stages, PiMap::default_for(alpha)).map_err(usage)?;
            let text = match common.format.unwrap_or(Format::Json) {
                Format::Json => run.to_jsonl(),
                Format::Text => {
                    let mut lines = vec![format!("pi = {}, estimator = {}", run.pi, run.estimator)];
                    lines.push("s\tn\tcol\tc\ttrig\tbit".to_string());
                    for r in &run.trace {
                        let trig = r.trig_n.map_or("-".to_string(), |n| format!("n={n}"));
                        lines.push(format!("{}\t{}\t{}\t{}\t{}\t{}", r.s, r.n, r.col, r.c, trig, u8::from(r.bit)));
                    }
                    lines.join("\n")
                }
            };
            io.note(&format!("{} stages, {} triggers", run.trace.len(), run.triggers().count()));
            io.emit(&common, &text)
        }
        Command::Greedy { spec, horizon, window, common } => {
            let r = load_reduction(&spec)?;
            let g = greedy_disjoint(&r, horizon, window).map_err(usage)?;
            let text = match common.format.unwrap_or(Format::Json) {
                Format::Json => pretty(&serde_json::to_value(&g).expect("outcome")),
                Format::Text => {
                    let sel: Vec<String> = g.selected.iter().map(u64::to_string).collect();
                    let mut t = format!("selected={}\nstalled={}\nwindow_used={}", sel.join(","), g.stalled, g.window_used);
                    if g.stalled {
                        let h: Vec<String> = g.h_set().iter().map(u64::to_string).collect();
                        t.push_str(&format!("\nh={}", h.join(",")));
                    }
                    t
                }
            };
            io.emit(&common, &text)
        }
        Command::Control { formula, vars, common } => {
            let f = Formula::parse(&formula).map_err(usage)?;
            let cert = find_control(&f, &vars).map_err(usage)?;
            let text = match (common.format.unwrap_or(Format::Json), &cert) {
                (Format::Json, _) => pretty(&serde_json::to_value(&cert).expect("certificate")),
                (Format::Text, None) => "no controlling setting".to_string(),
                (Format::Text, Some(c)) => {
                    let s: Vec<String> = c.setting.iter().map(|(v, b)| format!("v({v})={}", u8::from(b))).collect();
                    format!("{} forces {}", s.join(" "), u8::from(c.forced_value))
                }
            };
            io.emit(&common, &text)
        }
        Command::Seqfun { table, count, inverse, common } => {
            let f = SeqFun::new(table);
            let g = g_from_f(&f, count);
            if g.truncated {
                io.note(&format!("table exhausted after {} of {count} values", g.values.len()));
            }
            let v = json!({
                "g": g.values,
                "positions": g.positions,
                "truncated": g.truncated,
                "selection": selection_map(&f, g.values.len()),
                "inverse": inverse.map(|x| json!({"value": x, "index": f_inverse(&f, x)})),
            });
            let text = match common.format.unwrap_or(Format::Json) {
                Format::Json => pretty(&v),
                Format::Text => {
                    let gs: Vec<String> = g.values.iter().map(u64::to_string).collect();
                    let mut t = format!("g={}", gs.join(","));
                    if let Some(x) = inverse {
                        t.push_str(&format!("\nf_inverse({x})={}", f_inverse(&f, x).map_or("none".into(), |m| m.to_string())));
                    }
                    t
                }
            };
            io.emit(&common, &text)
        }
        Command::Pullback { class, h, common } => {
            let u = SigmaLevel::from_json(&read(&class)?).map_err(usage)?;
            let v = pullback(&u, &h).map_err(usage)?;
            let (mu, mv) = (measure(&u).map_err(usage)?, measure(&v).map_err(usage)?);
            io.note(&format!("measure U = {mu}, measure V = {mv}"));
            let text = match common.format.unwrap_or(Format::Json) {
                Format::Json => v.to_json(),
                Format::Text => format!("level={}\nconstraints={}\nmeasure={mv}", v.level, v.constraints.len()),
            };
            io.emit(&common, &text)?;
            if mv > mu {
                return Err(Failure::Verification(format!("pullback measure {mv} exceeds {mu}")));
            }
            Ok(())
        }
    }
}

fn report_attack(r: &Reduction, res: &AttackResult, horizon: u64, common: &Common, io: &mut Io<'_>) -> Outcome {
    let rep = verify_attack(r, res, horizon);
    let bad: std::collections::BTreeSet<u64> = rep.mismatches.iter().map(|m| m.0).collect();
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut v = res.to_json();
            v["verification"] = serde_json::to_value(&rep).expect("report");
            pretty(&v)
        }
        Format::Text => {
            let mut lines = vec![format!("case: {}", res.case_taken)];
            lines.extend(res.oracle_description.iter().cloned());
            lines.push(format!(
                "witness: {} inputs claim value {}",
                res.witness.sample.len(),
                u8::from(res.witness.claimed_value)
            ));
            lines.join("\n")
        }
    };
    io.emit(common, &text)?;
    io.note(&format!("verified {}/{}", rep.checked - bad.len() as u64, rep.checked));
    if !rep.oracle_shape_ok {
        io.note("random column differs from its stream outside declared patches");
    }
    if rep.passed {
        Ok(())
    } else {
        Err(Failure::Verification("attack did not verify".into()))
    }
}

//! `topo` subcommands. Each writes its report to the given writer and
//! returns whether the command's check passed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use antitangle_core::braid::{confluence_oracle, simplify, BraidWord, ConfluenceVerdict, Rule};
use antitangle_sim::config::{Density, RunConfig};
use antitangle_sim::harness::{run, write_curve};
use antitangle_sim::tasks::{validate_schedule, Schedule, TraceInterval};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

/// Words up to this length also get an exhaustive confluence check.
const ORACLE_MAX_LEN: usize = 12;
const ORACLE_NODES: usize = 200_000;

#[derive(Debug, Parser)]
#[command(name = "topo", version, about = "Topology-aware multi-arm coordination simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a scenario and write metrics.json, curve.csv, trace.jsonl
    /// and per-seed checkpoints.
    Run {
        /// low | med | high (default low, or the config file's scenario).
        #[arg(long)]
        scenario: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Episodes per seed (defaults to the scenario preset).
        #[arg(long)]
        episodes: Option<usize>,
        /// Component to switch off (dual_replay, safety_layer,
        /// hierarchical_control); repeatable.
        #[arg(long)]
        ablate: Vec<String>,
        /// TOML file overriding any configuration field.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Suppress per-episode progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Simplify a braid word such as "s1 s2 S1" and show the rewrite.
    DebugBraid {
        #[arg(long)]
        word: String,
        #[arg(long)]
        strands: Option<usize>,
    },
    /// Check an executed trace against a shipped schedule fixture.
    ValidateSchedule {
        /// JSON array of intervals, or JSON lines holding intervals or
        /// episode records with an "intervals" field (e.g. trace.jsonl).
        #[arg(long)]
        trace: PathBuf,
        /// v1..v4; defaults to each record's own "fixture" field.
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Print the default configuration of a scenario as TOML.
    Config {
        #[arg(long, default_value = "low")]
        scenario: String,
    },
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            seeds,
            episodes,
            ablate,
            config,
            out: dir,
            quiet,
        } => {
            let density = scenario.as_deref().map(str::parse::<Density>).transpose()?;
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => RunConfig::for_density(density.unwrap_or(Density::Low)),
            };
            if let Some(d) = density.filter(|d| *d != cfg.scenario.density) {
                bail!("--scenario {d} contradicts the {} scenario in the config file", cfg.scenario.density);
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            for a in &ablate {
                cfg.components.ablate(a)?;
            }
            cfg.validate()?;
            run_command(&cfg, &dir, quiet, out)?;
            Ok(true)
        }
        Command::DebugBraid { word, strands } => debug_braid(&word, strands, out),
        Command::ValidateSchedule { trace, fixture } => validate_trace(&trace, fixture.as_deref(), out),
        Command::Config { scenario } => {
            let cfg = RunConfig::for_density(scenario.parse::<Density>()?);
            write!(out, "{}", toml::to_string(&cfg)?)?;
            Ok(true)
        }
    }
}

fn run_command(cfg: &RunConfig, dir: &Path, quiet: bool, out: &mut dyn Write) -> Result<()> {
    fs::create_dir_all(dir.join("checkpoints")).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), toml::to_string(cfg)?)?;
    let every = (cfg.episodes / 20).max(1);
    let (metrics, results) = run(cfg, |r| {
        if !quiet && (r.episode % every == 0 || r.episode + 1 == cfg.episodes) {
            eprintln!(
                "seed {} episode {}: success {:.3} entangled {} interventions {}",
                r.seed, r.episode, r.success, r.entangled, r.interventions
            );
        }
    })?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    write_curve(fs::File::create(dir.join("curve.csv"))?, &results)?;
    let mut trace = BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?);
    for r in &results {
        for rec in &r.trace {
            serde_json::to_writer(&mut trace, rec)?;
            trace.write_all(b"\n")?;
        }
        fs::write(
            dir.join("checkpoints").join(format!("seed_{}.json", r.seed)),
            r.learner.to_json()?,
        )?;
    }
    trace.flush()?;
    writeln!(
        out,
        "{} [{}]: success {:.3} ± {:.3}, entanglement {:.3} ± {:.3}, interventions {:.3}, idle {:.3}",
        metrics.label,
        metrics.scenario,
        metrics.success_rate.mean,
        metrics.success_rate.std,
        metrics.entanglement_rate.mean,
        metrics.entanglement_rate.std,
        metrics.intervention_rate.mean,
        metrics.idle_rate.mean,
    )?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(())
}

fn debug_braid(word: &str, strands: Option<usize>, out: &mut dyn Write) -> Result<bool> {
    let w = BraidWord::parse(word, strands)?;
    let (nf, trace) = simplify(&w)?;
    writeln!(
        out,
        "input      : {} ({} strands, length {})",
        display(&w),
        w.strands(),
        w.len()
    )?;
    for s in &trace.steps {
        writeln!(
            out,
            "  {:<7} at {:>3}: (L, I) {:?} -> {:?}",
            format!("{:?}", s.rule).to_lowercase(),
            s.position,
            s.before,
            s.after
        )?;
    }
    writeln!(out, "simplified : {} (length {})", display(&nf), nf.len())?;
    writeln!(
        out,
        "rewrites   : cancel {}, commute {}, braid {}",
        trace.count(Rule::Cancel),
        trace.count(Rule::Commute),
        trace.count(Rule::Braid)
    )?;
    if w.len() <= ORACLE_MAX_LEN {
        let verdict = match confluence_oracle(&w, ORACLE_NODES) {
            ConfluenceVerdict::Confluent { .. } => "confluent".to_string(),
            ConfluenceVerdict::Divergent { normal_forms } => format!("{} distinct normal forms", normal_forms.len()),
            ConfluenceVerdict::Inconclusive { explored } => format!("inconclusive after {explored} words"),
        };
        writeln!(out, "cancel/commute rewriting: {verdict}")?;
    }
    Ok(true)
}

fn display(w: &BraidWord) -> String {
    if w.is_empty() {
        "e".to_string()
    } else {
        w.to_string()
    }
}

/// Parses a trace file into (label, fixture name, intervals) groups.
fn read_trace(path: &Path, fixture: Option<&str>) -> Result<Vec<(String, String, Vec<TraceInterval>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let named = |own: Option<&str>| -> Result<String> {
        match fixture.or(own) {
            Some(f) => Ok(f.to_string()),
            None => bail!("no fixture given and the trace does not name one"),
        }
    };
    if let Ok(intervals) = serde_json::from_str::<Vec<TraceInterval>>(&text) {
        return Ok(vec![("trace".into(), named(None)?, intervals)]);
    }
    let mut groups = Vec::new();
    let mut loose = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("line {}", n + 1))?;
        if let Some(iv) = v.get("intervals") {
            let intervals: Vec<TraceInterval> = serde_json::from_value(iv.clone())?;
            let label = match (v.get("seed"), v.get("episode")) {
                (Some(s), Some(e)) => format!("seed {s} episode {e}"),
                _ => format!("line {}", n + 1),
            };
            groups.push((label, named(v.get("fixture").and_then(|f| f.as_str()))?, intervals));
        } else if v.get("task").is_some() {
            loose.push(serde_json::from_value::<TraceInterval>(v)?);
        }
    }
    if !loose.is_empty() {
        groups.push(("trace".into(), named(None)?, loose));
    }
    if groups.is_empty() {
        bail!("{} holds no intervals", path.display());
    }
    Ok(groups)
}

fn validate_trace(path: &Path, fixture: Option<&str>, out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    for (label, name, intervals) in read_trace(path, fixture)? {
        let Some(schedule) = Schedule::fixture(&name) else {
            bail!("unknown fixture {name:?} (expected v1..v4)");
        };
        let verdict = validate_schedule(&intervals, &schedule);
        if verdict.passed() {
            writeln!(out, "{label} vs {name}: PASS ({} intervals)", intervals.len())?;
        } else {
            ok = false;
            writeln!(out, "{label} vs {name}: FAIL")?;
            for v in &verdict.violations {
                writeln!(out, "  {:?}: {}", v.kind, v.detail)?;
            }
        }
    }
    Ok(ok)
}

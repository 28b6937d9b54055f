//! Command-line front end for the rational unit-distance toolkit.
//!
//! Machine-readable JSON goes to stdout (each payload carries
//! `"schema": 1`); diagnostics go to stderr. Exit codes: 0 success,
//! 1 verification/derivation failure, 2 usage error, 3 budget exceeded.

use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use rq8::arith::four_square_rat;
use rq8::config::{self, Config};
use rq8::dcalc::{self, Expr, Node};
use rq8::exactq::{Point, Rat};
use rq8::falsify::{optimize, EmbeddingProblem};
use rq8::witness::{self, WitnessError, WitnessSet};

#[derive(Parser)]
#[command(name = "rq8", version, about = "Exact witness sets forcing distances in Q^8")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a rational as a sum of four rational squares.
    Decompose {
        /// Non-negative rational, p/q form.
        #[arg(allow_hyphen_values = true)]
        value: String,
    },
    /// Emit a canonical forcing configuration as JSON.
    Config {
        /// One of fig1, fig2, fig5, fig7.
        name: String,
        /// Edge scale for fig1.
        #[arg(long, default_value = "1")]
        scale: String,
        /// Numerator parameter for fig5.
        #[arg(long)]
        p: Option<u32>,
        /// Denominator parameter for fig5 (>= 2).
        #[arg(long)]
        q: Option<u32>,
        /// Target squared distance for fig7.
        #[arg(long)]
        sqdist: Option<String>,
    },
    /// Build a witness set for a pair of points in Q^8.
    Build {
        /// Two JSON files, each an array of 8 rational strings.
        #[arg(long, num_args = 2, value_names = ["X_JSON", "Y_JSON"])]
        pair: Option<Vec<PathBuf>>,
        /// Two inline comma-separated coordinate lists instead of files.
        #[arg(long, num_args = 2, value_names = ["X_CSV", "Y_CSV"], conflicts_with = "pair",
              allow_hyphen_values = true)]
        coords: Option<Vec<String>>,
        /// Maximum number of interned points.
        #[arg(long, default_value_t = 10_000_000)]
        budget: usize,
        /// Build the upper-bound set (requires squared distance 1/16).
        #[arg(long)]
        bound: bool,
    },
    /// Re-verify a witness JSON file from scratch.
    Verify { witness: PathBuf },
    /// Symbolic size estimate for a target squared distance.
    Estimate {
        #[arg(long)]
        sqdist: String,
    },
    /// Convert a witness JSON file to another graph format.
    Export {
        witness: PathBuf,
        /// One of graphml, dimacs, json.
        #[arg(long)]
        format: String,
    },
    /// Derive a constructible distance through the closure rules.
    Derive {
        /// Expression such as "sqrt(2+2/4)".
        expr: String,
        /// Dimension parameter (>= 2).
        #[arg(long)]
        n: u32,
        /// Interval precision for per-node checks.
        #[arg(long, default_value_t = 64)]
        bits: u32,
        /// Emit the tree as nested JSON instead of indented text.
        #[arg(long)]
        json: bool,
    },
    /// Try to embed a witness graph while escaping the forced distance.
    Falsify {
        witness: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6_000)]
        max_iters: u64,
        #[arg(long, default_value_t = 1e-12)]
        stress_tol: f64,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage(e: impl Display) -> Failure {
    Failure {
        code: 2,
        msg: e.to_string(),
    }
}

fn failed(e: impl Display) -> Failure {
    Failure {
        code: 1,
        msg: e.to_string(),
    }
}

fn parse_rat(s: &str) -> Result<Rat, Failure> {
    s.parse::<Rat>().map_err(usage)
}

fn read_point_file(path: &PathBuf) -> Result<Point, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let p: Point = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(p)
}

fn parse_coords(csv: &str) -> Result<Point, Failure> {
    let coords: Vec<Rat> = csv
        .split(',')
        .map(|c| parse_rat(c.trim()))
        .collect::<Result<_, _>>()?;
    if coords.len() != 8 {
        return Err(usage(format!(
            "inline coordinates need exactly 8 entries, got {}",
            coords.len()
        )));
    }
    Ok(Point::new(coords))
}

fn read_witness(path: &PathBuf) -> Result<WitnessSet, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn config_json(c: &Config) -> Value {
    let points: serde_json::Map<String, Value> = c
        .points
        .iter()
        .map(|(label, p)| {
            (
                label.clone(),
                Value::Array(
                    p.coords()
                        .iter()
                        .map(|r| Value::String(r.to_string()))
                        .collect(),
                ),
            )
        })
        .collect();
    let claims: Vec<Value> = c
        .claims
        .iter()
        .map(|cl| json!([cl.a, cl.b, cl.sq.to_string()]))
        .collect();
    json!({
        "schema": 1,
        "name": c.name,
        "points": points,
        "claims": claims,
    })
}

fn interval_floats(e: &Expr, bits: u32) -> Result<(f64, f64), Failure> {
    let iv = dcalc::eval_interval(e, bits).map_err(failed)?;
    Ok((iv.lo.to_f64(), iv.hi.to_f64()))
}

fn print_tree(node: &Node, depth: usize, bits: u32) -> Result<(), Failure> {
    let (lo, hi) = interval_floats(&node.value, bits)?;
    let legs = match &node.legs {
        Some(l) => format!("  legs=({}, {})", l.leg_xz, l.leg_zy),
        None => String::new(),
    };
    println!(
        "{:indent$}{}  value={}  in [{lo}, {hi}]{legs}",
        "",
        node.rule,
        node.value,
        indent = 2 * depth
    );
    for c in &node.children {
        print_tree(c, depth + 1, bits)?;
    }
    Ok(())
}

fn tree_json(node: &Node, bits: u32) -> Result<Value, Failure> {
    let (lo, hi) = interval_floats(&node.value, bits)?;
    let children: Vec<Value> = node
        .children
        .iter()
        .map(|c| tree_json(c, bits))
        .collect::<Result<_, _>>()?;
    let mut obj = json!({
        "rule": node.rule.to_string(),
        "value": node.value.to_string(),
        "interval": [lo, hi],
        "children": children,
    });
    if let Some(l) = &node.legs {
        obj["legs"] = json!({ "xz": l.leg_xz.to_string(), "zy": l.leg_zy.to_string() });
    }
    Ok(obj)
}

fn map_witness_err(e: WitnessError) -> Failure {
    match e {
        WitnessError::BudgetExceeded(n) => Failure {
            code: 3,
            msg: format!("point budget of {n} exceeded"),
        },
        other => usage(other),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Decompose { value } => {
            let v = parse_rat(&value)?;
            let fs = four_square_rat(&v).map_err(usage)?;
            let squares: Vec<String> = fs.entries().iter().map(|r| r.to_string()).collect();
            println!("{}", json!({ "schema": 1, "squares": squares }));
            Ok(())
        }
        Cmd::Config {
            name,
            scale,
            p,
            q,
            sqdist,
        } => {
            let c = match name.as_str() {
                "fig1" => config::fig1_q8(&parse_rat(&scale)?).map_err(usage)?,
                "fig2" => config::fig2_q8(),
                "fig5" => {
                    let p = p.ok_or_else(|| usage("fig5 requires --p"))?;
                    let q = q.ok_or_else(|| usage("fig5 requires --q"))?;
                    config::fig5_layout(p, q).map_err(usage)?
                }
                "fig7" => {
                    let s = sqdist.ok_or_else(|| usage("fig7 requires --sqdist"))?;
                    config::fig7_layout(&parse_rat(&s)?).map_err(usage)?
                }
                other => return Err(usage(format!("unknown configuration {other:?}"))),
            };
            let report = config::validate(&c);
            if !report.all_pass() {
                return Err(failed(format!(
                    "configuration {} failed validation",
                    c.name
                )));
            }
            println!("{}", config_json(&c));
            Ok(())
        }
        Cmd::Build {
            pair,
            coords,
            budget,
            bound,
        } => {
            let (x, y) = match (pair, coords) {
                (Some(paths), None) => (read_point_file(&paths[0])?, read_point_file(&paths[1])?),
                (None, Some(csvs)) => (parse_coords(&csvs[0])?, parse_coords(&csvs[1])?),
                _ => return Err(usage("provide either --pair or --coords")),
            };
            let w = if bound {
                witness::bound_set(&x, &y, budget)
            } else {
                witness::build_witness(&x, &y, budget)
            }
            .map_err(map_witness_err)?;
            println!("{}", serde_json::to_string(&w).map_err(failed)?);
            Ok(())
        }
        Cmd::Verify { witness } => {
            let w = read_witness(&witness)?;
            let report = witness::verify_witness(&w);
            let mut payload = serde_json::to_value(&report).map_err(failed)?;
            payload["schema"] = json!(1);
            println!("{payload}");
            if report.pass {
                Ok(())
            } else {
                Err(failed(format!(
                    "witness verification failed with {} finding(s)",
                    report.failures.len()
                )))
            }
        }
        Cmd::Estimate { sqdist } => {
            let r2 = parse_rat(&sqdist)?;
            let est = witness::estimate_size(&r2).map_err(usage)?;
            let mut payload = serde_json::to_value(&est).map_err(failed)?;
            payload["schema"] = json!(1);
            println!("{payload}");
            Ok(())
        }
        Cmd::Export { witness, format } => {
            let w = read_witness(&witness)?;
            match format.as_str() {
                "graphml" => print!("{}", witness::to_graphml(&w)),
                "dimacs" => print!("{}", witness::to_dimacs(&w)),
                "json" => println!("{}", serde_json::to_string(&w).map_err(failed)?),
                other => return Err(usage(format!("unknown export format {other:?}"))),
            }
            Ok(())
        }
        Cmd::Derive { expr, n, bits, json: as_json } => {
            let e = dcalc::parse_expr(&expr).map_err(usage)?;
            let d = dcalc::derive(&e, n).map_err(failed)?;
            dcalc::check_derivation(&d, bits).map_err(failed)?;
            let acc = dcalc::size_account(&d);
            if as_json {
                println!(
                    "{}",
                    json!({
                        "schema": 1,
                        "n": d.n,
                        "tree": tree_json(&d.root, bits)?,
                        "size_account": {
                            "node_count": acc.node_count,
                            "rule_counts": acc.rule_counts,
                            "points": acc.points,
                            "edges": acc.edges,
                        },
                    })
                );
            } else {
                print_tree(&d.root, 0, bits)?;
                println!(
                    "size account: nodes={} points<={} edges<={} rules={:?}",
                    acc.node_count, acc.points, acc.edges, acc.rule_counts
                );
            }
            Ok(())
        }
        Cmd::Falsify {
            witness,
            delta,
            restarts,
            seed,
            max_iters,
            stress_tol,
        } => {
            let w = read_witness(&witness)?;
            let mut problem = EmbeddingProblem::from_witness(&w).map_err(usage)?;
            problem.delta = delta;
            problem.stress_tol = stress_tol;
            let report = optimize(&problem, seed, restarts, max_iters).map_err(usage)?;
            let mut payload = serde_json::to_value(&report).map_err(failed)?;
            payload["schema"] = json!(1);
            println!("{payload}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

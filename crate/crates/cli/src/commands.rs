use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use fairflow::fairness::{all_metrics, Metric};
use fairflow::format::float;
use fairflow::pricing::{
    check_tightness, dual_tolls, heterogeneous_lp_with, marginal_tolls, verify_dual_tolls,
    verify_enforcement, ClassPartition, LpOptions,
};
use fairflow::sweep::{
    alpha_star_crossover, bound_branch_intersection, dense_sweep,
    dominance_report, feasible_alpha, i_solution_sweep, ineff_bound, parse_sweep_csv,
    pareto_csv, pareto_frontier, select_beta_so, sweep_csv, unfairness_outliers, Method, Sweep,
    SweepRecord,
};
use fairflow::tntp::parse_tntp;
use fairflow::{build_pigou, Network};

use crate::{FairnessArgs, InstanceArgs, SolverArgs, SweepSource};

/// Unreadable files and malformed flag values.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    instance: &'a InstanceArgs,
    parameters: serde_json::Value,
    tool_version: &'static str,
    wall_clock_seconds: f64,
    outputs: Vec<PathBuf>,
}

impl Serialize for InstanceArgs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        json!({
            "net": self.net,
            "trips": self.trips,
            "instance": self.instance,
            "pigou": self.pigou,
        })
        .serialize(s)
    }
}

struct Run<'a> {
    command: &'a str,
    argv: &'a [String],
    out: &'a Path,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn start(command: &'a str, argv: &'a [String], out: &'a Path) -> Result<Self> {
        fs::create_dir_all(out)
            .map_err(|e| InputError(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { command, argv, out, started: Instant::now(), outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn finish(mut self, instance: &InstanceArgs, parameters: serde_json::Value) -> Result<()> {
        let manifest_path = self.out.join(format!("{}.manifest.json", self.command));
        self.outputs.push(manifest_path.clone());
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            instance,
            parameters,
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: self.elapsed(),
            outputs: self.outputs.clone(),
        };
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())).into())
}

fn parse_pigou(spec: &str) -> Result<Network> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || InputError(format!("bad --pigou value {spec:?}; expected m[,epsilon[,demand]]"));
    if parts.is_empty() || parts.len() > 3 {
        return Err(bad().into());
    }
    let m: u32 = parts[0].parse().map_err(|_| bad())?;
    let eps: f64 = parts.get(1).map_or(Ok(0.0), |s| s.parse()).map_err(|_| bad())?;
    let demand: f64 = parts.get(2).map_or(Ok(1.0), |s| s.parse()).map_err(|_| bad())?;
    Ok(build_pigou(m, eps, demand)?)
}

pub fn load_instance(args: &InstanceArgs) -> Result<Network> {
    if let (Some(net), Some(trips)) = (&args.net, &args.trips) {
        let net_text = read(net)?;
        let trips_text = read(trips)?;
        return parse_tntp(&net_text, &trips_text)
            .with_context(|| format!("loading {} and {}", net.display(), trips.display()));
    }
    if let Some(path) = &args.instance {
        return Network::from_json(&read(path)?)
            .with_context(|| format!("loading {}", path.display()));
    }
    if let Some(spec) = &args.pigou {
        return parse_pigou(spec);
    }
    Err(InputError("no instance given; use --net/--trips, --instance or --pigou".into()).into())
}

fn has_instance(args: &InstanceArgs) -> bool {
    args.net.is_some() || args.instance.is_some() || args.pigou.is_some()
}

/// `start:step:end` (inclusive) or `a,b,c`; values are rounded to 12
/// significant digits so that `1.0:0.05:2.0` yields `1.05`, not `1.0500000001`.
pub fn parse_betas(spec: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| InputError(format!("bad beta grid {spec:?}: {why}"));
    let clean = |v: f64| float(v).parse::<f64>().unwrap_or(v);
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let betas: Vec<f64> = match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end): (f64, f64, f64) = (
                start.parse().map_err(|_| bad("start"))?,
                step.parse().map_err(|_| bad("step"))?,
                end.parse().map_err(|_| bad("end"))?,
            );
            if !(step > 0.0) || end < start {
                return Err(bad("need step > 0 and end >= start").into());
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| clean(start + i as f64 * step)).collect()
        }
        [list] => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
            .collect::<Result<_, _>>()?,
        _ => return Err(bad("expected start:step:end or a comma list").into()),
    };
    if betas.is_empty() || betas.windows(2).any(|w| w[0] > w[1]) {
        return Err(bad("grid must be nonempty and ascending").into());
    }
    Ok(betas)
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = Method::parse(name).ok_or_else(|| InputError(format!("unknown method {name:?}")))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(InputError("no methods given".into()).into());
    }
    Ok(methods)
}

fn report_failures(sweep: &Sweep) {
    for f in &sweep.failures {
        eprintln!("warning: {} sample {} failed: {}", sweep.method.name(), float(f.alpha), f.message);
    }
}

fn run_sweep(
    net: &Network,
    method: Method,
    solver: &SolverArgs,
    fairness: &FairnessArgs,
    step: f64,
) -> Result<Sweep> {
    let cfg = solver.config();
    let opts = fairness.options()?;
    let sweep = match method {
        Method::Itap => dense_sweep(net, step, &cfg, &opts)?,
        Method::Isolution => i_solution_sweep(net, step, &cfg, &opts)?,
    };
    report_failures(&sweep);
    Ok(sweep)
}

/// Records for `method`, from its CSV when given, otherwise by sweeping.
fn records_for(source: &SweepSource, method: Method, net: &mut Option<Network>) -> Result<Vec<SweepRecord>> {
    let csv = match method {
        Method::Itap => &source.sweep_csv,
        Method::Isolution => &source.isolution_csv,
    };
    if let Some(path) = csv {
        return parse_sweep_csv(&read(path)?).with_context(|| format!("reading {}", path.display()));
    }
    if !has_instance(&source.instance) {
        return Err(InputError(format!(
            "no {} sweep CSV and no instance to sweep",
            method.name()
        ))
        .into());
    }
    if net.is_none() {
        *net = Some(load_instance(&source.instance)?);
    }
    let net = net.as_ref().expect("loaded above");
    Ok(run_sweep(net, method, &source.solver, &source.fairness, source.step)?.records)
}

fn source_parameters(source: &SweepSource) -> serde_json::Value {
    json!({
        "sweep_csv": source.sweep_csv,
        "isolution_csv": source.isolution_csv,
        "step": source.step,
        "metric": source.metric,
        "solver": solver_parameters(&source.solver),
        "gini_aggregation": source.fairness.gini_aggregation,
    })
}

fn solver_parameters(s: &SolverArgs) -> serde_json::Value {
    json!({
        "iters": s.iters,
        "gap": s.gap,
        "conjugate": s.conjugate,
        "prune": s.prune,
    })
}

pub fn solve(
    argv: &[String],
    instance: &InstanceArgs,
    solver: &SolverArgs,
    fairness: &FairnessArgs,
    alpha: f64,
    out: &Path,
) -> Result<()> {
    let mut run = Run::start("solve", argv, out)?;
    let net = load_instance(instance)?;
    let opts = fairness.options()?;
    let cfg = solver.config();
    let solve_start = Instant::now();
    let fs = fairflow::solve(&net, alpha, &cfg)?;
    let solve_seconds = solve_start.elapsed().as_secs_f64();
    let metrics = all_metrics(&net, &fs, &opts)?;
    run.write("flow_state.json", &(fs.to_json(&net)? + "\n"))?;
    run.write("unfairness.csv", &metrics.to_csv())?;
    println!("h_so {}", float(fs.objectives.h_so));
    println!("h_ue {}", float(fs.objectives.h_ue));
    println!("ineff_ratio needs h_so at alpha=1; run `fairflow sweep` for the ratio");
    println!("relative_gap {} after {} iterations", float(fs.relative_gap), fs.iterations);
    for m in Metric::ALL {
        println!("{} {}", m.name(), float(metrics.get(m).aggregate));
    }
    println!("solve_seconds {solve_seconds:.3}");
    run.finish(
        instance,
        json!({
            "alpha": alpha,
            "solver": solver_parameters(solver),
            "gini_aggregation": fairness.gini_aggregation,
        }),
    )
}

pub fn sweep(
    argv: &[String],
    instance: &InstanceArgs,
    solver: &SolverArgs,
    fairness: &FairnessArgs,
    step: f64,
    methods: &str,
    out: &Path,
) -> Result<()> {
    let mut run = Run::start("sweep", argv, out)?;
    let methods = parse_methods(methods)?;
    let net = load_instance(instance)?;
    for method in methods.iter().copied() {
        let sweep = run_sweep(&net, method, solver, fairness, step)?;
        let name = match method {
            Method::Itap => "sweep.csv".to_string(),
            Method::Isolution => "sweep_isolution.csv".to_string(),
        };
        run.write(&name, &sweep_csv(&sweep))?;
        println!(
            "{}: {} samples, {} failed",
            method.name(),
            sweep.records.len(),
            sweep.failures.len()
        );
        let outliers = unfairness_outliers(&sweep.records);
        if !outliers.is_empty() {
            let list: Vec<String> = outliers.iter().map(|&a| float(a)).collect();
            println!("{}: unfairness jumps above 0.1 at {}", method.name(), list.join(", "));
        }
    }
    println!("wall_seconds {:.3}", run.elapsed());
    run.finish(
        instance,
        json!({
            "step": step,
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "solver": solver_parameters(solver),
            "gini_aggregation": fairness.gini_aggregation,
        }),
    )
}

pub fn pareto(argv: &[String], source: &SweepSource, betas: &str, methods: &str, out: &Path) -> Result<()> {
    let mut run = Run::start("pareto", argv, out)?;
    let betas = parse_betas(betas)?;
    let methods = parse_methods(methods)?;
    let metric = source.metric()?;
    let mut net = None;
    let mut points = Vec::new();
    let mut frontiers = Vec::new();
    for method in methods.iter().copied() {
        let records = records_for(source, method, &mut net)?;
        let frontier = pareto_frontier(&records, &betas, method, metric)?;
        points.extend(frontier.iter().copied());
        frontiers.push((method, frontier));
    }
    run.write("pareto.csv", &pareto_csv(&points))?;
    if let [(Method::Itap, itap), (Method::Isolution, iso)] | [(Method::Isolution, iso), (Method::Itap, itap)] =
        frontiers.as_slice()
    {
        let report = dominance_report(itap, iso, 1e-6);
        println!(
            "itap frontier above isolution at {} of {} beta values",
            report.violations.len(),
            report.compared
        );
    }
    run.finish(
        &source.instance,
        json!({
            "betas": betas,
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "source": source_parameters(source),
        }),
    )
}

pub fn beta_so(argv: &[String], source: &SweepSource, beta: f64, method: &str, out: &Path) -> Result<()> {
    let mut run = Run::start("beta_so", argv, out)?;
    let method = Method::parse(method).ok_or_else(|| InputError(format!("unknown method {method:?}")))?;
    let metric = source.metric()?;
    let records = records_for(source, method, &mut None)?;
    let point = select_beta_so(&records, beta, method, metric)?;
    run.write("beta_so.csv", &pareto_csv(&[point]))?;
    println!("param {}", float(point.param));
    println!("ineff_ratio {}", float(point.ineff_ratio));
    println!("h_so {}", float(point.h_so));
    println!("{} {}", metric.name(), float(point.unfairness));
    run.finish(
        &source.instance,
        json!({ "beta": beta, "method": method.name(), "source": source_parameters(source) }),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn price(
    argv: &[String],
    instance: &InstanceArgs,
    solver: &SolverArgs,
    alpha: f64,
    classes: Option<&Path>,
    use_lp: bool,
    generation_rounds: usize,
    out: &Path,
) -> Result<()> {
    let mut run = Run::start("price", argv, out)?;
    let net = load_instance(instance)?;
    let cfg = solver.config();
    let fs = fairflow::solve(&net, alpha, &cfg)?;
    let report = if classes.is_some() || use_lp {
        let partition = match classes {
            Some(path) => ClassPartition::from_json(&net, &read(path)?)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ClassPartition::homogeneous(&net),
        };
        let lp = heterogeneous_lp_with(
            &net,
            &fs,
            &partition,
            &LpOptions { column_generation_rounds: generation_rounds },
        )?;
        let tight = check_tightness(&lp);
        println!("lp pivots {}, generated paths {}", lp.pivots, lp.generated_paths());
        println!("duality_gap {}", float(lp.duality_gap()));
        println!("capacity tight {} (max scaled slack {})", tight.tight, float(tight.max_scaled_slack));
        let tolls = dual_tolls(&lp)?;
        let cert = verify_dual_tolls(&net, &lp, &tolls);
        println!(
            "complementary slackness {} (max violation {})",
            pass(cert.slackness_ok),
            float(cert.max_slackness_violation)
        );
        println!(
            "unrecorded paths {} (min slack {})",
            pass(cert.unrecorded_ok),
            float(cert.min_unrecorded_slack)
        );
        run.write("tolls.csv", &tolls.to_csv())?;
        json!({ "tightness": tight.max_scaled_slack, "certificate": cert, "duality_gap": lp.duality_gap() })
    } else {
        let tolls = marginal_tolls(&net, &fs);
        let check = verify_enforcement(&net, &fs, &tolls, &cfg)?;
        println!(
            "tolled equilibrium flow match {} (max relative deviation {})",
            pass(check.flows_match),
            float(check.max_relative_deviation)
        );
        println!(
            "generalized cost spread {} (max {})",
            pass(check.costs_equalized),
            float(check.max_cost_spread)
        );
        run.write("tolls.csv", &tolls.to_csv())?;
        serde_json::to_value(&check)?
    };
    run.write("price_report.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    run.finish(
        instance,
        json!({
            "alpha": alpha,
            "classes": classes,
            "lp": use_lp,
            "generation_rounds": generation_rounds,
            "solver": solver_parameters(solver),
        }),
    )
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn bounds(argv: &[String], source: &SweepSource, betas: &str, out: &Path) -> Result<()> {
    let mut run = Run::start("bounds", argv, out)?;
    let betas = parse_betas(betas)?;
    let mut net = None;
    let records = records_for(source, Method::Itap, &mut net)?;
    let mut curve = String::from("alpha,ineff_ratio,bound\n");
    let mut worst = f64::NEG_INFINITY;
    for r in records.iter().filter(|r| r.alpha > 0.0 && r.alpha < 1.0) {
        let b = ineff_bound(&records, r.alpha)?;
        worst = worst.max(r.ineff_ratio - b);
        curve.push_str(&format!("{},{},{}\n", float(r.alpha), float(r.ineff_ratio), float(b)));
    }
    run.write("bounds.csv", &curve)?;
    println!("max ineff_ratio minus bound {}", float(worst));
    println!("alpha_star {}", float(alpha_star_crossover(&records)?));
    match bound_branch_intersection(&records) {
        Ok(a) => println!("branch_intersection {}", float(a)),
        Err(e) => println!("branch_intersection undefined: {e}"),
    }
    // The feasible α needs the degree of the network, so it is only reported
    // when an instance is available.
    if net.is_none() && has_instance(&source.instance) {
        net = Some(load_instance(&source.instance)?);
    }
    if let Some(net) = &net {
        let mut table = String::from("beta,alpha_max\n");
        for &b in &betas {
            table.push_str(&format!("{},{}\n", float(b), float(feasible_alpha(net, b))));
        }
        run.write("feasible_alpha.csv", &table)?;
        println!("max degree {}", net.max_degree());
    }
    run.finish(&source.instance, json!({ "betas": betas, "source": source_parameters(source) }))
}

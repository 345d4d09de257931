//! Subcommand execution: build library configurations from parsed flags, run
//! the estimators, and write CSV tables, JSON sidecars, and the manifest.
//!
//! Every command follows the same shape: validate inputs, write
//! `manifest.json` with the fully resolved parameters, compute, write result
//! files into the output directory, then write `summary.json` and print the
//! same summary compactly on stdout. Sweeps (`delta-r`, `sigma-r`) may fan
//! out over a bounded worker pool; per-job seeds are fixed functions of the
//! job index, so the files never depend on the thread count.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sobcom::discretize::Discretization;
use sobcom::export::{self, CsvTable};
use sobcom::groundstate::{self, ConcentrationVerdict, MinimizeOpts, RadialProfile, SpaceParams};
use sobcom::levelmap::diagnostics::{
    classify_trend, monotone_within_noise, DeltaROpts, PsiOpts, SigmaROpts, ThicknessOpts,
    TrendVerdict, WeightMethod,
};
use sobcom::manifold::{ManifoldModel, Point};
use sobcom::symmetry::{
    psi_k_witness, quasisymmetry_ratio, CoercivityVerdict, GroupAction, GroupActionConfig,
    PolarGrid, QuasisymmetryParams,
};
use sobcom::{Error, Result};

use crate::cli::{
    AverageArgs, Cli, CoercivityArgs, Command, DeltaRArgs, DiagnoseArgs, FamilyKind,
    GroundStateArgs, NetBuildArgs, NetKind, ProfileKind, PsiArgs, QuasisymArgs, SigmaRArgs,
    ThicknessArgs, WitnessArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = Ctx { seed: cli.seed, out: cli.out.clone(), threads: cli.threads.max(1) };
    std::fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::NetBuild(a) => net_build(&ctx, a),
        Command::Psi(a) => psi(&ctx, a),
        Command::DeltaR(a) => delta_r(&ctx, a),
        Command::SigmaR(a) => sigma_r(&ctx, a),
        Command::Thickness(a) => thickness(&ctx, a),
        Command::Coercivity(a) => coercivity(&ctx, a),
        Command::Average(a) => average(&ctx, a),
        Command::Quasisym(a) => quasisym(&ctx, a),
        Command::WitnessPsiK(a) => witness_psi_k(&ctx, a),
        Command::GroundState(a) => ground_state(&ctx, a),
        Command::Diagnose(a) => diagnose(&ctx, a),
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    threads: usize,
}

impl Ctx {
    /// Record the resolved configuration before the computation starts, so a
    /// failed run still leaves its parameters on disk.
    fn manifest(&self, command: &str, params: Value) -> Result<()> {
        let manifest = json!({
            "command": command,
            "seed": self.seed,
            "out": self.out.display().to_string(),
            "threads": self.threads,
            "params": params,
        });
        export::write_json(&self.out.join("manifest.json"), &manifest)
    }

    /// Write `summary.json` and echo the same object compactly on stdout.
    fn summary(&self, value: &Value) -> Result<()> {
        export::write_json(&self.out.join("summary.json"), value)?;
        println!("{}", serde_json::to_string(value)?);
        Ok(())
    }
}

/// Run `jobs` closures over at most `threads` workers, returning results in
/// job order. Jobs are picked up by index, so any seed schedule keyed on the
/// index gives thread-count-independent output.
fn parallel_map<T, F>(jobs: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, jobs.max(1));
    if workers == 1 {
        return (0..jobs).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::with_capacity(jobs));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let value = f(i);
                collected.lock().unwrap().push((i, value));
            });
        }
    });
    let mut items = collected.into_inner().unwrap();
    items.sort_by_key(|(i, _)| *i);
    items.into_iter().map(|(_, v)| v).collect()
}

/// Directory-name-safe label for a sweep parameter: integral values drop the
/// fraction, everything else uses the shortest round-trip form.
fn param_label(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e12 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn trend_label(v: TrendVerdict) -> &'static str {
    match v {
        TrendVerdict::Vanishes => "vanishes",
        TrendVerdict::BoundedBelow => "bounded_below",
        TrendVerdict::Inconclusive => "inconclusive",
    }
}

/// Split a flat coordinate list into levels of the map's target dimension.
fn chunk_levels(flat: &[f64], target_dim: usize, flag: &str) -> Result<Vec<Vec<f64>>> {
    if flat.is_empty() || flat.len() % target_dim != 0 {
        return Err(Error::Config(format!(
            "{flag} takes coordinates in groups of {target_dim} for this map; got {} values",
            flat.len()
        )));
    }
    Ok(flat.chunks(target_dim).map(|c| c.to_vec()).collect())
}

// ---------------------------------------------------------------------------
// net-build

fn net_build(ctx: &Ctx, args: &NetBuildArgs) -> Result<()> {
    let model = args.manifold.build()?;
    ctx.manifest(
        "net-build",
        json!({
            "manifold": model.to_config(),
            "epsilon": args.epsilon,
            "domain_radius": args.domain_radius,
            "covering_samples": args.covering_samples,
        }),
    )?;
    let net = Discretization::greedy_net(&model, args.domain_radius, args.epsilon, ctx.seed)?;
    let labeler = model.clone();
    let net = net.orbital_partition(|p| labeler.distance_to_pole(p))?;
    let covering = net.covering_fraction(args.covering_samples, ctx.seed ^ 0xC0FE)?;
    export::net_table(&net)?.write(&ctx.out.join("net.csv"))?;
    let mut sidecar = export::net_sidecar(&net);
    sidecar["covering_fraction"] = json!(covering);
    export::write_json(&ctx.out.join("net.json"), &sidecar)?;
    ctx.summary(&json!({
        "points": net.points.len(),
        "quasiorbits": net.quasiorbits.len(),
        "covering_fraction": covering,
        "separated": net.is_separated(),
    }))
}

// ---------------------------------------------------------------------------
// psi

fn psi(ctx: &Ctx, args: &PsiArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let map = args.map.build(model)?;
    let grid = chunk_levels(&args.z, map.target_dim(), "--z")?;
    let opts = PsiOpts {
        shell_width: args.shell_width,
        samples: args.samples,
        window: args.window,
        force_shell: args.force_shell,
        seed: ctx.seed,
    };
    ctx.manifest(
        "psi",
        json!({
            "manifold": map.model.to_config(),
            "map": map.kind,
            "levels": grid,
            "samples": args.samples,
            "shell_width": args.shell_width,
            "window": args.window,
            "force_shell": args.force_shell,
        }),
    )?;
    let table = map.weight_table(&grid, &opts)?;
    export::weight_table_csv(&table)?.write(&ctx.out.join("weight.csv"))?;
    let method = match table.method {
        WeightMethod::ClosedForm => "closed_form",
        WeightMethod::Shell => "shell",
    };
    ctx.summary(&json!({
        "levels": table.grid,
        "psi": table.values,
        "stderr": table.stderrs,
        "method": method,
    }))
}

// ---------------------------------------------------------------------------
// delta-r

fn delta_r(ctx: &Ctx, args: &DeltaRArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let map = args.map.build(model)?;
    if args.a.len() < 2 || args.a.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "--A radii must be strictly increasing, at least two".into(),
        ));
    }
    let mut template = DeltaROpts::new(0.0, args.r);
    template.candidates_per_level = args.candidates;
    template.numerator_samples = args.num_samples;
    template.denominator_samples = args.den_samples;
    template.shell_width = args.shell_width;
    ctx.manifest(
        "delta-r",
        json!({
            "manifold": map.model.to_config(),
            "map": map.kind,
            "A": args.a,
            "ball_radius": args.r,
            "candidates_per_level": args.candidates,
            "numerator_samples": args.num_samples,
            "denominator_samples": args.den_samples,
            "shell_width": args.shell_width,
        }),
    )?;
    let outcomes = parallel_map(args.a.len(), ctx.threads, |k| {
        let mut opts = template.clone();
        opts.excluded_radius = args.a[k];
        opts.seed = ctx.seed.wrapping_add((k as u64) << 16);
        map.delta_r(&opts)
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        results.push(outcome?);
    }
    let mut csv = CsvTable::new(vec!["A", "delta", "stderr", "scanned_levels", "witness_z", "witness_ratio"]);
    for (a, res) in args.a.iter().zip(&results) {
        let dir = ctx.out.join(format!("A_{}", param_label(*a)));
        std::fs::create_dir_all(&dir)?;
        export::write_json(&dir.join("result.json"), res)?;
        let (wz, wr) = match &res.witness {
            Some(w) => {
                let z: Vec<String> = w.z.iter().map(|c| export::float_field(*c)).collect();
                (z.join(";"), export::float_field(w.ratio))
            }
            None => (String::new(), String::new()),
        };
        csv.push_row(vec![
            export::float_field(*a),
            export::float_field(res.value),
            export::float_field(res.stderr),
            res.scanned_levels.to_string(),
            wz,
            wr,
        ])?;
    }
    csv.write(&ctx.out.join("deltas.csv"))?;
    let values: Vec<f64> = results.iter().map(|r| r.value).collect();
    let stderrs: Vec<f64> = results.iter().map(|r| r.stderr).collect();
    ctx.summary(&json!({
        "A": args.a,
        "delta": values,
        "stderr": stderrs,
        "monotone_within_noise": monotone_within_noise(&values, &stderrs),
        "verdict": trend_label(classify_trend(&values, &stderrs)),
    }))
}

// ---------------------------------------------------------------------------
// sigma-r

fn sigma_r(ctx: &Ctx, args: &SigmaRArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let map = args.map.build(model)?;
    let mut template = SigmaROpts::new(0.0, args.r);
    template.q = args.q;
    template.epsilon_thick = args.eps_thick;
    template.coarse_samples = args.coarse;
    template.refine_samples = args.refine;
    template.chain_points = args.chain_points;
    template.window = args.window;
    ctx.manifest(
        "sigma-r",
        json!({
            "manifold": map.model.to_config(),
            "map": map.kind,
            "R": args.big_r,
            "ball_radius": args.r,
            "q": args.q,
            "epsilon_thick": args.eps_thick,
            "coarse_samples": args.coarse,
            "refine_samples": args.refine,
            "chain_points": args.chain_points,
            "window": args.window,
        }),
    )?;
    let outcomes = parallel_map(args.big_r.len(), ctx.threads, |k| {
        let mut opts = template.clone();
        opts.far_radius = args.big_r[k];
        opts.seed = ctx.seed.wrapping_add((k as u64) << 12);
        map.sigma_r(&opts)
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        results.push(outcome?);
    }
    let mut csv = CsvTable::new(vec!["R", "sigma", "stderr", "bound", "disjoint_balls", "within_bound"]);
    let mut all_within = true;
    for (rr, res) in args.big_r.iter().zip(&results) {
        let dir = ctx.out.join(format!("R_{}", param_label(*rr)));
        std::fs::create_dir_all(&dir)?;
        export::write_json(&dir.join("result.json"), res)?;
        let within = res.value <= res.bound + 3.0 * res.stderr;
        all_within &= within;
        csv.push_row(vec![
            export::float_field(*rr),
            export::float_field(res.value),
            export::float_field(res.stderr),
            export::float_field(res.bound),
            res.disjoint_balls.to_string(),
            within.to_string(),
        ])?;
    }
    csv.write(&ctx.out.join("sigmas.csv"))?;
    ctx.summary(&json!({
        "R": args.big_r,
        "sigma": results.iter().map(|r| r.value).collect::<Vec<_>>(),
        "stderr": results.iter().map(|r| r.stderr).collect::<Vec<_>>(),
        "bound": results.iter().map(|r| r.bound).collect::<Vec<_>>(),
        "disjoint_balls": results.iter().map(|r| r.disjoint_balls).collect::<Vec<_>>(),
        "all_within_bound": all_within,
    }))
}

// ---------------------------------------------------------------------------
// thickness

fn thickness(ctx: &Ctx, args: &ThicknessArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let map = args.map.build(model)?;
    let mut opts = ThicknessOpts::new(args.excluded, args.r);
    opts.candidates_per_level = args.candidates;
    opts.samples = args.samples;
    opts.shell_width = args.shell_width;
    opts.seed = ctx.seed;
    if !args.level.is_empty() {
        opts.levels = chunk_levels(&args.level, map.target_dim(), "--level")?;
    }
    ctx.manifest(
        "thickness",
        json!({
            "manifold": map.model.to_config(),
            "map": map.kind,
            "excluded_radius": args.excluded,
            "ball_radius": args.r,
            "levels": opts.levels,
            "candidates_per_level": args.candidates,
            "samples": args.samples,
            "shell_width": args.shell_width,
        }),
    )?;
    let res = map.thickness_ratio(&opts)?;
    let width = res.per_level.first().map(|l| l.z.len()).unwrap_or(0);
    let mut headers: Vec<String> = (0..width).map(|i| format!("z{i}")).collect();
    headers.extend(["min_mass".into(), "max_mass".into(), "ratio".into(), "low_confidence".into()]);
    let mut csv = CsvTable::new(headers);
    for level in &res.per_level {
        let mut row: Vec<String> = level.z.iter().map(|c| export::float_field(*c)).collect();
        row.extend([
            export::float_field(level.min_mass),
            export::float_field(level.max_mass),
            export::float_field(level.ratio),
            level.low_confidence.to_string(),
        ]);
        csv.push_row(row)?;
    }
    csv.write(&ctx.out.join("thickness.csv"))?;
    export::write_json(&ctx.out.join("report.json"), &res)?;
    ctx.summary(&json!({
        "epsilon_thick": res.epsilon_thick,
        "witness_level": res.witness_level,
        "levels": res.per_level.len(),
    }))
}

// ---------------------------------------------------------------------------
// coercivity

fn coercivity(ctx: &Ctx, args: &CoercivityArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let action = GroupAction::new(args.action_config(), model)?;
    ctx.manifest(
        "coercivity",
        json!({
            "manifold": action.model().to_config(),
            "action": action.config(),
            "elements": action.len(),
            "radii": args.radius,
            "points_per_radius": args.points,
        }),
    )?;
    let report = action.coercivity_verdict(&args.radius, args.points, ctx.seed)?;
    let mut csv = CsvTable::new(vec!["radius", "min_orbit_diameter"]);
    for (r, d) in report.radii.iter().zip(&report.envelope) {
        csv.push_row(vec![export::float_field(*r), export::float_field(*d)])?;
    }
    csv.write(&ctx.out.join("envelope.csv"))?;
    export::write_json(&ctx.out.join("report.json"), &report)?;
    let verdict = match report.verdict {
        CoercivityVerdict::Coercive => "coercive",
        CoercivityVerdict::NotCoercive => "not_coercive",
        CoercivityVerdict::Inconclusive => "inconclusive",
    };
    ctx.summary(&json!({
        "verdict": verdict,
        "radii": report.radii,
        "envelope": report.envelope,
        "has_escaping_family": report.escaping_family.is_some(),
    }))
}

// ---------------------------------------------------------------------------
// average

fn average(ctx: &Ctx, args: &AverageArgs) -> Result<()> {
    let grid = PolarGrid::new(args.extent, args.rings, args.angles)?;
    if args.bumps == 0 {
        return Err(Error::Config("--bumps must be at least 1".into()));
    }
    ctx.manifest(
        "average",
        json!({
            "k": args.k,
            "rings": args.rings,
            "angles": args.angles,
            "extent": args.extent,
            "bumps": args.bumps,
            "p": args.p,
        }),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut bumps = Vec::with_capacity(args.bumps);
    for _ in 0..args.bumps {
        let r0 = args.extent * rng.random::<f64>();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        let width = 0.3 + 0.7 * rng.random::<f64>();
        let amp = 0.5 + rng.random::<f64>();
        bumps.push((r0 * th.cos(), r0 * th.sin(), width, amp));
    }
    let values = grid.sample(|p: &Point| {
        let c = p.coords();
        bumps
            .iter()
            .map(|&(bx, by, w, a)| {
                let d2 = (c[0] - bx).powi(2) + (c[1] - by).powi(2);
                a * (-d2 / (2.0 * w * w)).exp()
            })
            .sum()
    });
    let averaged = grid.rotation_average(&values, args.k)?;
    let twice = grid.rotation_average(&averaged, args.k)?;
    let idempotent = averaged.iter().zip(&twice).all(|(a, b)| a.to_bits() == b.to_bits());
    let energy_before = grid.energy(&values, args.p)?;
    let energy_after = grid.energy(&averaged, args.p)?;
    let mut csv = CsvTable::new(vec!["ring", "angle", "r", "theta", "value", "averaged"]);
    for i in 0..args.rings {
        for j in 0..args.angles {
            csv.push_row(vec![
                i.to_string(),
                j.to_string(),
                export::float_field(grid.radius(i)),
                export::float_field(std::f64::consts::TAU * j as f64 / args.angles as f64),
                export::float_field(values[i * args.angles + j]),
                export::float_field(averaged[i * args.angles + j]),
            ])?;
        }
    }
    csv.write(&ctx.out.join("grid.csv"))?;
    ctx.summary(&json!({
        "k": args.k,
        "energy_before": energy_before,
        "energy_after": energy_after,
        "non_expansive": energy_after <= energy_before * (1.0 + 1e-12),
        "idempotent": idempotent,
    }))
}

// ---------------------------------------------------------------------------
// quasisym

/// Concentric distance circles spaced by one quasiorbit bin (twice epsilon),
/// with the per-ring count backed off until adjacent points clear the
/// separation radius. Every ring is an exact rotation orbit.
fn rings_net(model: &ManifoldModel, domain_radius: f64, epsilon: f64) -> Result<Discretization> {
    if model.dim() != 2 {
        return Err(Error::Config(
            "the rings net needs a two-dimensional model; use --net greedy otherwise".into(),
        ));
    }
    let tau = std::f64::consts::TAU;
    let at = |rho: f64, t: f64| model.exp_map(&[t.cos(), t.sin()], rho);
    let mut pts = Vec::new();
    let mut rho = 2.0 * epsilon;
    while rho <= domain_radius + 1e-9 {
        let circumference = model.sphere_area(rho)?;
        let mut n = ((circumference / epsilon).floor() as usize).max(6);
        loop {
            if n < 3 {
                return Err(Error::Config(format!(
                    "epsilon {epsilon} leaves no separated ring at distance {rho}"
                )));
            }
            if model.distance(&at(rho, 0.0)?, &at(rho, tau / n as f64)?)? >= epsilon * (1.0 + 1e-9) {
                break;
            }
            n -= 1;
        }
        for j in 0..n {
            pts.push(at(rho, tau * j as f64 / n as f64)?);
        }
        rho += 2.0 * epsilon;
    }
    Discretization::from_points(model, pts, epsilon, 2.0, domain_radius)
}

fn quasisym(ctx: &Ctx, args: &QuasisymArgs) -> Result<()> {
    let model = args.build_model()?;
    let params = QuasisymmetryParams::new(args.base_index, args.lambda)?;
    let width = args.width;
    if !(width > 0.0) {
        return Err(Error::Config(format!("--width must be positive, got {width}")));
    }
    let floor = args.floor;
    if !(floor >= 0.0) {
        return Err(Error::Config(format!("--floor must be nonnegative, got {floor}")));
    }
    let profile_model = model.clone();
    let f: Box<dyn Fn(&Point) -> f64> = match args.profile {
        ProfileKind::Shell => {
            let center_r = args.center_r;
            Box::new(move |x: &Point| {
                let d = profile_model.distance_to_pole(x);
                (-((d - center_r) / width).powi(2)).exp() + floor
            })
        }
        ProfileKind::Offset => {
            let mut dir = vec![0.0; model.dim()];
            *dir.last_mut().unwrap() = 1.0;
            let center = model.exp_map(&dir, args.offset)?;
            Box::new(move |x: &Point| {
                let d = profile_model.distance(x, &center).unwrap_or(f64::INFINITY);
                (-(d / width).powi(2)).exp() + floor
            })
        }
    };
    ctx.manifest(
        "quasisym",
        json!({
            "manifold": model.to_config(),
            "net": match args.net { NetKind::Rings => "rings", NetKind::Greedy => "greedy" },
            "epsilon": args.epsilon,
            "domain_radius": args.domain_radius,
            "lambda": args.lambda,
            "base_index": args.base_index,
            "samples": args.samples,
            "profile": match args.profile { ProfileKind::Shell => "shell", ProfileKind::Offset => "offset" },
            "center_r": args.center_r,
            "offset": args.offset,
            "width": args.width,
            "floor": args.floor,
        }),
    )?;
    let net = match args.net {
        NetKind::Rings => rings_net(&model, args.domain_radius, args.epsilon)?,
        NetKind::Greedy => Discretization::greedy_net(&model, args.domain_radius, args.epsilon, ctx.seed)?,
    };
    let labeler = model.clone();
    let net = net.orbital_partition(|p| labeler.distance_to_pole(p))?;
    let report = quasisymmetry_ratio(f, &net, &params, args.samples, ctx.seed ^ 0x97)?;
    let mut csv = CsvTable::new(vec!["quasiorbit", "ratio", "stderr", "min_mass", "max_mass", "unreliable"]);
    for orbit in &report.per_orbit {
        csv.push_row(vec![
            orbit.orbit.to_string(),
            export::float_field(orbit.ratio),
            export::float_field(orbit.stderr),
            export::float_field(orbit.min_mass),
            export::float_field(orbit.max_mass),
            orbit.unreliable.to_string(),
        ])?;
    }
    csv.write(&ctx.out.join("orbits.csv"))?;
    export::write_json(&ctx.out.join("report.json"), &report)?;
    ctx.summary(&json!({
        "satisfied": report.satisfied,
        "lambda": report.lambda,
        "unreliable_count": report.unreliable_count,
        "orbits_checked": report.per_orbit.len(),
        "net_points": net.points.len(),
    }))
}

// ---------------------------------------------------------------------------
// witness-psi-k

fn witness_psi_k(ctx: &Ctx, args: &WitnessArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::Config("--count must be at least 1".into()));
    }
    let model = ManifoldModel::euclidean(args.dim)?;
    let action = GroupAction::new(
        GroupActionConfig::SubgroupFixingAxis { acting_dim: args.acting_dim, k: Some(args.k) },
        model,
    )?;
    // Consecutive orbits (circles of radius `offset` thickened by the bump
    // radius) must not touch; the default gap leaves a 5% margin.
    let gap = args.gap.unwrap_or(2.1 * (2.0 * args.offset + args.radius));
    let mut centers = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let mut c = vec![0.0; args.dim];
        c[0] = args.offset;
        c[args.dim - 1] = i as f64 * gap;
        centers.push(Point(c));
    }
    ctx.manifest(
        "witness-psi-k",
        json!({
            "dim": args.dim,
            "acting_dim": args.acting_dim,
            "k": args.k,
            "count": args.count,
            "offset": args.offset,
            "gap": gap,
            "radius": args.radius,
            "q": args.q,
            "samples": args.samples,
        }),
    )?;
    let witness = psi_k_witness(&action, &centers, args.radius)?;
    let invariant = witness.invariant_mass()?;
    let mut csv = CsvTable::new(vec!["index", "l1", "l1_stderr", "lq", "lq_stderr"]);
    let mut l1 = Vec::with_capacity(witness.len());
    let mut lq = Vec::with_capacity(witness.len());
    for i in 0..witness.len() {
        let (m1, s1) = witness.l1_mass(i, args.samples, ctx.seed ^ ((i as u64) << 8))?;
        let (mq, sq) = witness.lq_mass(i, args.q, args.samples, ctx.seed ^ 0x55 ^ ((i as u64) << 8))?;
        csv.push_row(vec![
            i.to_string(),
            export::float_field(m1),
            export::float_field(s1),
            export::float_field(mq),
            export::float_field(sq),
        ])?;
        l1.push(m1);
        lq.push(mq);
    }
    csv.write(&ctx.out.join("witnesses.csv"))?;
    let overlap_samples = args.samples.min(20_000);
    let mut max_overlap = 0.0f64;
    for i in 0..witness.len() {
        for j in (i + 1)..witness.len() {
            let ov = witness.support_overlap(i, j, overlap_samples, ctx.seed ^ ((i * 31 + j) as u64))?;
            max_overlap = max_overlap.max(ov);
        }
    }
    ctx.summary(&json!({
        "count": witness.len(),
        "invariant_mass": invariant,
        "l1": l1,
        "lq": lq,
        "q": args.q,
        "max_support_overlap": max_overlap,
        "disjoint": max_overlap == 0.0,
    }))
}

// ---------------------------------------------------------------------------
// ground-state

fn ground_state(ctx: &Ctx, args: &GroundStateArgs) -> Result<()> {
    let model = args.manifold.build()?;
    let params = SpaceParams::new(model.dim(), args.p, args.q)?;
    let opts = MinimizeOpts {
        step: args.step,
        tol: args.tol,
        max_iter: args.max_iter,
        snapshots: args.snapshots,
        ..MinimizeOpts::default()
    };
    ctx.manifest(
        "ground-state",
        json!({
            "manifold": model.to_config(),
            "p": args.p,
            "q": args.q,
            "r_max": args.r_max,
            "steps": args.steps,
            "step": args.step,
            "tol": args.tol,
            "max_iter": args.max_iter,
            "snapshots": args.snapshots,
        }),
    )?;
    let weight_model = model.clone();
    let init = RadialProfile::from_fn(
        args.r_max,
        args.steps,
        move |r| weight_model.sphere_area(r).unwrap_or(0.0),
        |r| (-0.5 * r * r).exp(),
    )?;
    let result = groundstate::minimize(&params, &init, &opts)?;
    export::radial_profile_table(&result.minimizer)?.write(&ctx.out.join("minimizer.csv"))?;
    export::radial_profile_table(&result.rescaled)?.write(&ctx.out.join("solution.csv"))?;
    let mut summary = export::solver_summary(&result);
    summary["dim"] = json!(model.dim());
    summary["p"] = json!(args.p);
    summary["q"] = json!(args.q);
    ctx.summary(&summary)
}

// ---------------------------------------------------------------------------
// diagnose

fn diagnose(ctx: &Ctx, args: &DiagnoseArgs) -> Result<()> {
    if args.count < 2 {
        return Err(Error::Config("--count must be at least 2".into()));
    }
    if !(args.centers_step > 0.0) || args.centers_max < args.centers_step {
        return Err(Error::Config("spotlight centers need a positive step below --centers-max".into()));
    }
    let model = ManifoldModel::euclidean(args.dim)?;
    let mut centers = Vec::new();
    let mut c = 0.0;
    while c <= args.centers_max + 1e-9 {
        centers.push(c);
        c += args.centers_step;
    }
    let sphere = |m: &ManifoldModel, r: f64| m.sphere_area(r).unwrap_or(0.0);
    let (family, profiles): (&str, Vec<RadialProfile>) = match args.family {
        FamilyKind::Translated => {
            let c_last = 6.0 + 2.0 * (args.count as f64 - 1.0);
            let r_max = args.r_max.unwrap_or(c_last + 6.0);
            let steps = args.steps.unwrap_or(((r_max * 50.0).ceil() as usize).max(100));
            let mut v = Vec::with_capacity(args.count);
            for k in 0..args.count {
                let center = 6.0 + 2.0 * k as f64;
                let m = model.clone();
                v.push(RadialProfile::from_fn(
                    r_max,
                    steps,
                    move |r| sphere(&m, r),
                    move |r| (-(r - center).powi(2)).exp(),
                )?);
            }
            ("translated", v)
        }
        FamilyKind::Spreading => {
            let k_last = (1 + args.count) as f64;
            let r_max = args.r_max.unwrap_or(5.0 * k_last);
            let steps = args.steps.unwrap_or(((r_max * 50.0).ceil() as usize).max(100));
            let mut v = Vec::with_capacity(args.count);
            for k in 2..(2 + args.count) {
                let scale = k as f64;
                let amp = scale.powf(-2.0 / args.q);
                let m = model.clone();
                v.push(RadialProfile::from_fn(
                    r_max,
                    steps,
                    move |r| sphere(&m, r),
                    move |r| amp * (-(r / scale).powi(2)).exp(),
                )?);
            }
            ("spreading", v)
        }
        FamilyKind::Descent => {
            let params = SpaceParams::new(args.dim, args.p, args.q)?;
            let r_max = args.r_max.unwrap_or(15.0);
            let steps = args.steps.unwrap_or(750);
            let m = model.clone();
            let init = RadialProfile::from_fn(
                r_max,
                steps,
                move |r| sphere(&m, r),
                |r| (-0.5 * r * r).exp(),
            )?;
            let opts = MinimizeOpts { snapshots: 400, ..MinimizeOpts::default() };
            let result = groundstate::minimize(&params, &init, &opts)?;
            ("descent", result.snapshots)
        }
    };
    ctx.manifest(
        "diagnose",
        json!({
            "family": family,
            "members": profiles.len(),
            "q": args.q,
            "dim": args.dim,
            "w": args.w,
            "centers_max": args.centers_max,
            "centers_step": args.centers_step,
            "r_max": args.r_max,
            "steps": args.steps,
            "p": args.p,
        }),
    )?;
    let report = groundstate::concentration_diagnostic(&profiles, args.dim, args.q, &centers, args.w)?;
    let mut csv = CsvTable::new(vec!["member", "sup_ball_mass", "argmax_r"]);
    for (i, (s, a)) in report.sups.iter().zip(&report.argmax_radii).enumerate() {
        csv.push_row(vec![i.to_string(), export::float_field(*s), export::float_field(*a)])?;
    }
    csv.write(&ctx.out.join("spotlight.csv"))?;
    export::write_json(&ctx.out.join("report.json"), &report)?;
    let verdict = match report.verdict {
        ConcentrationVerdict::Tight => "tight",
        ConcentrationVerdict::Escaping => "escaping",
        ConcentrationVerdict::Vanishing => "vanishing",
        ConcentrationVerdict::Inconclusive => "inconclusive",
    };
    ctx.summary(&json!({
        "family": family,
        "verdict": verdict,
        "sups": report.sups,
        "argmax_radii": report.argmax_radii,
        "ball_radius": report.ball_radius,
    }))
}

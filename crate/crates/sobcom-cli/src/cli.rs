//! Command line surface: flags, defaults, and the builders that turn parsed
//! arguments into library configurations.
//!
//! Every stochastic quantity derives from the single global `--seed`, so a
//! rerun with the same flags writes byte-identical files. All tables land in
//! `--out` together with a `manifest.json` echoing the resolved parameters.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sobcom::levelmap::{LevelMap, LevelMapKind, LpExponent};
use sobcom::manifold::ManifoldModel;
use sobcom::symmetry::GroupActionConfig;
use sobcom::Result;

#[derive(Parser)]
#[command(
    name = "sobcom",
    version,
    about = "Compactness diagnostics for Sobolev embeddings on model manifolds",
    long_about = "Batch driver for the sobcom library: separated nets, coarea weights,\n\
                  capture-fraction and far-ball diagnostics, group actions, and the\n\
                  constrained radial ground state. Each run writes CSV tables, JSON\n\
                  summaries, and a manifest of the resolved configuration into --out;\n\
                  identical flags and seed reproduce the output byte for byte."
)]
pub struct Cli {
    /// Root RNG seed; every stochastic estimate in the run derives from it.
    #[arg(long, global = true, default_value_t = 0x5EED)]
    pub seed: u64,

    /// Output directory (created if missing) for CSV, JSON, and the manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for parameter sweeps (delta-r, sigma-r). Other commands
    /// run single-threaded; results never depend on the thread count.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build a separated covering net with its quasiorbit partition.
    NetBuild(NetBuildArgs),
    /// Tabulate the coarea weight over a grid of levels.
    Psi(PsiArgs),
    /// Worst-case captured level-mass fraction along a growing exhaustion.
    DeltaR(DeltaRArgs),
    /// Far-ball mass fraction against its disjoint-ball chain bound.
    SigmaR(SigmaRArgs),
    /// Uniform thickness ratio of local level masses across levels.
    Thickness(ThicknessArgs),
    /// Orbit-diameter envelope and coercivity verdict of a group action.
    Coercivity(CoercivityArgs),
    /// Average a sampled profile over discrete rotations of a polar grid.
    Average(AverageArgs),
    /// Quasiorbit ball-mass ratios of a profile over a net.
    Quasisym(QuasisymArgs),
    /// Family of disjoint far bumps invariant under an axis-fixing action.
    WitnessPsiK(WitnessArgs),
    /// Constrained radial ground state with multiplier recovery.
    GroundState(GroundStateArgs),
    /// Spotlight concentration diagnostics for a family of radial profiles.
    Diagnose(DiagnoseArgs),
}

// ---------------------------------------------------------------------------
// Shared argument groups

#[derive(Args, Clone, Debug)]
pub struct ManifoldArgs {
    /// Model manifold underlying the run.
    #[arg(long, value_enum, default_value_t = ManifoldKind::Euclidean)]
    pub manifold: ManifoldKind,

    /// Manifold dimension. For `product` this is the Euclidean factor
    /// dimension; the circle adds one.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Constant sectional curvature of the hyperbolic model (negative).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub curvature: f64,

    /// Circle radius of the product model.
    #[arg(long, default_value_t = 1.0)]
    pub circle_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ManifoldKind {
    Euclidean,
    Hyperbolic,
    Product,
}

impl ManifoldArgs {
    pub fn build(&self) -> Result<ManifoldModel> {
        match self.manifold {
            ManifoldKind::Euclidean => ManifoldModel::euclidean(self.dim),
            ManifoldKind::Hyperbolic => ManifoldModel::hyperbolic(self.dim, self.curvature),
            ManifoldKind::Product => ManifoldModel::product_circle(self.dim, self.circle_radius),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct MapArgs {
    /// Level map applied on the manifold.
    #[arg(long, value_enum, default_value_t = MapKind::Radial)]
    pub map: MapKind,

    /// l-norm exponent for `lp-radial`; accepts `inf`.
    #[arg(long, default_value_t = 2.0)]
    pub ell: f64,

    /// Coordinate block sizes for `block-radial` (must sum to --dim).
    #[arg(long)]
    pub block: Vec<usize>,

    /// Per-block l-norm exponents for `block-radial` (default 2 each).
    #[arg(long)]
    pub block_ell: Vec<f64>,

    /// Dilation powers for `quasi-radial`, one per coordinate.
    #[arg(long)]
    pub power: Vec<f64>,

    /// Bulge height for the `bulged` map.
    #[arg(long, default_value_t = 1.0)]
    pub height: f64,

    /// Kept coordinate indices for `projection`.
    #[arg(long)]
    pub kept: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MapKind {
    Radial,
    LpRadial,
    BlockRadial,
    QuasiRadial,
    Bulged,
    PoleDistance,
    Cylinder,
    Projection,
}

impl MapArgs {
    pub fn kind(&self) -> LevelMapKind {
        match self.map {
            MapKind::Radial => LevelMapKind::Radial,
            MapKind::LpRadial => LevelMapKind::LpRadial { ell: LpExponent(self.ell) },
            MapKind::BlockRadial => {
                let exps = if self.block_ell.is_empty() {
                    vec![2.0; self.block.len()]
                } else {
                    self.block_ell.clone()
                };
                LevelMapKind::BlockRadial {
                    blocks: self.block.clone(),
                    exps: exps.into_iter().map(LpExponent).collect(),
                }
            }
            MapKind::QuasiRadial => LevelMapKind::QuasiRadial { powers: self.power.clone() },
            MapKind::Bulged => LevelMapKind::Bulged { height: self.height },
            MapKind::PoleDistance => LevelMapKind::PoleDistance,
            MapKind::Cylinder => LevelMapKind::CylinderRadial,
            MapKind::Projection => LevelMapKind::Projection { kept: self.kept.clone() },
        }
    }

    pub fn build(&self, model: ManifoldModel) -> Result<LevelMap> {
        LevelMap::new(self.kind(), model)
    }
}

// ---------------------------------------------------------------------------
// Per-command arguments

#[derive(Args, Clone, Debug)]
pub struct NetBuildArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,

    /// Separation radius of the net.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,

    /// Radius of the pole-centered window the net must cover.
    #[arg(long, default_value_t = 6.0)]
    pub domain_radius: f64,

    /// Monte Carlo samples for the covering-fraction check.
    #[arg(long, default_value_t = 50_000)]
    pub covering_samples: usize,
}

#[derive(Args, Clone, Debug)]
pub struct PsiArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,
    #[command(flatten)]
    pub map: MapArgs,

    /// Level coordinates, flattened; chunked by the map's target dimension.
    #[arg(long, required = true, allow_negative_numbers = true)]
    pub z: Vec<f64>,

    /// Monte Carlo samples per level for the shell estimator.
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,

    /// Shell half-width override (default scales with the level).
    #[arg(long)]
    pub shell_width: Option<f64>,

    /// Restrict sampling to a pole-centered window of this radius.
    #[arg(long)]
    pub window: Option<f64>,

    /// Use the shell estimator even when a closed form exists.
    #[arg(long)]
    pub force_shell: bool,
}

#[derive(Args, Clone, Debug)]
pub struct DeltaRArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,
    #[command(flatten)]
    pub map: MapArgs,

    /// Exhaustion radii (repeat the flag; strictly increasing).
    #[arg(long = "A", required = true)]
    pub a: Vec<f64>,

    /// Probe ball radius.
    #[arg(long = "r", default_value_t = 1.0)]
    pub r: f64,

    /// Candidate centers scanned per level.
    #[arg(long, default_value_t = 16)]
    pub candidates: usize,

    /// Monte Carlo samples per numerator (ball-capture) estimate.
    #[arg(long, default_value_t = 60_000)]
    pub num_samples: usize,

    /// Monte Carlo samples per denominator (level-mass) estimate.
    #[arg(long, default_value_t = 400_000)]
    pub den_samples: usize,

    /// Shell half-width override.
    #[arg(long)]
    pub shell_width: Option<f64>,
}

#[derive(Args, Clone, Debug)]
pub struct SigmaRArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,
    #[command(flatten)]
    pub map: MapArgs,

    /// Far radii (repeat the flag).
    #[arg(long = "R", required = true)]
    pub big_r: Vec<f64>,

    /// Probe ball radius.
    #[arg(long = "r", default_value_t = 1.0)]
    pub r: f64,

    /// Integrability exponent of the tested profiles.
    #[arg(long, default_value_t = 4.0)]
    pub q: f64,

    /// Uniform thickness constant entering the chain bound.
    #[arg(long, default_value_t = 1.0)]
    pub eps_thick: f64,

    /// Coarse Monte Carlo samples per candidate profile.
    #[arg(long, default_value_t = 25_000)]
    pub coarse: usize,

    /// Refined Monte Carlo samples for the leading candidates.
    #[arg(long, default_value_t = 400_000)]
    pub refine: usize,

    /// Points sampled on the witness level for the disjoint-ball chain.
    #[arg(long, default_value_t = 4_000)]
    pub chain_points: usize,

    /// Restrict sampling to a pole-centered window of this radius.
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Args, Clone, Debug)]
pub struct ThicknessArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,
    #[command(flatten)]
    pub map: MapArgs,

    /// Levels below this radius are excluded from the scan.
    #[arg(long, default_value_t = 5.0)]
    pub excluded: f64,

    /// Probe ball radius.
    #[arg(long = "r", default_value_t = 1.0)]
    pub r: f64,

    /// Explicit level coordinates, flattened; default scans a built-in grid.
    #[arg(long, allow_negative_numbers = true)]
    pub level: Vec<f64>,

    /// Candidate centers scanned per level.
    #[arg(long, default_value_t = 16)]
    pub candidates: usize,

    /// Monte Carlo samples per local-mass estimate.
    #[arg(long, default_value_t = 150_000)]
    pub samples: usize,

    /// Shell half-width override.
    #[arg(long)]
    pub shell_width: Option<f64>,
}

#[derive(Args, Clone, Debug)]
pub struct CoercivityArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,

    /// Group action to probe.
    #[arg(long, value_enum, default_value_t = ActionKind::Rotations)]
    pub action: ActionKind,

    /// Sampled elements per rotation factor (default: a built-in grid).
    #[arg(long)]
    pub k: Option<usize>,

    /// Coordinate block sizes for `block-rotations`.
    #[arg(long)]
    pub block: Vec<usize>,

    /// Rotated leading coordinates for `axis-fixing`.
    #[arg(long, default_value_t = 2)]
    pub acting_dim: usize,

    /// Probe radii for the orbit-diameter envelope.
    #[arg(long, default_values_t = [1.0, 2.0, 4.0, 8.0, 16.0])]
    pub radius: Vec<f64>,

    /// Sample points per probe radius.
    #[arg(long, default_value_t = 32)]
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActionKind {
    Rotations,
    BlockRotations,
    CircleRotations,
    AxisFixing,
}

impl CoercivityArgs {
    pub fn action_config(&self) -> GroupActionConfig {
        match self.action {
            ActionKind::Rotations => GroupActionConfig::Rotations { k: self.k },
            ActionKind::BlockRotations => {
                GroupActionConfig::BlockRotations { blocks: self.block.clone(), k: self.k }
            }
            ActionKind::CircleRotations => GroupActionConfig::CircleTimesRotations { k: self.k },
            ActionKind::AxisFixing => {
                GroupActionConfig::SubgroupFixingAxis { acting_dim: self.acting_dim, k: self.k }
            }
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct AverageArgs {
    /// Rotation count of the averaging subgroup.
    #[arg(long, default_value_t = 16)]
    pub k: usize,

    /// Radial rings of the polar grid.
    #[arg(long, default_value_t = 48)]
    pub rings: usize,

    /// Angular sectors of the polar grid (k must divide this).
    #[arg(long, default_value_t = 128)]
    pub angles: usize,

    /// Outer radius of the polar grid.
    #[arg(long, default_value_t = 6.0)]
    pub extent: f64,

    /// Random Gaussian bumps composing the test profile.
    #[arg(long, default_value_t = 3)]
    pub bumps: usize,

    /// Gradient-energy exponent used for the non-expansiveness report.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
}

#[derive(Args, Clone, Debug)]
pub struct QuasisymArgs {
    /// Model manifold underlying the net.
    #[arg(long, value_enum, default_value_t = ManifoldKind::Euclidean)]
    pub manifold: ManifoldKind,

    /// Manifold dimension; the default rings net needs 2.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,

    /// Constant sectional curvature of the hyperbolic model (negative).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub curvature: f64,

    /// Circle radius of the product model.
    #[arg(long, default_value_t = 1.0)]
    pub circle_radius: f64,

    /// Net geometry the profile is tested on.
    #[arg(long, value_enum, default_value_t = NetKind::Rings)]
    pub net: NetKind,

    /// Separation radius of the net.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,

    /// Radius of the pole-centered window the net must cover.
    #[arg(long, default_value_t = 6.0)]
    pub domain_radius: f64,

    /// Quasisymmetry tolerance: max/min orbit mass ratio allowed.
    #[arg(long, default_value_t = 1.5)]
    pub lambda: f64,

    /// 1-based quasiorbit index where the ratio check starts.
    #[arg(long, default_value_t = 1)]
    pub base_index: usize,

    /// Monte Carlo samples per net-point ball mass.
    #[arg(long, default_value_t = 4_000)]
    pub samples: usize,

    /// Test profile evaluated over the net.
    #[arg(long, value_enum, default_value_t = ProfileKind::Shell)]
    pub profile: ProfileKind,

    /// Pole distance of the `shell` profile's peak.
    #[arg(long, default_value_t = 3.0)]
    pub center_r: f64,

    /// Center displacement of the `offset` profile along the last axis.
    #[arg(long, default_value_t = 1.5)]
    pub offset: f64,

    /// Gaussian width of the test profile.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,

    /// Constant floor added to the profile; keeps every ball mass away from
    /// zero so orbit ratios stay statistically reliable.
    #[arg(long, default_value_t = 0.05)]
    pub floor: f64,
}

impl QuasisymArgs {
    pub fn build_model(&self) -> Result<ManifoldModel> {
        ManifoldArgs {
            manifold: self.manifold,
            dim: self.dim,
            curvature: self.curvature,
            circle_radius: self.circle_radius,
        }
        .build()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    /// Gaussian shell of the pole distance plus a floor: ball masses vary
    /// slowly along each quasiorbit, the quasisymmetric positive case.
    Shell,
    /// Single bump displaced from the pole plus a floor: its orbit partners
    /// see only the floor, the symmetry-breaking negative case.
    Offset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NetKind {
    /// Concentric distance circles, one per quasiorbit bin; each orbit is an
    /// exact rotation orbit, so a shell profile passes. Dimension 2 only.
    Rings,
    /// Seeded greedy net; quasiorbit members spread across a distance band
    /// of width twice epsilon, a strictly harder test.
    Greedy,
}

#[derive(Args, Clone, Debug)]
pub struct WitnessArgs {
    /// Ambient Euclidean dimension.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Rotated leading coordinates of the axis-fixing action.
    #[arg(long, default_value_t = 2)]
    pub acting_dim: usize,

    /// Sampled rotations per factor.
    #[arg(long, default_value_t = 16)]
    pub k: usize,

    /// Number of witness bumps.
    #[arg(long, default_value_t = 4)]
    pub count: usize,

    /// Distance of each bump center from the fixed axis.
    #[arg(long, default_value_t = 1.2)]
    pub offset: f64,

    /// Axis gap between consecutive centers (default: auto from the orbit
    /// size and bump radius, with a 5% margin).
    #[arg(long)]
    pub gap: Option<f64>,

    /// Support radius of each bump.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,

    /// Exponent for the q-norm column.
    #[arg(long, default_value_t = 4.0)]
    pub q: f64,

    /// Monte Carlo samples per mass estimate.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Args, Clone, Debug)]
pub struct GroundStateArgs {
    #[command(flatten)]
    pub manifold: ManifoldArgs,

    /// Gradient exponent (1 < p < dim).
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,

    /// Constraint exponent (p < q < p*).
    #[arg(long, default_value_t = 4.0)]
    pub q: f64,

    /// Truncation radius of the computational window.
    #[arg(long, default_value_t = 15.0)]
    pub r_max: f64,

    /// Grid intervals on [0, r_max].
    #[arg(long, default_value_t = 1_500)]
    pub steps: usize,

    /// Initial descent step.
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,

    /// Relative energy-decrease tolerance for convergence.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Iteration budget.
    #[arg(long, default_value_t = 400_000)]
    pub max_iter: usize,

    /// Number of stored intermediate profiles.
    #[arg(long, default_value_t = 8)]
    pub snapshots: usize,
}

#[derive(Args, Clone, Debug)]
pub struct DiagnoseArgs {
    /// Profile family fed to the spotlight diagnostic.
    #[arg(long, value_enum, default_value_t = FamilyKind::Translated)]
    pub family: FamilyKind,

    /// Members in the family (descent uses solver snapshots instead).
    #[arg(long, default_value_t = 6)]
    pub count: usize,

    /// Mass exponent of the spotlight ball masses.
    #[arg(long, default_value_t = 4.0)]
    pub q: f64,

    /// Ambient Euclidean dimension of the radial profiles.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Spotlight ball radius.
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,

    /// Truncation radius (default: auto from the family).
    #[arg(long)]
    pub r_max: Option<f64>,

    /// Grid intervals (default: auto, 50 per unit radius).
    #[arg(long)]
    pub steps: Option<usize>,

    /// Largest spotlight center radius.
    #[arg(long, default_value_t = 18.0)]
    pub centers_max: f64,

    /// Spacing of the spotlight center radii.
    #[arg(long, default_value_t = 0.5)]
    pub centers_step: f64,

    /// Gradient exponent of the descent family's solver.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    /// Fixed-shape bump translated outward: mass persists and escapes.
    Translated,
    /// Flattening dilations: the spotlight supremum decays to zero.
    Spreading,
    /// Snapshots of a converging ground-state descent: tight.
    Descent,
}
